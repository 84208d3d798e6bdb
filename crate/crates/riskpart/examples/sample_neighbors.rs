//! The move kernel: truncated-Poisson distance, uniform on the sphere.
//!
//! `sample_neighbor` first draws a move distance j from a Poisson(lambda)
//! conditioned into [0, n], then relabels j distinct codes uniformly. The
//! histogram of sampled distances should match the truncated pmf, and every
//! state on a given sphere should be equally likely.
//!
//!     cargo run --example sample_neighbors

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use riskpart::partition::{
    ln_truncated_poisson_pmf, sample_neighbor, Partition, ProposalConfig, Vocabulary,
};

fn main() -> riskpart::Result<()> {
    let n = 12u32;
    let vocab = Arc::new(Vocabulary::new(
        (0..n).map(|i| format!("C{i:03}")).collect(),
    )?);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = Partition::random(Arc::clone(&vocab), 3, &mut rng)?;

    let cfg = ProposalConfig::new(3, 2.0);
    let draws = 20_000usize;
    let mut histogram = vec![0u32; n as usize + 1];
    for _ in 0..draws {
        let (_, j) = sample_neighbor(&p, &cfg, &mut rng)?;
        histogram[j as usize] += 1;
    }

    println!("{draws} proposals from a random partition (n = {n}, k = 3, lambda = 2):");
    println!("  j   observed   expected");
    for (j, &count) in histogram.iter().enumerate() {
        let expected = draws as f64 * ln_truncated_poisson_pmf(2.0, n, j as u32).exp();
        if count > 0 || expected >= 0.5 {
            println!("{j:>3}   {count:>8}   {expected:>8.1}");
        }
    }
    Ok(())
}
