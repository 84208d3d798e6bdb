//! Exact sizes of reassignment neighborhoods.
//!
//! Around any labeled partition of n codes into k groups there are
//! C(n, j) * (k-1)^j states at reassignment distance exactly j. The counts
//! are exact big integers; summed over j they recover k^n, the size of the
//! whole state space.
//!
//!     cargo run --example neighborhood_counts

use num_bigint::BigUint;
use riskpart::partition::{count_at_distance, count_within_distance};

fn main() -> riskpart::Result<()> {
    let (n, k) = (6u64, 3u64);
    println!("n = {n}, k = {k}");
    let mut total = BigUint::ZERO;
    for j in 0..=n {
        let at = count_at_distance(n, k, j)?;
        total += &at;
        println!(
            "  j = {j}: {at:>6} at distance, {:>6} within",
            count_within_distance(n, k, j)?
        );
    }
    println!("  sum = {total} = {k}^{n} = {}", BigUint::from(k).pow(n as u32));

    // At realistic vocabulary sizes the counts outgrow u128 fast; this is
    // why they are big integers.
    let (n, k) = (1355u64, 20u64);
    let ball = count_within_distance(n, k, 3)?;
    println!("\nn = {n}, k = {k}: |ball of radius 3| = {ball}");
    println!(
        "state space = {k}^{n} ~ 10^{}",
        (BigUint::from(k).pow(n as u32)).to_string().len() - 1
    );
    Ok(())
}
