//! Synthetic dataset generator with a planted grouping.
//!
//! Rows are drawn from a known linear model: demographics enter additively,
//! and each planted code group contributes its effect when the row's
//! history touches that group (presence, not count). The generator returns
//! the planted partition and the true coefficients alongside the data, so
//! recovery can be checked exactly.
//!
//! Three independent ChaCha substreams (demographics, histories, noise)
//! keep the draws decoupled: changing `noise_seed` reshuffles the noise
//! while every row keeps its demographics and history.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PredictionRow};
use crate::error::{Error, Result};
use crate::partition::{Partition, Vocabulary};

/// Per-code inclusion probabilities for row histories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeRates {
    /// Each code's rate drawn once, uniformly in `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// One rate per code, in code order.
    Explicit(Vec<f64>),
    /// Equal rates chosen so the expected history length is `mean`.
    MeanCount(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_rows: usize,
    pub n_codes: u32,
    pub k_true: u32,
    pub seed: u64,
    /// Noise stream seed; defaults to `seed`.
    pub noise_seed: Option<u64>,
    pub noise_scale: f64,
    pub intercept: f64,
    pub sex_effect: f64,
    /// Probability that sex = 1.
    pub sex_rate: f64,
    pub age_groups: Vec<String>,
    pub age_effects: Vec<f64>,
    /// Sampling weights over age bands; uniform when omitted.
    pub age_weights: Option<Vec<f64>>,
    pub residence_groups: Vec<String>,
    pub residence_effects: Vec<f64>,
    pub residence_weights: Option<Vec<f64>>,
    /// One effect per planted group.
    pub group_effects: Vec<f64>,
    pub code_rates: CodeRates,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(Error::usage("generator needs n_rows >= 1"));
        }
        if self.n_codes == 0 {
            return Err(Error::usage("generator needs n_codes >= 1"));
        }
        if self.k_true < 2 || self.k_true > self.n_codes {
            return Err(Error::usage(format!(
                "k_true must lie in [2, n_codes], got {} with {} codes",
                self.k_true, self.n_codes
            )));
        }
        if !(0.0..=1.0).contains(&self.sex_rate) {
            return Err(Error::usage(format!("sex_rate {} not in [0, 1]", self.sex_rate)));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::usage(format!(
                "noise_scale must be finite and nonnegative, got {}",
                self.noise_scale
            )));
        }
        for (name, labels, effects) in [
            ("age", &self.age_groups, &self.age_effects),
            ("residence", &self.residence_groups, &self.residence_effects),
        ] {
            if labels.is_empty() || labels.len() != effects.len() {
                return Err(Error::usage(format!(
                    "{name}_effects must match {name}_groups ({} labels, {} effects)",
                    labels.len(),
                    effects.len()
                )));
            }
        }
        if self.group_effects.len() != self.k_true as usize {
            return Err(Error::usage(format!(
                "group_effects must have k_true = {} entries, got {}",
                self.k_true,
                self.group_effects.len()
            )));
        }
        for (name, weights, len) in [
            ("age_weights", &self.age_weights, self.age_groups.len()),
            (
                "residence_weights",
                &self.residence_weights,
                self.residence_groups.len(),
            ),
        ] {
            if let Some(w) = weights {
                if w.len() != len || w.iter().any(|&x| x.is_nan() || x < 0.0 || !x.is_finite()) {
                    return Err(Error::usage(format!("invalid {name}")));
                }
                if w.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::usage(format!("{name} must have positive mass")));
                }
            }
        }
        match &self.code_rates {
            CodeRates::Uniform { lo, hi } => {
                if !(0.0 <= *lo && *lo <= *hi && *hi <= 1.0) {
                    return Err(Error::usage(format!(
                        "uniform code rates need 0 <= lo <= hi <= 1, got [{lo}, {hi}]"
                    )));
                }
            }
            CodeRates::Explicit(rates) => {
                if rates.len() != self.n_codes as usize {
                    return Err(Error::usage(format!(
                        "explicit code rates need {} entries, got {}",
                        self.n_codes,
                        rates.len()
                    )));
                }
                if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
                    return Err(Error::usage("explicit code rates must lie in [0, 1]"));
                }
            }
            CodeRates::MeanCount(mean) => {
                let rate = mean / self.n_codes as f64;
                if !(0.0..=1.0).contains(&rate) {
                    return Err(Error::usage(format!(
                        "mean history length {mean} is infeasible for {} codes",
                        self.n_codes
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The model the data was drawn from, written out for later comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueCoefficients {
    pub intercept: f64,
    pub sex: f64,
    pub age: Vec<f64>,
    pub residence: Vec<f64>,
    pub group: Vec<f64>,
    pub noise_scale: f64,
    pub code_rates: Vec<f64>,
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn pick(rng: &mut ChaCha8Rng, n: usize, weights: &Option<Vec<f64>>) -> u16 {
    match weights {
        Some(w) => {
            // Validated at entry; equal-weight degenerate cases are fine.
            let dist = WeightedIndex::new(w).expect("validated weights");
            dist.sample(rng) as u16
        }
        None => rng.random_range(0..n) as u16,
    }
}

/// Draw a dataset from `cfg`. Returns the data (no split attached), the
/// planted partition over the same vocabulary, and the generating model.
pub fn generate_synthetic(
    cfg: &GeneratorConfig,
) -> Result<(Dataset, Partition, TrueCoefficients)> {
    cfg.validate()?;
    let n_codes = cfg.n_codes as usize;
    let codes: Vec<String> = (0..n_codes).map(|i| format!("C{i:03}")).collect();
    let vocab = Arc::new(Vocabulary::new(codes)?);

    // Group of code i is i mod k_true, so every group is populated.
    let planted = Partition::new(
        Arc::clone(&vocab),
        cfg.k_true,
        (0..cfg.n_codes).map(|i| i % cfg.k_true).collect(),
    )?;

    let mut rng_demo = substream(cfg.seed, 0);
    let mut rng_codes = substream(cfg.seed, 1);
    let mut rng_noise = substream(cfg.noise_seed.unwrap_or(cfg.seed), 2);

    let rates: Vec<f64> = match &cfg.code_rates {
        CodeRates::Uniform { lo, hi } => (0..n_codes)
            .map(|_| rng_codes.random_range(*lo..=*hi))
            .collect(),
        CodeRates::Explicit(r) => r.clone(),
        CodeRates::MeanCount(mean) => vec![mean / n_codes as f64; n_codes],
    };

    let mut rows = Vec::with_capacity(cfg.n_rows);
    for i in 0..cfg.n_rows {
        let sex = u8::from(rng_demo.random::<f64>() < cfg.sex_rate);
        let age_group = pick(&mut rng_demo, cfg.age_groups.len(), &cfg.age_weights);
        let residence_group = pick(
            &mut rng_demo,
            cfg.residence_groups.len(),
            &cfg.residence_weights,
        );
        let history: Vec<u32> = (0..n_codes)
            .filter(|&c| rng_codes.random::<f64>() < rates[c])
            .map(|c| c as u32)
            .collect();

        let mut touched = vec![false; cfg.k_true as usize];
        for &c in &history {
            touched[planted.group_of(c) as usize] = true;
        }
        let mut mean = cfg.intercept
            + cfg.sex_effect * f64::from(sex)
            + cfg.age_effects[age_group as usize]
            + cfg.residence_effects[residence_group as usize];
        for (g, hit) in touched.iter().enumerate() {
            if *hit {
                mean += cfg.group_effects[g];
            }
        }
        let noise: f64 = rng_noise.sample::<f64, _>(StandardNormal) * cfg.noise_scale;
        let expenditure = (mean + noise).max(0.0);

        rows.push(PredictionRow {
            person_id: format!("P{i:06}"),
            sex,
            age_group,
            residence_group,
            history,
            expenditure,
        });
    }

    let truth = TrueCoefficients {
        intercept: cfg.intercept,
        sex: cfg.sex_effect,
        age: cfg.age_effects.clone(),
        residence: cfg.residence_effects.clone(),
        group: cfg.group_effects.clone(),
        noise_scale: cfg.noise_scale,
        code_rates: rates,
    };
    let data = Dataset {
        vocab,
        rows,
        age_groups: cfg.age_groups.clone(),
        residence_groups: cfg.residence_groups.clone(),
        split: None,
    };
    Ok((data, planted, truth))
}
