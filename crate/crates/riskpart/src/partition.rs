//! Labeled set partitions of a categorical vocabulary.
//!
//! The sampler's state is a *labeled* partition: a total assignment of each
//! of the `n` vocabulary codes to one of `k` distinguishable groups. Two
//! assignments that differ only by a permutation of group labels are
//! distinct states, which keeps the move kernel and its normalizing counts
//! elementary:
//!
//! * the reassignment distance between two states is the number of codes
//!   whose label differs (a Hamming distance on assignment vectors);
//! * the sphere of radius `j` around any state holds exactly
//!   `C(n, j) * (k - 1)^j` states, independent of the center.
//!
//! The label-invariant distance of Gusfield (minimum element deletions to
//! make two partitions agree) is provided as a diagnostic for comparing a
//! found grouping against a reference; the chain itself never consults it.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::Pow;
use rand::Rng;

use crate::error::{Error, Result};

/// Ordered list of distinct category codes shared by all partitions under
/// comparison. Index order is fixed at construction and never changes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    codes: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new(codes: Vec<String>) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::usage("vocabulary must not be empty"));
        }
        let mut index = HashMap::with_capacity(codes.len());
        for (i, code) in codes.iter().enumerate() {
            if code.is_empty() {
                return Err(Error::usage("vocabulary codes must be nonempty strings"));
            }
            if index.insert(code.clone(), i as u32).is_some() {
                return Err(Error::usage(format!("duplicate vocabulary code {code:?}")));
            }
        }
        Ok(Vocabulary { codes, index })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn code(&self, idx: u32) -> &str {
        &self.codes[idx as usize]
    }

    pub fn index_of(&self, code: &str) -> Option<u32> {
        self.index.get(code).copied()
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }
}

/// Total assignment of every vocabulary code to one of `k` labeled groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    vocab: Arc<Vocabulary>,
    k: u32,
    assign: Vec<u32>,
}

impl Partition {
    /// `assign[i]` is the group label of vocabulary code `i`; every label
    /// must lie in `[0, k)`. Empty groups are allowed.
    pub fn new(vocab: Arc<Vocabulary>, k: u32, assign: Vec<u32>) -> Result<Self> {
        if k < 2 {
            return Err(Error::usage(format!("partition needs k >= 2 groups, got {k}")));
        }
        if assign.len() != vocab.len() {
            return Err(Error::usage(format!(
                "assignment covers {} codes but vocabulary has {}",
                assign.len(),
                vocab.len()
            )));
        }
        if let Some(bad) = assign.iter().find(|&&g| g >= k) {
            return Err(Error::usage(format!(
                "group label {bad} out of range for k = {k}"
            )));
        }
        Ok(Partition { vocab, k, assign })
    }

    /// Uniform random assignment: each code's label i.i.d. uniform on `[0, k)`.
    pub fn random<R: Rng + ?Sized>(vocab: Arc<Vocabulary>, k: u32, rng: &mut R) -> Result<Self> {
        if k < 2 {
            return Err(Error::usage(format!("partition needs k >= 2 groups, got {k}")));
        }
        let assign = (0..vocab.len()).map(|_| rng.random_range(0..k)).collect();
        Partition::new(vocab, k, assign)
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assign.is_empty()
    }

    pub fn group_of(&self, code_idx: u32) -> u32 {
        self.assign[code_idx as usize]
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assign
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k as usize];
        for &g in &self.assign {
            sizes[g as usize] += 1;
        }
        sizes
    }

    pub fn has_empty_group(&self) -> bool {
        self.group_sizes().contains(&0)
    }

    pub(crate) fn with_assignment(&self, assign: Vec<u32>) -> Partition {
        debug_assert_eq!(assign.len(), self.assign.len());
        Partition {
            vocab: Arc::clone(&self.vocab),
            k: self.k,
            assign,
        }
    }
}

fn same_vocabulary(p: &Partition, q: &Partition) -> bool {
    Arc::ptr_eq(&p.vocab, &q.vocab) || p.vocab == q.vocab
}

/// Number of codes whose group label differs between `p` and `q`.
///
/// Requires a shared vocabulary and equal `k`; this is the metric the move
/// kernel is built on, and it is label-sensitive by design.
pub fn reassignment_distance(p: &Partition, q: &Partition) -> Result<u32> {
    if !same_vocabulary(p, q) {
        return Err(Error::usage("partitions use different vocabularies"));
    }
    if p.k != q.k {
        return Err(Error::usage(format!(
            "reassignment distance needs equal k (got {} and {})",
            p.k, q.k
        )));
    }
    Ok(p.assign
        .iter()
        .zip(&q.assign)
        .filter(|(a, b)| a != b)
        .count() as u32)
}

/// Label-invariant partition distance: the minimum number of codes that must
/// be deleted so the two partitions induce the same grouping on the rest.
///
/// Computed as `n` minus a maximum-weight matching between the groups of `p`
/// and the groups of `q`, weighted by intersection size. `k` may differ.
pub fn gusfield_distance(p: &Partition, q: &Partition) -> Result<u32> {
    if !same_vocabulary(p, q) {
        return Err(Error::usage("partitions use different vocabularies"));
    }
    let side = p.k.max(q.k) as usize;
    let mut weights = vec![vec![0i64; side]; side];
    for (a, b) in p.assign.iter().zip(&q.assign) {
        weights[*a as usize][*b as usize] += 1;
    }
    let matched = max_weight_assignment(&weights);
    Ok(p.len() as u32 - matched as u32)
}

/// Maximum-weight perfect assignment on a square weight matrix, via the
/// Hungarian method on negated weights with row/column potentials. O(n^3).
fn max_weight_assignment(weights: &[Vec<i64>]) -> i64 {
    let n = weights.len();
    if n == 0 {
        return 0;
    }
    let inf = i64::MAX / 4;
    // 1-indexed potentials; p[j] is the row matched to column j, column 0 is
    // the virtual staging column for the row currently being inserted.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = -weights[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| weights[p[j] - 1][j - 1]).sum()
}

/// Exact number of assignments at reassignment distance exactly `j` from any
/// fixed center: `C(n, j) * (k - 1)^j`.
pub fn count_at_distance(n: u64, k: u64, j: u64) -> Result<BigUint> {
    if k < 2 {
        return Err(Error::usage(format!("count needs k >= 2, got {k}")));
    }
    if j > n {
        return Err(Error::usage(format!("distance {j} exceeds vocabulary size {n}")));
    }
    let choose = num_integer::binomial(BigUint::from(n), BigUint::from(j));
    let arity = BigUint::from(k - 1).pow(j);
    Ok(choose * arity)
}

/// Exact ball size: assignments within reassignment distance `j`,
/// `sum_{i=0..=j} C(n, i) * (k - 1)^i`. At `j = n` this is `k^n`.
pub fn count_within_distance(n: u64, k: u64, j: u64) -> Result<BigUint> {
    if k < 2 {
        return Err(Error::usage(format!("count needs k >= 2, got {k}")));
    }
    if j > n {
        return Err(Error::usage(format!("distance {j} exceeds vocabulary size {n}")));
    }
    let mut total = BigUint::from(0u32);
    for i in 0..=j {
        total += count_at_distance(n, k, i)?;
    }
    Ok(total)
}

/// Move kernel parameters. A proposal draws a distance `j` from a Poisson
/// with mean `lambda`, conditioned into `[0, min(n, max_distance)]`, then
/// picks a state uniformly from the sphere of radius `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalConfig {
    pub k: u32,
    pub lambda: f64,
    /// Hard cap on the move distance; `None` means `n`.
    pub max_distance: Option<u32>,
    /// Resample the proposed state (at the same `j`) until every group is
    /// nonempty. Off by default: empty groups are lawful states whose dummy
    /// columns simply vanish from the regression.
    pub forbid_empty: bool,
}

impl ProposalConfig {
    pub fn new(k: u32, lambda: f64) -> Self {
        ProposalConfig {
            k,
            lambda,
            max_distance: None,
            forbid_empty: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k < 2 {
            return Err(Error::usage(format!("proposal needs k >= 2, got {}", self.k)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::usage(format!(
                "proposal lambda must be a positive finite number, got {}",
                self.lambda
            )));
        }
        if let Some(d) = self.max_distance {
            if d < 1 || d as usize > n {
                return Err(Error::usage(format!(
                    "max_distance must lie in [1, {n}], got {d}"
                )));
            }
        }
        Ok(())
    }

    fn cap(&self, n: usize) -> u32 {
        self.max_distance
            .map(|d| d.min(n as u32))
            .unwrap_or(n as u32)
    }
}

/// Natural log of `j!`.
fn ln_factorial(j: u64) -> f64 {
    (2..=j).map(|i| (i as f64).ln()).sum()
}

/// Natural log of `C(n, j)`.
fn ln_binomial(n: u64, j: u64) -> f64 {
    debug_assert!(j <= n);
    ln_factorial(n) - ln_factorial(j) - ln_factorial(n - j)
}

/// Unnormalized log Poisson mass at each point of `0..=cap`.
fn ln_poisson_terms(lambda: f64, cap: u32) -> Vec<f64> {
    let ln_lambda = lambda.ln();
    let mut terms = Vec::with_capacity(cap as usize + 1);
    let mut ln_fact = 0.0;
    for i in 0..=cap {
        if i > 0 {
            ln_fact += (i as f64).ln();
        }
        terms.push(i as f64 * ln_lambda - lambda - ln_fact);
    }
    terms
}

/// Log mass of a Poisson(`lambda`) conditioned on the event `j <= cap`.
/// Stable for any positive `lambda` (computed entirely in log space).
pub fn ln_truncated_poisson_pmf(lambda: f64, cap: u32, j: u32) -> f64 {
    assert!(j <= cap, "point {j} outside truncation cap {cap}");
    let terms = ln_poisson_terms(lambda, cap);
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ln_norm = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    terms[j as usize] - ln_norm
}

/// Draw from Poisson(`lambda`) conditioned on `[0, cap]` by inverting the
/// truncated CDF. One uniform per draw; identical in law to rejection
/// resampling of an unconditioned Poisson, but it cannot stall when the
/// cap sits far below `lambda`.
fn sample_truncated_poisson<R: Rng + ?Sized>(lambda: f64, cap: u32, rng: &mut R) -> u32 {
    let terms = ln_poisson_terms(lambda, cap);
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i as u32;
        }
    }
    cap
}

/// Uniform draw from the sphere of radius `j` around `p`: `j` distinct codes
/// chosen uniformly, each moved to a uniformly chosen *different* group.
pub fn sample_at_distance<R: Rng + ?Sized>(p: &Partition, j: u32, rng: &mut R) -> Result<Partition> {
    let n = p.len();
    if j as usize > n {
        return Err(Error::usage(format!(
            "distance {j} exceeds vocabulary size {n}"
        )));
    }
    let mut assign = p.assignment().to_vec();
    let chosen = rand::seq::index::sample(rng, n, j as usize);
    for idx in chosen.iter() {
        let cur = assign[idx];
        let mut next = rng.random_range(0..p.k() - 1);
        if next >= cur {
            next += 1;
        }
        assign[idx] = next;
    }
    Ok(p.with_assignment(assign))
}

/// One proposal draw: `(q, j)` with `j` from the truncated Poisson and `q`
/// uniform on the sphere of radius `j` around `p`. `j = 0` lawfully returns
/// `q = p` (a self-proposal the chain will always accept).
///
/// With `forbid_empty` set, the sphere draw is repeated at the same `j`
/// until every group of `q` is nonempty; if a given `j` keeps failing
/// (possible when groups are near-singletons), `j` is redrawn so the loop
/// terminates.
pub fn sample_neighbor<R: Rng + ?Sized>(
    p: &Partition,
    cfg: &ProposalConfig,
    rng: &mut R,
) -> Result<(Partition, u32)> {
    cfg.validate(p.len())?;
    if cfg.k != p.k() {
        return Err(Error::usage(format!(
            "proposal k = {} does not match partition k = {}",
            cfg.k,
            p.k()
        )));
    }
    let cap = cfg.cap(p.len());
    let mut j = sample_truncated_poisson(cfg.lambda, cap, rng);
    const ATTEMPTS_PER_DISTANCE: u32 = 10_000;
    loop {
        if j == 0 {
            return Ok((p.clone(), 0));
        }
        for _ in 0..ATTEMPTS_PER_DISTANCE {
            let q = sample_at_distance(p, j, rng)?;
            if !cfg.forbid_empty || !q.has_empty_group() {
                return Ok((q, j));
            }
        }
        // No nonempty-group neighbor found at this radius; try another.
        j = sample_truncated_poisson(cfg.lambda, cap, rng);
    }
}

/// Probability that one `sample_neighbor` draw at `p` proposes exactly `q`:
/// `P[J = d(p, q)] / (C(n, j) * (k - 1)^j)` with `J` the truncated Poisson.
///
/// Depends on `p` and `q` only through their distance, so it is symmetric in
/// its arguments; the chain's acceptance rule relies on that cancellation.
/// Describes the unconstrained kernel (`forbid_empty` off).
pub fn proposal_probability(p: &Partition, q: &Partition, cfg: &ProposalConfig) -> Result<f64> {
    cfg.validate(p.len())?;
    if cfg.k != p.k() {
        return Err(Error::usage(format!(
            "proposal k = {} does not match partition k = {}",
            cfg.k,
            p.k()
        )));
    }
    let j = reassignment_distance(p, q)?;
    let n = p.len();
    let cap = cfg.cap(n);
    if j > cap {
        return Ok(0.0);
    }
    let ln_pj = ln_truncated_poisson_pmf(cfg.lambda, cap, j);
    let ln_sphere =
        ln_binomial(n as u64, j as u64) + j as f64 * ((cfg.k - 1) as f64).ln();
    Ok((ln_pj - ln_sphere).exp())
}

/// Read a `code,group[,label]` CSV into a partition over `vocab`.
///
/// Every vocabulary code must appear exactly once; unknown or repeated codes
/// are data errors. When `expected_k` is absent, `k` is inferred as the
/// largest group index plus one (at least 2). The optional third column is
/// returned in vocabulary order, untouched.
pub fn read_partition_csv(
    path: &Path,
    vocab: &Arc<Vocabulary>,
    expected_k: Option<u32>,
) -> Result<(Partition, Option<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let has_labels = match headers.len() {
        2 if &headers[0] == "code" && &headers[1] == "group" => false,
        3 if &headers[0] == "code" && &headers[1] == "group" && &headers[2] == "label" => true,
        _ => {
            return Err(Error::data(format!(
                "{}: expected header `code,group` or `code,group,label`",
                path.display()
            )))
        }
    };
    let n = vocab.len();
    let mut assign: Vec<Option<u32>> = vec![None; n];
    let mut labels: Vec<String> = vec![String::new(); n];
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let code = record
            .get(0)
            .ok_or_else(|| Error::data(format!("{}:{line}: missing code", path.display())))?;
        let idx = vocab.index_of(code).ok_or_else(|| {
            Error::data(format!(
                "{}:{line}: code {code:?} not in vocabulary",
                path.display()
            ))
        })?;
        let group: u32 = record
            .get(1)
            .and_then(|g| g.parse().ok())
            .ok_or_else(|| {
                Error::data(format!(
                    "{}:{line}: group for {code:?} is not a nonnegative integer",
                    path.display()
                ))
            })?;
        if assign[idx as usize].replace(group).is_some() {
            return Err(Error::data(format!(
                "{}:{line}: code {code:?} listed twice",
                path.display()
            )));
        }
        if has_labels {
            labels[idx as usize] = record.get(2).unwrap_or("").to_string();
        }
    }
    let mut resolved = Vec::with_capacity(n);
    for (i, slot) in assign.into_iter().enumerate() {
        match slot {
            Some(g) => resolved.push(g),
            None => {
                return Err(Error::data(format!(
                    "{}: vocabulary code {:?} missing from partition file",
                    path.display(),
                    vocab.code(i as u32)
                )))
            }
        }
    }
    let max_group = *resolved.iter().max().expect("nonempty vocabulary");
    let k = match expected_k {
        Some(k) => {
            if max_group >= k {
                return Err(Error::data(format!(
                    "{}: group {max_group} out of range for k = {k}",
                    path.display()
                )));
            }
            k
        }
        None => (max_group + 1).max(2),
    };
    let partition = Partition::new(Arc::clone(vocab), k, resolved)?;
    Ok((partition, has_labels.then_some(labels)))
}

/// Write a partition as `code,group[,label]`, one row per vocabulary code in
/// vocabulary order. Written atomically (temp file + rename).
pub fn write_partition_csv(
    path: &Path,
    partition: &Partition,
    labels: Option<&[String]>,
) -> Result<()> {
    if let Some(labels) = labels {
        if labels.len() != partition.len() {
            return Err(Error::usage(format!(
                "label column has {} entries for {} codes",
                labels.len(),
                partition.len()
            )));
        }
    }
    let mut buf = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut buf);
        let header: &[&str] = if labels.is_some() {
            &["code", "group", "label"]
        } else {
            &["code", "group"]
        };
        writer
            .write_record(header)
            .map_err(|e| Error::csv(path, e))?;
        for i in 0..partition.len() as u32 {
            let code = partition.vocabulary().code(i);
            let group = partition.group_of(i).to_string();
            match labels {
                Some(labels) => writer
                    .write_record([code, &group, &labels[i as usize]])
                    .map_err(|e| Error::csv(path, e))?,
                None => writer
                    .write_record([code, &group])
                    .map_err(|e| Error::csv(path, e))?,
            }
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
    }
    crate::util::write_atomic(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab(n: usize) -> Arc<Vocabulary> {
        Arc::new(
            Vocabulary::new((0..n).map(|i| format!("C{i:03}")).collect()).unwrap(),
        )
    }

    fn part(v: &Arc<Vocabulary>, k: u32, assign: &[u32]) -> Partition {
        Partition::new(Arc::clone(v), k, assign.to_vec()).unwrap()
    }

    /// All k^n assignment vectors, lexicographic.
    fn all_assignments(n: usize, k: u32) -> Vec<Vec<u32>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            let mut next = Vec::with_capacity(out.len() * k as usize);
            for prefix in &out {
                for g in 0..k {
                    let mut a = prefix.clone();
                    a.push(g);
                    next.push(a);
                }
            }
            out = next;
        }
        out
    }

    /// Label-invariant distance by brute force over all k! relabelings of q.
    fn gusfield_by_permutation(p: &[u32], q: &[u32], k: u32) -> u32 {
        use itertools::Itertools;
        let n = p.len() as u32;
        (0..k)
            .permutations(k as usize)
            .map(|perm| {
                let diff = p
                    .iter()
                    .zip(q)
                    .filter(|(a, b)| **a != perm[**b as usize])
                    .count() as u32;
                diff
            })
            .min()
            .unwrap_or(n)
    }

    #[test]
    fn vocabulary_rejects_duplicates() {
        let err = Vocabulary::new(vec!["A".into(), "A".into()]).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn partition_validates_labels_and_length() {
        let v = vocab(3);
        assert!(Partition::new(Arc::clone(&v), 2, vec![0, 1, 2]).is_err());
        assert!(Partition::new(Arc::clone(&v), 2, vec![0, 1]).is_err());
        assert!(Partition::new(Arc::clone(&v), 1, vec![0, 0, 0]).is_err());
        assert!(Partition::new(Arc::clone(&v), 2, vec![0, 1, 1]).is_ok());
    }

    #[test]
    fn reassignment_distance_is_hamming() {
        let v = vocab(3);
        let p = part(&v, 2, &[0, 1, 1]);
        let q = part(&v, 2, &[0, 0, 1]);
        assert_eq!(reassignment_distance(&p, &p).unwrap(), 0);
        assert_eq!(reassignment_distance(&p, &q).unwrap(), 1);
        assert_eq!(reassignment_distance(&q, &p).unwrap(), 1);
    }

    #[test]
    fn reassignment_distance_rejects_mismatches() {
        let v = vocab(3);
        let w = vocab(4);
        let p = part(&v, 2, &[0, 1, 1]);
        let q3 = part(&v, 3, &[0, 1, 1]);
        let r = part(&w, 2, &[0, 1, 1, 0]);
        assert!(reassignment_distance(&p, &q3).is_err());
        assert!(reassignment_distance(&p, &r).is_err());
    }

    #[test]
    fn gusfield_matches_brute_force_relabeling() {
        for (n, k) in [(4usize, 2u32), (5, 2), (4, 3), (5, 3)] {
            let v = vocab(n);
            let states = all_assignments(n, k);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..200 {
                let a = &states[rng.random_range(0..states.len())];
                let b = &states[rng.random_range(0..states.len())];
                let p = part(&v, k, a);
                let q = part(&v, k, b);
                assert_eq!(
                    gusfield_distance(&p, &q).unwrap(),
                    gusfield_by_permutation(a, b, k),
                    "n={n} k={k} a={a:?} b={b:?}"
                );
            }
        }
    }

    #[test]
    fn gusfield_is_label_invariant_and_bounded_by_reassignment() {
        let v = vocab(3);
        let p = part(&v, 2, &[0, 1, 1]);
        let q = part(&v, 2, &[0, 0, 1]);
        let q_flipped = part(&v, 2, &[1, 1, 0]);
        assert_eq!(gusfield_distance(&p, &q).unwrap(), 1);
        assert_eq!(gusfield_distance(&p, &q_flipped).unwrap(), 1);
        assert_eq!(reassignment_distance(&p, &q_flipped).unwrap(), 2);
        // Same blocks, swapped labels: label-invariant distance sees no gap.
        let r = part(&v, 2, &[1, 0, 0]);
        assert_eq!(gusfield_distance(&p, &r).unwrap(), 0);
        assert_eq!(reassignment_distance(&p, &r).unwrap(), 3);
    }

    #[test]
    fn gusfield_triangle_inequality_exhaustive() {
        let n = 4;
        let k = 3;
        let v = vocab(n);
        let states: Vec<Partition> = all_assignments(n, k)
            .iter()
            .map(|a| part(&v, k, a))
            .collect();
        // Spot-check the triangle inequality on a random subsample; the full
        // triple loop over 81^3 states is needlessly slow.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..4000 {
            let a = &states[rng.random_range(0..states.len())];
            let b = &states[rng.random_range(0..states.len())];
            let c = &states[rng.random_range(0..states.len())];
            let ab = gusfield_distance(a, b).unwrap();
            let bc = gusfield_distance(b, c).unwrap();
            let ac = gusfield_distance(a, c).unwrap();
            assert!(ac <= ab + bc);
        }
    }

    #[test]
    fn gusfield_allows_unequal_k() {
        let v = vocab(4);
        let p = part(&v, 2, &[0, 0, 1, 1]);
        let q = part(&v, 3, &[0, 0, 1, 2]);
        assert_eq!(gusfield_distance(&p, &q).unwrap(), 1);
        assert_eq!(gusfield_distance(&q, &p).unwrap(), 1);
    }

    #[test]
    fn hungarian_matches_permutation_brute_force() {
        use itertools::Itertools;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=6usize {
            for _ in 0..50 {
                let w: Vec<Vec<i64>> = (0..n)
                    .map(|_| (0..n).map(|_| rng.random_range(0..40i64)).collect())
                    .collect();
                let best = (0..n)
                    .permutations(n)
                    .map(|perm| (0..n).map(|i| w[i][perm[i]]).sum::<i64>())
                    .max()
                    .unwrap();
                assert_eq!(max_weight_assignment(&w), best);
            }
        }
    }

    #[test]
    fn counts_match_small_cases() {
        assert_eq!(count_at_distance(5, 3, 0).unwrap(), BigUint::from(1u32));
        assert_eq!(count_at_distance(5, 3, 1).unwrap(), BigUint::from(10u32));
        assert_eq!(count_at_distance(3, 2, 2).unwrap(), BigUint::from(3u32));
        assert!(count_at_distance(3, 2, 4).is_err());
        assert!(count_at_distance(3, 1, 1).is_err());
    }

    #[test]
    fn counts_match_exhaustive_enumeration() {
        for n in 1..=6usize {
            for k in 2..=4u32 {
                let states = all_assignments(n, k);
                let center = &states[states.len() / 2];
                for j in 0..=n {
                    let brute = states
                        .iter()
                        .filter(|s| {
                            s.iter().zip(center).filter(|(a, b)| a != b).count() == j
                        })
                        .count();
                    assert_eq!(
                        count_at_distance(n as u64, k as u64, j as u64).unwrap(),
                        BigUint::from(brute),
                        "n={n} k={k} j={j}"
                    );
                }
                let full = count_within_distance(n as u64, k as u64, n as u64).unwrap();
                assert_eq!(full, BigUint::from(k).pow(n as u32));
            }
        }
    }

    #[test]
    fn counts_at_scale() {
        // n = 995, k = 10: ball of radius 2 as a spelled-out sum.
        let n = 995u64;
        let single = BigUint::from(n) * BigUint::from(9u32);
        let pairs = BigUint::from(n) * BigUint::from(n - 1) / BigUint::from(2u32)
            * BigUint::from(81u32);
        let expected = BigUint::from(1u32) + single + pairs;
        assert_eq!(count_within_distance(995, 10, 2).unwrap(), expected);
        // Spheres partition the space.
        let total = count_within_distance(995, 10, 995).unwrap();
        assert_eq!(total, BigUint::from(10u32).pow(995u32));
    }

    #[test]
    fn sample_at_distance_hits_exact_radius() {
        let v = vocab(8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = Partition::random(Arc::clone(&v), 3, &mut rng).unwrap();
        for j in 0..=8u32 {
            for _ in 0..50 {
                let q = sample_at_distance(&p, j, &mut rng).unwrap();
                assert_eq!(reassignment_distance(&p, &q).unwrap(), j);
            }
        }
        assert!(sample_at_distance(&p, 9, &mut rng).is_err());
    }

    #[test]
    fn sample_neighbor_zero_distance_returns_same_state() {
        let v = vocab(6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = Partition::random(Arc::clone(&v), 3, &mut rng).unwrap();
        // Tiny lambda makes j = 0 overwhelmingly likely; scan for one.
        let cfg = ProposalConfig::new(3, 1e-3);
        let mut seen_zero = false;
        for _ in 0..50 {
            let (q, j) = sample_neighbor(&p, &cfg, &mut rng).unwrap();
            if j == 0 {
                assert_eq!(q, p);
                seen_zero = true;
                break;
            }
        }
        assert!(seen_zero);
    }

    #[test]
    fn sample_neighbor_respects_forbid_empty() {
        let v = vocab(5);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = part(&v, 3, &[0, 1, 2, 0, 1]);
        let cfg = ProposalConfig {
            k: 3,
            lambda: 2.0,
            max_distance: None,
            forbid_empty: true,
        };
        for _ in 0..500 {
            let (q, _) = sample_neighbor(&p, &cfg, &mut rng).unwrap();
            assert!(!q.has_empty_group());
        }
    }

    #[test]
    fn sample_neighbor_is_deterministic_given_seed() {
        let v = vocab(10);
        let mut rng_a = ChaCha8Rng::seed_from_u64(33);
        let mut rng_b = ChaCha8Rng::seed_from_u64(33);
        let p = part(&v, 4, &[0, 1, 2, 3, 0, 1, 2, 3, 0, 1]);
        let cfg = ProposalConfig::new(4, 5.0);
        for _ in 0..200 {
            let a = sample_neighbor(&p, &cfg, &mut rng_a).unwrap();
            let b = sample_neighbor(&p, &cfg, &mut rng_b).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sample_neighbor_respects_max_distance() {
        let v = vocab(10);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = part(&v, 2, &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let cfg = ProposalConfig {
            k: 2,
            lambda: 50.0,
            max_distance: Some(3),
            forbid_empty: false,
        };
        for _ in 0..300 {
            let (_, j) = sample_neighbor(&p, &cfg, &mut rng).unwrap();
            assert!(j <= 3);
        }
    }

    #[test]
    fn truncated_poisson_pmf_normalizes_and_weights_correctly() {
        // cap far above lambda: matches the plain Poisson closely.
        let p1 = ln_truncated_poisson_pmf(3.0, 200, 1).exp();
        let plain = 3.0f64 * (-3.0f64).exp();
        assert!((p1 - plain).abs() < 1e-12);
        // Tight cap: mass renormalizes onto {0, 1, 2}.
        let total: f64 = (0..=2)
            .map(|j| ln_truncated_poisson_pmf(3.0, 2, j).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        // Extreme lambda stays finite (pure log-space path).
        let extreme = ln_truncated_poisson_pmf(900.0, 10, 10);
        assert!(extreme.is_finite());
    }

    #[test]
    fn truncated_poisson_sampler_matches_pmf() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (lambda, cap) = (4.0, 6u32);
        let draws = 200_000;
        let mut counts = vec![0u64; cap as usize + 1];
        for _ in 0..draws {
            counts[sample_truncated_poisson(lambda, cap, &mut rng) as usize] += 1;
        }
        for j in 0..=cap {
            let expected = ln_truncated_poisson_pmf(lambda, cap, j).exp() * draws as f64;
            let got = counts[j as usize] as f64;
            // 5 sigma on a binomial count.
            let sigma = (expected * (1.0 - expected / draws as f64)).sqrt();
            assert!(
                (got - expected).abs() < 5.0 * sigma.max(1.0),
                "j={j} got={got} expected={expected}"
            );
        }
    }

    #[test]
    fn proposal_probability_is_symmetric_and_diagonal_matches_pmf() {
        let v = vocab(6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = ProposalConfig::new(3, 2.5);
        for _ in 0..200 {
            let p = Partition::random(Arc::clone(&v), 3, &mut rng).unwrap();
            let q = Partition::random(Arc::clone(&v), 3, &mut rng).unwrap();
            let pq = proposal_probability(&p, &q, &cfg).unwrap();
            let qp = proposal_probability(&q, &p, &cfg).unwrap();
            assert_eq!(pq.to_bits(), qp.to_bits());
        }
        let p = part(&v, 3, &[0, 1, 2, 0, 1, 2]);
        let self_prob = proposal_probability(&p, &p, &cfg).unwrap();
        let expected = ln_truncated_poisson_pmf(2.5, 6, 0).exp();
        assert_eq!(self_prob.to_bits(), expected.to_bits());
    }

    #[test]
    fn proposal_probability_agrees_with_monte_carlo() {
        let v = vocab(4);
        let p = part(&v, 2, &[0, 1, 0, 1]);
        let q = part(&v, 2, &[1, 1, 0, 1]);
        let cfg = ProposalConfig::new(2, 1.5);
        let exact = proposal_probability(&p, &q, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let draws = 400_000;
        let mut hits = 0u64;
        for _ in 0..draws {
            let (cand, _) = sample_neighbor(&p, &cfg, &mut rng).unwrap();
            if cand == q {
                hits += 1;
            }
        }
        let empirical = hits as f64 / draws as f64;
        let sigma = (exact * (1.0 - exact) / draws as f64).sqrt();
        assert!(
            (empirical - exact).abs() < 5.0 * sigma,
            "exact={exact} empirical={empirical}"
        );
    }

    #[test]
    fn proposal_probability_beyond_cap_is_zero() {
        let v = vocab(6);
        let p = part(&v, 2, &[0, 0, 0, 0, 0, 0]);
        let q = part(&v, 2, &[1, 1, 1, 0, 0, 0]);
        let cfg = ProposalConfig {
            k: 2,
            lambda: 2.0,
            max_distance: Some(2),
            forbid_empty: false,
        };
        assert_eq!(proposal_probability(&p, &q, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn partition_csv_round_trips_with_and_without_labels() {
        let dir = tempfile::tempdir().unwrap();
        let v = vocab(4);
        let p = part(&v, 3, &[2, 0, 1, 0]);

        let bare = dir.path().join("bare.csv");
        write_partition_csv(&bare, &p, None).unwrap();
        let (read_back, labels) = read_partition_csv(&bare, &v, Some(3)).unwrap();
        assert_eq!(read_back, p);
        assert!(labels.is_none());

        let tagged = dir.path().join("tagged.csv");
        let tags: Vec<String> = vec!["x".into(), "y".into(), "".into(), "y".into()];
        write_partition_csv(&tagged, &p, Some(&tags)).unwrap();
        let (read_back, labels) = read_partition_csv(&tagged, &v, None).unwrap();
        assert_eq!(read_back.assignment(), p.assignment());
        assert_eq!(labels.unwrap(), tags);

        // Byte-stable on rewrite.
        let first = std::fs::read(&tagged).unwrap();
        write_partition_csv(&tagged, &p, Some(&tags)).unwrap();
        assert_eq!(first, std::fs::read(&tagged).unwrap());
    }

    #[test]
    fn partition_csv_rejects_incomplete_or_unknown_codes() {
        let dir = tempfile::tempdir().unwrap();
        let v = vocab(3);
        let path = dir.path().join("bad.csv");

        std::fs::write(&path, "code,group\nC000,0\nC001,1\n").unwrap();
        let err = read_partition_csv(&path, &v, None).unwrap_err();
        assert!(err.to_string().contains("C002"), "{err}");

        std::fs::write(&path, "code,group\nC000,0\nC001,1\nC002,0\nC999,1\n").unwrap();
        let err = read_partition_csv(&path, &v, None).unwrap_err();
        assert!(err.to_string().contains("C999"), "{err}");

        std::fs::write(&path, "code,group\nC000,0\nC001,1\nC002,5\n").unwrap();
        let err = read_partition_csv(&path, &v, Some(3)).unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
    }
}
