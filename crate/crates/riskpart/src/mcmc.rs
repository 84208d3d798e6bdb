//! Metropolis-Hastings search over labeled partitions.
//!
//! Each iteration proposes a neighbor (distance drawn from a truncated
//! Poisson, then that many codes relabeled), evaluates its energy, and
//! accepts with probability min{1, exp((e_cur - e_prop)/T)}. The proposal
//! kernel is symmetric, so the Hastings correction cancels and the chain's
//! stationary distribution at constant T is pi(p) proportional to
//! exp(-E(p)/T).
//!
//! The driver is deliberately defensive about energy evaluation: a proposal
//! whose fit fails (or returns a nonfinite value) is recorded, logged, and
//! rejected, never fatal. Long runs survive partition pathologies.
//!
//! Determinism contract: a chain is a pure function of (energy function,
//! config). Multistart runs chains concurrently but merges results by chain
//! index, so thread count never changes any output.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{sample_neighbor, Partition, ProposalConfig, Vocabulary};
use crate::util::mean_std;

/// Anything that can score a partition. Implemented by
/// [`crate::energy::EnergyModel`] and by plain closures, which is how tests
/// drive the chain with exactly enumerable energy tables.
pub trait EnergyFn: Sync {
    fn evaluate(&self, p: &Partition) -> Result<f64>;
}

impl EnergyFn for crate::energy::EnergyModel {
    fn evaluate(&self, p: &Partition) -> Result<f64> {
        crate::energy::EnergyModel::evaluate(self, p)
    }
}

impl<F> EnergyFn for F
where
    F: Fn(&Partition) -> Result<f64> + Sync,
{
    fn evaluate(&self, p: &Partition) -> Result<f64> {
        self(p)
    }
}

/// Constant temperature or a geometric annealing schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temperature {
    Constant(f64),
    Geometric { initial: f64, decay: f64, floor: f64 },
}

impl Temperature {
    pub fn validate(&self) -> Result<()> {
        match self {
            Temperature::Constant(t) => {
                if !(t.is_finite() && *t > 0.0) {
                    return Err(Error::usage(format!(
                        "temperature must be positive and finite, got {t}"
                    )));
                }
            }
            Temperature::Geometric { initial, decay, floor } => {
                if !(initial.is_finite() && *initial > 0.0) {
                    return Err(Error::usage(format!("initial temperature {initial} invalid")));
                }
                if !(decay.is_finite() && *decay > 0.0 && *decay <= 1.0) {
                    return Err(Error::usage(format!("decay {decay} must lie in (0, 1]")));
                }
                if !(floor.is_finite() && *floor > 0.0) {
                    return Err(Error::usage(format!("temperature floor {floor} invalid")));
                }
            }
        }
        Ok(())
    }

    /// Temperature at iteration `i` (0-based). Always positive for a
    /// validated schedule.
    pub fn at(&self, i: u64) -> f64 {
        match self {
            Temperature::Constant(t) => *t,
            Temperature::Geometric { initial, decay, floor } => {
                let i = i.min(i32::MAX as u64) as i32;
                (initial * decay.powi(i)).max(*floor)
            }
        }
    }
}

/// Where the chain starts.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Each code's label drawn i.i.d. uniform over the k groups.
    Random,
    /// Start from a given partition (warm starts, expert seeds, files).
    Fixed(Partition),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub iterations: u64,
    pub temperature: Temperature,
    pub seed: u64,
    pub init: Init,
    pub proposal: ProposalConfig,
}

impl ChainConfig {
    pub fn validate(&self, vocab: &Arc<Vocabulary>) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::usage("chain needs at least one iteration"));
        }
        self.temperature.validate()?;
        self.proposal.validate(vocab.len())?;
        if let Init::Fixed(p) = &self.init {
            if !(Arc::ptr_eq(p.vocabulary(), vocab) || *p.vocabulary() == *vocab) {
                return Err(Error::usage(
                    "initial partition vocabulary differs from the run vocabulary",
                ));
            }
            if p.k() != self.proposal.k {
                return Err(Error::usage(format!(
                    "initial partition has k = {} but the proposal uses k = {}",
                    p.k(),
                    self.proposal.k
                )));
            }
        }
        Ok(())
    }
}

/// One iteration of the chain. `e_cur` is the state energy at the start of
/// the iteration; `e_prop` is absent when the proposal's energy evaluation
/// failed (automatic rejection, `alpha` 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub j: u32,
    pub e_cur: f64,
    pub e_prop: Option<f64>,
    pub alpha: f64,
    pub accepted: bool,
    pub e_best: f64,
}

/// Full per-iteration history plus run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub config: ChainConfig,
    pub records: Vec<TraceRecord>,
    pub acceptance_rate: f64,
    /// Failed energy evaluations as (iteration, message).
    pub energy_failures: Vec<(u64, String)>,
    pub wall_time: Duration,
}

impl ChainTrace {
    /// Energy of the chain's state after each iteration (the series summary
    /// statistics are computed over).
    pub fn state_energy_series(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| if r.accepted { r.e_prop.expect("accepted implies evaluated") } else { r.e_cur })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub best_partition: Partition,
    pub best_energy: f64,
    pub trace: ChainTrace,
}

/// Summary statistics of one chain's visited energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub seed: u64,
    pub iterations: u64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub acceptance_rate: f64,
    pub best_energy: f64,
}

impl ChainSummary {
    pub fn from_result(result: &ChainResult) -> Self {
        let series = result.trace.state_energy_series();
        let (mean, std) = mean_std(&series);
        ChainSummary {
            seed: result.trace.config.seed,
            iterations: result.trace.config.iterations,
            min: series.iter().cloned().fold(f64::INFINITY, f64::min),
            max: series.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std,
            acceptance_rate: result.trace.acceptance_rate,
            best_energy: result.best_energy,
        }
    }
}

/// min{1, exp((current - proposed) / t)}. Improving or equal proposals are
/// certain to be accepted.
pub fn acceptance_ratio(current: f64, proposed: f64, t: f64) -> Result<f64> {
    if !current.is_finite() || !proposed.is_finite() {
        return Err(Error::Chain(format!(
            "acceptance ratio needs finite energies, got {current} and {proposed}"
        )));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Chain(format!("temperature must be positive, got {t}")));
    }
    let delta = current - proposed;
    if delta >= 0.0 {
        Ok(1.0)
    } else {
        Ok((delta / t).exp())
    }
}

/// Streaming consumer of trace records. Lets long runs write their trace as
/// they go, so a killed run still leaves a valid prefix on disk.
pub trait TraceSink: Send {
    fn record(&mut self, rec: &TraceRecord) -> Result<()>;
}

impl<T: TraceSink + ?Sized> TraceSink for Box<T> {
    fn record(&mut self, rec: &TraceRecord) -> Result<()> {
        (**self).record(rec)
    }
}

/// One JSON object per line, flushed per record.
pub struct JsonlSink {
    writer: BufWriter<File>,
    path: std::path::PathBuf,
}

impl JsonlSink {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(JsonlSink {
            writer: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }
}

impl TraceSink for JsonlSink {
    fn record(&mut self, rec: &TraceRecord) -> Result<()> {
        serde_json::to_writer(&mut self.writer, rec)?;
        self.writer
            .write_all(b"\n")
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        Ok(())
    }
}

/// Read a trace file back. Floats round-trip exactly, so a re-read record
/// compares equal to the one the sink was handed. Errors carry the 1-based
/// line of the first unparseable record.
pub fn read_trace_jsonl(path: &Path) -> Result<Vec<TraceRecord>> {
    use std::io::BufRead as _;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| {
            Error::data(format!("{}:{}: bad trace record: {e}", path.display(), i + 1))
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// Bounded memo of assignment vector to energy. Refits are the expensive
/// step, and rejected states get reproposed often enough that this pays for
/// itself; at capacity the whole map is dropped rather than tracking
/// recency.
const MEMO_CAP: usize = 8192;

struct EnergyMemo {
    map: HashMap<Vec<u32>, f64>,
}

impl EnergyMemo {
    fn new() -> Self {
        EnergyMemo { map: HashMap::new() }
    }

    fn get(&self, assign: &[u32]) -> Option<f64> {
        self.map.get(assign).copied()
    }

    fn put(&mut self, assign: &[u32], energy: f64) {
        if self.map.len() >= MEMO_CAP {
            self.map.clear();
        }
        self.map.insert(assign.to_vec(), energy);
    }
}

pub fn run_chain<E: EnergyFn + ?Sized>(
    vocab: &Arc<Vocabulary>,
    energy: &E,
    cfg: &ChainConfig,
) -> Result<ChainResult> {
    run_chain_with_sink(vocab, energy, cfg, None::<&mut JsonlSink>)
}

pub fn run_chain_with_sink<E: EnergyFn + ?Sized, S: TraceSink + ?Sized>(
    vocab: &Arc<Vocabulary>,
    energy: &E,
    cfg: &ChainConfig,
    mut sink: Option<&mut S>,
) -> Result<ChainResult> {
    cfg.validate(vocab)?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut current = match &cfg.init {
        Init::Random => Partition::random(Arc::clone(vocab), cfg.proposal.k, &mut rng)?,
        Init::Fixed(p) => p.clone(),
    };
    let mut e_cur = energy
        .evaluate(&current)
        .map_err(|e| Error::Chain(format!("initial state has no energy: {e}")))?;
    if !e_cur.is_finite() {
        return Err(Error::Chain(format!("initial energy is not finite: {e_cur}")));
    }

    let mut memo = EnergyMemo::new();
    memo.put(current.assignment(), e_cur);

    let mut best = current.clone();
    let mut e_best = e_cur;
    let mut records = Vec::with_capacity(cfg.iterations as usize);
    let mut failures = Vec::new();
    let mut accepted_count = 0u64;

    for iter in 0..cfg.iterations {
        let t = cfg.temperature.at(iter);
        let (proposal, j) = sample_neighbor(&current, &cfg.proposal, &mut rng)?;

        let e_prop = match memo.get(proposal.assignment()) {
            Some(e) => Ok(e),
            None => match energy.evaluate(&proposal) {
                Ok(e) if e.is_finite() => {
                    memo.put(proposal.assignment(), e);
                    Ok(e)
                }
                Ok(e) => Err(format!("nonfinite energy {e}")),
                Err(err) => Err(err.to_string()),
            },
        };

        let record = match e_prop {
            Err(msg) => {
                failures.push((iter, msg));
                TraceRecord {
                    iter,
                    j,
                    e_cur,
                    e_prop: None,
                    alpha: 0.0,
                    accepted: false,
                    e_best,
                }
            }
            Ok(e_prop) => {
                if e_prop < e_best {
                    e_best = e_prop;
                    best = proposal.clone();
                }
                let alpha = acceptance_ratio(e_cur, e_prop, t)?;
                let accepted = rng.random::<f64>() < alpha;
                let rec = TraceRecord {
                    iter,
                    j,
                    e_cur,
                    e_prop: Some(e_prop),
                    alpha,
                    accepted,
                    e_best,
                };
                if accepted {
                    accepted_count += 1;
                    current = proposal;
                    e_cur = e_prop;
                }
                rec
            }
        };
        if let Some(s) = sink.as_mut() {
            s.record(&record)?;
        }
        records.push(record);
    }

    Ok(ChainResult {
        best_partition: best,
        best_energy: e_best,
        trace: ChainTrace {
            config: cfg.clone(),
            acceptance_rate: accepted_count as f64 / cfg.iterations as f64,
            records,
            energy_failures: failures,
            wall_time: start.elapsed(),
        },
    })
}

/// Outcome of a multistart run. `chains[i]` ran with seed `base + i`;
/// failed chains stay in place so siblings are unaffected. `winner` indexes
/// the successful chain with the lowest best energy (lowest index on ties).
pub struct MultistartResult {
    pub chains: Vec<Result<ChainResult>>,
    pub winner: usize,
}

impl MultistartResult {
    pub fn winner_result(&self) -> &ChainResult {
        self.chains[self.winner]
            .as_ref()
            .expect("winner is a successful chain")
    }
}

pub fn run_multistart<E: EnergyFn + ?Sized>(
    vocab: &Arc<Vocabulary>,
    energy: &E,
    cfg: &ChainConfig,
    chains: usize,
) -> Result<MultistartResult> {
    let sinks = (0..chains).map(|_| None).collect();
    run_multistart_with_sinks(vocab, energy, cfg, chains, sinks)
}

/// Multistart with one optional trace sink per chain (index-aligned).
pub fn run_multistart_with_sinks<E: EnergyFn + ?Sized>(
    vocab: &Arc<Vocabulary>,
    energy: &E,
    cfg: &ChainConfig,
    chains: usize,
    sinks: Vec<Option<Box<dyn TraceSink>>>,
) -> Result<MultistartResult> {
    if chains == 0 {
        return Err(Error::usage("multistart needs at least one chain"));
    }
    if sinks.len() != chains {
        return Err(Error::usage(format!(
            "expected {chains} sinks, got {}",
            sinks.len()
        )));
    }
    cfg.validate(vocab)?;

    let results: Vec<Result<ChainResult>> = sinks
        .into_par_iter()
        .enumerate()
        .map(|(i, mut sink)| {
            let chain_cfg = ChainConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            run_chain_with_sink(vocab, energy, &chain_cfg, sink.as_mut())
        })
        .collect();

    let mut winner: Option<(usize, f64)> = None;
    for (i, r) in results.iter().enumerate() {
        if let Ok(res) = r {
            if winner.is_none_or(|(_, e)| res.best_energy < e) {
                winner = Some((i, res.best_energy));
            }
        }
    }
    let Some((winner, _)) = winner else {
        let first_err = results
            .iter()
            .find_map(|r| r.as_ref().err().map(|e| e.to_string()))
            .unwrap_or_default();
        return Err(Error::Chain(format!(
            "all {chains} chains failed; first error: {first_err}"
        )));
    };
    Ok(MultistartResult {
        chains: results,
        winner,
    })
}
