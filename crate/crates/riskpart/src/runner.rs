//! Command implementations: generate, optimize, cv, report.
//!
//! Each command takes a [`LoadedConfig`] plus a [`RunContext`] and leaves a
//! self-describing directory behind. Every file is written atomically, and
//! everything serialized here is deterministic for a given config and seed:
//! no wall times, no map iteration order, no thread-count dependence. Two
//! runs with the same inputs produce byte-identical outputs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{GridCell, InitChoice, LoadedConfig, ResolvedChain, RunConfig};
use crate::data::{load_dataset, make_split, write_dataset, Dataset, LoadReport, SplitAssignment, SplitPlan};
use crate::energy::{
    aggregate_predictive_ratio, compute_loss, cost_quantile_partition, fit_model, EnergyModel,
    LossKind, ModelSpec, RowSelector,
};
use crate::error::{Error, Result};
use crate::mcmc::{
    read_trace_jsonl, run_multistart_with_sinks, ChainConfig, ChainSummary, Init, JsonlSink,
    Temperature, TraceSink,
};
use crate::partition::{read_partition_csv, write_partition_csv, ProposalConfig};
use crate::report;
use crate::synth::generate_synthetic;
use crate::util::write_atomic;

/// Where a command writes and whether it narrates progress on stderr.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub quiet: bool,
}

impl RunContext {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunContext {
            out_dir: out_dir.into(),
            quiet: true,
        }
    }

    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn dataset_path_as_written(cfg: &LoadedConfig) -> Option<&Path> {
    cfg.raw.data.as_ref().and_then(|d| d.path.as_deref())
}

/// Write `dataset.csv`, `planted_partition.csv`, and
/// `true_coefficients.json` into the output directory. Reruns with the same
/// config and seed reproduce all three files byte for byte.
pub fn cmd_generate(cfg: &LoadedConfig, ctx: &RunContext, cli_seed: Option<u64>) -> Result<()> {
    let gen_cfg = cfg.generator(cli_seed)?;
    let (dataset, planted, coeffs) = generate_synthetic(&gen_cfg)?;
    create_dir(&ctx.out_dir)?;
    let data_path = ctx.out_dir.join("dataset.csv");
    write_dataset(&data_path, &dataset)?;
    write_partition_csv(&ctx.out_dir.join("planted_partition.csv"), &planted, None)?;
    write_json_atomic(&ctx.out_dir.join("true_coefficients.json"), &coeffs)?;
    ctx.note(&format!(
        "generated {} rows over {} codes (k_true = {}) into {}",
        dataset.n_rows(),
        dataset.vocab.len(),
        gen_cfg.k_true,
        ctx.out_dir.display()
    ));
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub path: String,
    pub rows: usize,
    pub vocabulary: usize,
    pub screened: usize,
}

impl DatasetInfo {
    // `path` is the config's own spelling, not the resolved one, so the
    // summary stays byte-identical however the config file was addressed.
    fn new(path: &Path, data: &Dataset, report: &LoadReport) -> Self {
        DatasetInfo {
            path: path.display().to_string(),
            rows: data.n_rows(),
            vocabulary: report.vocabulary_size,
            screened: report.screened.len(),
        }
    }
}

/// One chain of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub index: usize,
    pub seed: u64,
    pub trace: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<ChainSummary>,
}

/// Scores of a cell's best partition, refit outside the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSummary {
    pub energy: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub predictive_ratio_train: f64,
    pub predictive_ratio_test: f64,
    pub partition_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub k: u32,
    pub lambda: f64,
    pub temperature: Temperature,
    pub dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub chains: Vec<ChainRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winner_chain: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best: Option<BestSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinnerInfo {
    pub cell: usize,
    pub dir: String,
    pub k: u32,
    pub lambda: f64,
    pub best_energy: f64,
    pub partition_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSummary {
    pub command: String,
    pub seed: u64,
    pub loss: LossKind,
    pub iterations: u64,
    pub chains_per_cell: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub dataset: DatasetInfo,
    pub cells: Vec<CellSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winner: Option<WinnerInfo>,
    pub config: RunConfig,
}

/// Run the hyperparameter grid. Each (k, lambda, temperature) cell gets its
/// own directory with per-chain traces and the best partition found; the
/// run-level `summary.json` collects per-chain statistics and the winning
/// cell. A failing cell is recorded and skipped; the command only errors
/// (exit 3) when every cell fails.
pub fn cmd_optimize(cfg: &LoadedConfig, ctx: &RunContext, cli_seed: Option<u64>) -> Result<()> {
    let schema = cfg.schema();
    let data_path = cfg.dataset_path()?;
    let shown_path = dataset_path_as_written(cfg).unwrap_or(&data_path);
    let (mut dataset, load_report) = load_dataset(&data_path, &schema)?;
    let plan = cfg.split_plan(cli_seed)?;
    if let SplitPlan::KFold { .. } = plan {
        return Err(Error::usage(
            "optimize needs a holdout split; [split] kind is kfold",
        ));
    }
    make_split(&mut dataset, &plan)?;
    let (n_train, n_test) = match dataset.split.as_ref() {
        Some(SplitAssignment::Holdout { test }) => {
            let t = test.iter().filter(|&&b| b).count();
            (test.len() - t, t)
        }
        _ => unreachable!("holdout plan was just applied"),
    };
    let data = Arc::new(dataset);
    let chain = cfg.chain(cli_seed);
    let cells = cfg.grid(cli_seed)?;
    let model = EnergyModel::new(
        Arc::clone(&data),
        &ModelSpec::demographic(true, true, true),
        chain.loss,
    )?;
    create_dir(&ctx.out_dir)?;
    ctx.note(&format!(
        "loaded {} rows, {} codes kept, {} screened; {} train / {} test",
        data.n_rows(),
        load_report.vocabulary_size,
        load_report.screened.len(),
        n_train,
        n_test
    ));

    let mut cell_summaries = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        ctx.note(&format!(
            "cell {}/{}: k = {}, lambda = {}, {} chains x {} iterations",
            i + 1,
            cells.len(),
            cell.k,
            cell.lambda,
            chain.chains,
            chain.iterations
        ));
        let summary = match run_cell(cfg, ctx, &chain, cell, &data, &model) {
            Ok(s) => s,
            Err(e) => CellSummary {
                k: cell.k,
                lambda: cell.lambda,
                temperature: cell.temperature.clone(),
                dir: cell.dir_name(),
                error: Some(e.to_string()),
                chains: Vec::new(),
                winner_chain: None,
                best: None,
            },
        };
        if let Some(err) = &summary.error {
            ctx.note(&format!("cell {} failed: {err}", summary.dir));
        } else if let Some(best) = &summary.best {
            ctx.note(&format!(
                "cell {} best energy {}",
                summary.dir, best.energy
            ));
        }
        cell_summaries.push(summary);
    }

    let winner = cell_summaries
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.best.as_ref().map(|b| (i, c, b)))
        .min_by(|a, b| a.2.energy.total_cmp(&b.2.energy))
        .map(|(i, c, b)| WinnerInfo {
            cell: i,
            dir: c.dir.clone(),
            k: c.k,
            lambda: c.lambda,
            best_energy: b.energy,
            partition_file: b.partition_file.clone(),
        });

    let all_failed = winner.is_none();
    let summary = OptimizeSummary {
        command: "optimize".into(),
        seed: cfg.global_seed(cli_seed),
        loss: chain.loss,
        iterations: chain.iterations,
        chains_per_cell: chain.chains,
        train_rows: n_train,
        test_rows: n_test,
        dataset: DatasetInfo::new(shown_path, &data, &load_report),
        cells: cell_summaries,
        winner,
        config: cfg.raw.clone(),
    };
    write_json_atomic(&ctx.out_dir.join("summary.json"), &summary)?;
    ctx.note(&format!(
        "wrote {}",
        ctx.out_dir.join("summary.json").display()
    ));
    if all_failed {
        let first = summary
            .cells
            .iter()
            .find_map(|c| c.error.as_deref())
            .unwrap_or("no cells");
        return Err(Error::Grid(format!(
            "all {} grid cells failed; first error: {first}",
            summary.cells.len()
        )));
    }
    Ok(())
}

fn run_cell(
    cfg: &LoadedConfig,
    ctx: &RunContext,
    chain: &ResolvedChain,
    cell: &GridCell,
    data: &Arc<Dataset>,
    model: &EnergyModel,
) -> Result<CellSummary> {
    let cell_dir = ctx.out_dir.join(cell.dir_name());
    create_dir(&cell_dir)?;
    let init = match &chain.init {
        InitChoice::Random => Init::Random,
        InitChoice::CostQuantile => Init::Fixed(cost_quantile_partition(
            data,
            RowSelector::Train,
            cell.k,
        )?),
        InitChoice::File(p) => {
            let path = cfg.resolve(p);
            let (partition, _) = read_partition_csv(&path, &data.vocab, Some(cell.k))?;
            Init::Fixed(partition)
        }
    };
    let chain_cfg = ChainConfig {
        iterations: chain.iterations,
        temperature: cell.temperature.clone(),
        seed: chain.seed,
        init,
        proposal: ProposalConfig {
            k: cell.k,
            lambda: cell.lambda,
            max_distance: chain.max_distance,
            forbid_empty: chain.forbid_empty,
        },
    };
    let mut sinks: Vec<Option<Box<dyn TraceSink>>> = Vec::with_capacity(chain.chains);
    let mut trace_names = Vec::with_capacity(chain.chains);
    for i in 0..chain.chains {
        let name = format!("trace_chain{i}.jsonl");
        sinks.push(Some(Box::new(JsonlSink::create(&cell_dir.join(&name))?)));
        trace_names.push(name);
    }
    let result = run_multistart_with_sinks(&data.vocab, model, &chain_cfg, chain.chains, sinks)?;

    let rows: Vec<ChainRow> = result
        .chains
        .iter()
        .enumerate()
        .map(|(i, r)| ChainRow {
            index: i,
            seed: chain.seed.wrapping_add(i as u64),
            trace: trace_names[i].clone(),
            error: r.as_ref().err().map(|e| e.to_string()),
            summary: r.as_ref().ok().map(ChainSummary::from_result),
        })
        .collect();
    for row in &rows {
        if let Some(err) = &row.error {
            ctx.note(&format!(
                "  chain {} (seed {}) failed: {err}",
                row.index, row.seed
            ));
        }
    }

    let best = result.winner_result();
    let scores = model.report(&best.best_partition)?;
    let fitted = model.fitted(&best.best_partition)?;
    let partition_name = "best_partition.csv";
    write_partition_csv(&cell_dir.join(partition_name), &best.best_partition, None)?;
    Ok(CellSummary {
        k: cell.k,
        lambda: cell.lambda,
        temperature: cell.temperature.clone(),
        dir: cell.dir_name(),
        error: None,
        chains: rows,
        winner_chain: Some(result.winner),
        best: Some(BestSummary {
            energy: best.best_energy,
            train_loss: scores.train_loss,
            test_loss: scores.test_loss,
            predictive_ratio_train: aggregate_predictive_ratio(data, RowSelector::Train, &fitted)?,
            predictive_ratio_test: aggregate_predictive_ratio(data, RowSelector::Test, &fitted)?,
            partition_file: format!("{}/{partition_name}", cell.dir_name()),
        }),
    })
}

/// One specification of the cross-validation ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRung {
    pub name: String,
    /// Out-of-fold MAE per fold, fold order.
    pub fold_mae: Vec<f64>,
    /// Mean of `fold_mae`.
    pub mean_mae: f64,
    /// MAE over the pooled out-of-fold rows whose observed expenditure
    /// falls in the bottom / top tenth.
    pub bottom_decile_mae: f64,
    pub top_decile_mae: f64,
    pub pooled_rows: usize,
    pub observed_total: f64,
    pub predicted_total: f64,
    pub mean_prediction: f64,
    /// predicted_total / observed_total over the pooled rows.
    pub predictive_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub command: String,
    pub seed: u64,
    pub folds: u16,
    pub loss: LossKind,
    pub dataset: DatasetInfo,
    pub rungs: Vec<CvRung>,
    /// `relative_mae[a][b]` = 100 * (mean_mae[a] - mean_mae[b]) / mean_mae[b].
    pub relative_mae: Vec<Vec<f64>>,
    pub config: RunConfig,
}

/// Compare regression specifications by k-fold cross-validation: two
/// demographic baselines, then one rung per supplied partition file.
/// Writes `cv_report.json` and `cv_report.md`.
pub fn cmd_cv(cfg: &LoadedConfig, ctx: &RunContext, cli_seed: Option<u64>) -> Result<()> {
    let schema = cfg.schema();
    let data_path = cfg.dataset_path()?;
    let shown_path = dataset_path_as_written(cfg).unwrap_or(&data_path);
    let (mut dataset, load_report) = load_dataset(&data_path, &schema)?;
    let folds = cfg.cv_folds();
    let plan = SplitPlan::KFold {
        folds,
        seed: cfg.cv_seed(cli_seed),
    };
    make_split(&mut dataset, &plan)?;
    let data = dataset;

    let mut rungs: Vec<(String, ModelSpec)> = vec![
        ("sex+residence".into(), ModelSpec::demographic(true, false, true)),
        (
            "sex+age+residence".into(),
            ModelSpec::demographic(true, true, true),
        ),
    ];
    for (i, path) in cfg.cv_partitions().iter().enumerate() {
        let (partition, _) = read_partition_csv(path, &data.vocab, None)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("partition{i}"));
        let mut name = format!("sex+age+residence+{stem}");
        if rungs.iter().any(|(n, _)| *n == name) {
            name = format!("sex+age+residence+{stem}#{i}");
        }
        rungs.push((
            name,
            ModelSpec::demographic(true, true, true).with_partition(partition),
        ));
    }

    create_dir(&ctx.out_dir)?;
    let mut evaluated = Vec::with_capacity(rungs.len());
    for (name, spec) in &rungs {
        ctx.note(&format!("cross-validating {name}"));
        evaluated.push(evaluate_rung(&data, folds, name, spec)?);
    }

    let means: Vec<f64> = evaluated.iter().map(|r| r.mean_mae).collect();
    let relative_mae: Vec<Vec<f64>> = means
        .iter()
        .map(|&a| {
            means
                .iter()
                .map(|&b| if a == b { 0.0 } else { 100.0 * (a - b) / b })
                .collect()
        })
        .collect();

    let summary = CvSummary {
        command: "cv".into(),
        seed: cfg.cv_seed(cli_seed),
        folds,
        loss: LossKind::Mae,
        dataset: DatasetInfo::new(shown_path, &data, &load_report),
        rungs: evaluated,
        relative_mae,
        config: cfg.raw.clone(),
    };
    write_json_atomic(&ctx.out_dir.join("cv_report.json"), &summary)?;
    let md = report::render_cv(&summary);
    write_atomic(&ctx.out_dir.join("cv_report.md"), md.as_bytes())?;
    ctx.note(&format!(
        "wrote {} and cv_report.md",
        ctx.out_dir.join("cv_report.json").display()
    ));
    Ok(())
}

fn evaluate_rung(data: &Dataset, folds: u16, name: &str, spec: &ModelSpec) -> Result<CvRung> {
    let mut fold_mae = Vec::with_capacity(folds as usize);
    // (observed, predicted) pooled over the out-of-fold rows, fold order.
    let mut pooled: Vec<(f64, f64)> = Vec::with_capacity(data.n_rows());
    for f in 0..folds {
        let model = fit_model(data, RowSelector::FoldTrain(f), spec)?;
        let (yhat, y) = model.predict_on(data, RowSelector::FoldTest(f))?;
        fold_mae.push(compute_loss(LossKind::Mae, &y, &yhat)?);
        pooled.extend(y.iter().copied().zip(yhat.iter().copied()));
    }
    let mean_mae = fold_mae.iter().sum::<f64>() / fold_mae.len() as f64;

    // Decile cut on observed expenditure, index as tiebreak so the subsets
    // are deterministic.
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].0.total_cmp(&pooled[b].0).then(a.cmp(&b)));
    let tenth = (pooled.len() / 10).max(1);
    let decile_mae = |idx: &[usize]| {
        idx.iter()
            .map(|&i| (pooled[i].0 - pooled[i].1).abs())
            .sum::<f64>()
            / idx.len() as f64
    };
    let bottom_decile_mae = decile_mae(&order[..tenth]);
    let top_decile_mae = decile_mae(&order[pooled.len() - tenth..]);

    let observed_total: f64 = pooled.iter().map(|p| p.0).sum();
    let predicted_total: f64 = pooled.iter().map(|p| p.1).sum();
    if observed_total == 0.0 {
        return Err(Error::data(
            "predictive ratio undefined: observed expenditure sums to zero",
        ));
    }
    Ok(CvRung {
        name: name.to_string(),
        fold_mae,
        mean_mae,
        bottom_decile_mae,
        top_decile_mae,
        pooled_rows: pooled.len(),
        observed_total,
        predicted_total,
        mean_prediction: predicted_total / pooled.len() as f64,
        predictive_ratio: predicted_total / observed_total,
    })
}

/// Traces of one cell, read back for the report. `series` rows are
/// `(iter, e_cur, e_best)` straight from the trace file.
pub struct CellTraces {
    pub acceptance: Vec<Option<f64>>,
    pub winner_series: Option<Vec<(u64, f64, f64)>>,
}

/// Render `report.md` from an optimize run directory. Unreadable traces
/// demote to warnings inside the report; only a missing or unparseable
/// `summary.json` is an error.
pub fn cmd_report(run_dir: &Path, out: Option<&Path>, quiet: bool) -> Result<()> {
    if !run_dir.is_dir() {
        return Err(Error::usage(format!(
            "{} is not a run directory",
            run_dir.display()
        )));
    }
    let summary_path = run_dir.join("summary.json");
    let text = std::fs::read_to_string(&summary_path)
        .map_err(|e| Error::data(format!("{}: {e}", summary_path.display())))?;
    let summary: OptimizeSummary = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: {e}", summary_path.display())))?;

    let mut warnings = Vec::new();
    let mut traces = Vec::with_capacity(summary.cells.len());
    for cell in &summary.cells {
        let mut acceptance = Vec::with_capacity(cell.chains.len());
        let mut winner_series = None;
        for row in &cell.chains {
            let path = run_dir.join(&cell.dir).join(&row.trace);
            match read_trace_jsonl(&path) {
                Ok(records) if records.is_empty() => {
                    warnings.push(format!("{}: empty trace", path.display()));
                    acceptance.push(None);
                }
                Ok(records) => {
                    let accepted = records.iter().filter(|r| r.accepted).count();
                    let rate = accepted as f64 / records.len() as f64;
                    if let Some(s) = &row.summary {
                        if (rate - s.acceptance_rate).abs() > 1e-12 {
                            warnings.push(format!(
                                "{}: acceptance rate {rate} disagrees with summary {}",
                                path.display(),
                                s.acceptance_rate
                            ));
                        }
                    }
                    acceptance.push(Some(rate));
                    if cell.winner_chain == Some(row.index) {
                        winner_series = Some(
                            records
                                .iter()
                                .map(|r| (r.iter, r.e_cur, r.e_best))
                                .collect(),
                        );
                    }
                }
                Err(e) => {
                    warnings.push(e.to_string());
                    acceptance.push(None);
                }
            }
        }
        traces.push(CellTraces {
            acceptance,
            winner_series,
        });
    }

    let md = report::render_optimize(&summary, &traces, &warnings);
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join("report.md"));
    write_atomic(&out_path, md.as_bytes())?;
    if !quiet {
        eprintln!("wrote {}", out_path.display());
        for w in &warnings {
            eprintln!("warning: {w}");
        }
    }
    Ok(())
}
