//! Markdown rendering for run summaries.
//!
//! Floats that a reader might want to feed back into analysis (energies,
//! trace series) are printed with Rust's shortest round-trip formatting, so
//! parsing a rendered number recovers the stored bits. Presentation-only
//! ratios are rounded.

use crate::mcmc::Temperature;
use crate::runner::{CellTraces, CvSummary, OptimizeSummary};

/// Shortest decimal that parses back to the same f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn fmt_temperature(t: &Temperature) -> String {
    match t {
        Temperature::Constant(v) => fmt_f64(*v),
        Temperature::Geometric {
            initial,
            decay,
            floor,
        } => format!(
            "geometric(initial={}, decay={}, floor={})",
            fmt_f64(*initial),
            fmt_f64(*decay),
            fmt_f64(*floor)
        ),
    }
}

/// A GitHub-style pipe table.
pub fn md_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str("| ");
    out.push_str(&headers.join(" | "));
    out.push_str(" |\n|");
    for _ in headers {
        out.push_str(" --- |");
    }
    out.push('\n');
    for row in rows {
        out.push_str("| ");
        out.push_str(&row.join(" | "));
        out.push_str(" |\n");
    }
    out
}

/// At most `cap` indices into a series of length `len`, evenly spaced,
/// always including the first and last element.
pub fn sample_indices(len: usize, cap: usize) -> Vec<usize> {
    assert!(cap >= 2, "need room for both endpoints");
    if len <= cap {
        return (0..len).collect();
    }
    let step = (len - 1) as f64 / (cap - 1) as f64;
    let mut idx: Vec<usize> = (0..cap)
        .map(|i| (i as f64 * step).round() as usize)
        .collect();
    idx.dedup();
    *idx.last_mut().unwrap() = len - 1;
    idx
}

pub fn render_optimize(
    summary: &OptimizeSummary,
    traces: &[CellTraces],
    warnings: &[String],
) -> String {
    let mut md = String::new();
    md.push_str("# Optimization report\n\n");
    md.push_str(&format!(
        "Dataset `{}`: {} rows, {} codes kept ({} screened), {} train / {} test. \
         Loss {}, seed {}, {} chains of {} iterations per cell.\n\n",
        summary.dataset.path,
        summary.dataset.rows,
        summary.dataset.vocabulary,
        summary.dataset.screened,
        summary.train_rows,
        summary.test_rows,
        summary.loss,
        summary.seed,
        summary.chains_per_cell,
        summary.iterations
    ));

    md.push_str("## Grid\n\n");
    let rows: Vec<Vec<String>> = summary
        .cells
        .iter()
        .map(|c| {
            let (best, train, pr_test, status) = match (&c.best, &c.error) {
                (Some(b), _) => (
                    fmt_f64(b.energy),
                    fmt_f64(b.train_loss),
                    format!("{:.4}", b.predictive_ratio_test),
                    "ok".to_string(),
                ),
                (None, Some(e)) => ("-".into(), "-".into(), "-".into(), format!("failed: {e}")),
                (None, None) => ("-".into(), "-".into(), "-".into(), "failed".into()),
            };
            vec![
                c.dir.clone(),
                c.k.to_string(),
                fmt_f64(c.lambda),
                fmt_temperature(&c.temperature),
                best,
                train,
                pr_test,
                status,
            ]
        })
        .collect();
    md.push_str(&md_table(
        &[
            "cell", "k", "lambda", "T", "best test loss", "train loss", "PR (test)", "status",
        ],
        &rows,
    ));
    md.push('\n');

    if let Some(w) = &summary.winner {
        md.push_str(&format!(
            "Winner: `{}` (k = {}, lambda = {}) at test loss {}; partition in `{}`.\n\n",
            w.dir,
            w.k,
            fmt_f64(w.lambda),
            fmt_f64(w.best_energy),
            w.partition_file
        ));
    } else {
        md.push_str("No cell produced a result.\n\n");
    }

    for (cell, cell_traces) in summary.cells.iter().zip(traces) {
        if cell.error.is_some() {
            continue;
        }
        md.push_str(&format!("## Cell `{}`\n\n", cell.dir));
        let rows: Vec<Vec<String>> = cell
            .chains
            .iter()
            .map(|row| {
                let acceptance = cell_traces
                    .acceptance
                    .get(row.index)
                    .copied()
                    .flatten()
                    .map(|a| format!("{a:.4}"))
                    .unwrap_or_else(|| "-".into());
                match (&row.summary, &row.error) {
                    (Some(s), _) => vec![
                        row.index.to_string(),
                        row.seed.to_string(),
                        acceptance,
                        fmt_f64(s.min),
                        fmt_f64(s.mean),
                        fmt_f64(s.max),
                        fmt_f64(s.std),
                        fmt_f64(s.best_energy),
                        if cell.winner_chain == Some(row.index) {
                            "winner".into()
                        } else {
                            String::new()
                        },
                    ],
                    (None, err) => vec![
                        row.index.to_string(),
                        row.seed.to_string(),
                        acceptance,
                        "-".into(),
                        "-".into(),
                        "-".into(),
                        "-".into(),
                        "-".into(),
                        format!("failed: {}", err.as_deref().unwrap_or("unknown")),
                    ],
                }
            })
            .collect();
        md.push_str(&md_table(
            &[
                "chain",
                "seed",
                "acceptance",
                "min",
                "mean",
                "max",
                "std",
                "best",
                "",
            ],
            &rows,
        ));
        md.push('\n');

        if let Some(series) = &cell_traces.winner_series {
            md.push_str(&format!(
                "Energy series of the winning chain ({} of {} iterations shown):\n\n",
                sample_indices(series.len(), 160).len(),
                series.len()
            ));
            let rows: Vec<Vec<String>> = sample_indices(series.len(), 160)
                .into_iter()
                .map(|i| {
                    let (iter, e_cur, e_best) = series[i];
                    vec![iter.to_string(), fmt_f64(e_cur), fmt_f64(e_best)]
                })
                .collect();
            md.push_str(&md_table(&["iteration", "energy", "best"], &rows));
            md.push('\n');
        }
    }

    if !warnings.is_empty() {
        md.push_str("## Warnings\n\n");
        for w in warnings {
            md.push_str(&format!("- {w}\n"));
        }
        md.push('\n');
    }
    md
}

pub fn render_cv(summary: &CvSummary) -> String {
    let mut md = String::new();
    md.push_str("# Cross-validation report\n\n");
    md.push_str(&format!(
        "Dataset `{}`: {} rows, {} codes kept ({} screened). {}-fold split, seed {}, loss {}.\n\n",
        summary.dataset.path,
        summary.dataset.rows,
        summary.dataset.vocabulary,
        summary.dataset.screened,
        summary.folds,
        summary.seed,
        summary.loss
    ));
    md.push_str(
        "Decile rows are computed from the pooled out-of-fold predictions, \
         ranked by observed expenditure.\n\n",
    );

    md.push_str("## Out-of-fold error\n\n");
    let mut headers: Vec<String> = vec!["specification".into()];
    headers.extend((0..summary.folds).map(|f| format!("fold {f}")));
    headers.extend(["mean", "bottom decile", "top decile"].map(String::from));
    let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = summary
        .rungs
        .iter()
        .map(|r| {
            let mut row = vec![r.name.clone()];
            row.extend(r.fold_mae.iter().map(|&m| fmt_f64(m)));
            row.push(fmt_f64(r.mean_mae));
            row.push(fmt_f64(r.bottom_decile_mae));
            row.push(fmt_f64(r.top_decile_mae));
            row
        })
        .collect();
    md.push_str(&md_table(&header_refs, &rows));
    md.push('\n');

    md.push_str("## Relative mean error\n\n");
    md.push_str("Entry (row a, column b) is 100 * (MAE_a - MAE_b) / MAE_b.\n\n");
    let mut headers: Vec<String> = vec![String::new()];
    headers.extend(summary.rungs.iter().map(|r| r.name.clone()));
    let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = summary
        .relative_mae
        .iter()
        .zip(&summary.rungs)
        .map(|(row, r)| {
            let mut out = vec![r.name.clone()];
            out.extend(row.iter().map(|&v| format!("{v:.2}")));
            out
        })
        .collect();
    md.push_str(&md_table(&header_refs, &rows));
    md.push('\n');

    md.push_str("## Aggregate predictions\n\n");
    let rows: Vec<Vec<String>> = summary
        .rungs
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.pooled_rows.to_string(),
                fmt_f64(r.observed_total),
                fmt_f64(r.predicted_total),
                fmt_f64(r.mean_prediction),
                format!("{:.6}", r.predictive_ratio),
            ]
        })
        .collect();
    md.push_str(&md_table(
        &[
            "specification",
            "rows",
            "observed total",
            "predicted total",
            "mean prediction",
            "predictive ratio",
        ],
        &rows,
    ));
    md.push('\n');
    md
}
