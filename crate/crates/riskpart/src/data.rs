//! Dataset schema, CSV ingestion, and deterministic splitting.
//!
//! A row is one person-period: demographics, total expenditure for the
//! period, and the set of codes observed in any *earlier* period (the
//! history union). The file format is
//!
//! ```text
//! person_id,sex,age_group,residence_group,expenditure,codes
//! P000001,1,19-44,urban,125000.5,C004;C017
//! P000002,0,65+,normal,98000.0,
//! ```
//!
//! with `codes` semicolon-separated and possibly empty. Categorical labels
//! must come from the declared label sets; codes below the prevalence
//! screen are removed from the vocabulary and from row histories, and
//! reported. Splits are keyed by hashing `(seed, person_id)` with SHA-256,
//! so the assignment is reproducible across runs, platforms, and row
//! orderings.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::partition::Vocabulary;

/// Declared label sets and the vocabulary screen applied at load time.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaConfig {
    pub age_groups: Vec<String>,
    pub residence_groups: Vec<String>,
    /// Codes observed in fewer rows than this are screened out.
    pub min_code_count: u32,
    /// When set, any code outside this list is a data error (the screen
    /// still applies afterwards).
    pub declared_vocabulary: Option<Vec<String>>,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            age_groups: [
                "0-1", "2-4", "5-18", "19-44", "45-49", "50-54", "55-59", "60-64", "65-69",
                "70-74", "74+",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            residence_groups: ["urban", "normal", "special"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            min_code_count: 50,
            declared_vocabulary: None,
        }
    }
}

impl SchemaConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, labels) in [
            ("age_groups", &self.age_groups),
            ("residence_groups", &self.residence_groups),
        ] {
            if labels.is_empty() {
                return Err(Error::usage(format!("schema {name} must not be empty")));
            }
            let mut seen = std::collections::HashSet::new();
            for l in labels {
                if !seen.insert(l) {
                    return Err(Error::usage(format!("schema {name} repeats label {l:?}")));
                }
            }
        }
        Ok(())
    }
}

/// One person-period observation. Demographics are stored as indices into
/// the dataset's label sets; `history` is a sorted, deduplicated list of
/// vocabulary indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub person_id: String,
    pub sex: u8,
    pub age_group: u16,
    pub residence_group: u16,
    pub history: Vec<u32>,
    pub expenditure: f64,
}

/// Train/test or k-fold membership, aligned with `Dataset::rows`.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitAssignment {
    Holdout { test: Vec<bool> },
    KFold { fold: Vec<u16>, folds: u16 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: Arc<Vocabulary>,
    pub rows: Vec<PredictionRow>,
    pub age_groups: Vec<String>,
    pub residence_groups: Vec<String>,
    pub split: Option<SplitAssignment>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// What the loader saw: row and vocabulary totals, per-code prevalence of
/// the kept codes, and the codes removed by the screen.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub total_rows: usize,
    pub vocabulary_size: usize,
    /// Kept codes with their row counts, vocabulary order.
    pub code_counts: Vec<(String, u32)>,
    /// Screened-out codes with their row counts, lexicographic.
    pub screened: Vec<(String, u32)>,
}

const DATASET_HEADER: [&str; 6] = [
    "person_id",
    "sex",
    "age_group",
    "residence_group",
    "expenditure",
    "codes",
];

fn label_index(labels: &[String], value: &str) -> Option<u16> {
    labels.iter().position(|l| l == value).map(|i| i as u16)
}

/// Load a dataset CSV under `schema`. Returns the dataset (no split
/// assigned) and a load report. All content problems are data errors
/// carrying the 1-based file line.
pub fn load_dataset(path: &Path, schema: &SchemaConfig) -> Result<(Dataset, LoadReport)> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?;
    if headers.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(Error::data(format!(
            "{}: expected header `{}`",
            path.display(),
            DATASET_HEADER.join(",")
        )));
    }

    struct RawRow {
        person_id: String,
        sex: u8,
        age_group: u16,
        residence_group: u16,
        codes: Vec<String>,
        expenditure: f64,
    }

    let declared: Option<std::collections::HashSet<&String>> = schema
        .declared_vocabulary
        .as_ref()
        .map(|v| v.iter().collect());
    let mut raw_rows = Vec::new();
    let mut seen_person: HashMap<String, u64> = HashMap::new();
    let mut code_rows: HashMap<String, u32> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let at = |msg: String| Error::data(format!("{}:{line}: {msg}", path.display()));
        if record.len() != 6 {
            return Err(at(format!("expected 6 fields, got {}", record.len())));
        }
        let person_id = record[0].to_string();
        if person_id.is_empty() {
            return Err(at("empty person_id".into()));
        }
        if let Some(first) = seen_person.insert(person_id.clone(), line) {
            return Err(at(format!(
                "duplicate person_id {person_id:?} (first seen at line {first})"
            )));
        }
        let sex: u8 = match &record[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(at(format!("sex must be 0 or 1, got {other:?}"))),
        };
        let age_group = label_index(&schema.age_groups, &record[2])
            .ok_or_else(|| at(format!("unknown age_group {:?}", &record[2])))?;
        let residence_group = label_index(&schema.residence_groups, &record[3])
            .ok_or_else(|| at(format!("unknown residence_group {:?}", &record[3])))?;
        let expenditure: f64 = record[4]
            .parse()
            .map_err(|_| at(format!("expenditure {:?} is not a number", &record[4])))?;
        if !expenditure.is_finite() || expenditure < 0.0 {
            return Err(at(format!(
                "expenditure must be finite and nonnegative, got {expenditure}"
            )));
        }
        let mut codes: Vec<String> = record[5]
            .split(';')
            .filter(|c| !c.is_empty())
            .map(|c| c.to_string())
            .collect();
        codes.sort();
        codes.dedup();
        if let Some(declared) = &declared {
            for code in &codes {
                if !declared.contains(code) {
                    return Err(at(format!("code {code:?} not in declared vocabulary")));
                }
            }
        }
        for code in &codes {
            *code_rows.entry(code.clone()).or_insert(0) += 1;
        }
        raw_rows.push(RawRow {
            person_id,
            sex,
            age_group,
            residence_group,
            codes,
            expenditure,
        });
    }
    if raw_rows.is_empty() {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }

    let mut kept: Vec<(String, u32)> = Vec::new();
    let mut screened: Vec<(String, u32)> = Vec::new();
    let mut counts: Vec<(String, u32)> = code_rows.into_iter().collect();
    counts.sort();
    for (code, count) in counts {
        if count >= schema.min_code_count {
            kept.push((code, count));
        } else {
            screened.push((code, count));
        }
    }
    if kept.is_empty() {
        return Err(Error::data(format!(
            "{}: no code clears the prevalence screen (min_code_count = {})",
            path.display(),
            schema.min_code_count
        )));
    }
    let vocab = Arc::new(Vocabulary::new(
        kept.iter().map(|(c, _)| c.clone()).collect(),
    )?);

    let rows = raw_rows
        .into_iter()
        .map(|raw| {
            let mut history: Vec<u32> = raw
                .codes
                .iter()
                .filter_map(|c| vocab.index_of(c))
                .collect();
            history.sort_unstable();
            PredictionRow {
                person_id: raw.person_id,
                sex: raw.sex,
                age_group: raw.age_group,
                residence_group: raw.residence_group,
                history,
                expenditure: raw.expenditure,
            }
        })
        .collect::<Vec<_>>();

    let report = LoadReport {
        total_rows: rows.len(),
        vocabulary_size: vocab.len(),
        code_counts: kept,
        screened,
    };
    Ok((
        Dataset {
            vocab,
            rows,
            age_groups: schema.age_groups.clone(),
            residence_groups: schema.residence_groups.clone(),
            split: None,
        },
        report,
    ))
}

/// Write a dataset in the canonical form `load_dataset` accepts: row order
/// preserved, history codes semicolon-joined in vocabulary order, floats in
/// shortest round-trip form. Written atomically.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut buf);
        writer
            .write_record(DATASET_HEADER)
            .map_err(|e| Error::csv(path, e))?;
        for row in &data.rows {
            let codes = row
                .history
                .iter()
                .map(|&i| data.vocab.code(i))
                .collect::<Vec<_>>()
                .join(";");
            writer
                .write_record([
                    row.person_id.as_str(),
                    &row.sex.to_string(),
                    &data.age_groups[row.age_group as usize],
                    &data.residence_groups[row.residence_group as usize],
                    &row.expenditure.to_string(),
                    &codes,
                ])
                .map_err(|e| Error::csv(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
    }
    crate::util::write_atomic(path, &buf)
}

/// How to split a dataset. `fraction` is the train share of a holdout.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitPlan {
    Holdout { fraction: f64, seed: u64 },
    KFold { folds: u16, seed: u64 },
}

/// Stable 64-bit key for a person under a split seed.
fn split_key(seed: u64, person_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(person_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Attach a split to the dataset. Rows are ranked by the hash of
/// `(seed, person_id)` (ties broken by id), so membership depends only on
/// the ids present and the seed, never on row order.
pub fn make_split(data: &mut Dataset, plan: &SplitPlan) -> Result<()> {
    let n = data.rows.len();
    let mut ranked: Vec<(u64, &str, usize)> = data
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let seed = match plan {
                SplitPlan::Holdout { seed, .. } => *seed,
                SplitPlan::KFold { seed, .. } => *seed,
            };
            (split_key(seed, &row.person_id), row.person_id.as_str(), i)
        })
        .collect();
    ranked.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    match plan {
        SplitPlan::Holdout { fraction, .. } => {
            if !(*fraction > 0.0 && *fraction < 1.0) {
                return Err(Error::usage(format!(
                    "holdout fraction must lie in (0, 1), got {fraction}"
                )));
            }
            let n_train = (fraction * n as f64).round() as usize;
            if n_train == 0 || n_train == n {
                return Err(Error::usage(format!(
                    "holdout fraction {fraction} leaves an empty side for {n} rows"
                )));
            }
            let mut test = vec![false; n];
            for (rank, &(_, _, idx)) in ranked.iter().enumerate() {
                test[idx] = rank >= n_train;
            }
            data.split = Some(SplitAssignment::Holdout { test });
        }
        SplitPlan::KFold { folds, .. } => {
            if *folds < 2 {
                return Err(Error::usage(format!("k-fold needs folds >= 2, got {folds}")));
            }
            if *folds as usize > n {
                return Err(Error::usage(format!(
                    "fold count {folds} exceeds row count {n}"
                )));
            }
            let mut fold = vec![0u16; n];
            for (rank, &(_, _, idx)) in ranked.iter().enumerate() {
                fold[idx] = (rank % *folds as usize) as u16;
            }
            data.split = Some(SplitAssignment::KFold {
                fold,
                folds: *folds,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(min: u32) -> SchemaConfig {
        SchemaConfig {
            age_groups: vec!["young".into(), "old".into()],
            residence_groups: vec!["urban".into(), "rural".into()],
            min_code_count: min,
            declared_vocabulary: None,
        }
    }

    fn write_fixture(dir: &Path, body: &str) -> std::path::PathBuf {
        let path = dir.join("data.csv");
        let full = format!(
            "person_id,sex,age_group,residence_group,expenditure,codes\n{body}"
        );
        std::fs::write(&path, full).unwrap();
        path
    }

    #[test]
    fn loads_rows_and_vocabulary() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(
            dir.path(),
            "P1,0,young,urban,10.5,B;A\nP2,1,old,rural,0,\nP3,0,young,rural,3,A\n",
        );
        let (data, report) = load_dataset(&path, &schema(1)).unwrap();
        assert_eq!(data.n_rows(), 3);
        assert_eq!(data.vocab.codes(), &["A".to_string(), "B".to_string()]);
        // History is stored sorted by vocabulary index even though the file
        // listed B first.
        assert_eq!(data.rows[0].history, vec![0, 1]);
        assert_eq!(data.rows[1].history, Vec::<u32>::new());
        assert_eq!(report.code_counts, vec![("A".into(), 2), ("B".into(), 1)]);
        assert!(report.screened.is_empty());
    }

    #[test]
    fn prevalence_screen_drops_rare_codes() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(
            dir.path(),
            "P1,0,young,urban,1,A;R\nP2,1,old,rural,2,A\nP3,0,young,rural,3,A\n",
        );
        let (data, report) = load_dataset(&path, &schema(2)).unwrap();
        assert_eq!(data.vocab.codes(), &["A".to_string()]);
        assert_eq!(report.screened, vec![("R".into(), 1)]);
        // R is gone from histories too.
        assert_eq!(data.rows[0].history, vec![0]);
    }

    #[test]
    fn line_level_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        for (body, needle) in [
            ("P1,2,young,urban,1,A\n", "sex"),
            ("P1,0,ancient,urban,1,A\n", "age_group"),
            ("P1,0,young,mars,1,A\n", "residence_group"),
            ("P1,0,young,urban,-4,A\n", "nonnegative"),
            ("P1,0,young,urban,abc,A\n", "not a number"),
            ("P1,0,young,urban,1,A\nP1,1,old,rural,2,B\n", "duplicate person_id"),
        ] {
            let path = write_fixture(dir.path(), body);
            let err = load_dataset(&path, &schema(1)).unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains(needle), "body {body:?} gave {msg}");
            assert!(msg.contains(".csv:"), "missing line info in {msg}");
        }
    }

    #[test]
    fn declared_vocabulary_rejects_unknown_codes() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), "P1,0,young,urban,1,A;X\n");
        let mut s = schema(1);
        s.declared_vocabulary = Some(vec!["A".into(), "B".into()]);
        let err = load_dataset(&path, &s).unwrap_err();
        assert!(err.to_string().contains("\"X\""), "{err}");
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(
            dir.path(),
            "P1,0,young,urban,10.5,A;B\nP2,1,old,rural,0,\nP3,0,young,rural,3.25,A\n",
        );
        let (data, _) = load_dataset(&path, &schema(1)).unwrap();
        let out = dir.path().join("echo.csv");
        write_dataset(&out, &data).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&out).unwrap()
        );
        // And write(load(write(...))) is a fixed point.
        let (data2, _) = load_dataset(&out, &schema(1)).unwrap();
        let out2 = dir.path().join("echo2.csv");
        write_dataset(&out2, &data2).unwrap();
        assert_eq!(
            std::fs::read(&out).unwrap(),
            std::fs::read(&out2).unwrap()
        );
    }

    fn toy_dataset(n: usize) -> Dataset {
        let vocab = Arc::new(Vocabulary::new(vec!["A".into()]).unwrap());
        let rows = (0..n)
            .map(|i| PredictionRow {
                person_id: format!("P{i:05}"),
                sex: (i % 2) as u8,
                age_group: 0,
                residence_group: 0,
                history: vec![],
                expenditure: i as f64,
            })
            .collect();
        Dataset {
            vocab,
            rows,
            age_groups: vec!["young".into()],
            residence_groups: vec!["urban".into()],
            split: None,
        }
    }

    #[test]
    fn holdout_counts_are_exact() {
        let mut data = toy_dataset(1000);
        make_split(
            &mut data,
            &SplitPlan::Holdout {
                fraction: 0.8,
                seed: 7,
            },
        )
        .unwrap();
        let Some(SplitAssignment::Holdout { test }) = &data.split else {
            panic!("expected holdout");
        };
        assert_eq!(test.iter().filter(|&&t| t).count(), 200);
    }

    #[test]
    fn kfold_assigns_every_row_to_exactly_one_fold() {
        let mut data = toy_dataset(103);
        make_split(&mut data, &SplitPlan::KFold { folds: 5, seed: 3 }).unwrap();
        let Some(SplitAssignment::KFold { fold, folds }) = &data.split else {
            panic!("expected kfold");
        };
        assert_eq!(*folds, 5);
        let mut sizes = [0usize; 5];
        for &f in fold {
            sizes[f as usize] += 1;
        }
        assert_eq!(sizes.iter().sum::<usize>(), 103);
        assert!(sizes.iter().all(|&s| s == 20 || s == 21));
    }

    #[test]
    fn split_is_row_order_invariant_and_seed_keyed() {
        let mut a = toy_dataset(200);
        let mut b = toy_dataset(200);
        b.rows.reverse();
        let plan = SplitPlan::Holdout {
            fraction: 0.8,
            seed: 11,
        };
        make_split(&mut a, &plan).unwrap();
        make_split(&mut b, &plan).unwrap();
        let membership = |d: &Dataset| -> HashMap<String, bool> {
            let Some(SplitAssignment::Holdout { test }) = &d.split else {
                panic!()
            };
            d.rows
                .iter()
                .zip(test)
                .map(|(r, t)| (r.person_id.clone(), *t))
                .collect()
        };
        assert_eq!(membership(&a), membership(&b));

        let mut c = toy_dataset(200);
        make_split(
            &mut c,
            &SplitPlan::Holdout {
                fraction: 0.8,
                seed: 12,
            },
        )
        .unwrap();
        assert_ne!(membership(&a), membership(&c));
    }

    #[test]
    fn split_plan_validation() {
        let mut data = toy_dataset(10);
        assert!(make_split(
            &mut data,
            &SplitPlan::Holdout {
                fraction: 1.0,
                seed: 1
            }
        )
        .is_err());
        assert!(make_split(&mut data, &SplitPlan::KFold { folds: 11, seed: 1 }).is_err());
        assert!(make_split(&mut data, &SplitPlan::KFold { folds: 1, seed: 1 }).is_err());
    }
}
