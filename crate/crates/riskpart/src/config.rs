//! Declarative run configuration.
//!
//! One TOML file describes a whole workflow: where the data comes from (a
//! CSV path or a generator block), how it is split, how chains run, the
//! hyperparameter grid, and the cross-validation ladder. Sections are
//! optional; each command validates that the pieces it needs are present.
//! Unknown keys are rejected so typos fail loudly, with the parser's
//! line/column in the message.
//!
//! Relative paths inside the file resolve against the file's directory, so
//! a config can be invoked from anywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{SchemaConfig, SplitPlan};
use crate::energy::LossKind;
use crate::error::{Error, Result};
use crate::mcmc::Temperature;
use crate::synth::{CodeRates, GeneratorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub age_groups: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residence_groups: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_code_count: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub declared_vocabulary: Option<Vec<String>>,
}

/// Mirrors [`GeneratorConfig`] with the seeds optional (they default to the
/// global seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub n_rows: usize,
    pub n_codes: u32,
    pub k_true: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    pub noise_scale: f64,
    pub intercept: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex_effect: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex_rate: Option<f64>,
    pub age_groups: Vec<String>,
    pub age_effects: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_weights: Option<Vec<f64>>,
    pub residence_groups: Vec<String>,
    pub residence_effects: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residence_weights: Option<Vec<f64>>,
    pub group_effects: Vec<f64>,
    pub code_rates: CodeRates,
}

impl GeneratorSection {
    fn to_config(&self, global_seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n_rows: self.n_rows,
            n_codes: self.n_codes,
            k_true: self.k_true,
            seed: self.seed.unwrap_or(global_seed),
            noise_seed: self.noise_seed,
            noise_scale: self.noise_scale,
            intercept: self.intercept,
            sex_effect: self.sex_effect.unwrap_or(0.0),
            sex_rate: self.sex_rate.unwrap_or(0.5),
            age_groups: self.age_groups.clone(),
            age_effects: self.age_effects.clone(),
            age_weights: self.age_weights.clone(),
            residence_groups: self.residence_groups.clone(),
            residence_effects: self.residence_effects.clone(),
            residence_weights: self.residence_weights.clone(),
            group_effects: self.group_effects.clone(),
            code_rates: self.code_rates.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKindName {
    Holdout,
    Kfold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<SplitKindName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// `1000.0` or `{ initial = 1000.0, decay = 0.999, floor = 1.0 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TempSetting {
    Constant(f64),
    Geometric { initial: f64, decay: f64, floor: f64 },
}

impl TempSetting {
    pub fn to_temperature(&self) -> Temperature {
        match *self {
            TempSetting::Constant(t) => Temperature::Constant(t),
            TempSetting::Geometric { initial, decay, floor } => {
                Temperature::Geometric { initial, decay, floor }
            }
        }
    }
}

/// Where chains start: `"random"`, `"cost_quantile"`, or a partition CSV
/// path (anything else).
#[derive(Debug, Clone, PartialEq)]
pub enum InitChoice {
    Random,
    CostQuantile,
    File(PathBuf),
}

impl InitChoice {
    fn parse(s: &str) -> InitChoice {
        match s {
            "random" => InitChoice::Random,
            "cost_quantile" => InitChoice::CostQuantile,
            other => InitChoice::File(PathBuf::from(other)),
        }
    }

    /// Constant-temperature default: hot for blind random starts, cool for
    /// informed starts that should explore locally.
    pub fn default_temperature(&self) -> f64 {
        match self {
            InitChoice::Random => 1000.0,
            InitChoice::CostQuantile | InitChoice::File(_) => 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chains: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<TempSetting>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forbid_empty: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_distance: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub k: Vec<u32>,
    pub lambda: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<Vec<TempSetting>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partitions: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// Chain settings with defaults applied (except temperature, which the
/// grid may override per cell).
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedChain {
    pub iterations: u64,
    pub chains: usize,
    pub temperature: Option<TempSetting>,
    pub init: InitChoice,
    pub loss: LossKind,
    pub forbid_empty: bool,
    pub max_distance: Option<u32>,
    pub seed: u64,
}

/// One (k, lambda, T) grid cell, in declaration order (k outermost).
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub k: u32,
    pub lambda: f64,
    pub temperature: Temperature,
}

impl GridCell {
    /// Stable directory name for the cell's artifacts.
    pub fn dir_name(&self) -> String {
        let t = match &self.temperature {
            Temperature::Constant(t) => format!("{t}"),
            Temperature::Geometric { initial, decay, floor } => {
                format!("g{initial}d{decay}f{floor}")
            }
        };
        format!("cell_k{}_l{}_t{}", self.k, self.lambda, t)
    }
}

/// A parsed config plus the directory its relative paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub raw: RunConfig,
    pub dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::usage(format!("cannot read config {}: {e}", path.display())))?;
        let raw: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::usage(format!("{}: {e}", path.display())))?;
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf();
        Ok(LoadedConfig { raw, dir })
    }

    pub fn from_raw(raw: RunConfig, dir: PathBuf) -> Self {
        LoadedConfig { raw, dir }
    }

    /// CLI seed beats the file's global seed; absent both, 0.
    pub fn global_seed(&self, cli_seed: Option<u64>) -> u64 {
        cli_seed.or(self.raw.seed).unwrap_or(0)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    /// Label sets and screen for loading: explicit [data] keys win, then the
    /// generator's labels (so self-generated data loads without repeating
    /// them), then the built-in defaults.
    pub fn schema(&self) -> SchemaConfig {
        let defaults = SchemaConfig::default();
        let data = self.raw.data.as_ref();
        let generator = self.raw.generator.as_ref();
        SchemaConfig {
            age_groups: data
                .and_then(|d| d.age_groups.clone())
                .or_else(|| generator.map(|g| g.age_groups.clone()))
                .unwrap_or(defaults.age_groups),
            residence_groups: data
                .and_then(|d| d.residence_groups.clone())
                .or_else(|| generator.map(|g| g.residence_groups.clone()))
                .unwrap_or(defaults.residence_groups),
            min_code_count: data
                .and_then(|d| d.min_code_count)
                .unwrap_or(defaults.min_code_count),
            declared_vocabulary: data.and_then(|d| d.declared_vocabulary.clone()),
        }
    }

    pub fn dataset_path(&self) -> Result<PathBuf> {
        let p = self
            .raw
            .data
            .as_ref()
            .and_then(|d| d.path.as_ref())
            .ok_or_else(|| Error::usage("config needs [data] with a `path`"))?;
        Ok(self.resolve(p))
    }

    pub fn generator(&self, cli_seed: Option<u64>) -> Result<GeneratorConfig> {
        let section = self
            .raw
            .generator
            .as_ref()
            .ok_or_else(|| Error::usage("config needs a [generator] section"))?;
        let cfg = section.to_config(self.global_seed(cli_seed));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn split_plan(&self, cli_seed: Option<u64>) -> Result<SplitPlan> {
        let global = self.global_seed(cli_seed);
        let s = self.raw.split.clone().unwrap_or_default();
        let seed = s.seed.unwrap_or(global);
        Ok(match s.kind.unwrap_or(SplitKindName::Holdout) {
            SplitKindName::Holdout => SplitPlan::Holdout {
                fraction: s.fraction.unwrap_or(0.8),
                seed,
            },
            SplitKindName::Kfold => SplitPlan::KFold {
                folds: s.folds.unwrap_or(5),
                seed,
            },
        })
    }

    pub fn chain(&self, cli_seed: Option<u64>) -> ResolvedChain {
        let global = self.global_seed(cli_seed);
        let c = self.raw.chain.clone().unwrap_or_default();
        let init = InitChoice::parse(c.initial.as_deref().unwrap_or("random"));
        ResolvedChain {
            iterations: c.iterations.unwrap_or(1000),
            chains: c.chains.unwrap_or(5),
            temperature: c.temperature,
            init,
            loss: c.loss.unwrap_or(LossKind::Mae),
            forbid_empty: c.forbid_empty.unwrap_or(false),
            max_distance: c.max_distance,
            seed: c.seed.unwrap_or(global),
        }
    }

    /// Expand the grid: every (k, lambda, temperature) combination, k
    /// outermost. Without a [grid].temperature list the chain temperature
    /// applies, falling back to the init-dependent default.
    pub fn grid(&self, cli_seed: Option<u64>) -> Result<Vec<GridCell>> {
        let section = self
            .raw
            .grid
            .as_ref()
            .ok_or_else(|| Error::usage("config needs a [grid] section with `k` and `lambda`"))?;
        if section.k.is_empty() || section.lambda.is_empty() {
            return Err(Error::usage("[grid] lists `k` and `lambda` must be nonempty"));
        }
        let chain = self.chain(cli_seed);
        let temps: Vec<Temperature> = match (&section.temperature, &chain.temperature) {
            (Some(list), _) if !list.is_empty() => {
                list.iter().map(TempSetting::to_temperature).collect()
            }
            (Some(_), _) => {
                return Err(Error::usage("[grid] `temperature` list must be nonempty"))
            }
            (None, Some(t)) => vec![t.to_temperature()],
            (None, None) => vec![Temperature::Constant(chain.init.default_temperature())],
        };
        let mut cells = Vec::new();
        for &k in &section.k {
            for &lambda in &section.lambda {
                for t in &temps {
                    cells.push(GridCell {
                        k,
                        lambda,
                        temperature: t.clone(),
                    });
                }
            }
        }
        Ok(cells)
    }

    pub fn cv_folds(&self) -> u16 {
        self.raw.cv.as_ref().and_then(|c| c.folds).unwrap_or(5)
    }

    pub fn cv_seed(&self, cli_seed: Option<u64>) -> u64 {
        self.raw
            .cv
            .as_ref()
            .and_then(|c| c.seed)
            .unwrap_or(self.global_seed(cli_seed))
    }

    pub fn cv_partitions(&self) -> Vec<PathBuf> {
        self.raw
            .cv
            .as_ref()
            .and_then(|c| c.partitions.clone())
            .unwrap_or_default()
            .iter()
            .map(|p| self.resolve(p))
            .collect()
    }

    /// Output directory: the CLI flag wins, then [output].dir (relative to
    /// the config file), then `out` next to the config file.
    pub fn out_dir(&self, cli_out: Option<&Path>) -> PathBuf {
        match cli_out {
            Some(p) => p.to_path_buf(),
            None => match self.raw.output.as_ref().and_then(|o| o.dir.as_ref()) {
                Some(d) => self.resolve(d),
                None => self.dir.join("out"),
            },
        }
    }

    /// Thread count: CLI flag, then the environment, then the config file,
    /// then 0 (meaning all cores).
    pub fn threads(&self, cli_threads: Option<usize>, env: Option<&str>) -> Result<usize> {
        if let Some(t) = cli_threads {
            return Ok(t);
        }
        if let Some(raw) = env {
            return raw.trim().parse().map_err(|_| {
                Error::usage(format!("RISKPART_THREADS must be a nonnegative integer, got {raw:?}"))
            });
        }
        Ok(self.raw.threads.unwrap_or(0))
    }
}
