//! From partition to scalar energy.
//!
//! A candidate grouping is scored by what it does for prediction: build one
//! presence dummy per group (a row's dummy is set when its history touches
//! any code in that group), append the dummies to the demographic design,
//! fit OLS on the training split, and report the loss on the held-out
//! split. That held-out loss is the energy the chain minimizes.
//!
//! Everything here is deterministic: the same dataset, split, spec, and
//! loss produce bit-identical results, and [`EnergyModel`] (which caches
//! the demographic design across evaluations) is bit-identical to the
//! standalone [`energy`] path because both assemble the matrix through the
//! same code.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PredictionRow, SplitAssignment};
use crate::error::{Error, Result};
use crate::ols::{self, Fit};
use crate::partition::Partition;

/// Which loss the held-out split is scored with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mae,
    Mse,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Mae => write!(f, "mae"),
            LossKind::Mse => write!(f, "mse"),
        }
    }
}

/// Mean loss between observed and predicted responses.
pub fn compute_loss(kind: LossKind, y: &DVector<f64>, yhat: &DVector<f64>) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::usage(format!(
            "loss needs matching lengths, got {} and {}",
            y.len(),
            yhat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::usage("loss over an empty split is undefined"));
    }
    let n = y.len() as f64;
    let total: f64 = match kind {
        LossKind::Mae => y.iter().zip(yhat.iter()).map(|(a, b)| (a - b).abs()).sum(),
        LossKind::Mse => y
            .iter()
            .zip(yhat.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum(),
    };
    Ok(total / n)
}

/// Which rows of a dataset a fit or evaluation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSelector {
    All,
    /// Holdout train side.
    Train,
    /// Holdout test side.
    Test,
    /// All folds except the named one.
    FoldTrain(u16),
    /// The named fold only.
    FoldTest(u16),
}

impl RowSelector {
    /// Resolve to row indices, in dataset order.
    pub fn select(&self, data: &Dataset) -> Result<Vec<usize>> {
        let picked: Vec<usize> = match (self, &data.split) {
            (RowSelector::All, _) => (0..data.rows.len()).collect(),
            (RowSelector::Train, Some(SplitAssignment::Holdout { test })) => {
                test.iter().enumerate().filter(|(_, t)| !**t).map(|(i, _)| i).collect()
            }
            (RowSelector::Test, Some(SplitAssignment::Holdout { test })) => {
                test.iter().enumerate().filter(|(_, t)| **t).map(|(i, _)| i).collect()
            }
            (RowSelector::Train | RowSelector::Test, _) => {
                return Err(Error::usage(
                    "selector needs a train/test split; call make_split first",
                ))
            }
            (
                RowSelector::FoldTrain(f) | RowSelector::FoldTest(f),
                Some(SplitAssignment::KFold { fold, folds }),
            ) => {
                if f >= folds {
                    return Err(Error::usage(format!(
                        "fold {f} out of range for a {folds}-fold split"
                    )));
                }
                let keep = matches!(self, RowSelector::FoldTest(_));
                fold.iter()
                    .enumerate()
                    .filter(|(_, g)| (**g == *f) == keep)
                    .map(|(i, _)| i)
                    .collect()
            }
            (RowSelector::FoldTrain(_) | RowSelector::FoldTest(_), _) => {
                return Err(Error::usage(
                    "selector needs a k-fold split; call make_split first",
                ))
            }
        };
        if picked.is_empty() {
            return Err(Error::usage(format!("selector {self:?} picks no rows")));
        }
        Ok(picked)
    }
}

/// Which feature blocks enter the regression. The partition block is the
/// one the chain varies; demographics stay fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub use_sex: bool,
    pub use_age: bool,
    pub use_residence: bool,
    pub partition: Option<Partition>,
}

impl ModelSpec {
    pub fn demographic(use_sex: bool, use_age: bool, use_residence: bool) -> Self {
        ModelSpec {
            use_sex,
            use_age,
            use_residence,
            partition: None,
        }
    }

    pub fn with_partition(mut self, p: Partition) -> Self {
        self.partition = Some(p);
        self
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if !(self.use_sex || self.use_age || self.use_residence || self.partition.is_some()) {
            return Err(Error::usage("model spec enables no feature block"));
        }
        if let Some(p) = &self.partition {
            if !vocab_matches(data, p) {
                return Err(Error::data(
                    "partition vocabulary differs from the dataset vocabulary",
                ));
            }
        }
        Ok(())
    }
}

fn vocab_matches(data: &Dataset, p: &Partition) -> bool {
    Arc::ptr_eq(&data.vocab, p.vocabulary()) || data.vocab == *p.vocabulary()
}

/// Meaning of one design column. Categorical levels are indices into the
/// dataset's label sets; level 0 is the dropped reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Sex,
    AgeGroup(u16),
    ResidenceGroup(u16),
    RiskGroup(u32),
}

impl fmt::Display for ColumnRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRole::Sex => write!(f, "sex"),
            ColumnRole::AgeGroup(l) => write!(f, "age[{l}]"),
            ColumnRole::ResidenceGroup(l) => write!(f, "residence[{l}]"),
            ColumnRole::RiskGroup(g) => write!(f, "group[{g}]"),
        }
    }
}

/// Presence dummies for one row: bit `g` is set when the row's history
/// contains any code assigned to group `g`.
pub fn build_group_dummies(row: &PredictionRow, p: &Partition) -> Result<Vec<bool>> {
    let mut bits = vec![false; p.k() as usize];
    for &c in &row.history {
        if c as usize >= p.len() {
            return Err(Error::data(format!(
                "row {}: history code index {c} outside the partition's vocabulary of {} codes",
                row.person_id,
                p.len()
            )));
        }
        bits[p.group_of(c) as usize] = true;
    }
    Ok(bits)
}

/// Shared assembly for both the standalone and the cached path. Does not
/// validate `spec`; callers do.
fn assemble(
    data: &Dataset,
    rows: &[usize],
    spec: &ModelSpec,
) -> Result<(DMatrix<f64>, DVector<f64>, Vec<ColumnRole>)> {
    let n_age = data.age_groups.len();
    let n_res = data.residence_groups.len();
    let mut roles = Vec::new();
    if spec.use_sex {
        roles.push(ColumnRole::Sex);
    }
    if spec.use_age {
        for l in 1..n_age {
            roles.push(ColumnRole::AgeGroup(l as u16));
        }
    }
    if spec.use_residence {
        for l in 1..n_res {
            roles.push(ColumnRole::ResidenceGroup(l as u16));
        }
    }
    if let Some(p) = &spec.partition {
        for g in 0..p.k() {
            roles.push(ColumnRole::RiskGroup(g));
        }
    }

    let mut x = DMatrix::zeros(rows.len(), roles.len());
    let mut y = DVector::zeros(rows.len());
    for (r, &i) in rows.iter().enumerate() {
        let row = &data.rows[i];
        y[r] = row.expenditure;
        let mut c = 0;
        if spec.use_sex {
            x[(r, c)] = f64::from(row.sex);
            c += 1;
        }
        if spec.use_age {
            if row.age_group > 0 {
                x[(r, c + row.age_group as usize - 1)] = 1.0;
            }
            c += n_age - 1;
        }
        if spec.use_residence {
            if row.residence_group > 0 {
                x[(r, c + row.residence_group as usize - 1)] = 1.0;
            }
            c += n_res - 1;
        }
        if let Some(p) = &spec.partition {
            for (g, hit) in build_group_dummies(row, p)?.into_iter().enumerate() {
                if hit {
                    x[(r, c + g)] = 1.0;
                }
            }
        }
    }
    Ok((x, y, roles))
}

/// Design matrix, response, and column meanings for the selected rows.
/// Column order: sex, age one-hots (reference level dropped), residence
/// one-hots (reference dropped), then all k group dummies. The intercept is
/// supplied by the fitter.
pub fn build_design_matrix(
    data: &Dataset,
    selector: RowSelector,
    spec: &ModelSpec,
) -> Result<(DMatrix<f64>, DVector<f64>, Vec<ColumnRole>)> {
    spec.validate(data)?;
    let rows = selector.select(data)?;
    let out = assemble(data, &rows, spec)?;
    if out.2.is_empty() {
        return Err(Error::usage("model spec produces no design columns"));
    }
    Ok(out)
}

/// A fitted regression plus the mapping from design columns to features.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub fit: Fit,
    pub columns: Vec<ColumnRole>,
}

impl FittedModel {
    pub fn coefficient_count(&self) -> usize {
        self.fit.coefficient_count()
    }

    /// Roles of the columns the rank filter removed.
    pub fn dropped_roles(&self) -> Vec<ColumnRole> {
        self.fit.dropped.iter().map(|&c| self.columns[c]).collect()
    }

    /// Retained roles with their coefficients, in design order.
    pub fn named_coefficients(&self) -> Vec<(ColumnRole, f64)> {
        self.fit
            .retained
            .iter()
            .zip(&self.fit.coef)
            .map(|(&c, &b)| (self.columns[c], b))
            .collect()
    }

    /// Predictions and observed responses on the selected rows.
    pub fn predict_on(&self, data: &Dataset, selector: RowSelector) -> Result<(DVector<f64>, DVector<f64>)> {
        let (x, y, _) = build_design_matrix(data, selector, &self.spec)?;
        Ok((self.fit.predict(&x), y))
    }
}

/// Fit `spec` on the selected rows.
pub fn fit_model(data: &Dataset, selector: RowSelector, spec: &ModelSpec) -> Result<FittedModel> {
    let (x, y, columns) = build_design_matrix(data, selector, spec)?;
    let fit = ols::fit_ols(&x, &y)?;
    Ok(FittedModel {
        spec: spec.clone(),
        fit,
        columns,
    })
}

/// Train and held-out losses for one spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub loss_kind: LossKind,
    pub train_loss: f64,
    pub test_loss: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Fit on the train side of the holdout split, score `loss` on both sides.
/// The `test_loss` field is the scalar the chain minimizes.
pub fn energy(data: &Dataset, spec: &ModelSpec, loss: LossKind) -> Result<EnergyReport> {
    let model = fit_model(data, RowSelector::Train, spec)?;
    let (yhat_train, y_train) = model.predict_on(data, RowSelector::Train)?;
    let (yhat_test, y_test) = model.predict_on(data, RowSelector::Test)?;
    Ok(EnergyReport {
        loss_kind: loss,
        train_loss: compute_loss(loss, &y_train, &yhat_train)?,
        test_loss: compute_loss(loss, &y_test, &yhat_test)?,
        n_train: y_train.len(),
        n_test: y_test.len(),
    })
}

/// Σŷ / Σy over the selected rows. Near 1 means aggregate expenditure is
/// neither over- nor under-predicted.
pub fn aggregate_predictive_ratio(
    data: &Dataset,
    selector: RowSelector,
    model: &FittedModel,
) -> Result<f64> {
    let (yhat, y) = model.predict_on(data, selector)?;
    let denom = y.sum();
    if denom == 0.0 {
        return Err(Error::data(
            "aggregate predictive ratio undefined: observed expenditure sums to zero",
        ));
    }
    Ok(yhat.sum() / denom)
}

/// Frozen evaluation context for a chain: split, demographic design, and
/// responses are computed once; each call appends the group dummies for the
/// proposed partition and refits. Immutable after construction, shareable
/// across threads.
pub struct EnergyModel {
    data: Arc<Dataset>,
    demo_spec: ModelSpec,
    loss: LossKind,
    train_rows: Vec<usize>,
    test_rows: Vec<usize>,
    demo_train: DMatrix<f64>,
    demo_test: DMatrix<f64>,
    y_train: DVector<f64>,
    y_test: DVector<f64>,
    demo_roles: Vec<ColumnRole>,
}

impl EnergyModel {
    /// `spec` describes the demographic block only; its partition slot must
    /// be empty because the partition changes per evaluation.
    pub fn new(data: Arc<Dataset>, spec: &ModelSpec, loss: LossKind) -> Result<Self> {
        if spec.partition.is_some() {
            return Err(Error::usage(
                "energy model takes the demographic spec; partitions are supplied per evaluation",
            ));
        }
        let train_rows = RowSelector::Train.select(&data)?;
        let test_rows = RowSelector::Test.select(&data)?;
        let (demo_train, y_train, demo_roles) = assemble(&data, &train_rows, spec)?;
        let (demo_test, y_test, _) = assemble(&data, &test_rows, spec)?;
        Ok(EnergyModel {
            data,
            demo_spec: spec.clone(),
            loss,
            train_rows,
            test_rows,
            demo_train,
            demo_test,
            y_train,
            y_test,
            demo_roles,
        })
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    fn extend_with_dummies(
        &self,
        demo: &DMatrix<f64>,
        rows: &[usize],
        p: &Partition,
    ) -> Result<DMatrix<f64>> {
        let d = demo.ncols();
        let k = p.k() as usize;
        let mut x = DMatrix::zeros(demo.nrows(), d + k);
        for c in 0..d {
            x.set_column(c, &demo.column(c));
        }
        for (r, &i) in rows.iter().enumerate() {
            for (g, hit) in build_group_dummies(&self.data.rows[i], p)?.into_iter().enumerate() {
                if hit {
                    x[(r, d + g)] = 1.0;
                }
            }
        }
        Ok(x)
    }

    fn fit_partition(&self, p: &Partition) -> Result<(Fit, Vec<ColumnRole>)> {
        if !vocab_matches(&self.data, p) {
            return Err(Error::data(
                "partition vocabulary differs from the dataset vocabulary",
            ));
        }
        let x = self.extend_with_dummies(&self.demo_train, &self.train_rows, p)?;
        let fit = ols::fit_ols(&x, &self.y_train)?;
        let mut columns = self.demo_roles.clone();
        for g in 0..p.k() {
            columns.push(ColumnRole::RiskGroup(g));
        }
        Ok((fit, columns))
    }

    /// Held-out loss of the model fitted with `p`'s dummies. This is the
    /// chain's energy.
    pub fn evaluate(&self, p: &Partition) -> Result<f64> {
        let (fit, _) = self.fit_partition(p)?;
        let x_test = self.extend_with_dummies(&self.demo_test, &self.test_rows, p)?;
        compute_loss(self.loss, &self.y_test, &fit.predict(&x_test))
    }

    /// Both-side losses, matching [`energy`] bit for bit.
    pub fn report(&self, p: &Partition) -> Result<EnergyReport> {
        let (fit, _) = self.fit_partition(p)?;
        let x_train = self.extend_with_dummies(&self.demo_train, &self.train_rows, p)?;
        let x_test = self.extend_with_dummies(&self.demo_test, &self.test_rows, p)?;
        Ok(EnergyReport {
            loss_kind: self.loss,
            train_loss: compute_loss(self.loss, &self.y_train, &fit.predict(&x_train))?,
            test_loss: compute_loss(self.loss, &self.y_test, &fit.predict(&x_test))?,
            n_train: self.y_train.len(),
            n_test: self.y_test.len(),
        })
    }

    /// The fitted model for `p`, for coefficient reporting.
    pub fn fitted(&self, p: &Partition) -> Result<FittedModel> {
        let (fit, columns) = self.fit_partition(p)?;
        let mut spec = self.demo_spec.clone();
        spec.partition = Some(p.clone());
        Ok(FittedModel { spec, fit, columns })
    }
}

/// Quantile warm start: rank codes by mean expenditure over the selected
/// rows that carry them (codes never seen rank cheapest, mean 0), then cut
/// the ranking into k contiguous equal-count bins. Bin index is the group.
pub fn cost_quantile_partition(data: &Dataset, selector: RowSelector, k: u32) -> Result<Partition> {
    let n = data.vocab.len();
    if (k as usize) > n {
        return Err(Error::usage(format!(
            "cannot cut {n} codes into {k} nonempty bins"
        )));
    }
    let rows = selector.select(data)?;
    let mut sums = vec![0.0f64; n];
    let mut counts = vec![0u64; n];
    for &i in &rows {
        let row = &data.rows[i];
        for &c in &row.history {
            sums[c as usize] += row.expenditure;
            counts[c as usize] += 1;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mean = |c: usize| {
        if counts[c] > 0 {
            sums[c] / counts[c] as f64
        } else {
            0.0
        }
    };
    order.sort_by(|&a, &b| mean(a).partial_cmp(&mean(b)).unwrap().then(a.cmp(&b)));

    let base = n / k as usize;
    let extra = n % k as usize;
    let mut assign = vec![0u32; n];
    let mut cursor = 0usize;
    for g in 0..k as usize {
        let size = base + usize::from(g < extra);
        for &code in &order[cursor..cursor + size] {
            assign[code] = g as u32;
        }
        cursor += size;
    }
    Partition::new(Arc::clone(&data.vocab), k, assign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_split, SplitPlan};
    use crate::partition::Vocabulary;
    use crate::synth::{generate_synthetic, CodeRates, GeneratorConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gen_config(noise: f64) -> GeneratorConfig {
        GeneratorConfig {
            n_rows: 600,
            n_codes: 12,
            k_true: 3,
            seed: 9,
            noise_seed: None,
            noise_scale: noise,
            intercept: 50_000.0,
            sex_effect: 8_000.0,
            sex_rate: 0.5,
            age_groups: vec!["0-18".into(), "19-44".into(), "45-64".into(), "65+".into()],
            age_effects: vec![0.0, 9_000.0, 21_000.0, 45_000.0],
            age_weights: None,
            residence_groups: vec!["urban".into(), "normal".into(), "special".into()],
            residence_effects: vec![0.0, 6_000.0, 15_000.0],
            residence_weights: None,
            group_effects: vec![0.0, 40_000.0, 90_000.0],
            code_rates: CodeRates::MeanCount(3.0),
        }
    }

    fn split_dataset(noise: f64) -> (Dataset, Partition) {
        let (mut data, planted, _) = generate_synthetic(&gen_config(noise)).unwrap();
        make_split(
            &mut data,
            &SplitPlan::Holdout {
                fraction: 0.8,
                seed: 17,
            },
        )
        .unwrap();
        (data, planted)
    }

    fn full_spec(p: Partition) -> ModelSpec {
        ModelSpec::demographic(true, true, true).with_partition(p)
    }

    #[test]
    fn empty_history_gives_zero_dummy_vector() {
        let (data, planted) = split_dataset(0.0);
        let mut row = data.rows[0].clone();
        row.history.clear();
        assert_eq!(build_group_dummies(&row, &planted).unwrap(), vec![false; 3]);
    }

    #[test]
    fn single_code_sets_only_its_group_bit() {
        let vocab = Arc::new(Vocabulary::new((0..10).map(|i| format!("C{i}")).collect()).unwrap());
        let mut assign = vec![0u32; 10];
        assign[7] = 3;
        let p = Partition::new(Arc::clone(&vocab), 10, assign).unwrap();
        let row = PredictionRow {
            person_id: "X".into(),
            sex: 0,
            age_group: 0,
            residence_group: 0,
            history: vec![7],
            expenditure: 1.0,
        };
        let bits = build_group_dummies(&row, &p).unwrap();
        for (g, bit) in bits.iter().enumerate() {
            assert_eq!(*bit, g == 3, "group {g}");
        }
    }

    #[test]
    fn dummies_match_membership_brute_force() {
        let (data, planted) = split_dataset(100.0);
        for row in data.rows.iter().take(50) {
            let bits = build_group_dummies(row, &planted).unwrap();
            for g in 0..planted.k() {
                // Opposite loop direction: scan every vocabulary code in
                // group g and ask whether the row's history carries it.
                let expect = (0..planted.len() as u32)
                    .filter(|&c| planted.group_of(c) == g)
                    .any(|c| row.history.contains(&c));
                assert_eq!(bits[g as usize], expect);
            }
        }
    }

    #[test]
    fn out_of_range_history_index_is_a_data_error() {
        let vocab = Arc::new(Vocabulary::new(vec!["A".into(), "B".into()]).unwrap());
        let p = Partition::new(vocab, 2, vec![0, 1]).unwrap();
        let row = PredictionRow {
            person_id: "X".into(),
            sex: 0,
            age_group: 0,
            residence_group: 0,
            history: vec![5],
            expenditure: 1.0,
        };
        let err = build_group_dummies(&row, &p).unwrap_err();
        assert!(err.to_string().contains("5"), "{err}");
    }

    #[test]
    fn design_matrix_shapes_and_roles() {
        let (data, planted) = split_dataset(100.0);
        // sex + residence only: 1 + (3 - 1) columns.
        let spec1 = ModelSpec::demographic(true, false, true);
        let (x, y, roles) = build_design_matrix(&data, RowSelector::Train, &spec1).unwrap();
        assert_eq!(x.ncols(), 3);
        assert_eq!(x.nrows(), y.len());
        assert_eq!(
            roles,
            vec![
                ColumnRole::Sex,
                ColumnRole::ResidenceGroup(1),
                ColumnRole::ResidenceGroup(2)
            ]
        );
        // Full spec: 1 + 3 + 2 demographics plus k = 3 dummies.
        let (x, _, roles) = build_design_matrix(&data, RowSelector::Train, &full_spec(planted)).unwrap();
        assert_eq!(x.ncols(), 9);
        assert_eq!(roles[6..], [
            ColumnRole::RiskGroup(0),
            ColumnRole::RiskGroup(1),
            ColumnRole::RiskGroup(2)
        ]);
    }

    #[test]
    fn selectors_demand_the_matching_split_kind() {
        let (mut data, _) = split_dataset(100.0);
        assert!(RowSelector::FoldTrain(0).select(&data).is_err());
        make_split(&mut data, &SplitPlan::KFold { folds: 5, seed: 2 }).unwrap();
        assert!(RowSelector::Train.select(&data).is_err());
        assert!(RowSelector::FoldTest(5).select(&data).is_err());
        let train = RowSelector::FoldTrain(2).select(&data).unwrap();
        let test = RowSelector::FoldTest(2).select(&data).unwrap();
        assert_eq!(train.len() + test.len(), data.rows.len());
    }

    #[test]
    fn energy_is_bitwise_repeatable() {
        let (data, planted) = split_dataset(100.0);
        let spec = full_spec(planted);
        let a = energy(&data, &spec, LossKind::Mae).unwrap();
        let b = energy(&data, &spec, LossKind::Mae).unwrap();
        assert_eq!(a.test_loss.to_bits(), b.test_loss.to_bits());
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        assert_eq!(a.n_train, 480);
        assert_eq!(a.n_test, 120);
    }

    #[test]
    fn energy_is_invariant_under_group_relabeling() {
        let (data, planted) = split_dataset(100.0);
        // Swap labels 0 and 2: same grouping, permuted dummy columns.
        let relabeled = Partition::new(
            Arc::clone(planted.vocabulary()),
            3,
            planted.assignment().iter().map(|&g| 2 - g).collect(),
        )
        .unwrap();
        let a = energy(&data, &full_spec(planted), LossKind::Mae).unwrap();
        let b = energy(&data, &full_spec(relabeled), LossKind::Mae).unwrap();
        assert!(
            (a.test_loss - b.test_loss).abs() <= 1e-9 * a.test_loss.abs().max(1.0),
            "{} vs {}",
            a.test_loss,
            b.test_loss
        );
    }

    #[test]
    fn zero_noise_correct_spec_recovers_exactly() {
        let (data, planted) = split_dataset(0.0);
        let report = energy(&data, &full_spec(planted), LossKind::Mae).unwrap();
        // The generating model is inside the model class, so the fit
        // interpolates up to floating-point error.
        assert!(report.test_loss < 1e-6, "test MAE {}", report.test_loss);
    }

    #[test]
    fn planted_partition_beats_random_ones_without_noise() {
        let (data, planted) = split_dataset(0.0);
        let planted_energy = energy(&data, &full_spec(planted.clone()), LossKind::Mae)
            .unwrap()
            .test_loss;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for trial in 0..20 {
            let random = Partition::random(Arc::clone(planted.vocabulary()), 3, &mut rng).unwrap();
            if random.assignment() == planted.assignment() {
                continue;
            }
            let e = energy(&data, &full_spec(random), LossKind::Mae).unwrap().test_loss;
            assert!(
                planted_energy < e,
                "trial {trial}: planted {planted_energy} vs random {e}"
            );
        }
    }

    #[test]
    fn train_mse_is_monotone_under_nesting() {
        let (data, _) = split_dataset(20_000.0);
        let narrow = ModelSpec::demographic(true, false, true);
        let wide = ModelSpec::demographic(true, true, true);
        let a = energy(&data, &narrow, LossKind::Mse).unwrap();
        let b = energy(&data, &wide, LossKind::Mse).unwrap();
        assert!(
            b.train_loss <= a.train_loss + 1e-9,
            "wide {} vs narrow {}",
            b.train_loss,
            a.train_loss
        );
    }

    #[test]
    fn predictive_ratio_is_one_on_the_training_split() {
        let (data, planted) = split_dataset(25_000.0);
        let model = fit_model(&data, RowSelector::Train, &full_spec(planted)).unwrap();
        let pr = aggregate_predictive_ratio(&data, RowSelector::Train, &model).unwrap();
        assert!((pr - 1.0).abs() <= 1e-9, "PR {pr}");
    }

    #[test]
    fn predictive_ratio_rejects_zero_aggregate() {
        let (mut data, _) = split_dataset(0.0);
        let model = fit_model(&data, RowSelector::Train, &ModelSpec::demographic(true, true, true))
            .unwrap();
        for row in &mut data.rows {
            row.expenditure = 0.0;
        }
        assert!(aggregate_predictive_ratio(&data, RowSelector::Test, &model).is_err());
    }

    #[test]
    fn energy_model_matches_the_standalone_path_bit_for_bit() {
        let (data, _planted) = split_dataset(15_000.0);
        let data = Arc::new(data);
        let demo = ModelSpec::demographic(true, true, true);
        let model = EnergyModel::new(Arc::clone(&data), &demo, LossKind::Mae).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let p = Partition::random(Arc::clone(&data.vocab), 4, &mut rng).unwrap();
            let standalone = energy(&data, &demo.clone().with_partition(p.clone()), LossKind::Mae)
                .unwrap();
            let cached = model.evaluate(&p).unwrap();
            assert_eq!(cached.to_bits(), standalone.test_loss.to_bits());
            let report = model.report(&p).unwrap();
            assert_eq!(report.train_loss.to_bits(), standalone.train_loss.to_bits());
            assert_eq!(report.test_loss.to_bits(), standalone.test_loss.to_bits());
        }
    }

    #[test]
    fn energy_model_handles_empty_groups_by_dropping_their_columns() {
        let (data, planted) = split_dataset(10_000.0);
        let data = Arc::new(data);
        let model =
            EnergyModel::new(Arc::clone(&data), &ModelSpec::demographic(true, true, true), LossKind::Mae)
                .unwrap();
        // Group 4 is empty: its dummy column is all zeros and must be shed
        // by the rank filter, not kill the fit.
        let p = Partition::new(
            Arc::clone(&data.vocab),
            5,
            planted.assignment().to_vec(),
        )
        .unwrap();
        let fitted = model.fitted(&p).unwrap();
        assert!(fitted.dropped_roles().contains(&ColumnRole::RiskGroup(4)));
        assert!(model.evaluate(&p).unwrap().is_finite());
    }

    #[test]
    fn cost_quantile_bins_follow_mean_code_cost() {
        // One code per row, expenditure strictly increasing with code index:
        // the ranking is the identity and bins are contiguous runs.
        let vocab = Arc::new(Vocabulary::new((0..9).map(|i| format!("C{i}")).collect()).unwrap());
        let rows = (0..90)
            .map(|i| PredictionRow {
                person_id: format!("P{i}"),
                sex: 0,
                age_group: 0,
                residence_group: 0,
                history: vec![(i % 9) as u32],
                expenditure: f64::from(i % 9) * 100.0,
            })
            .collect();
        let data = Dataset {
            vocab,
            rows,
            age_groups: vec!["a".into()],
            residence_groups: vec!["r".into()],
            split: None,
        };
        let p = cost_quantile_partition(&data, RowSelector::All, 3).unwrap();
        assert_eq!(p.assignment(), &[0, 0, 0, 1, 1, 1, 2, 2, 2]);
        // Uneven split: first bins take the extras.
        let p4 = cost_quantile_partition(&data, RowSelector::All, 4).unwrap();
        assert_eq!(p4.assignment(), &[0, 0, 0, 1, 1, 2, 2, 3, 3]);
        assert!(cost_quantile_partition(&data, RowSelector::All, 10).is_err());
    }

    #[test]
    fn warm_start_is_no_worse_than_random_on_planted_data() {
        let (data, _) = split_dataset(18_000.0);
        let warm = cost_quantile_partition(&data, RowSelector::Train, 3).unwrap();
        let e_warm = energy(&data, &full_spec(warm.clone()), LossKind::Mae)
            .unwrap()
            .test_loss;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut better = 0;
        for _ in 0..20 {
            let random = Partition::random(Arc::clone(warm.vocabulary()), 3, &mut rng).unwrap();
            let e = energy(&data, &full_spec(random), LossKind::Mae).unwrap().test_loss;
            if e_warm <= e {
                better += 1;
            }
        }
        assert!(better >= 15, "warm start beat only {better}/20 random starts");
    }
}
