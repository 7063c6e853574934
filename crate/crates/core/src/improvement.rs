//! Out-of-sample improvement of the model-based rule over the `random` and
//! `best` baselines.
//!
//! Held-out responses are cross-tabulated by administered arm `A` and
//! recommended arm `d`:
//!
//! ```text
//!            d = 0   d = 1
//!   A = 0      P       Q
//!   A = 1      R       S
//! ```
//!
//! Subjects in `P` and `S` got the arm the rule recommends, so their mean
//! estimates the value of the rule. Then
//!
//! ```text
//! I_random = mean(P u S) - mean(all)
//! I_best   = mean(P u S) - better of { mean(P u Q), mean(R u S) }
//! ```

use rand::Rng;
use serde::Serialize;

use crate::allocation::{fit_best_arm, model_decision};
use crate::dataset::{effective_folds, make_folds, RctDataset};
use crate::error::{Error, Result};
use crate::linear_model::{build_design_with, Direction, FittedModel, ModelSpec};

/// Default number of cross-validation folds.
pub const DEFAULT_FOLDS: usize = 10;

/// Held-out responses split by (administered arm, recommended arm).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CrossTab {
    /// `A = 0, d = 0`
    pub p: Vec<f64>,
    /// `A = 0, d = 1`
    pub q: Vec<f64>,
    /// `A = 1, d = 0`
    pub r: Vec<f64>,
    /// `A = 1, d = 1`
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CellCounts {
    pub n00: usize,
    pub n01: usize,
    pub n10: usize,
    pub n11: usize,
}

impl CellCounts {
    pub fn total(&self) -> usize {
        self.n00 + self.n01 + self.n10 + self.n11
    }
}

impl CrossTab {
    pub fn counts(&self) -> CellCounts {
        CellCounts {
            n00: self.p.len(),
            n01: self.q.len(),
            n10: self.r.len(),
            n11: self.s.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.counts().total()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits `y_test` into the four cells.
pub fn crosstab(y_test: &[f64], a_test: &[u8], d_hat: &[u8]) -> Result<CrossTab> {
    if y_test.len() != a_test.len() || y_test.len() != d_hat.len() {
        return Err(Error::InvalidArgument(format!(
            "crosstab lengths differ: y {}, A {}, d {}",
            y_test.len(),
            a_test.len(),
            d_hat.len()
        )));
    }
    let mut tab = CrossTab::default();
    for ((&y, &a), &d) in y_test.iter().zip(a_test).zip(d_hat) {
        match (a, d) {
            (0, 0) => tab.p.push(y),
            (0, _) => tab.q.push(y),
            (_, 0) => tab.r.push(y),
            _ => tab.s.push(y),
        }
    }
    Ok(tab)
}

/// Point estimates of both improvements plus the values they are built from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImprovementEstimate {
    pub i_random: f64,
    pub i_best: f64,
    /// Mean response of subjects whose arm matched the rule.
    pub value_d: f64,
    /// Mean held-out response.
    pub value_random: f64,
    pub value_best: f64,
    pub cell_counts: CellCounts,
    #[serde(skip)]
    pub crosstab: CrossTab,
}

fn sum_of(cells: &[&[f64]]) -> (f64, usize) {
    cells.iter().fold((0.0, 0), |(s, n), c| {
        (c.iter().fold(s, |acc, &y| acc + y), n + c.len())
    })
}

fn mean_of(cells: &[&[f64]]) -> Option<f64> {
    let (s, n) = sum_of(cells);
    (n > 0).then(|| s / n as f64)
}

/// Improvement estimates from a filled cross-tab. The `best` baseline is
/// the arm whose held-out mean is better in `direction`; ties select arm 0.
pub fn improvement_from_crosstab(tab: CrossTab, direction: Direction) -> Result<ImprovementEstimate> {
    let value_d = mean_of(&[&tab.p, &tab.s]).ok_or_else(|| {
        Error::Estimation(
            "rule never agreed with randomization: no held-out subject received the recommended arm"
                .into(),
        )
    })?;
    let mean0 = mean_of(&[&tab.p, &tab.q])
        .ok_or_else(|| Error::Estimation("no held-out subjects in arm 0".into()))?;
    let mean1 = mean_of(&[&tab.r, &tab.s])
        .ok_or_else(|| Error::Estimation("no held-out subjects in arm 1".into()))?;
    let value_random = mean_of(&[&tab.p, &tab.q, &tab.r, &tab.s]).unwrap_or(f64::NAN);
    let value_best = if direction.prefers(mean1, mean0) { mean1 } else { mean0 };
    Ok(ImprovementEstimate {
        i_random: value_d - value_random,
        i_best: value_d - value_best,
        value_d,
        value_random,
        value_best,
        cell_counts: tab.counts(),
        crosstab: tab,
    })
}

/// Where the `best` baseline's arm is chosen inside cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BestBaseline {
    /// Better of the two pooled held-out arm means.
    #[default]
    TestMeans,
    /// Each fold picks the arm from its training data; the baseline's value
    /// is the mean of held-out subjects who received their fold's arm.
    TrainingFold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvOptions {
    pub k_folds: usize,
    pub best_baseline: BestBaseline,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            k_folds: DEFAULT_FOLDS,
            best_baseline: BestBaseline::TestMeans,
        }
    }
}

/// K-fold cross-validated improvement.
///
/// Each fold's model is fitted on the other folds and allocates the fold's
/// subjects; all `n` held-out allocations are pooled into a single cross-tab
/// before estimating.
pub fn cv_improvement<R: Rng + ?Sized>(
    data: &RctDataset,
    spec: &ModelSpec,
    options: &CvOptions,
    rng: &mut R,
) -> Result<ImprovementEstimate> {
    let layout = spec.resolve_for(data)?;
    let k = effective_folds(data, options.k_folds);
    let folds = make_folds(data, k, rng)?;
    let design = build_design_with(&layout, data);
    let y = data.response();
    let a = data.treatment();

    let n = data.n();
    let mut d_hat = vec![0u8; n];
    let mut fold_best = vec![0u8; n];
    for fold in 0..folds.k() {
        let train = folds.train_indices(fold);
        let test = folds.test_indices(fold);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = FittedModel::fit_design(layout.clone(), &design.select_rows(&train), &y_train)?;
        for &i in &test {
            d_hat[i] = model_decision(&model, data.row(i));
        }
        if options.best_baseline == BestBaseline::TrainingFold {
            let a_train: Vec<u8> = train.iter().map(|&i| a[i]).collect();
            let arm = fit_best_arm(&y_train, &a_train, spec.direction)?;
            for &i in &test {
                fold_best[i] = arm;
            }
        }
    }

    let mut estimate = improvement_from_crosstab(crosstab(y, a, &d_hat)?, spec.direction)?;
    if options.best_baseline == BestBaseline::TrainingFold {
        let matched: Vec<f64> = (0..n).filter(|&i| a[i] == fold_best[i]).map(|i| y[i]).collect();
        let value_best = mean_of(&[&matched]).ok_or_else(|| {
            Error::Estimation("no held-out subject received its fold's best arm".into())
        })?;
        estimate.value_best = value_best;
        estimate.i_best = estimate.value_d - value_best;
    }
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use crate::simulation::{generate_simple, SimpleDgpParams};

    fn hand_tab() -> CrossTab {
        crosstab(&[5.0, 2.0, 3.0, 8.0], &[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap()
    }

    #[test]
    fn hand_enumeration_of_cells() {
        let tab = hand_tab();
        assert_eq!(tab.p, vec![5.0]);
        assert_eq!(tab.r, vec![2.0]);
        assert_eq!(tab.q, vec![3.0]);
        assert_eq!(tab.s, vec![8.0]);
    }

    #[test]
    fn hand_arithmetic_on_four_cells() {
        let est = improvement_from_crosstab(hand_tab(), Direction::HigherIsBetter).unwrap();
        assert_eq!(est.value_d, 6.5);
        assert_eq!(est.value_random, 4.5);
        assert_eq!(est.i_random, 2.0);
        assert_eq!(est.value_best, 5.0);
        assert_eq!(est.i_best, 1.5);
        assert_eq!(
            est.cell_counts,
            CellCounts { n00: 1, n01: 1, n10: 1, n11: 1 }
        );
    }

    #[test]
    fn lower_is_better_picks_smaller_arm_mean() {
        let est = improvement_from_crosstab(hand_tab(), Direction::LowerIsBetter).unwrap();
        assert_eq!(est.value_best, 4.0);
        assert_eq!(est.i_best, 2.5);
    }

    #[test]
    fn constant_rule_leaves_cells_empty() {
        let tab = crosstab(&[1.0, 2.0, 3.0], &[0, 1, 0], &[1, 1, 1]).unwrap();
        assert!(tab.p.is_empty() && tab.r.is_empty());
    }

    #[test]
    fn empty_test_set_errors_downstream() {
        let tab = crosstab(&[], &[], &[]).unwrap();
        assert!(tab.is_empty());
        assert!(matches!(
            improvement_from_crosstab(tab, Direction::HigherIsBetter),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(crosstab(&[1.0], &[0, 1], &[0]).is_err());
    }

    #[test]
    fn constant_response_gives_zero() {
        let tab = crosstab(&[3.0; 6], &[0, 1, 0, 1, 0, 1], &[0, 0, 1, 1, 0, 1]).unwrap();
        let est = improvement_from_crosstab(tab, Direction::HigherIsBetter).unwrap();
        assert_eq!(est.i_random, 0.0);
        assert_eq!(est.i_best, 0.0);
    }

    #[test]
    fn empty_s_cell_is_fine() {
        let tab = crosstab(&[1.0, 4.0, 2.0], &[0, 1, 0], &[0, 0, 1]).unwrap();
        assert!(tab.s.is_empty());
        let est = improvement_from_crosstab(tab, Direction::HigherIsBetter).unwrap();
        assert_eq!(est.value_d, 1.0);
    }

    #[test]
    fn empty_lucky_set_and_empty_arm_error() {
        let tab = crosstab(&[1.0, 2.0], &[0, 1], &[1, 0]).unwrap();
        let err = improvement_from_crosstab(tab, Direction::HigherIsBetter).unwrap_err();
        assert!(err.to_string().contains("never agreed"));
        let tab = crosstab(&[1.0, 2.0], &[0, 0], &[0, 1]).unwrap();
        assert!(improvement_from_crosstab(tab, Direction::HigherIsBetter).is_err());
    }

    #[test]
    fn best_relation_is_exact() {
        let tab = crosstab(
            &[1.0, 7.0, 2.5, 3.0, -1.0, 4.0],
            &[0, 1, 1, 0, 1, 0],
            &[1, 1, 0, 0, 0, 1],
        )
        .unwrap();
        let est = improvement_from_crosstab(tab, Direction::HigherIsBetter).unwrap();
        assert_eq!(est.i_random - est.i_best, est.value_best - est.value_random);
        let gap = {
            let c = &est.crosstab;
            (mean_of(&[&c.p, &c.q]).unwrap() - mean_of(&[&c.r, &c.s]).unwrap()).abs()
        };
        assert!(est.i_best <= est.i_random + gap);
    }

    #[test]
    fn pooled_lucky_mean_is_count_weighted() {
        let tab = hand_tab();
        let (np, ns) = (tab.p.len() as f64, tab.s.len() as f64);
        let weighted = (np * mean_of(&[&tab.p]).unwrap() + ns * mean_of(&[&tab.s]).unwrap()) / (np + ns);
        let est = improvement_from_crosstab(tab, Direction::HigherIsBetter).unwrap();
        assert!((est.value_d - weighted).abs() < 1e-15);
    }

    fn simple_data(n: usize, seed: u64) -> RctDataset {
        generate_simple(&SimpleDgpParams::standard(), n, &mut derive_stream(seed, &[])).unwrap()
    }

    fn spec(direction: Direction) -> ModelSpec {
        ModelSpec::new(["x"], ["x"], direction)
    }

    #[test]
    fn cv_is_deterministic() {
        let d = simple_data(200, 1);
        let opts = CvOptions::default();
        let a = cv_improvement(&d, &spec(Direction::HigherIsBetter), &opts, &mut derive_stream(4, &[])).unwrap();
        let b = cv_improvement(&d, &spec(Direction::HigherIsBetter), &opts, &mut derive_stream(4, &[])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cell_counts.total(), 200);
    }

    #[test]
    fn cv_shift_and_scale() {
        let d = simple_data(300, 2);
        let opts = CvOptions::default();
        let base = cv_improvement(&d, &spec(Direction::HigherIsBetter), &opts, &mut derive_stream(5, &[])).unwrap();
        let shifted = cv_improvement(
            &d.map_response(|y| y + 17.25).unwrap(),
            &spec(Direction::HigherIsBetter),
            &opts,
            &mut derive_stream(5, &[]),
        )
        .unwrap();
        assert_eq!(base.cell_counts, shifted.cell_counts);
        assert!((base.i_random - shifted.i_random).abs() < 1e-12);
        assert!((base.i_best - shifted.i_best).abs() < 1e-12);

        let scaled = cv_improvement(
            &d.map_response(|y| 8.0 * y).unwrap(),
            &spec(Direction::HigherIsBetter),
            &opts,
            &mut derive_stream(5, &[]),
        )
        .unwrap();
        assert_eq!(scaled.i_random, 8.0 * base.i_random);
        assert_eq!(scaled.i_best, 8.0 * base.i_best);
    }

    #[test]
    fn cv_direction_duality_exact() {
        let d = simple_data(300, 3);
        let opts = CvOptions::default();
        let lo = cv_improvement(&d, &spec(Direction::LowerIsBetter), &opts, &mut derive_stream(6, &[])).unwrap();
        let hi = cv_improvement(
            &d.map_response(|y| -y).unwrap(),
            &spec(Direction::HigherIsBetter),
            &opts,
            &mut derive_stream(6, &[]),
        )
        .unwrap();
        assert_eq!(lo.i_random, -hi.i_random);
        assert_eq!(lo.i_best, -hi.i_best);
    }

    #[test]
    fn training_fold_best_variant_runs() {
        let d = simple_data(200, 7);
        let opts = CvOptions {
            best_baseline: BestBaseline::TrainingFold,
            ..CvOptions::default()
        };
        let est = cv_improvement(&d, &spec(Direction::HigherIsBetter), &opts, &mut derive_stream(8, &[])).unwrap();
        assert_eq!(est.i_random, est.value_d - est.value_random);
        assert_eq!(est.i_best, est.value_d - est.value_best);
    }

    #[test]
    fn no_signal_centered_at_zero() {
        let params = SimpleDgpParams {
            gamma0: 0.0,
            gamma1: 0.0,
            ..SimpleDgpParams::standard()
        };
        let reps = 100;
        let vals: Vec<f64> = (0..reps)
            .map(|r| {
                let d = generate_simple(&params, 200, &mut derive_stream(100, &[r])).unwrap();
                cv_improvement(&d, &spec(Direction::HigherIsBetter), &CvOptions::default(), &mut derive_stream(101, &[r]))
                    .unwrap()
                    .i_random
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        let se = sd / (reps as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn spread_shrinks_with_n() {
        let spread = |n: usize| {
            let vals: Vec<f64> = (0..40)
                .map(|r| {
                    let d = simple_data(n, 1000 + r);
                    cv_improvement(&d, &spec(Direction::HigherIsBetter), &CvOptions::default(), &mut derive_stream(n as u64, &[r]))
                        .unwrap()
                        .i_random
                })
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() as f64 - 1.0)).sqrt()
        };
        assert!(spread(1000) < spread(100));
    }
}
