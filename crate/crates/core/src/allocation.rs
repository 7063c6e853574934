//! Treatment allocation rules: the model-based rule and the two
//! business-as-usual baselines (`random` and `best`).

use rand::Rng;

use crate::error::{Error, Result};
use crate::linear_model::{Direction, FittedModel};

#[derive(Debug, Clone, PartialEq)]
pub enum AllocationRule {
    /// Treat when the fitted model predicts a strictly better response
    /// under treatment, in the model's direction.
    Model(FittedModel),
    /// Fair coin.
    Random,
    /// Everyone gets the same arm.
    Best(u8),
}

impl AllocationRule {
    /// Arm recommended for covariate row `x`. Only [`AllocationRule::Random`]
    /// consumes randomness.
    pub fn decide<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> u8 {
        match self {
            AllocationRule::Model(model) => model_decision(model, x),
            AllocationRule::Random => u8::from(rng.random_bool(0.5)),
            AllocationRule::Best(arm) => *arm,
        }
    }
}

/// `1{s * (f(x, 1) - f(x, 0)) > 0}` with `s = +1` for higher-is-better and
/// `-1` for lower-is-better. A zero contrast allocates arm 0.
pub fn model_decision(model: &FittedModel, x: &[f64]) -> u8 {
    let contrast = model.treatment_contrast(x);
    u8::from(model.direction().sign() * contrast > 0.0)
}

/// Arm with the better training mean. Ties go to arm 0.
pub fn fit_best_arm(y_train: &[f64], a_train: &[u8], direction: Direction) -> Result<u8> {
    if y_train.len() != a_train.len() {
        return Err(Error::InvalidArgument(format!(
            "{} responses but {} treatment labels",
            y_train.len(),
            a_train.len()
        )));
    }
    let mut sum = [0.0; 2];
    let mut count = [0usize; 2];
    for (&y, &a) in y_train.iter().zip(a_train) {
        sum[a as usize] += y;
        count[a as usize] += 1;
    }
    if count[0] == 0 || count[1] == 0 {
        return Err(Error::Estimation(
            "cannot pick a best arm from single-arm data".into(),
        ));
    }
    let mean0 = sum[0] / count[0] as f64;
    let mean1 = sum[1] / count[1] as f64;
    Ok(u8::from(direction.prefers(mean1, mean0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RctDataset;
    use crate::linear_model::ModelSpec;
    use crate::rng::derive_stream;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn model(coefs: Vec<f64>, direction: Direction) -> FittedModel {
        let layout = ModelSpec::new(["x"], ["x"], direction)
            .resolve(&["x".into()])
            .unwrap();
        FittedModel::from_coefficients(layout, coefs).unwrap()
    }

    fn noisy_data(n: usize, seed: u64) -> RctDataset {
        let mut rng = derive_stream(seed, &[]);
        let xs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let a: Vec<u8> = (0..n).map(|i| ((i * 7 + 3) % 2) as u8).collect();
        let y = (0..n)
            .map(|i| {
                let e: f64 = rng.sample(StandardNormal);
                0.5 + xs[i] + f64::from(a[i]) * (0.2 - 1.5 * xs[i]) + e
            })
            .collect();
        RctDataset::new(vec!["x".into()], xs, a, y).unwrap()
    }

    #[test]
    fn positive_contrast_treats() {
        let m = model(vec![1.0, -1.0, 0.0, (2.0 * PI).sqrt()], Direction::HigherIsBetter);
        let mut rng = derive_stream(0, &[]);
        assert_eq!(AllocationRule::Model(m).decide(&[1.0], &mut rng), 1);
    }

    #[test]
    fn zero_contrast_goes_to_arm_zero() {
        let mut rng = derive_stream(0, &[]);
        for dir in [Direction::HigherIsBetter, Direction::LowerIsBetter] {
            let m = model(vec![1.0, 2.0, 0.0, 0.0], dir);
            assert_eq!(AllocationRule::Model(m).decide(&[3.0], &mut rng), 0);
        }
    }

    #[test]
    fn lower_is_better_treats_when_treatment_lowers_prediction() {
        let m = model(vec![20.0, 0.0, -2.0, 0.0], Direction::LowerIsBetter);
        assert!(m.predict(&[0.0], 1) < m.predict(&[0.0], 0));
        let mut rng = derive_stream(0, &[]);
        assert_eq!(AllocationRule::Model(m).decide(&[0.0], &mut rng), 1);
    }

    #[test]
    fn best_and_random_rules() {
        let mut rng = derive_stream(1, &[]);
        assert_eq!(AllocationRule::Best(1).decide(&[-9.0], &mut rng), 1);
        let heads: u32 = (0..10_000)
            .map(|_| u32::from(AllocationRule::Random.decide(&[], &mut rng)))
            .sum();
        assert!((heads as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn best_arm_by_training_means() {
        let y = [5.0, 2.0, 3.0, 8.0];
        let a = [0, 1, 0, 1];
        // arm 0 mean 4, arm 1 mean 5
        assert_eq!(fit_best_arm(&y, &a, Direction::HigherIsBetter).unwrap(), 1);
        assert_eq!(fit_best_arm(&y, &a, Direction::LowerIsBetter).unwrap(), 0);
        let tie = [1.0, 2.0, 2.0, 1.0];
        assert_eq!(fit_best_arm(&tie, &a, Direction::HigherIsBetter).unwrap(), 0);
        assert_eq!(fit_best_arm(&tie, &a, Direction::LowerIsBetter).unwrap(), 0);
        assert!(fit_best_arm(&y, &[1, 1, 1, 1], Direction::HigherIsBetter).is_err());
    }

    #[test]
    fn direction_duality_is_exact() {
        let mut rng = derive_stream(0, &[]);
        for seed in 0..20 {
            let d = noisy_data(50, seed);
            let neg = d.map_response(|y| -y).unwrap();
            let lower = ModelSpec::new(["x"], ["x"], Direction::LowerIsBetter);
            let higher = ModelSpec::new(["x"], ["x"], Direction::HigherIsBetter);
            let m_lo = AllocationRule::Model(FittedModel::fit(&lower, &d).unwrap());
            let m_hi = AllocationRule::Model(FittedModel::fit(&higher, &neg).unwrap());
            for i in 0..d.n() {
                assert_eq!(m_lo.decide(d.row(i), &mut rng), m_hi.decide(d.row(i), &mut rng));
            }
            assert_eq!(
                fit_best_arm(d.response(), d.treatment(), Direction::LowerIsBetter).unwrap(),
                fit_best_arm(neg.response(), neg.treatment(), Direction::HigherIsBetter).unwrap()
            );
        }
    }

    #[test]
    fn label_swap_complements_decisions() {
        let spec = ModelSpec::new(["x"], ["x"], Direction::HigherIsBetter);
        for seed in 0..20 {
            let d = noisy_data(60, seed);
            let m = FittedModel::fit(&spec, &d).unwrap();
            let swapped = FittedModel::fit(&spec, &d.swap_arms()).unwrap();
            for i in 0..d.n() {
                let c = m.treatment_contrast(d.row(i));
                if c.abs() > 1e-9 {
                    assert_eq!(
                        model_decision(&m, d.row(i)),
                        1 - model_decision(&swapped, d.row(i))
                    );
                }
            }
        }
    }

    #[test]
    fn decisions_invariant_to_positive_scaling() {
        let spec = ModelSpec::new(["x"], ["x"], Direction::HigherIsBetter);
        for seed in 0..10 {
            let d = noisy_data(60, seed);
            let m = FittedModel::fit(&spec, &d).unwrap();
            for c in [0.001, 0.37, 4.0, 1234.5] {
                let mc = FittedModel::fit(&spec, &d.map_response(|y| c * y).unwrap()).unwrap();
                for i in 0..d.n() {
                    assert_eq!(model_decision(&m, d.row(i)), model_decision(&mc, d.row(i)));
                }
            }
        }
    }
}
