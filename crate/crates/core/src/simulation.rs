//! Synthetic trials with known improvement values.
//!
//! Two data-generating processes:
//!
//! * simple: `Y = b0 + b1 X + A (g0 + g1 X) + E`, correctly specified by the
//!   working model, with a closed-form population improvement;
//! * complex: `Y = b0 + b1 X + b2 U + A (g0 + g1 X^3 + g2 U) + E` where `U`
//!   is never observed, so the linear working model is misspecified.
//!
//! Population improvements are computed by Monte Carlo with common random
//! numbers. The main effects and noise cancel between the rule and the
//! random baseline, so each draw contributes `(d - 1/2) * contrast`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::allocation::AllocationRule;
use crate::dataset::RctDataset;
use crate::error::{Error, Result};
use crate::linear_model::{Direction, FittedModel, ModelSpec};
use crate::parallel::map_indexed;
use crate::rng::{derive_stream, StreamRng};

/// Draws per Monte Carlo chunk. Fixed so results do not depend on the
/// worker count.
pub const MC_CHUNK: usize = 1 << 16;

/// Sample size used to approximate the probability limit of the fitted
/// working model.
pub const DEFAULT_FIT_SIZE: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimpleDgpParams {
    pub beta0: f64,
    pub beta1: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub mu_x: f64,
    pub sigma_x: f64,
    pub noise_sd: f64,
}

impl SimpleDgpParams {
    /// `b0 = 1, b1 = -1, g0 = 0, g1 = sqrt(2 pi)`, `X ~ N(0, 1)`, unit noise,
    /// chosen so the population improvement is exactly 1.
    pub fn standard() -> Self {
        SimpleDgpParams {
            beta0: 1.0,
            beta1: -1.0,
            gamma0: 0.0,
            gamma1: (2.0 * std::f64::consts::PI).sqrt(),
            mu_x: 0.0,
            sigma_x: 1.0,
            noise_sd: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.beta0,
            self.beta1,
            self.gamma0,
            self.gamma1,
            self.mu_x,
            self.sigma_x,
            self.noise_sd,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("simulation parameters must be finite".into()));
        }
        if self.sigma_x <= 0.0 {
            return Err(Error::InvalidArgument("sigma_x must be positive".into()));
        }
        if self.noise_sd < 0.0 {
            return Err(Error::InvalidArgument("noise_sd must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexDgpParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub noise_sd: f64,
}

impl ComplexDgpParams {
    /// `b0 = 1, b1 = -1, b2 = 0.5, g0 = 0, g1 = 1, g2 = -3`, unit noise.
    pub fn standard() -> Self {
        ComplexDgpParams {
            beta0: 1.0,
            beta1: -1.0,
            beta2: 0.5,
            gamma0: 0.0,
            gamma1: 1.0,
            gamma2: -3.0,
            noise_sd: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.beta0,
            self.beta1,
            self.beta2,
            self.gamma0,
            self.gamma1,
            self.gamma2,
            self.noise_sd,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("simulation parameters must be finite".into()));
        }
        if self.noise_sd < 0.0 {
            return Err(Error::InvalidArgument("noise_sd must be non-negative".into()));
        }
        Ok(())
    }
}

/// One population draw: the observed covariate and the hidden one (zero
/// for the simple process).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subject {
    pub x: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "scenario", rename_all = "lowercase")]
pub enum Dgp {
    Simple(SimpleDgpParams),
    Complex(ComplexDgpParams),
}

impl Dgp {
    pub fn validate(&self) -> Result<()> {
        match self {
            Dgp::Simple(p) => p.validate(),
            Dgp::Complex(p) => p.validate(),
        }
    }

    pub fn draw_subject<R: Rng + ?Sized>(&self, rng: &mut R) -> Subject {
        match self {
            Dgp::Simple(p) => {
                let z: f64 = rng.sample(StandardNormal);
                Subject {
                    x: p.mu_x + p.sigma_x * z,
                    u: 0.0,
                }
            }
            Dgp::Complex(_) => Subject {
                x: rng.sample(StandardNormal),
                u: rng.sample(StandardNormal),
            },
        }
    }

    /// `E[Y | A = 1] - E[Y | A = 0]` for this subject.
    pub fn contrast(&self, s: &Subject) -> f64 {
        match self {
            Dgp::Simple(p) => p.gamma0 + p.gamma1 * s.x,
            Dgp::Complex(p) => p.gamma0 + p.gamma1 * s.x.powi(3) + p.gamma2 * s.u,
        }
    }

    /// Response without noise for treatment `a`.
    pub fn mean_response(&self, s: &Subject, a: u8) -> f64 {
        let main = match self {
            Dgp::Simple(p) => p.beta0 + p.beta1 * s.x,
            Dgp::Complex(p) => p.beta0 + p.beta1 * s.x + p.beta2 * s.u,
        };
        main + f64::from(a) * self.contrast(s)
    }

    fn noise_sd(&self) -> f64 {
        match self {
            Dgp::Simple(p) => p.noise_sd,
            Dgp::Complex(p) => p.noise_sd,
        }
    }

    /// Population mean of the contrast, `E[contrast]`.
    pub fn mean_contrast(&self) -> f64 {
        match self {
            Dgp::Simple(p) => p.gamma0 + p.gamma1 * p.mu_x,
            // E[X^3] = E[U] = 0
            Dgp::Complex(p) => p.gamma0,
        }
    }

    /// The linear working model `b0 + b1 x + A (g0 + g1 x)` on column `x`.
    pub fn working_spec(&self) -> ModelSpec {
        ModelSpec::new(["x"], ["x"], Direction::HigherIsBetter)
    }

    /// Trial of size `n` (even) with a balanced random allocation. Only `x`
    /// is returned as a covariate.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<RctDataset> {
        self.validate()?;
        if !n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "n must be even for a balanced allocation, got {n}"
            )));
        }
        let subjects: Vec<Subject> = (0..n).map(|_| self.draw_subject(rng)).collect();
        let mut treatment: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
        treatment.shuffle(rng);
        let sd = self.noise_sd();
        let response = subjects
            .iter()
            .zip(&treatment)
            .map(|(s, &a)| {
                let e: f64 = rng.sample(StandardNormal);
                self.mean_response(s, a) + sd * e
            })
            .collect();
        RctDataset::new(
            vec!["x".into()],
            subjects.iter().map(|s| s.x).collect(),
            treatment,
            response,
        )
    }
}

pub fn generate_simple<R: Rng + ?Sized>(
    params: &SimpleDgpParams,
    n: usize,
    rng: &mut R,
) -> Result<RctDataset> {
    Dgp::Simple(*params).generate(n, rng)
}

/// `U` is drawn but not returned.
pub fn generate_complex<R: Rng + ?Sized>(
    params: &ComplexDgpParams,
    n: usize,
    rng: &mut R,
) -> Result<RctDataset> {
    Dgp::Complex(*params).generate(n, rng)
}

/// Closed-form population improvement of the optimal rule over random
/// allocation for the simple process, for `g1 > 0`:
///
/// ```text
/// (g0 + g1 mu) (1/2 - Phi(t)) + g1 sigma / sqrt(2 pi) exp(-t^2 / 2),
///     t = (-g0 / g1 - mu) / sigma
/// ```
pub fn analytic_improvement_simple(params: &SimpleDgpParams) -> Result<f64> {
    params.validate()?;
    if params.gamma1 == 0.0 {
        return Err(Error::InvalidArgument(
            "closed form needs gamma1 != 0; use mc_improvement instead".into(),
        ));
    }
    if params.gamma1 < 0.0 {
        return Err(Error::InvalidArgument(
            "closed form is stated for gamma1 > 0; use mc_improvement instead".into(),
        ));
    }
    let SimpleDgpParams {
        gamma0,
        gamma1,
        mu_x,
        sigma_x,
        ..
    } = *params;
    let t = (-gamma0 / gamma1 - mu_x) / sigma_x;
    let phi = Normal::standard().cdf(t);
    let density = gamma1 * sigma_x / (2.0 * std::f64::consts::PI).sqrt() * (-0.5 * t * t).exp();
    Ok((gamma0 + gamma1 * mu_x) * (0.5 - phi) + density)
}

/// Which rule to evaluate in [`mc_improvement`].
#[derive(Debug, Clone, PartialEq)]
pub enum PopulationRule {
    /// Treat iff the true contrast is positive.
    Optimal,
    /// Plug-in rule of the working model fitted on `fit_size` fresh subjects.
    FittedApproximation { fit_size: usize },
    /// A rule on the observed covariate.
    Explicit(AllocationRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Per-draw treatment decision from a subject; may consume randomness.
type RuleFn<'a> = dyn Fn(&Subject, &mut StreamRng) -> u8 + Sync + 'a;

/// Monte Carlo estimates of `E[(d(S) - 1/2) contrast(S)]` for several rules
/// on common draws.
fn mc_rules(
    dgp: &Dgp,
    rules: &[&RuleFn<'_>],
    draws: usize,
    seed: u64,
    workers: usize,
) -> Vec<McEstimate> {
    let chunks = draws.div_ceil(MC_CHUNK);
    let partials = map_indexed(chunks, workers, |c| {
        let mut rng = derive_stream(seed, &[c as u64]);
        let len = MC_CHUNK.min(draws - c * MC_CHUNK);
        let mut acc = vec![(0.0f64, 0.0f64); rules.len()];
        for _ in 0..len {
            let s = dgp.draw_subject(&mut rng);
            let contrast = dgp.contrast(&s);
            for (rule, (sum, sq)) in rules.iter().zip(acc.iter_mut()) {
                let v = (f64::from(rule(&s, &mut rng)) - 0.5) * contrast;
                *sum += v;
                *sq += v * v;
            }
        }
        acc
    });
    (0..rules.len())
        .map(|r| {
            let (sum, sq) = partials
                .iter()
                .fold((0.0, 0.0), |(s, q), p| (s + p[r].0, q + p[r].1));
            let n = draws as f64;
            // + 0.0 normalizes a negative zero from all-zero contrasts
            let mean = sum / n + 0.0;
            let var = if draws > 1 {
                ((sq - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            McEstimate {
                mean,
                std_error: (var / n).sqrt(),
                draws,
            }
        })
        .collect()
}

/// Fits the working model on `fit_size` fresh subjects from `dgp`.
pub fn fit_working_model<R: Rng + ?Sized>(
    dgp: &Dgp,
    fit_size: usize,
    rng: &mut R,
) -> Result<FittedModel> {
    let n = fit_size + fit_size % 2;
    let data = dgp.generate(n, rng)?;
    FittedModel::fit(&dgp.working_spec(), &data)
}

/// Population improvement of `rule` over random allocation, by Monte Carlo
/// over `draws` fresh subjects. Deterministic in `rng`'s state and
/// independent of `workers`.
pub fn mc_improvement<R: Rng + ?Sized>(
    dgp: &Dgp,
    rule: &PopulationRule,
    draws: usize,
    rng: &mut R,
    workers: usize,
) -> Result<McEstimate> {
    dgp.validate()?;
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo draw".into()));
    }
    let seed: u64 = rng.random();
    let estimate = match rule {
        PopulationRule::Optimal => {
            let f = |s: &Subject, _: &mut StreamRng| u8::from(dgp.contrast(s) > 0.0);
            mc_rules(dgp, &[&f], draws, seed, workers)[0]
        }
        PopulationRule::FittedApproximation { fit_size } => {
            let model = fit_working_model(dgp, *fit_size, rng)?;
            let rule = AllocationRule::Model(model);
            let f = |s: &Subject, r: &mut StreamRng| rule.decide(&[s.x], r);
            mc_rules(dgp, &[&f], draws, seed, workers)[0]
        }
        PopulationRule::Explicit(rule) => {
            let f = |s: &Subject, r: &mut StreamRng| rule.decide(&[s.x], r);
            mc_rules(dgp, &[&f], draws, seed, workers)[0]
        }
    };
    Ok(estimate)
}

/// Where the gap between the optimal rule and the fitted linear rule comes
/// from in the complex process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Shortfall {
    /// Optimal rule, `1{g0 + g1 X^3 + g2 U > 0}`.
    pub optimal: f64,
    /// Fitted working-model rule.
    pub approximation: f64,
    /// Sees `U` but uses `X` in place of `X^3`: `1{g0 + g1 X + g2 U > 0}`.
    pub linear_with_u: f64,
    /// Keeps `X^3` but cannot see `U`: `1{g0 + g1 X^3 > 0}`.
    pub cubic_without_u: f64,
    /// `(optimal - cubic_without_u) / total`.
    pub share_unobserved: f64,
    /// `(optimal - linear_with_u) / total`.
    pub share_nonlinearity: f64,
}

/// Splits the loss from not observing `U` and the loss from replacing `X^3`
/// by `X`, each measured against the optimal rule, into shares of their
/// sum. Both shares are 0 when neither restriction costs anything.
pub fn decompose_shortfall<R: Rng + ?Sized>(
    params: &ComplexDgpParams,
    draws: usize,
    fit_size: usize,
    rng: &mut R,
    workers: usize,
) -> Result<Shortfall> {
    let dgp = Dgp::Complex(*params);
    dgp.validate()?;
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo draw".into()));
    }
    let seed: u64 = rng.random();
    let model = fit_working_model(&dgp, fit_size, rng)?;
    let p = *params;
    let optimal = |s: &Subject, _: &mut StreamRng| u8::from(dgp.contrast(s) > 0.0);
    let fitted_rule = AllocationRule::Model(model);
    let fitted = |s: &Subject, r: &mut StreamRng| fitted_rule.decide(&[s.x], r);
    let linear_with_u =
        |s: &Subject, _: &mut StreamRng| u8::from(p.gamma0 + p.gamma1 * s.x + p.gamma2 * s.u > 0.0);
    let cubic_without_u =
        |s: &Subject, _: &mut StreamRng| u8::from(p.gamma0 + p.gamma1 * s.x.powi(3) > 0.0);
    let est = mc_rules(
        &dgp,
        &[&optimal, &fitted, &linear_with_u, &cubic_without_u],
        draws,
        seed,
        workers,
    );
    let (opt, approx, lin, cub) = (est[0].mean, est[1].mean, est[2].mean, est[3].mean);
    let drop_unobserved = opt - cub;
    let drop_nonlinear = opt - lin;
    let total = drop_unobserved + drop_nonlinear;
    let (share_unobserved, share_nonlinearity) = if total > 0.0 {
        (drop_unobserved / total, drop_nonlinear / total)
    } else {
        (0.0, 0.0)
    };
    Ok(Shortfall {
        optimal: opt,
        approximation: approx,
        linear_with_u: lin,
        cubic_without_u: cub,
        share_unobserved,
        share_nonlinearity,
    })
}
