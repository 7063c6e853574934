//! Nonparametric bootstrap of the cross-validated improvement estimates.
//!
//! Replicate `b` resamples the trial rows with replacement and reruns the
//! whole K-fold procedure. Percentile intervals and one-sided p-values are
//! read off the replicate distribution.
//!
//! Each replicate draws from its own stream derived from `(seed, b,
//! attempt)`, so results are identical for any worker count.

use serde::Serialize;

use crate::dataset::{resample_indices, RctDataset};
use crate::error::{Error, Result};
use crate::improvement::{cv_improvement, BestBaseline, CvOptions, ImprovementEstimate, DEFAULT_FOLDS};
use crate::linear_model::{Direction, ModelSpec};
use crate::parallel::{default_workers, map_indexed};
use crate::rng::derive_stream;

/// Default number of bootstrap replicates.
pub const DEFAULT_REPLICATES: usize = 3000;

/// Default two-sided level.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Draws allowed per replicate index before the run is aborted.
pub const MAX_REDRAWS: usize = 50;

const STREAM_OBSERVED: u64 = 0;
const STREAM_REPLICATE: u64 = 1;
const ROLE_RESAMPLE: u64 = 0;
const ROLE_FOLDS: u64 = 1;

/// Bootstrap confidence interval construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalMethod {
    #[default]
    Percentile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub k_folds: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub workers: usize,
    pub best_baseline: BestBaseline,
    pub method: IntervalMethod,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            k_folds: DEFAULT_FOLDS,
            replicates: DEFAULT_REPLICATES,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            workers: default_workers(),
            best_baseline: BestBaseline::TestMeans,
            method: IntervalMethod::Percentile,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub observed: ImprovementEstimate,
    pub samples_random: Vec<f64>,
    pub samples_best: Vec<f64>,
    pub replicates: usize,
    pub alpha: f64,
    pub k_folds: usize,
    pub seed: u64,
    pub direction: Direction,
    pub method: IntervalMethod,
    pub ci_random: (f64, f64),
    pub ci_best: (f64, f64),
    pub p_random: f64,
    pub p_best: f64,
    /// Degenerate draws that were discarded and redrawn.
    pub redraw_count: usize,
}

struct Replicate {
    i_random: f64,
    i_best: f64,
    redraws: usize,
}

fn run_replicate(
    data: &RctDataset,
    spec: &ModelSpec,
    cv: &CvOptions,
    seed: u64,
    b: usize,
) -> Result<Replicate> {
    let mut last_error = None;
    for attempt in 0..MAX_REDRAWS {
        let (b64, attempt64) = (b as u64, attempt as u64);
        let mut resample_rng = derive_stream(seed, &[STREAM_REPLICATE, b64, attempt64, ROLE_RESAMPLE]);
        let mut fold_rng = derive_stream(seed, &[STREAM_REPLICATE, b64, attempt64, ROLE_FOLDS]);
        let outcome = data
            .subset(&resample_indices(data.n(), &mut resample_rng))
            .and_then(|resampled| cv_improvement(&resampled, spec, cv, &mut fold_rng));
        match outcome {
            Ok(est) => {
                return Ok(Replicate {
                    i_random: est.i_random,
                    i_best: est.i_best,
                    redraws: attempt,
                })
            }
            Err(e) => last_error = Some(e),
        }
    }
    Err(Error::RedrawLimit {
        replicate: b,
        attempts: MAX_REDRAWS,
        last_error: last_error.map(|e| e.to_string()).unwrap_or_default(),
    })
}

/// Observed cross-validated estimate plus `config.replicates` bootstrap
/// replicates, percentile intervals and one-sided p-values for both
/// baselines.
pub fn bootstrap_inference(
    data: &RctDataset,
    spec: &ModelSpec,
    config: &BootstrapConfig,
) -> Result<BootstrapResult> {
    if config.replicates == 0 {
        return Err(Error::InvalidArgument("need at least one bootstrap replicate".into()));
    }
    check_alpha(config.alpha)?;
    spec.resolve_for(data)?;
    let cv = CvOptions {
        k_folds: config.k_folds,
        best_baseline: config.best_baseline,
    };
    let observed = cv_improvement(data, spec, &cv, &mut derive_stream(config.seed, &[STREAM_OBSERVED]))?;

    let outcomes = map_indexed(config.replicates, config.workers.max(1), |b| {
        run_replicate(data, spec, &cv, config.seed, b)
    });
    let mut samples_random = Vec::with_capacity(config.replicates);
    let mut samples_best = Vec::with_capacity(config.replicates);
    let mut redraw_count = 0;
    for outcome in outcomes {
        let rep = outcome?;
        samples_random.push(rep.i_random);
        samples_best.push(rep.i_best);
        redraw_count += rep.redraws;
    }
    if redraw_count > 0 {
        log::info!("{redraw_count} degenerate bootstrap draws were redrawn");
    }

    let direction = spec.direction;
    Ok(BootstrapResult {
        ci_random: percentile_ci(&samples_random, config.alpha)?,
        ci_best: percentile_ci(&samples_best, config.alpha)?,
        p_random: one_sided_pvalue(&samples_random, direction)?,
        p_best: one_sided_pvalue(&samples_best, direction)?,
        observed,
        samples_random,
        samples_best,
        replicates: config.replicates,
        alpha: config.alpha,
        k_folds: config.k_folds,
        seed: config.seed,
        direction,
        method: config.method,
        redraw_count,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// 1-based nearest rank `ceil(q * len)` clamped to `[1, len]`.
fn nearest_rank(q: f64, len: usize) -> usize {
    // the epsilon keeps e.g. 0.025 * 200 from rounding up past 5
    let rank = (q * len as f64 - 1e-9).ceil();
    (rank.max(1.0) as usize).min(len)
}

/// Percentile interval: the empirical `alpha/2` and `1 - alpha/2`
/// quantiles by nearest rank, so both endpoints are actual samples.
pub fn percentile_ci(samples: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no bootstrap samples".into()));
    }
    check_alpha(alpha)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[nearest_rank(alpha / 2.0, sorted.len()) - 1];
    let hi = sorted[nearest_rank(1.0 - alpha / 2.0, sorted.len()) - 1];
    Ok((lo, hi))
}

/// Share of replicates on the null side of zero, ties included:
/// `#{I <= 0} / B` for higher-is-better, `#{I >= 0} / B` for lower-is-better.
pub fn one_sided_pvalue(samples: &[f64], direction: Direction) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no bootstrap samples".into()));
    }
    let hits = samples
        .iter()
        .filter(|&&v| match direction {
            Direction::HigherIsBetter => v <= 0.0,
            Direction::LowerIsBetter => v >= 0.0,
        })
        .count();
    Ok(hits as f64 / samples.len() as f64)
}
