//! JSON and text renderings of bootstrap results, plus the raw-sample CSV.
//!
//! Text output rounds to 3 decimals; JSON keeps full precision.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::improvement::ImprovementEstimate;
use crate::inference::{BootstrapResult, IntervalMethod};
use crate::linear_model::Direction;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub est: f64,
    pub p: f64,
    pub ci: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceReport {
    pub i_random: BaselineSummary,
    pub i_best: BaselineSummary,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k_folds: usize,
    pub seed: u64,
    pub redraws: usize,
    pub direction: Direction,
    pub method: IntervalMethod,
    pub observed: ImprovementEstimate,
}

impl From<&BootstrapResult> for InferenceReport {
    fn from(r: &BootstrapResult) -> Self {
        InferenceReport {
            i_random: BaselineSummary {
                est: r.observed.i_random,
                p: r.p_random,
                ci: [r.ci_random.0, r.ci_random.1],
            },
            i_best: BaselineSummary {
                est: r.observed.i_best,
                p: r.p_best,
                ci: [r.ci_best.0, r.ci_best.1],
            },
            replicates: r.replicates,
            alpha: r.alpha,
            k_folds: r.k_folds,
            seed: r.seed,
            redraws: r.redraw_count,
            direction: r.direction,
            method: r.method,
            observed: r.observed.clone(),
        }
    }
}

/// `95` for alpha = 0.05, `90` for 0.1, `97.5` for 0.025.
pub fn confidence_label(alpha: f64) -> String {
    let level = ((1.0 - alpha) * 100.0 * 1e6).round() / 1e6;
    format!("{level}")
}

impl InferenceReport {
    /// Four-line estimate / p-value / interval layout, one pair per
    /// baseline, followed by the run settings.
    pub fn to_text(&self) -> String {
        let level = confidence_label(self.alpha);
        let mut s = String::new();
        for (name, b) in [("I_random", &self.i_random), ("I_best", &self.i_best)] {
            s.push_str(&format!(
                "{name} observed_est = {:.3}, p val = {:.3},\n{level}% CI for {name} = [{:.3}, {:.3}]\n",
                b.est, b.p, b.ci[0], b.ci[1]
            ));
        }
        s.push_str(&format!(
            "B = {}, K = {}, alpha = {}, seed = {}, redraws = {}\n",
            self.replicates, self.k_folds, self.alpha, self.seed, self.redraws
        ));
        s
    }
}

/// Writes bootstrap replicates as CSV with one column per baseline:
/// `n,kind,i_random,i_best`, where `kind` is `sample` for each replicate and
/// `observed` for the point estimate row that closes each run.
pub fn write_samples_csv<W: Write>(writer: W, runs: &[(usize, &BootstrapResult)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "kind", "i_random", "i_best"])?;
    for (n, r) in runs {
        let n = n.to_string();
        for (a, b) in r.samples_random.iter().zip(&r.samples_best) {
            w.write_record([n.as_str(), "sample", &a.to_string(), &b.to_string()])?;
        }
        w.write_record([
            n.as_str(),
            "observed",
            &r.observed.i_random.to_string(),
            &r.observed.i_best.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
