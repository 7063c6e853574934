//! Command-line front end: `evaluate` for trial CSVs and `simulate` for the
//! synthetic scenarios.
//!
//! Exit codes: 0 on success, 2 for invalid input or arguments, 3 when
//! estimation fails.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::load_csv;
use crate::error::{Error, Result};
use crate::improvement::{BestBaseline, DEFAULT_FOLDS};
use crate::inference::{
    bootstrap_inference, BootstrapConfig, BootstrapResult, IntervalMethod, DEFAULT_ALPHA,
    DEFAULT_REPLICATES,
};
use crate::linear_model::{Direction, ModelSpec};
use crate::parallel::default_workers;
use crate::report::{confidence_label, write_samples_csv, InferenceReport};
use crate::rng::{derive_seed, derive_stream};
use crate::simulation::{
    analytic_improvement_simple, mc_improvement, ComplexDgpParams, Dgp, PopulationRule,
    SimpleDgpParams, DEFAULT_FIT_SIZE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_ESTIMATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "alloc-improve",
    version,
    about = "Estimate how much a model-based treatment allocation rule improves on business-as-usual allocation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate improvement with bootstrap inference from a trial CSV.
    Evaluate(EvaluateArgs),
    /// Run the synthetic scenarios and compare with their oracle values.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Higher,
    Lower,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Higher => Direction::HigherIsBetter,
            DirectionArg::Lower => Direction::LowerIsBetter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BestBaselineArg {
    TestMeans,
    TrainingFold,
}

impl From<BestBaselineArg> for BestBaseline {
    fn from(b: BestBaselineArg) -> Self {
        match b {
            BestBaselineArg::TestMeans => BestBaseline::TestMeans,
            BestBaselineArg::TrainingFold => BestBaseline::TrainingFold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    Simple,
    Complex,
}

/// Settings shared by both subcommands.
#[derive(Debug, Clone, Args)]
pub struct InferenceArgs {
    /// Number of cross-validation folds.
    #[arg(long = "k-folds", default_value_t = DEFAULT_FOLDS)]
    pub k_folds: usize,
    /// Number of bootstrap replicates.
    #[arg(long = "b", default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    /// Two-sided level of the percentile intervals.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for the bootstrap [default: available cores].
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Write the raw bootstrap replicates to this CSV.
    #[arg(long = "emit-samples")]
    pub emit_samples: Option<PathBuf>,
    /// How the `best` baseline picks its arm inside cross-validation.
    #[arg(long = "best-baseline", value_enum, default_value_t = BestBaselineArg::TestMeans)]
    pub best_baseline: BestBaselineArg,
}

impl InferenceArgs {
    fn bootstrap_config(&self, seed: u64) -> Result<BootstrapConfig> {
        if self.k_folds < 2 {
            return Err(Error::InvalidArgument("--k-folds must be at least 2".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("--b must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument("--alpha must lie in (0, 1)".into()));
        }
        let workers = self.workers.unwrap_or_else(default_workers);
        if workers == 0 {
            return Err(Error::InvalidArgument("--workers must be positive".into()));
        }
        Ok(BootstrapConfig {
            k_folds: self.k_folds,
            replicates: self.replicates,
            alpha: self.alpha,
            seed,
            workers,
            best_baseline: self.best_baseline.into(),
            method: IntervalMethod::Percentile,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Trial CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long = "treatment-col")]
    pub treatment_col: String,
    #[arg(long = "response-col")]
    pub response_col: String,
    /// JSON model spec: {"main": [...], "interactions": [...], "direction": "higher"|"lower"}.
    #[arg(long = "model-spec", conflicts_with_all = ["main", "interactions"])]
    pub model_spec: Option<PathBuf>,
    /// Main-effect covariates, comma separated (instead of --model-spec).
    #[arg(long, value_delimiter = ',')]
    pub main: Vec<String>,
    /// Covariates interacting with treatment, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub interactions: Vec<String>,
    /// Overrides the spec's direction.
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    #[command(flatten)]
    pub inference: InferenceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    /// Trial sizes; repeat the flag for several [default: 100 200 500 1000].
    #[arg(long = "n")]
    pub n: Vec<usize>,
    /// Monte Carlo draws for the oracle values.
    #[arg(long = "oracle-draws", default_value_t = 1_000_000)]
    pub oracle_draws: usize,
    /// Sample size for the fitted working model's limiting rule.
    #[arg(long = "fit-size", default_value_t = DEFAULT_FIT_SIZE)]
    pub fit_size: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub beta0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta1: Option<f64>,
    /// Complex scenario only.
    #[arg(long, allow_hyphen_values = true)]
    pub beta2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma1: Option<f64>,
    /// Complex scenario only.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma2: Option<f64>,
    /// Simple scenario only.
    #[arg(long = "mu-x", allow_hyphen_values = true)]
    pub mu_x: Option<f64>,
    /// Simple scenario only.
    #[arg(long = "sigma-x")]
    pub sigma_x: Option<f64>,
    #[arg(long = "noise-sd")]
    pub noise_sd: Option<f64>,
    #[command(flatten)]
    pub inference: InferenceArgs,
}

impl SimulateArgs {
    pub fn dgp(&self) -> Dgp {
        match self.scenario {
            Scenario::Simple => {
                let d = SimpleDgpParams::standard();
                Dgp::Simple(SimpleDgpParams {
                    beta0: self.beta0.unwrap_or(d.beta0),
                    beta1: self.beta1.unwrap_or(d.beta1),
                    gamma0: self.gamma0.unwrap_or(d.gamma0),
                    gamma1: self.gamma1.unwrap_or(d.gamma1),
                    mu_x: self.mu_x.unwrap_or(d.mu_x),
                    sigma_x: self.sigma_x.unwrap_or(d.sigma_x),
                    noise_sd: self.noise_sd.unwrap_or(d.noise_sd),
                })
            }
            Scenario::Complex => {
                let d = ComplexDgpParams::standard();
                Dgp::Complex(ComplexDgpParams {
                    beta0: self.beta0.unwrap_or(d.beta0),
                    beta1: self.beta1.unwrap_or(d.beta1),
                    beta2: self.beta2.unwrap_or(d.beta2),
                    gamma0: self.gamma0.unwrap_or(d.gamma0),
                    gamma1: self.gamma1.unwrap_or(d.gamma1),
                    gamma2: self.gamma2.unwrap_or(d.gamma2),
                    noise_sd: self.noise_sd.unwrap_or(d.noise_sd),
                })
            }
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        if self.n.is_empty() {
            vec![100, 200, 500, 1000]
        } else {
            self.n.clone()
        }
    }
}

fn load_spec(args: &EvaluateArgs) -> Result<ModelSpec> {
    let mut spec = match &args.model_spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            ModelSpec::from_json(&text)?
        }
        None => {
            if args.main.is_empty() && !args.interactions.is_empty() {
                return Err(Error::Spec("--interactions given without --main".into()));
            }
            ModelSpec::new(args.main.clone(), args.interactions.clone(), Direction::HigherIsBetter)
        }
    };
    if let Some(d) = args.direction {
        spec.direction = d.into();
    }
    Ok(spec)
}

/// Loads the trial and model spec and runs bootstrap inference.
pub fn run_evaluate(args: &EvaluateArgs) -> Result<BootstrapResult> {
    let config = args.inference.bootstrap_config(args.inference.seed)?;
    let spec = load_spec(args)?;
    let data = load_csv(&args.input, &args.treatment_col, &args.response_col)?;
    bootstrap_inference(&data, &spec, &config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coverage {
    pub random: bool,
    pub best: bool,
}

/// Population values the scenario's intervals are compared against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Oracle {
    /// Improvement of the working model's limiting rule over `random`.
    pub mu_random: f64,
    /// Same rule against the `best` baseline.
    pub mu_best: f64,
    /// Optimal rule over `random`.
    pub mu_optimal: f64,
    /// Closed form, when available.
    pub mu_analytic: Option<f64>,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRun {
    pub n: usize,
    pub report: InferenceReport,
    pub covers_truth: Coverage,
    /// Whether the intervals also cover the optimal rule's value; only
    /// reported when it differs from the truth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covers_optimal: Option<Coverage>,
    #[serde(skip)]
    pub result: BootstrapResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub dgp: Dgp,
    pub seed: u64,
    pub oracle: Oracle,
    pub runs: Vec<SimulationRun>,
}

const SIM_ORACLE: u64 = 0;
const SIM_DATA: u64 = 1;
const SIM_BOOTSTRAP: u64 = 2;

fn covers(ci: (f64, f64), value: f64) -> bool {
    ci.0 <= value && value <= ci.1
}

/// Oracle values for `dgp`.
pub fn scenario_oracle(dgp: &Dgp, draws: usize, fit_size: usize, seed: u64, workers: usize) -> Result<Oracle> {
    let mut rng = derive_stream(seed, &[SIM_ORACLE]);
    let optimal = mc_improvement(dgp, &PopulationRule::Optimal, draws, &mut rng, workers)?.mean;
    let (mu_random, mu_analytic) = match dgp {
        Dgp::Simple(p) => {
            // correctly specified: the working model's limit is the optimal rule
            let analytic = analytic_improvement_simple(p).ok();
            (analytic.unwrap_or(optimal), analytic)
        }
        Dgp::Complex(_) => {
            let rule = PopulationRule::FittedApproximation { fit_size };
            (mc_improvement(dgp, &rule, draws, &mut rng, workers)?.mean, None)
        }
    };
    Ok(Oracle {
        mu_random,
        mu_best: mu_random - 0.5 * dgp.mean_contrast().abs(),
        mu_optimal: optimal,
        mu_analytic,
        draws,
    })
}

/// Generates a trial for each size, bootstraps it and checks the intervals
/// against the oracle values.
pub fn run_simulate(args: &SimulateArgs) -> Result<SimulationReport> {
    let base = args.inference.bootstrap_config(args.inference.seed)?;
    let dgp = args.dgp();
    dgp.validate()?;
    let seed = args.inference.seed;
    let oracle = scenario_oracle(&dgp, args.oracle_draws, args.fit_size, seed, base.workers)?;
    let spec = dgp.working_spec();
    let mut runs = Vec::new();
    for n in args.sizes() {
        let data = dgp.generate(n, &mut derive_stream(seed, &[SIM_DATA, n as u64]))?;
        let config = BootstrapConfig {
            seed: derive_seed(seed, &[SIM_BOOTSTRAP, n as u64]),
            ..base.clone()
        };
        let result = bootstrap_inference(&data, &spec, &config)?;
        let covers_truth = Coverage {
            random: covers(result.ci_random, oracle.mu_random),
            best: covers(result.ci_best, oracle.mu_best),
        };
        let covers_optimal = matches!(dgp, Dgp::Complex(_)).then(|| Coverage {
            random: covers(result.ci_random, oracle.mu_optimal),
            best: covers(result.ci_best, oracle.mu_optimal),
        });
        runs.push(SimulationRun {
            n,
            report: InferenceReport::from(&result),
            covers_truth,
            covers_optimal,
            result,
        });
    }
    Ok(SimulationReport {
        dgp,
        seed,
        oracle,
        runs,
    })
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

impl SimulationReport {
    pub fn to_text(&self) -> String {
        let name = match self.dgp {
            Dgp::Simple(_) => "simple",
            Dgp::Complex(_) => "complex",
        };
        let mut s = format!(
            "scenario = {name}, seed = {}\nmu_I0 (random) = {:.3}, mu_I0 (best) = {:.3}, optimal mu*_I0 = {:.3}",
            self.seed, self.oracle.mu_random, self.oracle.mu_best, self.oracle.mu_optimal
        );
        if let Some(a) = self.oracle.mu_analytic {
            s.push_str(&format!(", analytic = {a:.3}"));
        }
        s.push('\n');
        for run in &self.runs {
            let level = confidence_label(run.report.alpha);
            s.push_str(&format!("\nn = {}\n", run.n));
            s.push_str(&run.report.to_text());
            s.push_str(&format!(
                "{level}% CI covers mu_I0: I_random = {}, I_best = {}\n",
                yes_no(run.covers_truth.random),
                yes_no(run.covers_truth.best)
            ));
            if let Some(c) = run.covers_optimal {
                s.push_str(&format!(
                    "{level}% CI covers mu*_I0: I_random = {}, I_best = {}\n",
                    yes_no(c.random),
                    yes_no(c.best)
                ));
            }
        }
        s
    }
}

fn exit_code(err: &Error) -> i32 {
    if err.is_estimation_failure() {
        EXIT_ESTIMATION
    } else {
        EXIT_INVALID
    }
}

fn emit_samples(path: &PathBuf, runs: &[(usize, &BootstrapResult)]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    write_samples_csv(std::io::BufWriter::new(file), runs)
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let write_err = |source| Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    };
    match &cli.command {
        Command::Evaluate(args) => {
            let result = run_evaluate(args)?;
            if let Some(path) = &args.inference.emit_samples {
                emit_samples(path, &[(result.observed.cell_counts.total(), &result)])?;
            }
            let report = InferenceReport::from(&result);
            let text = match args.inference.format {
                OutputFormat::Text => report.to_text(),
                OutputFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
            };
            out.write_all(text.as_bytes()).map_err(write_err)?;
        }
        Command::Simulate(args) => {
            let report = run_simulate(args)?;
            if let Some(path) = &args.inference.emit_samples {
                let runs: Vec<_> = report.runs.iter().map(|r| (r.n, &r.result)).collect();
                emit_samples(path, &runs)?;
            }
            let text = match args.inference.format {
                OutputFormat::Text => report.to_text(),
                OutputFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
            };
            out.write_all(text.as_bytes()).map_err(write_err)?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_repeatable_n_and_overrides() {
        let cli = Cli::try_parse_from([
            "alloc-improve", "simulate", "--scenario", "simple", "--n", "100", "--n", "200",
            "--gamma0", "-0.5", "--gamma1", "0",
        ])
        .unwrap();
        let Command::Simulate(args) = cli.command else { panic!() };
        assert_eq!(args.sizes(), vec![100, 200]);
        let Dgp::Simple(p) = args.dgp() else { panic!() };
        assert_eq!(p.gamma0, -0.5);
        assert_eq!(p.gamma1, 0.0);
        assert_eq!(args.inference.replicates, 3000);
        assert_eq!(args.inference.k_folds, 10);
        assert_eq!(args.inference.alpha, 0.05);
    }

    #[test]
    fn bad_flags_exit_two() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(["alloc-improve", "simulate", "--scenario", "nope"], &mut out, &mut err);
        assert_eq!(code, EXIT_INVALID);
        let code = run(
            ["alloc-improve", "simulate", "--scenario", "simple", "--b", "0"],
            &mut out,
            &mut err,
        );
        assert_eq!(code, EXIT_INVALID);
    }

    #[test]
    fn estimation_failures_exit_three() {
        let redraw = Error::RedrawLimit {
            replicate: 4,
            attempts: 50,
            last_error: "single arm".into(),
        };
        assert_eq!(exit_code(&redraw), EXIT_ESTIMATION);
        assert_eq!(exit_code(&Error::Estimation("empty cell".into())), EXIT_ESTIMATION);
        assert_eq!(exit_code(&Error::Schema("no column".into())), EXIT_INVALID);
    }

    #[test]
    fn help_exits_zero() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["alloc-improve", "--help"], &mut out, &mut err), EXIT_OK);
        assert!(String::from_utf8(out).unwrap().contains("evaluate"));
    }
}
