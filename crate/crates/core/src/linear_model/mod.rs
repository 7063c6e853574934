//! Linear response model with first-order treatment interactions:
//!
//! ```text
//! f(x, A) = b0 + b1 x1 + ... + bp xp + A (g0 + g1 x1' + ... + gq xq')
//! ```
//!
//! where the interaction covariates `x'` are a subset of the main ones.
//! Fitted by ordinary least squares with a rank-revealing QR.

mod qr;

use serde::{Deserialize, Serialize};

use crate::dataset::RctDataset;
use crate::error::{Error, Result};

pub use qr::{solve_least_squares, LeastSquares, RANK_TOLERANCE};

/// Whether larger or smaller responses are better for the subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Direction {
    #[default]
    #[serde(rename = "higher")]
    HigherIsBetter,
    #[serde(rename = "lower")]
    LowerIsBetter,
}

impl Direction {
    /// +1 for higher-is-better, -1 for lower-is-better.
    pub fn sign(self) -> f64 {
        match self {
            Direction::HigherIsBetter => 1.0,
            Direction::LowerIsBetter => -1.0,
        }
    }

    /// True when `a` is strictly better than `b`.
    pub fn prefers(self, a: f64, b: f64) -> bool {
        match self {
            Direction::HigherIsBetter => a > b,
            Direction::LowerIsBetter => a < b,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "higher" => Ok(Direction::HigherIsBetter),
            "lower" => Ok(Direction::LowerIsBetter),
            other => Err(Error::InvalidArgument(format!(
                "direction must be `higher` or `lower`, got `{other}`"
            ))),
        }
    }
}

/// Pre-specified model: main-effect covariates and the subset that
/// interacts with treatment. Serialized as
/// `{"main": [...], "interactions": [...], "direction": "higher"|"lower"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(rename = "main")]
    pub main_covariates: Vec<String>,
    #[serde(rename = "interactions")]
    pub interaction_covariates: Vec<String>,
    #[serde(rename = "direction", default)]
    pub direction: Direction,
}

impl ModelSpec {
    pub fn new(
        main: impl IntoIterator<Item = impl Into<String>>,
        interactions: impl IntoIterator<Item = impl Into<String>>,
        direction: Direction,
    ) -> Self {
        ModelSpec {
            main_covariates: main.into_iter().map(Into::into).collect(),
            interaction_covariates: interactions.into_iter().map(Into::into).collect(),
            direction,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)
            .map_err(|e| Error::Spec(format!("invalid model spec JSON: {e}")))?;
        spec.check()?;
        Ok(spec)
    }

    /// Number of design columns: intercept, mains, treatment, interactions.
    pub fn n_columns(&self) -> usize {
        2 + self.main_covariates.len() + self.interaction_covariates.len()
    }

    fn check(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for name in &self.main_covariates {
            if !seen.insert(name) {
                return Err(Error::Spec(format!("`{name}` listed twice in main effects")));
            }
        }
        let mut seen_i = std::collections::HashSet::new();
        for name in &self.interaction_covariates {
            if !seen.contains(name) {
                return Err(Error::Spec(format!(
                    "interaction covariate `{name}` is not a main effect"
                )));
            }
            if !seen_i.insert(name) {
                return Err(Error::Spec(format!("`{name}` listed twice in interactions")));
            }
        }
        Ok(())
    }

    /// Resolves covariate names to column positions in a dataset.
    pub fn resolve(&self, covariate_names: &[String]) -> Result<DesignLayout> {
        self.check()?;
        let lookup = |name: &String| {
            covariate_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Spec(format!("unknown covariate `{name}`")))
        };
        Ok(DesignLayout {
            main: self.main_covariates.iter().map(lookup).collect::<Result<_>>()?,
            interactions: self
                .interaction_covariates
                .iter()
                .map(lookup)
                .collect::<Result<_>>()?,
            direction: self.direction,
        })
    }

    /// Resolves against `data` and checks there are more subjects than
    /// design columns.
    pub fn resolve_for(&self, data: &RctDataset) -> Result<DesignLayout> {
        let layout = self.resolve(data.covariate_names())?;
        if data.n() <= layout.n_columns() {
            return Err(Error::Validation(format!(
                "{} subjects cannot support a model with {} columns",
                data.n(),
                layout.n_columns()
            )));
        }
        Ok(layout)
    }
}

/// A [`ModelSpec`] resolved to dataset column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignLayout {
    pub main: Vec<usize>,
    pub interactions: Vec<usize>,
    pub direction: Direction,
}

impl DesignLayout {
    pub fn n_columns(&self) -> usize {
        2 + self.main.len() + self.interactions.len()
    }

    /// Writes the design row `[1, x1..xp, a, a*x1'..a*xq']` into `out`.
    pub fn expand_into(&self, x: &[f64], a: u8, out: &mut [f64]) {
        let a = f64::from(a);
        out[0] = 1.0;
        let mut c = 1;
        for &j in &self.main {
            out[c] = x[j];
            c += 1;
        }
        out[c] = a;
        c += 1;
        for &j in &self.interactions {
            out[c] = a * x[j];
            c += 1;
        }
    }

    pub fn expand(&self, x: &[f64], a: u8) -> Vec<f64> {
        let mut out = vec![0.0; self.n_columns()];
        self.expand_into(x, a, &mut out);
        out
    }
}

/// Design matrix stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl DesignMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let mut data = vec![0.0; m * n];
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                data[j * m + i] = v;
            }
        }
        DesignMatrix { data, rows: m, cols: n }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Rows `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let m = indices.len();
        let mut data = Vec::with_capacity(m * self.cols);
        for j in 0..self.cols {
            let c = self.column(j);
            data.extend(indices.iter().map(|&i| c[i]));
        }
        DesignMatrix {
            data,
            rows: m,
            cols: self.cols,
        }
    }

    /// `X b`.
    pub fn mul_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (j, &bj) in b.iter().enumerate() {
            if bj != 0.0 {
                for (o, &x) in out.iter_mut().zip(self.column(j)) {
                    *o += x * bj;
                }
            }
        }
        out
    }
}

/// Expands covariates and treatment into the design matrix with columns
/// `[1, x1..xp, A, A*x1'..A*xq']`.
pub fn build_design(spec: &ModelSpec, data: &RctDataset) -> Result<DesignMatrix> {
    let layout = spec.resolve(data.covariate_names())?;
    Ok(build_design_with(&layout, data))
}

pub(crate) fn build_design_with(layout: &DesignLayout, data: &RctDataset) -> DesignMatrix {
    let (m, n) = (data.n(), layout.n_columns());
    let mut data_cm = vec![0.0; m * n];
    let mut row = vec![0.0; n];
    for i in 0..m {
        layout.expand_into(data.row(i), data.treatment()[i], &mut row);
        for (j, &v) in row.iter().enumerate() {
            data_cm[j * m + i] = v;
        }
    }
    DesignMatrix {
        data: data_cm,
        rows: m,
        cols: n,
    }
}

/// Ordinary least squares fit on an arbitrary design.
pub fn fit_ols(design: &DesignMatrix, response: &[f64]) -> Result<LeastSquares> {
    if design.rows() != response.len() {
        return Err(Error::Fit(format!(
            "design has {} rows but response has {}",
            design.rows(),
            response.len()
        )));
    }
    if design.rows() == 0 {
        return Err(Error::Fit("no observations".into()));
    }
    if design.data.iter().chain(response).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite value in design or response".into()));
    }
    let ls = solve_least_squares(&design.data, design.rows, design.cols, response);
    if ls.rank > design.rows() {
        return Err(Error::Fit(format!(
            "{} observations cannot identify rank {}",
            design.rows(),
            ls.rank
        )));
    }
    Ok(ls)
}

/// Fitted response model, ordered `(b0, b1..bp, g0, g1'..gq')`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    layout: DesignLayout,
    coefficients: Vec<f64>,
    aliased: Vec<bool>,
}

impl FittedModel {
    /// Fits `spec` on all of `data`.
    pub fn fit(spec: &ModelSpec, data: &RctDataset) -> Result<Self> {
        let layout = spec.resolve(data.covariate_names())?;
        let design = build_design_with(&layout, data);
        FittedModel::fit_design(layout, &design, data.response())
    }

    pub(crate) fn fit_design(
        layout: DesignLayout,
        design: &DesignMatrix,
        response: &[f64],
    ) -> Result<Self> {
        let ls = fit_ols(design, response)?;
        Ok(FittedModel {
            layout,
            coefficients: ls.coefficients,
            aliased: ls.aliased,
        })
    }

    /// Model with given coefficients, mostly for tests and simulation.
    pub fn from_coefficients(layout: DesignLayout, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != layout.n_columns() {
            return Err(Error::Spec(format!(
                "expected {} coefficients, got {}",
                layout.n_columns(),
                coefficients.len()
            )));
        }
        let aliased = vec![false; coefficients.len()];
        Ok(FittedModel {
            layout,
            coefficients,
            aliased,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn aliased(&self) -> &[bool] {
        &self.aliased
    }

    pub fn layout(&self) -> &DesignLayout {
        &self.layout
    }

    pub fn direction(&self) -> Direction {
        self.layout.direction
    }

    /// Predicted response for covariate row `x` under arm `a`.
    pub fn predict(&self, x: &[f64], a: u8) -> f64 {
        let mut c = 0;
        let mut acc = self.coefficients[c];
        c += 1;
        for &j in &self.layout.main {
            acc += self.coefficients[c] * x[j];
            c += 1;
        }
        if a == 1 {
            acc += self.treatment_contrast(x);
        }
        acc
    }

    /// `predict(x, 1) - predict(x, 0) = g0 + sum g_j' x_j'`.
    pub fn treatment_contrast(&self, x: &[f64]) -> f64 {
        let start = 1 + self.layout.main.len();
        let gammas = &self.coefficients[start..];
        let mut acc = gammas[0];
        for (g, &j) in gammas[1..].iter().zip(&self.layout.interactions) {
            acc += g * x[j];
        }
        acc
    }
}
