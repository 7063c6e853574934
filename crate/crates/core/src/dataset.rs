//! Two-arm randomized trial data: loading, validation, fold splitting and
//! bootstrap resampling.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Minimum number of subjects required in each arm.
pub const MIN_PER_ARM: usize = 2;

/// Maximum fold redraws before `make_folds` gives up.
pub const MAX_FOLD_ATTEMPTS: usize = 100;

/// Maximum redraws in [`resample_with_replacement`] before giving up.
pub const MAX_RESAMPLE_ATTEMPTS: usize = 1000;

/// Validated trial data: `n` subjects, `p` numeric covariates, a 0/1
/// treatment indicator and a continuous response.
///
/// Immutable after construction. Covariates are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RctDataset {
    covariates: Vec<f64>,
    treatment: Vec<u8>,
    response: Vec<f64>,
    covariate_names: Vec<String>,
}

impl RctDataset {
    /// Builds a dataset from a row-major covariate buffer of length `n * p`.
    pub fn new(
        covariate_names: Vec<String>,
        covariates: Vec<f64>,
        treatment: Vec<u8>,
        response: Vec<f64>,
    ) -> Result<Self> {
        let n = response.len();
        let p = covariate_names.len();
        if treatment.len() != n {
            return Err(Error::Validation(format!(
                "treatment has {} entries but response has {n}",
                treatment.len()
            )));
        }
        if covariates.len() != n * p {
            return Err(Error::Validation(format!(
                "covariate buffer has {} values, expected {n} x {p}",
                covariates.len()
            )));
        }
        let data = RctDataset {
            covariates,
            treatment,
            response,
            covariate_names,
        };
        data.validate()?;
        Ok(data)
    }

    fn validate(&self) -> Result<()> {
        let p = self.p();
        for (i, &a) in self.treatment.iter().enumerate() {
            if a > 1 {
                return Err(Error::Validation(format!(
                    "row {}: treatment must be 0 or 1, got {a}",
                    i + 1
                )));
            }
        }
        if let Some(i) = self.response.iter().position(|y| !y.is_finite()) {
            return Err(Error::Validation(format!("row {}: non-finite response", i + 1)));
        }
        if let Some(k) = self.covariates.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "row {}: non-finite value in covariate `{}`",
                k / p + 1,
                self.covariate_names[k % p]
            )));
        }
        if self.n() < 4 {
            return Err(Error::Validation(format!(
                "need at least 4 subjects, got {}",
                self.n()
            )));
        }
        let (n0, n1) = self.arm_counts();
        if n0 < MIN_PER_ARM || n1 < MIN_PER_ARM {
            return Err(Error::Validation(format!(
                "both arms need at least {MIN_PER_ARM} subjects (arm 0: {n0}, arm 1: {n1})"
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Covariates of subject `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.covariates[i * p..(i + 1) * p]
    }

    /// Number of subjects in arm 0 and arm 1.
    pub fn arm_counts(&self) -> (usize, usize) {
        let n1 = self.treatment.iter().filter(|&&a| a == 1).count();
        (self.n() - n1, n1)
    }

    /// Same subjects with a transformed response.
    pub fn map_response(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let response = self.response.iter().map(|&y| f(y)).collect();
        RctDataset::new(
            self.covariate_names.clone(),
            self.covariates.clone(),
            self.treatment.clone(),
            response,
        )
    }

    /// Same subjects with treatment labels swapped.
    pub fn swap_arms(&self) -> Self {
        RctDataset {
            treatment: self.treatment.iter().map(|&a| 1 - a).collect(),
            ..self.clone()
        }
    }

    /// Rows `indices` (repeats allowed), validated as a dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let p = self.p();
        let mut covariates = Vec::with_capacity(indices.len() * p);
        for &i in indices {
            covariates.extend_from_slice(self.row(i));
        }
        RctDataset::new(
            self.covariate_names.clone(),
            covariates,
            indices.iter().map(|&i| self.treatment[i]).collect(),
            indices.iter().map(|&i| self.response[i]).collect(),
        )
    }
}

/// Reads a CSV with a header row. `treatment_column` and `response_column`
/// name the arm indicator and the outcome; every other column is a numeric
/// covariate, kept in file order.
pub fn load_csv(
    path: impl AsRef<Path>,
    treatment_column: &str,
    response_column: &str,
) -> Result<RctDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, treatment_column, response_column)
}

/// [`load_csv`] over any reader.
pub fn read_csv(
    reader: impl std::io::Read,
    treatment_column: &str,
    response_column: &str,
) -> Result<RctDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in header")))
    };
    let t_col = find(treatment_column)?;
    let y_col = find(response_column)?;
    if t_col == y_col {
        return Err(Error::Schema(
            "treatment and response must be different columns".into(),
        ));
    }
    let cov_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != t_col && c != y_col)
        .collect();

    let mut covariates = Vec::new();
    let mut treatment = Vec::new();
    let mut response = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let cell = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            let parse_err = |message: String| Error::Parse {
                row,
                column: headers[c].clone(),
                message,
            };
            if raw.is_empty() {
                return Err(parse_err("missing value".into()));
            }
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(format!("`{raw}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("`{raw}` is not finite")));
            }
            Ok(v)
        };
        let a = cell(t_col)?;
        let a = match a {
            0.0 => 0u8,
            1.0 => 1u8,
            other => {
                return Err(Error::Parse {
                    row,
                    column: headers[t_col].clone(),
                    message: format!("treatment must be 0 or 1, got {other}"),
                })
            }
        };
        treatment.push(a);
        response.push(cell(y_col)?);
        for &c in &cov_cols {
            covariates.push(cell(c)?);
        }
    }
    let names = cov_cols.iter().map(|&c| headers[c].clone()).collect();
    RctDataset::new(names, covariates, treatment, response)
}

/// Assignment of each subject to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    /// Subjects held out in fold `fold`.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    /// Subjects used for training when fold `fold` is held out.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }
}

/// Number of folds actually usable on `data`: `k` lowered to the smaller
/// arm size when an arm has fewer than `k` subjects.
pub fn effective_folds(data: &RctDataset, k: usize) -> usize {
    let (n0, n1) = data.arm_counts();
    let cap = n0.min(n1);
    if cap < k {
        log::warn!("an arm has only {cap} subjects; reducing folds from {k} to {cap}");
        cap
    } else {
        k
    }
}

/// Uniformly random partition of the subjects into `k` folds whose sizes
/// differ by at most one. A partition that leaves some training set without
/// one of the arms is redrawn, up to [`MAX_FOLD_ATTEMPTS`] times.
pub fn make_folds<R: Rng + ?Sized>(
    data: &RctDataset,
    k: usize,
    rng: &mut R,
) -> Result<FoldAssignment> {
    let n = data.n();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} subjects into {k} folds"
        )));
    }
    let (n0, n1) = data.arm_counts();
    let mut order: Vec<usize> = (0..n).collect();
    let mut fold_of = vec![0; n];
    for _ in 0..MAX_FOLD_ATTEMPTS {
        order.shuffle(rng);
        for (pos, &i) in order.iter().enumerate() {
            fold_of[i] = pos % k;
        }
        // held-out arm counts per fold
        let mut held = vec![(0usize, 0usize); k];
        for (i, &f) in fold_of.iter().enumerate() {
            if data.treatment[i] == 1 {
                held[f].1 += 1;
            } else {
                held[f].0 += 1;
            }
        }
        if held.iter().all(|&(h0, h1)| h0 < n0 && h1 < n1) {
            return Ok(FoldAssignment { fold_of, k });
        }
    }
    Err(Error::Validation(format!(
        "could not find a {k}-fold split whose training sets contain both arms \
         after {MAX_FOLD_ATTEMPTS} attempts; try fewer folds"
    )))
}

/// `n` indices drawn uniformly with replacement from `0..n`.
pub fn resample_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Nonparametric bootstrap resample: `n` whole rows drawn with replacement.
/// Draws that leave an arm below [`MIN_PER_ARM`] subjects are redrawn.
pub fn resample_with_replacement<R: Rng + ?Sized>(
    data: &RctDataset,
    rng: &mut R,
) -> Result<RctDataset> {
    let mut last = None;
    for _ in 0..MAX_RESAMPLE_ATTEMPTS {
        let idx = resample_indices(data.n(), rng);
        match data.subset(&idx) {
            Ok(d) => return Ok(d),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Validation("resampling failed".into())))
}
