//! Observational datasets, the synthetic DGP, CSV ingestion and the
//! confounding-degree statistic.

mod csv_io;
mod dgp;

pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use dgp::{confounding_degree, generate_synthetic, prior_bias_harness, DgpSpec, OracleDgp, PropensityMode, MIN_DIM};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid DGP spec: {0}")]
    InvalidSpec(String),
    #[error("{what}: expected length {expected}, found {found}")]
    ShapeMismatch { what: &'static str, expected: usize, found: usize },
    #[error("treatment arm {arm} is empty")]
    EmptyArm { arm: u8 },
    #[error("need at least {needed} units, found {found}")]
    TooFewUnits { needed: usize, found: usize },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: treatment value `{value}` is not 0 or 1")]
    NonBinaryTreatment { row: usize, value: String },
    #[error("row {row}, column `{column}`: `{value}` is not a finite number")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("no usable covariate columns (all constant or none named)")]
    NoCovariates,
}

/// Dense row-major covariate matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CovariateMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, DataError> {
        if values.len() != rows * cols {
            return Err(DataError::ShapeMismatch { what: "covariate values", expected: rows * cols, found: values.len() });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(DataError::ShapeMismatch { what: "covariate row", expected: cols, found: r.len() });
            }
            values.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, values }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.values[i * self.cols + j]).collect()
    }
}

/// Per-column affine map applied at load time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardization {
    pub fn identity(d: usize) -> Self {
        Self { means: vec![0.0; d], stds: vec![1.0; d] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CausalDataset {
    covariates: CovariateMatrix,
    treatments: Vec<bool>,
    outcomes: Vec<f64>,
    standardization: Standardization,
    column_names: Vec<String>,
    warnings: Vec<String>,
}

impl CausalDataset {
    /// Builds a dataset whose covariates are already on the working scale.
    pub fn new(covariates: CovariateMatrix, treatments: Vec<bool>, outcomes: Vec<f64>) -> Result<Self, DataError> {
        let d = covariates.cols();
        let names = (0..d).map(|j| format!("x{j}")).collect();
        Self::with_metadata(covariates, treatments, outcomes, Standardization::identity(d), names, Vec::new())
    }

    pub fn with_metadata(
        covariates: CovariateMatrix,
        treatments: Vec<bool>,
        outcomes: Vec<f64>,
        standardization: Standardization,
        column_names: Vec<String>,
        warnings: Vec<String>,
    ) -> Result<Self, DataError> {
        let n = covariates.rows();
        if treatments.len() != n {
            return Err(DataError::ShapeMismatch { what: "treatments", expected: n, found: treatments.len() });
        }
        if outcomes.len() != n {
            return Err(DataError::ShapeMismatch { what: "outcomes", expected: n, found: outcomes.len() });
        }
        let d = covariates.cols();
        if standardization.means.len() != d || standardization.stds.len() != d {
            return Err(DataError::ShapeMismatch { what: "standardization", expected: d, found: standardization.stds.len() });
        }
        if column_names.len() != d {
            return Err(DataError::ShapeMismatch { what: "column names", expected: d, found: column_names.len() });
        }
        if let Some(j) = standardization.stds.iter().position(|s| !(*s > 0.0)) {
            return Err(DataError::InvalidSpec(format!("non-positive std for column {j}")));
        }
        Ok(Self { covariates, treatments, outcomes, standardization, column_names, warnings })
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    pub fn d_x(&self) -> usize {
        self.covariates.cols()
    }

    pub fn covariates(&self) -> &CovariateMatrix {
        &self.covariates
    }

    pub fn treatments(&self) -> &[bool] {
        &self.treatments
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        self.covariates.row(i)
    }

    /// (control count, treated count)
    pub fn arm_counts(&self) -> (usize, usize) {
        let t = self.treatments.iter().filter(|&&a| a).count();
        (self.n() - t, t)
    }

    /// The estimator-entry contract: n ≥ 2 and both arms present.
    pub fn require_both_arms(&self) -> Result<(), DataError> {
        if self.n() < 2 {
            return Err(DataError::TooFewUnits { needed: 2, found: self.n() });
        }
        let (c, t) = self.arm_counts();
        if c == 0 {
            return Err(DataError::EmptyArm { arm: 0 });
        }
        if t == 0 {
            return Err(DataError::EmptyArm { arm: 1 });
        }
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            covariates: self.covariates.select_rows(idx),
            treatments: idx.iter().map(|&i| self.treatments[i]).collect(),
            outcomes: idx.iter().map(|&i| self.outcomes[i]).collect(),
            standardization: self.standardization.clone(),
            column_names: self.column_names.clone(),
            warnings: self.warnings.clone(),
        }
    }

    /// Indices of units in the given arm.
    pub fn arm_indices(&self, arm: bool) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.treatments[i] == arm).collect()
    }
}

/// Assigns each unit to one of `k` groups, shuffling within each treatment arm
/// and dealing round-robin so every group gets ⌊n_a/k⌋ or ⌈n_a/k⌉ units of arm a.
pub fn stratified_assignment<R: Rng + ?Sized>(treatments: &[bool], k: usize, rng: &mut R) -> Vec<usize> {
    let mut group = vec![0usize; treatments.len()];
    let mut offset = 0;
    for arm in [false, true] {
        let mut idx: Vec<usize> = (0..treatments.len()).filter(|&i| treatments[i] == arm).collect();
        idx.shuffle(rng);
        for (r, &i) in idx.iter().enumerate() {
            group[i] = (r + offset) % k;
        }
        offset += idx.len();
    }
    group
}

/// Stratified train/test split; returns (train indices, test indices), each sorted.
pub fn stratified_split<R: Rng + ?Sized>(
    dataset: &CausalDataset,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidSpec(format!("test fraction {test_fraction} outside (0,1)")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for arm in [false, true] {
        let mut idx = dataset.arm_indices(arm);
        idx.shuffle(rng);
        let n_test = ((idx.len() as f64) * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
