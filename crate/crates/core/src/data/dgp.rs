use super::{CausalDataset, CovariateMatrix, DataError};
use crate::seed;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const CONFOUNDERS: std::ops::Range<usize> = 0..5;
pub const OUTCOME_ONLY: std::ops::Range<usize> = 5..10;
pub const MODIFIERS: std::ops::Range<usize> = 10..15;
pub const MIN_DIM: usize = 15;
pub const PI_BOUND: f64 = 0.02;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityMode {
    #[default]
    Confounded,
    /// Treatment assigned by a fair coin.
    Randomized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub n: usize,
    pub d_x: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default)]
    pub propensity: PropensityMode,
}

fn one() -> f64 {
    1.0
}

impl DgpSpec {
    pub fn new(n: usize, d_x: usize, seed: u64) -> Self {
        Self { n, d_x, seed, noise_sd: 1.0, propensity: PropensityMode::Confounded }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.n == 0 {
            return Err(DataError::InvalidSpec("n must be positive".into()));
        }
        if self.d_x < MIN_DIM {
            return Err(DataError::InvalidSpec(format!("d_x = {} but at least {MIN_DIM} columns are needed", self.d_x)));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(DataError::InvalidSpec(format!("noise_sd = {} must be positive", self.noise_sd)));
        }
        Ok(())
    }
}

/// Ground truth of the synthetic design.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleDgp {
    pub propensity: PropensityMode,
    pub true_ate: f64,
    pub noise_sd: f64,
    /// Rows of (y\[0\], y\[1\]) for the generated units.
    pub counterfactuals: Option<Vec<[f64; 2]>>,
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl OracleDgp {
    pub fn mu0(&self, x: &[f64]) -> f64 {
        let sq: f64 = x[CONFOUNDERS.start..OUTCOME_ONLY.end].iter().map(|v| v * v).sum();
        let lin: f64 = x[CONFOUNDERS].iter().sum();
        0.5 * sq + lin
    }

    pub fn tau(&self, x: &[f64]) -> f64 {
        x[MODIFIERS].iter().map(|v| v * v).sum()
    }

    pub fn mu1(&self, x: &[f64]) -> f64 {
        self.mu0(x) + self.tau(x)
    }

    pub fn mu(&self, x: &[f64], arm: bool) -> f64 {
        if arm {
            self.mu1(x)
        } else {
            self.mu0(x)
        }
    }

    pub fn pi(&self, x: &[f64]) -> f64 {
        match self.propensity {
            PropensityMode::Randomized => 0.5,
            PropensityMode::Confounded => {
                let s: f64 = x[CONFOUNDERS].iter().sum();
                sigmoid(0.8 * s).clamp(PI_BOUND, 1.0 - PI_BOUND)
            }
        }
    }

    pub fn mu_at(&self, x: &CovariateMatrix, arm: bool) -> Vec<f64> {
        x.iter_rows().map(|r| self.mu(r, arm)).collect()
    }

    pub fn pi_at(&self, x: &CovariateMatrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.pi(r)).collect()
    }

    /// z-score of the counterfactual mean effect against `true_ate`.
    pub fn counterfactual_z(&self) -> Option<f64> {
        let cf = self.counterfactuals.as_ref()?;
        let n = cf.len() as f64;
        let d: Vec<f64> = cf.iter().map(|r| r[1] - r[0]).collect();
        let m = d.iter().sum::<f64>() / n;
        let v = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        Some((m - self.true_ate) / (v / n).sqrt())
    }
}

pub fn generate_synthetic(spec: &DgpSpec) -> Result<(CausalDataset, OracleDgp), DataError> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let (n, d) = (spec.n, spec.d_x);
    let values: Vec<f64> = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let x = CovariateMatrix::new(n, d, values)?;
    let oracle = OracleDgp {
        propensity: spec.propensity,
        true_ate: MODIFIERS.len() as f64,
        noise_sd: spec.noise_sd,
        counterfactuals: None,
    };
    let mut treatments = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    let mut cf = Vec::with_capacity(n);
    for i in 0..n {
        let xi = x.row(i);
        let a = rng.random::<f64>() < oracle.pi(xi);
        let eps = spec.noise_sd * rng.sample::<f64, _>(StandardNormal);
        let y0 = oracle.mu0(xi) + eps;
        let y1 = oracle.mu1(xi) + eps;
        treatments.push(a);
        outcomes.push(if a { y1 } else { y0 });
        cf.push([y0, y1]);
    }
    let data = CausalDataset::new(x, treatments, outcomes)?;
    Ok((data, OracleDgp { counterfactuals: Some(cf), ..oracle }))
}

/// Δ = mean(y\[1\] − y\[0\]) − (mean(y | a=1) − mean(y | a=0)).
pub fn confounding_degree(dataset: &CausalDataset, counterfactuals: &[[f64; 2]]) -> Result<f64, DataError> {
    if counterfactuals.len() != dataset.n() {
        return Err(DataError::ShapeMismatch { what: "counterfactuals", expected: dataset.n(), found: counterfactuals.len() });
    }
    let (nc, nt) = dataset.arm_counts();
    if nc == 0 {
        return Err(DataError::EmptyArm { arm: 0 });
    }
    if nt == 0 {
        return Err(DataError::EmptyArm { arm: 1 });
    }
    let ate = counterfactuals.iter().map(|r| r[1] - r[0]).sum::<f64>() / dataset.n() as f64;
    let (mut s1, mut s0) = (0.0, 0.0);
    for (&a, &y) in dataset.treatments().iter().zip(dataset.outcomes()) {
        if a {
            s1 += y;
        } else {
            s0 += y;
        }
    }
    Ok(ate - (s1 / nt as f64 - s0 / nc as f64))
}

/// Δ over `b` independent datasets with seeds `derive_seed(spec.seed, r)`.
pub fn prior_bias_harness(spec: &DgpSpec, b: usize) -> Result<Vec<f64>, DataError> {
    spec.validate()?;
    (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let child = DgpSpec { seed: seed::derive_seed(spec.seed, r), ..spec.clone() };
            let (data, oracle) = generate_synthetic(&child)?;
            confounding_degree(&data, oracle.counterfactuals.as_deref().unwrap_or_default())
        })
        .collect()
}
