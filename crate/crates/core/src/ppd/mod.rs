//! Posterior predictive laws: the interface the MP engine consumes, analytic
//! backends, and the adapter for external predictive processes.

mod basis;
mod conjugate;
pub mod external;
mod kernel;
mod logistic;
pub mod protocol;

pub use basis::{Basis, BasisConfig};
pub use conjugate::{ConjugateConfig, ConjugateLinearBackend, NigPosterior, NigPrior, StudentLaw, SufficientStats};
pub use external::{external_handshake, ExternalConfig, ExternalOutcome, ExternalPropensity, ExternalSession};
pub use kernel::{KernelBackend, KernelConfig, KernelPropensity};
pub use logistic::LaplaceLogistic;

use crate::data::CausalDataset;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum PpdError {
    #[error("treatment arm {arm} has no training units")]
    EmptyArm { arm: u8 },
    #[error("degenerate arm {arm}: {reason}")]
    Degenerate { arm: u8, reason: String },
    #[error("backend does not support {0}")]
    Capability(&'static str),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("failed to spawn `{command}`: {source}")]
    Spawn { command: String, source: std::io::Error },
    #[error("protocol version mismatch: expected {expected}, client speaks {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("client error `{code}`: {message}")]
    Remote { code: String, message: String },
    #[error("handle is stale: the session has absorbed past generation {handle} (now {current})")]
    Stale { handle: u64, current: u64 },
}

/// A predictive law discretized on a value grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridLaw {
    pub y_grid: Vec<f64>,
    pub density: Vec<f64>,
}

pub const GRID_LO: f64 = 0.001;
pub const GRID_HI: f64 = 0.999;

pub trait OutcomePpd: Send + Sync + fmt::Debug {
    fn predictive_cdf(&self, y: f64, x: &[f64], arm: bool) -> Result<f64, PpdError>;

    fn predictive_density(&self, y: f64, x: &[f64], arm: bool) -> Result<f64, PpdError>;

    fn posterior_mean(&self, x: &[f64], arm: bool) -> Result<f64, PpdError>;

    fn predictive_quantile(&self, p: f64, x: &[f64], arm: bool) -> Result<f64, PpdError> {
        bisect_quantile(|y| self.predictive_cdf(y, x, arm), p, self.posterior_mean(x, arm)?)
    }

    fn sample_outcome(&self, x: &[f64], arm: bool, rng: &mut dyn RngCore) -> Result<f64, PpdError> {
        let u: f64 = rng.random();
        self.predictive_quantile(u.clamp(1e-12, 1.0 - 1e-12), x, arm)
    }

    /// Uniform grid between the 0.001 and 0.999 predictive quantiles.
    fn grid_law(&self, x: &[f64], arm: bool, grid_size: usize) -> Result<GridLaw, PpdError> {
        let lo = self.predictive_quantile(GRID_LO, x, arm)?;
        let hi = self.predictive_quantile(GRID_HI, x, arm)?;
        let y_grid = uniform_grid(lo, hi, grid_size)?;
        let density = y_grid.iter().map(|&y| self.predictive_density(y, x, arm)).collect::<Result<_, _>>()?;
        Ok(GridLaw { y_grid, density })
    }

    /// Sequential conditioning on one more observation.
    fn absorb(&self, _x: &[f64], _arm: bool, _y: f64) -> Result<Box<dyn OutcomePpd>, PpdError> {
        Err(PpdError::Capability("absorb"))
    }
}

pub trait PropensityPpd: Send + Sync + fmt::Debug {
    /// P(A = 1 | data, x), strictly inside (0, 1).
    fn predictive_prob(&self, x: &[f64]) -> Result<f64, PpdError>;

    fn absorb(&self, _x: &[f64], _arm: bool) -> Result<Box<dyn PropensityPpd>, PpdError> {
        Err(PpdError::Capability("absorb"))
    }
}

/// Point-mass propensity model; absorbing data leaves it unchanged.
#[derive(Clone, Copy, Debug)]
pub struct ConstantPropensity(pub f64);

impl PropensityPpd for ConstantPropensity {
    fn predictive_prob(&self, _x: &[f64]) -> Result<f64, PpdError> {
        Ok(self.0)
    }

    fn absorb(&self, _x: &[f64], _arm: bool) -> Result<Box<dyn PropensityPpd>, PpdError> {
        Ok(Box::new(*self))
    }
}

pub(crate) fn uniform_grid(lo: f64, hi: f64, size: usize) -> Result<Vec<f64>, PpdError> {
    if size < 3 {
        return Err(PpdError::Config(format!("grid size {size} < 3")));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(PpdError::Numerical(format!("degenerate grid range [{lo}, {hi}]")));
    }
    let h = (hi - lo) / (size - 1) as f64;
    Ok((0..size).map(|k| if k == size - 1 { hi } else { lo + h * k as f64 }).collect())
}

pub(crate) fn bisect_quantile<F>(cdf: F, p: f64, start: f64) -> Result<f64, PpdError>
where
    F: Fn(f64) -> Result<f64, PpdError>,
{
    if !(p > 0.0 && p < 1.0) {
        return Err(PpdError::Numerical(format!("quantile level {p} outside (0,1)")));
    }
    let mut step = 1.0;
    let (mut lo, mut hi) = (start - step, start + step);
    while cdf(lo)? > p {
        step *= 2.0;
        lo = start - step;
        if step > 1e300 {
            return Err(PpdError::Numerical("cannot bracket quantile".into()));
        }
    }
    step = 1.0;
    while cdf(hi)? < p {
        step *= 2.0;
        hi = start + step;
        if step > 1e300 {
            return Err(PpdError::Numerical("cannot bracket quantile".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Conjugate(ConjugateConfig),
    Kernel(KernelConfig),
    External(ExternalConfig),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Conjugate(ConjugateConfig::default())
    }
}

fn check_arms(data: &CausalDataset) -> Result<(), PpdError> {
    let (c, t) = data.arm_counts();
    if c == 0 {
        return Err(PpdError::EmptyArm { arm: 0 });
    }
    if t == 0 {
        return Err(PpdError::EmptyArm { arm: 1 });
    }
    Ok(())
}

pub fn fit_outcome(config: &BackendConfig, data: &CausalDataset) -> Result<Box<dyn OutcomePpd>, PpdError> {
    check_arms(data)?;
    Ok(match config {
        BackendConfig::Conjugate(c) => Box::new(ConjugateLinearBackend::fit(c, data)?),
        BackendConfig::Kernel(c) => Box::new(KernelBackend::fit(c, data)?),
        BackendConfig::External(c) => Box::new(ExternalOutcome::fit(c, data)?),
    })
}

pub fn fit_propensity(config: &BackendConfig, data: &CausalDataset) -> Result<Box<dyn PropensityPpd>, PpdError> {
    Ok(match config {
        BackendConfig::Conjugate(c) => Box::new(LaplaceLogistic::fit(&c.propensity_basis, c.propensity_prior_precision, data)?),
        BackendConfig::Kernel(c) => Box::new(KernelPropensity::fit(c, data)?),
        BackendConfig::External(c) => Box::new(ExternalPropensity::fit(c, data)?),
    })
}
