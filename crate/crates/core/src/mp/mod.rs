//! Copula martingale posteriors: pointwise predictive laws are updated along
//! a pseudo-data chain, turning a PPD into joint draws of (μ̃0, μ̃1, π̃).

mod copula;
mod coupling;
mod engine;
mod pfn_only;
mod state;

pub use copula::{
    alpha_schedule, alpha_weight, bb_mixture_copula, clamp_unit, gaussian_copula_density, GaussianCopula, U_CLAMP,
    Z_CLAMP,
};
pub use coupling::{CouplingVariant, RSource, SmoothField};
pub use engine::{
    draw_nuisance_posterior, mp_step_outcome, mp_step_propensity, CopulaConfig, MpSampler, NuisanceDraw,
    PropensityChain,
};
pub use pfn_only::pfn_only_mp;
pub use state::{PredictiveState, PropensityState, P_CLAMP};

use crate::ppd::PpdError;

#[derive(Debug, thiserror::Error)]
pub enum MpError {
    #[error("argument outside the copula domain: {0}")]
    Domain(String),
    #[error("invalid copula configuration: {0}")]
    Config(String),
    #[error("step {step}: mass drifted to {mass} at eval point {point} before renormalization")]
    NumericalInstability { step: usize, point: usize, mass: f64 },
    #[error("invalid predictive grid: {0}")]
    Grid(String),
    #[error("no evaluation points")]
    NoEvalPoints,
    #[error("training data: {0}")]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Ppd(#[from] PpdError),
}
