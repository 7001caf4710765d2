//! Copula martingale posteriors for causal nuisance functions, the one-step
//! posterior correction for the ATE, and the diagnostics used to check them
//! against the A-IPTW reference law.

pub mod data;
pub mod diagnostics;
pub mod estimators;
pub mod mp;
pub mod normal;
pub mod ppd;
pub mod seed;

pub use data::{CausalDataset, CovariateMatrix, DataError, DgpSpec, OracleDgp, PropensityMode};
pub use diagnostics::{DiagnosticsError, KsReport, R2Report, TvReport, VarianceOrderingReport};
pub use estimators::{AtePosterior, EifInputs, EstimatorError, EstimatorKind, GaussianLaw};
pub use mp::{CopulaConfig, CouplingVariant, MpError, MpSampler, NuisanceDraw, PredictiveState, PropensityState};
pub use ppd::{BackendConfig, OutcomePpd, PpdError, PropensityPpd};
