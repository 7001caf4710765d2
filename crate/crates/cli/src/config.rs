use ospc_core::data::PropensityMode;
use ospc_core::mp::{CopulaConfig, CouplingVariant};
use ospc_core::ppd::BackendConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        /// Sample sizes of the experiment grid.
        n: Vec<usize>,
        #[serde(default = "default_dx")]
        d_x: usize,
        #[serde(default = "one")]
        noise_sd: f64,
        #[serde(default)]
        propensity: PropensityMode,
    },
    Csv {
        path: PathBuf,
        treatment: String,
        outcome: String,
        #[serde(default)]
        covariates: Option<Vec<String>>,
        #[serde(default = "yes")]
        standardize: bool,
    },
}

fn default_dx() -> usize {
    25
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Aiptw,
    PlugIn,
    Ospc,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Aiptw => "aiptw",
            Estimator::PlugIn => "plug_in",
            Estimator::Ospc => "ospc",
        }
    }
}

/// Where the nuisances come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceSource {
    /// Fitted backend plus copula martingale posterior draws.
    #[default]
    Backend,
    /// True nuisances of the synthetic design, repeated for every draw.
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// 0 or 1: single train/test split; k ≥ 2: cross-fitted A-IPTW.
    #[serde(default)]
    pub folds: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_floor")]
    pub truncation_floor: f64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub nuisance: NuisanceSource,
    /// Coupling variants to run; empty means `copula.variant` only.
    #[serde(default)]
    pub variants: Vec<CouplingVariant>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub copula: CopulaConfig,
    /// Datasets drawn by `prior-bias`.
    #[serde(default = "default_prior_draws")]
    pub prior_bias_draws: usize,
}

fn default_workers() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_replicates() -> usize {
    1
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_floor() -> f64 {
    ospc_core::estimators::DEFAULT_FLOOR
}

fn default_estimators() -> Vec<Estimator> {
    vec![Estimator::Aiptw, Estimator::PlugIn, Estimator::Ospc]
}

fn default_prior_draws() -> usize {
    100
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.copula.steps == 0 {
            return bad("copula.steps must be at least 1".into());
        }
        self.copula.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction = {} not in (0,1)", self.test_fraction));
        }
        if !(self.truncation_floor > 0.0 && self.truncation_floor < 0.5) {
            return bad(format!("truncation_floor = {} not in (0, 0.5)", self.truncation_floor));
        }
        if self.estimators.is_empty() {
            return bad("estimators must not be empty".into());
        }
        if self.prior_bias_draws == 0 {
            return bad("prior_bias_draws must be at least 1".into());
        }
        match &self.dataset {
            DatasetConfig::Synthetic { n, d_x, noise_sd, .. } => {
                if n.is_empty() || n.contains(&0) {
                    return bad("dataset.n must list positive sample sizes".into());
                }
                if *d_x < ospc_core::data::MIN_DIM {
                    return bad(format!("dataset.d_x = {d_x} below {}", ospc_core::data::MIN_DIM));
                }
                if !(*noise_sd > 0.0) {
                    return bad(format!("dataset.noise_sd = {noise_sd} must be positive"));
                }
            }
            DatasetConfig::Csv { path, .. } => {
                if !path.is_file() {
                    return bad(format!("dataset file {} does not exist", path.display()));
                }
                if self.nuisance == NuisanceSource::Oracle {
                    return bad("nuisance = \"oracle\" needs a synthetic dataset".into());
                }
            }
        }
        if let BackendConfig::External(e) = &self.backend {
            if e.command.is_empty() {
                return bad("backend.command must not be empty".into());
            }
        }
        Ok(())
    }

    pub fn variant_list(&self) -> Vec<CouplingVariant> {
        if self.variants.is_empty() {
            vec![self.copula.variant]
        } else {
            self.variants.clone()
        }
    }

    pub fn wants(&self, e: Estimator) -> bool {
        self.estimators.contains(&e)
    }

    pub fn wants_posterior(&self) -> bool {
        self.wants(Estimator::PlugIn) || self.wants(Estimator::Ospc)
    }

    /// SHA-256 (first 16 hex digits) of the canonical JSON of the resolved
    /// config, ignoring `workers` and `out`, which do not affect results.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("workers");
            m.remove("out");
        }
        let digest = Sha256::digest(serde_json::to_string(&v).expect("value serializes").as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
