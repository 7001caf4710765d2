//! One replicate of the experiment: data, split, nuisances, estimators,
//! diagnostics.

use crate::config::{DatasetConfig, Estimator, NuisanceSource, RunConfig};
use ospc_core::data::{self, CausalDataset, CsvSchema, DataError, DgpSpec, OracleDgp};
use ospc_core::diagnostics::{self, DiagnosticsError, ReportRow};
use ospc_core::estimators::{self, AtePosterior, EifInputs, EstimatorError, FoldNuisances};
use ospc_core::mp::{CopulaConfig, CouplingVariant, MpError, MpSampler, NuisanceDraw};
use ospc_core::ppd::{self, OutcomePpd, PpdError, PropensityPpd};
use ospc_core::seed;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ppd(#[from] PpdError),
    #[error(transparent)]
    Mp(#[from] MpError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{0}")]
    Config(String),
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Data(_) => "data",
            PipelineError::Ppd(_) => "ppd",
            PipelineError::Mp(_) => "mp",
            PipelineError::Estimator(_) => "estimator",
            PipelineError::Diagnostics(_) => "diagnostics",
            PipelineError::Config(_) => "config",
        }
    }
}

/// One (sample size, replicate) cell of the experiment grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Task {
    /// Requested sample size; `None` for a CSV dataset.
    pub n: Option<usize>,
    pub replicate: usize,
    pub seed: u64,
}

pub fn tasks(cfg: &RunConfig) -> Vec<Task> {
    let sizes: Vec<Option<usize>> = match &cfg.dataset {
        DatasetConfig::Synthetic { n, .. } => n.iter().map(|&n| Some(n)).collect(),
        DatasetConfig::Csv { .. } => vec![None],
    };
    let mut out = Vec::new();
    for n in sizes {
        let base = seed::derive_seed(cfg.seed, n.unwrap_or(0) as u64);
        for replicate in 0..cfg.replicates {
            out.push(Task { n, replicate, seed: seed::derive_seed(base, replicate as u64) });
        }
    }
    out
}

pub fn dgp_spec(cfg: &RunConfig, n: usize, seed_: u64) -> Option<DgpSpec> {
    match &cfg.dataset {
        DatasetConfig::Synthetic { d_x, noise_sd, propensity, .. } => {
            Some(DgpSpec { n, d_x: *d_x, seed: seed_, noise_sd: *noise_sd, propensity: *propensity })
        }
        DatasetConfig::Csv { .. } => None,
    }
}

/// The dataset of a task, with the oracle for synthetic designs.
pub fn load_dataset(cfg: &RunConfig, task: &Task) -> Result<(String, CausalDataset, Option<OracleDgp>), PipelineError> {
    match &cfg.dataset {
        DatasetConfig::Synthetic { .. } => {
            let n = task.n.ok_or_else(|| PipelineError::Config("synthetic task without n".into()))?;
            let spec = dgp_spec(cfg, n, seed::derive_labeled(task.seed, "data")).expect("synthetic");
            let (d, o) = data::generate_synthetic(&spec)?;
            Ok(("synthetic".into(), d, Some(o)))
        }
        DatasetConfig::Csv { path, treatment, outcome, covariates, standardize } => {
            let schema = CsvSchema { covariates: covariates.clone(), standardize: *standardize, ..CsvSchema::new(treatment, outcome) };
            let d = data::load_csv(path, &schema)?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
            Ok((name, d, None))
        }
    }
}

/// Rows of a successful replicate plus the posteriors behind them.
#[derive(Clone, Debug)]
pub struct ReplicateOutput {
    pub rows: Vec<ReportRow>,
    pub posteriors: Vec<AtePosterior>,
}

fn posterior_means(outcome: &dyn OutcomePpd, propensity: &dyn PropensityPpd, at: &CausalDataset) -> Result<FoldNuisances, PpdError> {
    let x = at.covariates();
    Ok(FoldNuisances {
        mu0_at: x.iter_rows().map(|r| outcome.posterior_mean(r, false)).collect::<Result<_, _>>()?,
        mu1_at: x.iter_rows().map(|r| outcome.posterior_mean(r, true)).collect::<Result<_, _>>()?,
        pi_at: x.iter_rows().map(|r| propensity.predictive_prob(r)).collect::<Result<_, _>>()?,
    })
}

fn oracle_draw(oracle: &OracleDgp, at: &CausalDataset, draw_seed: u64) -> NuisanceDraw {
    let x = at.covariates();
    NuisanceDraw { mu0_at: oracle.mu_at(x, false), mu1_at: oracle.mu_at(x, true), pi_at: oracle.pi_at(x), draw_seed, clamp_events: 0 }
}

fn inputs(n: FoldNuisances, at: &CausalDataset, floor: f64) -> Result<EifInputs, EstimatorError> {
    EifInputs::new(n.mu0_at, n.mu1_at, n.pi_at, at.treatments().to_vec(), at.outcomes().to_vec())?.truncated(floor)
}

/// Runs one replicate; `workers` threads are used for the posterior draws.
pub fn run_replicate(cfg: &RunConfig, task: &Task, workers: usize) -> Result<ReplicateOutput, PipelineError> {
    let (name, data, oracle) = load_dataset(cfg, task)?;
    data.require_both_arms()?;
    let floor = cfg.truncation_floor;
    let (train_idx, test_idx) = data::stratified_split(&data, cfg.test_fraction, &mut seed::rng(seed::derive_labeled(task.seed, "split")))?;
    let (train, test) = (data.subset(&train_idx), data.subset(&test_idx));
    test.require_both_arms()?;
    let oracle_mode = cfg.nuisance == NuisanceSource::Oracle;
    if oracle_mode && oracle.is_none() {
        return Err(PipelineError::Config("oracle nuisances need a synthetic dataset".into()));
    }
    let truth = oracle.as_ref().map(|o| o.true_ate);
    let oracle_law = match &oracle {
        Some(o) => Some(estimators::aiptw(&EifInputs::from_oracle(o, &test)?.truncated(floor)?)?.1),
        None => None,
    };
    let fitted = if oracle_mode {
        None
    } else {
        Some((ppd::fit_outcome(&cfg.backend, &train)?, ppd::fit_propensity(&cfg.backend, &train)?))
    };

    let template = ReportRow {
        dataset: name,
        n: data.n(),
        d_x: data.d_x(),
        seed: task.seed,
        replicate: task.replicate,
        status: "ok".into(),
        true_ate: truth,
        config_hash: cfg.hash(),
        ..Default::default()
    };
    let mut rows = Vec::new();

    let aiptw_law = if cfg.wants(Estimator::Aiptw) || oracle_law.is_none() {
        let law = if oracle_mode {
            oracle_law.expect("checked above")
        } else if cfg.folds >= 2 {
            let mut rng = seed::rng(seed::derive_labeled(task.seed, "folds"));
            let folds = estimators::cross_fit(&data, cfg.folds, &mut rng, |tr, te, _| {
                let o = ppd::fit_outcome(&cfg.backend, tr)?;
                let p = ppd::fit_propensity(&cfg.backend, tr)?;
                Ok(posterior_means(o.as_ref(), p.as_ref(), te)?)
            })?;
            estimators::aiptw(&estimators::pool_folds(&data, &folds)?.truncated(floor)?)?.1
        } else {
            let (o, p) = fitted.as_ref().expect("backend mode");
            estimators::aiptw(&inputs(posterior_means(o.as_ref(), p.as_ref(), &test)?, &test, floor)?)?.1
        };
        Some(law)
    } else {
        None
    };
    let (reference, reference_name) = match (oracle_law, aiptw_law) {
        (Some(l), _) => (l, "oracle_aiptw"),
        (None, Some(l)) => (l, "aiptw"),
        (None, None) => unreachable!("A-IPTW is computed whenever no oracle exists"),
    };
    if let (true, Some(law)) = (cfg.wants(Estimator::Aiptw), aiptw_law) {
        rows.push(ReportRow {
            estimator: Estimator::Aiptw.as_str().into(),
            estimate: Some(law.mean),
            variance: Some(law.variance),
            tv: oracle_law.map(|r| diagnostics::tv_between_normals(&law, &r)),
            pit: truth.map(|t| law.cdf(t)),
            reference: oracle_law.map(|_| reference_name.to_string()),
            ..template.clone()
        });
    }

    let mut posteriors = Vec::new();
    if cfg.wants_posterior() {
        let mp_seed = seed::derive_labeled(task.seed, "mp");
        let first_row = rows.len();
        for variant in cfg.variant_list() {
            let copula = CopulaConfig { variant, ..cfg.copula.clone() };
            let (draws, r2) = match (&fitted, &oracle) {
                (Some((o, p)), _) => {
                    let sampler = MpSampler::new(o.as_ref(), p.as_ref(), &train, test.covariates(), &copula)?;
                    let draws = sampler.draw_many(mp_seed, workers)?;
                    let r2 = match &oracle {
                        Some(or) => Some(diagnostics::r2_check(&draws, Some(or), test.covariates())?.r2_hat),
                        None => None,
                    };
                    (draws, r2)
                }
                (None, Some(or)) => {
                    let draws = (0..copula.draws as u64).map(|j| oracle_draw(or, &test, seed::derive_seed(mp_seed, j))).collect();
                    (draws, Some(0.0))
                }
                (None, None) => unreachable!("oracle mode needs an oracle"),
            };
            let clamps = draws.iter().map(|d| d.clamp_events).sum();
            for est in [Estimator::PlugIn, Estimator::Ospc] {
                if !cfg.wants(est) {
                    continue;
                }
                let mut rng = seed::rng(seed::derive_labeled(task.seed, &format!("bb/{}/{}", est.as_str(), variant.as_str())));
                let post = match est {
                    Estimator::PlugIn => estimators::plug_in_posterior(&draws, &test, &mut rng)?,
                    _ => estimators::ospc_posterior(&draws, &test, floor, &mut rng)?,
                }
                .with_provenance(variant, copula.rho);
                let tv = if post.len() >= diagnostics::MIN_TV_DRAWS {
                    Some(diagnostics::tv_to_normal(&post, &reference)?.tv)
                } else {
                    None
                };
                rows.push(ReportRow {
                    estimator: est.as_str().into(),
                    variant: Some(variant.as_str().into()),
                    rho: Some(copula.rho),
                    tv,
                    r2,
                    estimate: Some(post.mean()),
                    variance: post.variance().ok(),
                    pit: truth.map(|t| diagnostics::pit(&post, t)),
                    reference: tv.map(|_| reference_name.to_string()),
                    clamp_events: Some(clamps),
                    ..template.clone()
                });
                posteriors.push(post);
            }
        }
        for row in &mut rows[first_row..] {
            let var_of = |v: CouplingVariant| {
                rows_variance(&posteriors, &row.estimator, v)
            };
            row.var_a = var_of(CouplingVariant::XIndependent);
            row.var_b = var_of(CouplingVariant::XParallel);
            row.var_c = var_of(CouplingVariant::Smooth);
        }
    }
    Ok(ReplicateOutput { rows, posteriors })
}

fn rows_variance(posteriors: &[AtePosterior], estimator: &str, variant: CouplingVariant) -> Option<f64> {
    posteriors
        .iter()
        .find(|p| p.kind.as_str() == estimator && p.variant == Some(variant))
        .and_then(|p| p.variance().ok())
}

/// The row recorded for a replicate that failed.
pub fn failed_row(cfg: &RunConfig, task: &Task, err: &PipelineError) -> ReportRow {
    let (dataset, d_x) = match &cfg.dataset {
        DatasetConfig::Synthetic { d_x, .. } => ("synthetic".to_string(), *d_x),
        DatasetConfig::Csv { path, .. } => (path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(), 0),
    };
    ReportRow {
        dataset,
        n: task.n.unwrap_or(0),
        d_x,
        estimator: cfg.estimators.iter().map(|e| e.as_str()).collect::<Vec<_>>().join("+"),
        seed: task.seed,
        replicate: task.replicate,
        status: "failed".into(),
        error: Some(format!("{}: {err}", err.code())),
        config_hash: cfg.hash(),
        ..Default::default()
    }
}

