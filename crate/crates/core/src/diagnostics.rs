//! Calibration and consistency metrics for ATE posteriors.

use crate::data::{CovariateMatrix, OracleDgp};
use crate::estimators::{sample_variance, AtePosterior, EstimatorError, GaussianLaw};
use crate::mp::{CouplingVariant, NuisanceDraw};
use crate::normal;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const MIN_TV_DRAWS: usize = 30;
pub const MIN_REPLICATES: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("need at least {needed} {what}, got {found}")]
    TooFew { what: &'static str, needed: usize, found: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("{0} requires the oracle of a synthetic design")]
    MissingOracle(&'static str),
    #[error("{what}: expected length {expected}, found {found}")]
    ShapeMismatch { what: &'static str, expected: usize, found: usize },
    #[error("value {0} outside [0,1]")]
    Range(f64),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("report output: {0}")]
    Csv(#[from] csv::Error),
}

/// Total variation distance between two normal laws, in closed form from
/// the density crossing points.
pub fn tv_between_normals(p: &GaussianLaw, q: &GaussianLaw) -> f64 {
    let (m1, s1, m2, s2) = (p.mean, p.sd(), q.mean, q.sd());
    // TV = P(A) − Q(A) on A = {p > q}
    let mass = |lo: f64, hi: f64, m: f64, s: f64| normal::cdf((hi - m) / s) - normal::cdf((lo - m) / s);
    let tv = if (s1 - s2).abs() <= 1e-12 * s1.max(s2) {
        if m1 == m2 {
            return 0.0;
        }
        let c = 0.5 * (m1 + m2);
        let (lo, hi) = if m1 < m2 { (f64::NEG_INFINITY, c) } else { (c, f64::INFINITY) };
        mass(lo, hi, m1, s1) - mass(lo, hi, m2, s2)
    } else {
        // log p − log q = a x² + b x + c
        let (v1, v2) = (s1 * s1, s2 * s2);
        let a = 0.5 / v2 - 0.5 / v1;
        let b = m1 / v1 - m2 / v2;
        let c = m2 * m2 / (2.0 * v2) - m1 * m1 / (2.0 * v1) + (s2 / s1).ln();
        let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
        let (r1, r2) = {
            let q = -0.5 * (b + b.signum() * disc);
            let (x, y) = if q != 0.0 { (q / a, c / q) } else { (-b / (2.0 * a), -b / (2.0 * a)) };
            (x.min(y), x.max(y))
        };
        if a < 0.0 {
            // p narrower: p > q between the roots
            mass(r1, r2, m1, s1) - mass(r1, r2, m2, s2)
        } else {
            // p wider: q > p between the roots
            mass(r1, r2, m2, s2) - mass(r1, r2, m1, s1)
        }
    };
    tv.clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvReport {
    pub tv: f64,
    pub posterior_mean: f64,
    pub posterior_variance: f64,
    pub reference: GaussianLaw,
}

/// TV between the moment-matched normal of the posterior draws and `reference`.
pub fn tv_to_normal(posterior: &AtePosterior, reference: &GaussianLaw) -> Result<TvReport, DiagnosticsError> {
    if posterior.len() < MIN_TV_DRAWS {
        return Err(DiagnosticsError::TooFew { what: "posterior draws", needed: MIN_TV_DRAWS, found: posterior.len() });
    }
    let mean = posterior.mean();
    let var = posterior.variance()?;
    let fitted = GaussianLaw::new(mean, var).map_err(|_| DiagnosticsError::Degenerate("posterior has zero variance".into()))?;
    Ok(TvReport { tv: tv_between_normals(&fitted, reference), posterior_mean: mean, posterior_variance: var, reference: *reference })
}

/// Mid-rank PIT of `truth` under the posterior draws: (#below + ½·#tied + ½)/(B + 1).
pub fn pit(posterior: &AtePosterior, truth: f64) -> f64 {
    let below = posterior.draws.iter().filter(|&&d| d < truth).count() as f64;
    let tied = posterior.draws.iter().filter(|&&d| d == truth).count() as f64;
    (below + 0.5 * tied + 0.5) / (posterior.len() as f64 + 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KsReport {
    pub ks: f64,
    pub pits: Vec<f64>,
}

/// One-sample KS distance of the PITs to Uniform(0,1).
pub fn ks_to_uniform(pits: &[f64]) -> Result<KsReport, DiagnosticsError> {
    if pits.len() < MIN_REPLICATES {
        return Err(DiagnosticsError::TooFew { what: "replicates", needed: MIN_REPLICATES, found: pits.len() });
    }
    if let Some(&u) = pits.iter().find(|u| !(0.0..=1.0).contains(*u)) {
        return Err(DiagnosticsError::Range(u));
    }
    let mut u = pits.to_vec();
    u.sort_by(f64::total_cmp);
    let r = u.len() as f64;
    let ks = u
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / r - v).max(v - i as f64 / r))
        .fold(0.0, f64::max);
    Ok(KsReport { ks, pits: pits.to_vec() })
}

/// Asymptotic KS critical value c(α)/√R for α ∈ {0.10, 0.05, 0.01}.
pub fn ks_critical(replicates: usize, alpha: f64) -> f64 {
    let c = if alpha >= 0.10 {
        1.224
    } else if alpha >= 0.05 {
        1.358
    } else {
        1.628
    };
    c / (replicates as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct R2Report {
    pub r2_hat: f64,
    /// max_j ‖1/π̃_j − 1/π‖
    pub pi_inv_error: f64,
    pub mu0_error: f64,
    pub mu1_error: f64,
}

fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// R̂2 = √n·max_j‖π̃_j⁻¹ − π⁻¹‖·Σ_a max_j‖μ̃_{a,j} − μ_a‖ with RMS norms over
/// the `eval` points.
pub fn r2_check(draws: &[NuisanceDraw], oracle: Option<&OracleDgp>, eval: &CovariateMatrix) -> Result<R2Report, DiagnosticsError> {
    let oracle = oracle.ok_or(DiagnosticsError::MissingOracle("r2_check"))?;
    if draws.is_empty() {
        return Err(DiagnosticsError::TooFew { what: "nuisance draws", needed: 1, found: 0 });
    }
    let m = eval.rows();
    let (mu0, mu1) = (oracle.mu_at(eval, false), oracle.mu_at(eval, true));
    let pi_inv: Vec<f64> = oracle.pi_at(eval).iter().map(|p| 1.0 / p).collect();
    let (mut e_pi, mut e0, mut e1) = (0.0f64, 0.0f64, 0.0f64);
    for d in draws {
        if d.len() != m {
            return Err(DiagnosticsError::ShapeMismatch { what: "nuisance draw", expected: m, found: d.len() });
        }
        let inv: Vec<f64> = d.pi_at.iter().map(|p| 1.0 / p).collect();
        e_pi = e_pi.max(rms(&inv, &pi_inv));
        e0 = e0.max(rms(&d.mu0_at, &mu0));
        e1 = e1.max(rms(&d.mu1_at, &mu1));
    }
    Ok(R2Report { r2_hat: (m as f64).sqrt() * e_pi * (e0 + e1), pi_inv_error: e_pi, mu0_error: e0, mu1_error: e1 })
}

/// Variance of Σ W_i v_i under Dirichlet(1, …, 1) weights: Σ(v_i − v̄)²/(n(n+1)).
pub fn bb_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n * (n + 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantVariance {
    pub variant: CouplingVariant,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceOrderingReport {
    pub variances: Vec<VariantVariance>,
    pub level: f64,
    /// Var(a) ≤ Var(c) ≤ Var(b) for the point estimates.
    pub ordered: bool,
    /// The bootstrap CIs of (a) and (b) are disjoint with (a) below.
    pub separated: bool,
    pub violation: bool,
}

impl VarianceOrderingReport {
    pub fn get(&self, variant: CouplingVariant) -> Option<&VariantVariance> {
        self.variances.iter().find(|v| v.variant == variant)
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let (i, f) = (h.floor() as usize, h - h.floor());
    if i + 1 < sorted.len() {
        sorted[i] + f * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Posterior variance per coupling variant with percentile bootstrap CIs over
/// draw resampling, and the Var(a) ≤ Var(c) ≤ Var(b) ordering check.
pub fn variance_decomposition<R: Rng + ?Sized>(
    posteriors: &[AtePosterior],
    level: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<VarianceOrderingReport, DiagnosticsError> {
    let mut variances = Vec::with_capacity(posteriors.len());
    for post in posteriors {
        let variant = post.variant.ok_or_else(|| DiagnosticsError::Degenerate("posterior without a coupling variant".into()))?;
        let variance = post.variance()?;
        let b = post.len();
        let mut boot: Vec<f64> = (0..resamples.max(2))
            .map(|_| {
                let s: Vec<f64> = (0..b).map(|_| post.draws[rng.random_range(0..b)]).collect();
                sample_variance(&s).unwrap_or(0.0)
            })
            .collect();
        boot.sort_by(f64::total_cmp);
        let tail = 0.5 * (1.0 - level);
        variances.push(VariantVariance { variant, variance, ci_low: percentile(&boot, tail), ci_high: percentile(&boot, 1.0 - tail) });
    }
    let find = |v| variances.iter().find(|x: &&VariantVariance| x.variant == v);
    let (a, b, c) = (find(CouplingVariant::XIndependent), find(CouplingVariant::XParallel), find(CouplingVariant::Smooth));
    let ordered = match (a, b, c) {
        (Some(a), Some(b), Some(c)) => a.variance <= c.variance && c.variance <= b.variance,
        (Some(a), Some(b), None) => a.variance <= b.variance,
        _ => false,
    };
    let separated = matches!((a, b), (Some(a), Some(b)) if a.ci_high < b.ci_low);
    let violation = !ordered || matches!((a, b), (Some(a), Some(b)) if a.ci_low > b.ci_high);
    Ok(VarianceOrderingReport { variances, level, ordered, separated, violation })
}

/// One results row; the first thirteen columns are the stable report schema.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub n: usize,
    pub d_x: usize,
    pub estimator: String,
    pub variant: Option<String>,
    pub rho: Option<f64>,
    pub tv: Option<f64>,
    pub ks: Option<f64>,
    pub r2: Option<f64>,
    pub var_a: Option<f64>,
    pub var_b: Option<f64>,
    pub var_c: Option<f64>,
    pub seed: u64,
    pub replicate: usize,
    pub status: String,
    pub error: Option<String>,
    pub estimate: Option<f64>,
    pub variance: Option<f64>,
    pub pit: Option<f64>,
    pub true_ate: Option<f64>,
    pub reference: Option<String>,
    pub clamp_events: Option<usize>,
    pub config_hash: String,
}

pub fn write_report<W: Write>(out: W, rows: &[ReportRow]) -> Result<(), DiagnosticsError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
