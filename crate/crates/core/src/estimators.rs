//! Frequentist and Bayesian ATE estimators built on the efficient influence
//! function: plug-in, A-IPTW, the Bayesian-bootstrap plug-in posterior and the
//! one-step posterior correction (OSPC).

use crate::data::{stratified_assignment, CausalDataset, DataError, OracleDgp};
use crate::mp::{CouplingVariant, MpError, NuisanceDraw};
use crate::normal;
use crate::ppd::PpdError;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

/// Propensity truncation floor.
pub const DEFAULT_FLOOR: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum EstimatorError {
    #[error("{what}: expected length {expected}, found {found}")]
    ShapeMismatch { what: &'static str, expected: usize, found: usize },
    #[error("propensity {value} at unit {unit} is not in (0,1)")]
    Propensity { unit: usize, value: f64 },
    #[error("truncation floor {0} not in (0, 0.5)")]
    Floor(f64),
    #[error("degenerate estimator: {0}")]
    Degenerate(String),
    #[error("no units")]
    Empty,
    #[error("need at least {needed} posterior draws, got {found}")]
    TooFewDraws { needed: usize, found: usize },
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: Box<EstimatorError> },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Mp(#[from] MpError),
    #[error(transparent)]
    Ppd(#[from] PpdError),
}

pub fn truncate_propensity(pi: &[f64], floor: f64) -> Result<Vec<f64>, EstimatorError> {
    if !(floor > 0.0 && floor < 0.5) {
        return Err(EstimatorError::Floor(floor));
    }
    Ok(pi.iter().map(|p| p.clamp(floor, 1.0 - floor)).collect())
}

/// Nuisance values and observed data at the evaluation units.
#[derive(Clone, Debug, PartialEq)]
pub struct EifInputs {
    pub mu0_at: Vec<f64>,
    pub mu1_at: Vec<f64>,
    pub pi_at: Vec<f64>,
    pub treatments: Vec<bool>,
    pub outcomes: Vec<f64>,
}

impl EifInputs {
    pub fn new(
        mu0_at: Vec<f64>,
        mu1_at: Vec<f64>,
        pi_at: Vec<f64>,
        treatments: Vec<bool>,
        outcomes: Vec<f64>,
    ) -> Result<Self, EstimatorError> {
        let n = outcomes.len();
        if n == 0 {
            return Err(EstimatorError::Empty);
        }
        for (what, len) in
            [("mu0_at", mu0_at.len()), ("mu1_at", mu1_at.len()), ("pi_at", pi_at.len()), ("treatments", treatments.len())]
        {
            if len != n {
                return Err(EstimatorError::ShapeMismatch { what, expected: n, found: len });
            }
        }
        if let Some((unit, &value)) = pi_at.iter().enumerate().find(|(_, p)| !(**p > 0.0 && **p < 1.0)) {
            return Err(EstimatorError::Propensity { unit, value });
        }
        Ok(Self { mu0_at, mu1_at, pi_at, treatments, outcomes })
    }

    /// Inputs for `data` taking nuisances from `draw`.
    pub fn from_draw(draw: &NuisanceDraw, data: &CausalDataset) -> Result<Self, EstimatorError> {
        Self::new(
            draw.mu0_at.clone(),
            draw.mu1_at.clone(),
            draw.pi_at.clone(),
            data.treatments().to_vec(),
            data.outcomes().to_vec(),
        )
    }

    /// Inputs with the true nuisances of the synthetic design.
    pub fn from_oracle(oracle: &OracleDgp, data: &CausalDataset) -> Result<Self, EstimatorError> {
        let x = data.covariates();
        Self::new(
            oracle.mu_at(x, false),
            oracle.mu_at(x, true),
            oracle.pi_at(x),
            data.treatments().to_vec(),
            data.outcomes().to_vec(),
        )
    }

    pub fn truncated(mut self, floor: f64) -> Result<Self, EstimatorError> {
        self.pi_at = truncate_propensity(&self.pi_at, floor)?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    #[inline]
    fn xi(&self, i: usize) -> f64 {
        let (a, p) = (self.treatments[i], self.pi_at[i]);
        let mu_a = if a { self.mu1_at[i] } else { self.mu0_at[i] };
        let w = ((a as u8 as f64) - p) / (p * (1.0 - p));
        w * (self.outcomes[i] - mu_a) + self.mu1_at[i] - self.mu0_at[i]
    }
}

/// φ_ψ(z_i; η) = (a−π)/(π(1−π))·(y−μ_a) + μ1 − μ0 − ψ.
pub fn eif(inputs: &EifInputs, psi: f64) -> Vec<f64> {
    (0..inputs.n()).map(|i| inputs.xi(i) - psi).collect()
}

/// ξ(z_i; η), the influence function without the −ψ centring.
pub fn uncentered_eif(inputs: &EifInputs) -> Vec<f64> {
    (0..inputs.n()).map(|i| inputs.xi(i)).collect()
}

pub fn plug_in_estimate(mu0_at: &[f64], mu1_at: &[f64]) -> Result<f64, EstimatorError> {
    if mu0_at.is_empty() {
        return Err(EstimatorError::Empty);
    }
    if mu0_at.len() != mu1_at.len() {
        return Err(EstimatorError::ShapeMismatch { what: "mu1_at", expected: mu0_at.len(), found: mu1_at.len() });
    }
    Ok(mu1_at.iter().zip(mu0_at).map(|(a, b)| a - b).sum::<f64>() / mu0_at.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianLaw {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianLaw {
    pub fn new(mean: f64, variance: f64) -> Result<Self, EstimatorError> {
        if !(variance > 0.0 && variance.is_finite() && mean.is_finite()) {
            return Err(EstimatorError::Degenerate(format!("normal law with mean {mean}, variance {variance}")));
        }
        Ok(Self { mean, variance })
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        normal::cdf((x - self.mean) / self.sd())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        normal::pdf((x - self.mean) / self.sd()) / self.sd()
    }
}

/// One-step estimator with its asymptotic normal law N(ψ̂, Var[φ̂]/n).
pub fn aiptw(inputs: &EifInputs) -> Result<(f64, GaussianLaw), EstimatorError> {
    let n = inputs.n() as f64;
    let plug_in = plug_in_estimate(&inputs.mu0_at, &inputs.mu1_at)?;
    let phi = eif(inputs, plug_in);
    let estimate = plug_in + phi.iter().sum::<f64>() / n;
    let var = phi.iter().map(|p| (p + plug_in - estimate).powi(2)).sum::<f64>() / n;
    Ok((estimate, GaussianLaw::new(estimate, var / n)?))
}

/// Dirichlet(1, …, 1) weights as normalized standard exponentials.
pub fn bb_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    assert!(n >= 1, "bb_weights needs n >= 1");
    let mut w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    PlugIn,
    Ospc,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PlugIn => "plug_in",
            Self::Ospc => "ospc",
        }
    }
}

/// Posterior draws of the ATE with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct AtePosterior {
    pub draws: Vec<f64>,
    pub kind: EstimatorKind,
    pub variant: Option<CouplingVariant>,
    pub rho: Option<f64>,
    pub seeds: Vec<u64>,
}

impl AtePosterior {
    pub fn with_provenance(mut self, variant: CouplingVariant, rho: f64) -> Self {
        self.variant = Some(variant);
        self.rho = Some(rho);
        self
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.draws.iter().sum::<f64>() / self.draws.len() as f64
    }

    /// Sample variance; needs at least two draws.
    pub fn variance(&self) -> Result<f64, EstimatorError> {
        sample_variance(&self.draws)
    }
}

pub(crate) fn sample_variance(x: &[f64]) -> Result<f64, EstimatorError> {
    if x.len() < 2 {
        return Err(EstimatorError::TooFewDraws { needed: 2, found: x.len() });
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    Ok(x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64)
}

fn check_draws(draws: &[NuisanceDraw], n: usize) -> Result<(), EstimatorError> {
    if draws.is_empty() {
        return Err(EstimatorError::TooFewDraws { needed: 1, found: 0 });
    }
    for d in draws {
        for (what, len) in [("mu0_at", d.mu0_at.len()), ("mu1_at", d.mu1_at.len()), ("pi_at", d.pi_at.len())] {
            if len != n {
                return Err(EstimatorError::ShapeMismatch { what, expected: n, found: len });
            }
        }
    }
    Ok(())
}

/// ψ_j = Σ_i W_ij (μ̃1_j(x_i) − μ̃0_j(x_i)) with fresh Dirichlet weights per draw.
pub fn plug_in_posterior<R: Rng + ?Sized>(
    draws: &[NuisanceDraw],
    test: &CausalDataset,
    rng: &mut R,
) -> Result<AtePosterior, EstimatorError> {
    check_draws(draws, test.n())?;
    let values = draws
        .iter()
        .map(|d| {
            let w = bb_weights(test.n(), rng);
            w.iter().zip(d.mu1_at.iter().zip(&d.mu0_at)).map(|(w, (m1, m0))| w * (m1 - m0)).sum()
        })
        .collect();
    Ok(posterior(values, EstimatorKind::PlugIn, draws))
}

/// ψ_j = Σ_i W_ij ξ(z_i; η̃_j), propensities truncated at `floor`.
pub fn ospc_posterior<R: Rng + ?Sized>(
    draws: &[NuisanceDraw],
    test: &CausalDataset,
    floor: f64,
    rng: &mut R,
) -> Result<AtePosterior, EstimatorError> {
    check_draws(draws, test.n())?;
    let mut values = Vec::with_capacity(draws.len());
    for d in draws {
        let xi = uncentered_eif(&EifInputs::from_draw(d, test)?.truncated(floor)?);
        let w = bb_weights(test.n(), rng);
        values.push(w.iter().zip(&xi).map(|(w, x)| w * x).sum());
    }
    Ok(posterior(values, EstimatorKind::Ospc, draws))
}

fn posterior(draws: Vec<f64>, kind: EstimatorKind, from: &[NuisanceDraw]) -> AtePosterior {
    AtePosterior { draws, kind, variant: None, rho: None, seeds: from.iter().map(|d| d.draw_seed).collect() }
}

/// Nuisance values a cross-fitting pipeline returns for its held-out fold.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldNuisances {
    pub mu0_at: Vec<f64>,
    pub mu1_at: Vec<f64>,
    pub pi_at: Vec<f64>,
}

/// Output of one fold together with the dataset rows it was evaluated on.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult<T> {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub output: T,
}

/// Runs `pipeline(train, test, fold)` over `k` treatment-stratified folds.
/// Every training complement must contain both arms.
pub fn cross_fit<T, R, F>(
    dataset: &CausalDataset,
    k: usize,
    rng: &mut R,
    mut pipeline: F,
) -> Result<Vec<FoldResult<T>>, EstimatorError>
where
    R: Rng + ?Sized,
    F: FnMut(&CausalDataset, &CausalDataset, usize) -> Result<T, EstimatorError>,
{
    if k < 2 || k > dataset.n() {
        return Err(EstimatorError::Data(DataError::InvalidSpec(format!("{k} folds for {} units", dataset.n()))));
    }
    let group = stratified_assignment(dataset.treatments(), k, rng);
    let mut out = Vec::with_capacity(k);
    for fold in 0..k {
        let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..dataset.n()).partition(|&i| group[i] == fold);
        if test_idx.is_empty() {
            continue;
        }
        let train = dataset.subset(&train_idx);
        train.require_both_arms().map_err(|e| EstimatorError::Fold { fold, source: Box::new(e.into()) })?;
        let test = dataset.subset(&test_idx);
        let output = pipeline(&train, &test, fold).map_err(|e| EstimatorError::Fold { fold, source: Box::new(e) })?;
        out.push(FoldResult { fold, test_indices: test_idx, output });
    }
    Ok(out)
}

/// Scatters per-fold nuisances back to dataset order, giving inputs for a
/// pooled `aiptw` over all units.
pub fn pool_folds(dataset: &CausalDataset, folds: &[FoldResult<FoldNuisances>]) -> Result<EifInputs, EstimatorError> {
    let n = dataset.n();
    let (mut mu0, mut mu1, mut pi) = (vec![f64::NAN; n], vec![f64::NAN; n], vec![f64::NAN; n]);
    for f in folds {
        let m = f.test_indices.len();
        for (what, len) in [("mu0_at", f.output.mu0_at.len()), ("mu1_at", f.output.mu1_at.len()), ("pi_at", f.output.pi_at.len())] {
            if len != m {
                return Err(EstimatorError::ShapeMismatch { what, expected: m, found: len });
            }
        }
        for (j, &i) in f.test_indices.iter().enumerate() {
            mu0[i] = f.output.mu0_at[j];
            mu1[i] = f.output.mu1_at[j];
            pi[i] = f.output.pi_at[j];
        }
    }
    if let Some(i) = mu0.iter().position(|v| v.is_nan()) {
        return Err(EstimatorError::Degenerate(format!("unit {i} is not covered by any fold")));
    }
    EifInputs::new(mu0, mu1, pi, dataset.treatments().to_vec(), dataset.outcomes().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CovariateMatrix;
    use crate::seed;

    fn inputs(mu0: Vec<f64>, mu1: Vec<f64>, pi: Vec<f64>, a: Vec<bool>, y: Vec<f64>) -> EifInputs {
        EifInputs::new(mu0, mu1, pi, a, y).unwrap()
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(truncate_propensity(&[0.01, 0.5, 0.99], DEFAULT_FLOOR).unwrap(), vec![0.05, 0.5, 0.95]);
        let once = truncate_propensity(&[0.001, 0.3, 0.97], 0.1).unwrap();
        assert_eq!(truncate_propensity(&once, 0.1).unwrap(), once);
        assert!(truncate_propensity(&[0.5], 0.5).is_err());
        assert!(truncate_propensity(&[0.5], 0.0).is_err());
    }

    #[test]
    fn eif_examples() {
        let one = inputs(vec![0.0], vec![0.0], vec![0.5], vec![true], vec![3.7]);
        assert_eq!(eif(&one, 0.0), vec![2.0 * 3.7]);
        // outcome model interpolates the data: residual terms vanish
        let y = vec![1.0, 4.0, -2.0];
        let a = vec![true, false, true];
        let mu0 = vec![0.5, 4.0, 1.0];
        let mu1 = vec![1.0, 2.0, -2.0];
        let inp = inputs(mu0.clone(), mu1.clone(), vec![0.3, 0.6, 0.5], a, y);
        let psi = plug_in_estimate(&mu0, &mu1).unwrap();
        let phi = eif(&inp, psi);
        for i in 0..3 {
            assert!((phi[i] - (mu1[i] - mu0[i] - psi)).abs() < 1e-15);
        }
    }

    #[test]
    fn toy_aiptw_is_one() {
        let inp = inputs(vec![0.0; 2], vec![0.0; 2], vec![0.5; 2], vec![true, false], vec![2.0, 1.0]);
        let (est, law) = aiptw(&inp).unwrap();
        assert!((est - 1.0).abs() < 1e-15);
        // φ̂ = (3, −3) around the estimate
        assert!((law.variance - 9.0 / 2.0).abs() < 1e-12);
        let flat = inputs(vec![0.0; 2], vec![0.0; 2], vec![0.5; 2], vec![true, false], vec![0.0, 0.0]);
        assert!(matches!(aiptw(&flat), Err(EstimatorError::Degenerate(_))));
    }

    #[test]
    fn plug_in_examples() {
        assert_eq!(plug_in_estimate(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((plug_in_estimate(&[1.0, -2.0], &[3.5, 0.5]).unwrap() - 2.5).abs() < 1e-15);
        assert!(plug_in_estimate(&[], &[]).is_err());
        assert!(plug_in_estimate(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn input_validation() {
        assert!(matches!(
            EifInputs::new(vec![0.0], vec![0.0], vec![1.0], vec![true], vec![0.0]),
            Err(EstimatorError::Propensity { unit: 0, .. })
        ));
        assert!(matches!(
            EifInputs::new(vec![0.0; 2], vec![0.0], vec![0.5], vec![true], vec![0.0]),
            Err(EstimatorError::ShapeMismatch { what: "mu0_at", .. })
        ));
    }

    #[test]
    fn bb_weight_moments() {
        let mut rng = seed::rng(5);
        let n = 8;
        let reps = 10_000;
        let mut first = Vec::with_capacity(reps);
        for _ in 0..reps {
            let w = bb_weights(n, &mut rng);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|v| *v >= 0.0));
            first.push(w[0]);
        }
        let m = first.iter().sum::<f64>() / reps as f64;
        let v = sample_variance(&first).unwrap();
        let nf = n as f64;
        let want_v = (nf - 1.0) / (nf * nf * (nf + 1.0));
        assert!((m - 1.0 / nf).abs() < 3.0 * (v / reps as f64).sqrt());
        // the variance of a sample variance of Beta(1, n−1) draws, via its fourth moment
        let m4 = first.iter().map(|x| (x - m).powi(4)).sum::<f64>() / reps as f64;
        let se_v = ((m4 - v * v) / reps as f64).sqrt();
        assert!((v - want_v).abs() < 3.0 * se_v, "{v} vs {want_v}");
    }

    fn draw(mu0: Vec<f64>, mu1: Vec<f64>, pi: Vec<f64>, s: u64) -> NuisanceDraw {
        NuisanceDraw { mu0_at: mu0, mu1_at: mu1, pi_at: pi, draw_seed: s, clamp_events: 0 }
    }

    fn small_data() -> CausalDataset {
        let x = CovariateMatrix::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        CausalDataset::new(x, vec![true, false, true, false], vec![1.0, 0.5, 2.0, -1.0]).unwrap()
    }

    #[test]
    fn constant_shift_changes_ospc_by_residual_term() {
        let data = small_data();
        let mu0 = vec![0.1, 0.2, -0.3, 0.4];
        let mu1 = vec![1.0, 0.0, 0.5, 0.7];
        let pi = vec![0.3, 0.6, 0.5, 0.2];
        let c = 0.75;
        let base = vec![draw(mu0.clone(), mu1.clone(), pi.clone(), 1), draw(mu0.clone(), mu1.clone(), pi.clone(), 2)];
        let shifted: Vec<NuisanceDraw> = base
            .iter()
            .map(|d| draw(d.mu0_at.iter().map(|v| v + c).collect(), d.mu1_at.iter().map(|v| v + c).collect(), d.pi_at.clone(), d.draw_seed))
            .collect();
        let p0 = ospc_posterior(&base, &data, DEFAULT_FLOOR, &mut seed::rng(4)).unwrap();
        let p1 = ospc_posterior(&shifted, &data, DEFAULT_FLOOR, &mut seed::rng(4)).unwrap();
        let mut rng = seed::rng(4);
        for j in 0..2 {
            let w = bb_weights(4, &mut rng);
            let delta: f64 = (0..4)
                .map(|i| {
                    let a = data.treatments()[i] as u8 as f64;
                    -w[i] * (a - pi[i]) / (pi[i] * (1.0 - pi[i])) * c
                })
                .sum();
            assert!((p1.draws[j] - p0.draws[j] - delta).abs() < 1e-12);
        }
        assert_eq!(p0.seeds, vec![1, 2]);
        assert_eq!(p0.kind, EstimatorKind::Ospc);
    }

    #[test]
    fn posterior_shapes_and_determinism() {
        let data = small_data();
        let d = draw(vec![0.0; 4], vec![1.0; 4], vec![0.5; 4], 9);
        let one = plug_in_posterior(std::slice::from_ref(&d), &data, &mut seed::rng(1)).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one.draws[0] - 1.0).abs() < 1e-12);
        assert!(one.variance().is_err());
        let two = ospc_posterior(&[d.clone(), d.clone()], &data, DEFAULT_FLOOR, &mut seed::rng(1)).unwrap();
        assert!(two.variance().is_ok());
        assert_eq!(two, ospc_posterior(&[d.clone(), d.clone()], &data, DEFAULT_FLOOR, &mut seed::rng(1)).unwrap());
        let short = draw(vec![0.0; 3], vec![1.0; 3], vec![0.5; 3], 9);
        assert!(plug_in_posterior(&[short], &data, &mut seed::rng(1)).is_err());
        assert!(plug_in_posterior(&[], &data, &mut seed::rng(1)).is_err());
    }

    #[test]
    fn degenerate_plug_in_matches_dirichlet_variance() {
        let n = 6;
        let x = CovariateMatrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let data = CausalDataset::new(x, (0..n).map(|i| i % 2 == 0).collect(), vec![0.0; n]).unwrap();
        let tau: Vec<f64> = (0..n).map(|i| (i as f64).sqrt()).collect();
        let d = draw(vec![0.0; n], tau.clone(), vec![0.5; n], 0);
        let draws = vec![d; 20_000];
        let post = plug_in_posterior(&draws, &data, &mut seed::rng(2)).unwrap();
        let nf = n as f64;
        let m = tau.iter().sum::<f64>() / nf;
        let want = tau.iter().map(|t| (t - m).powi(2)).sum::<f64>() / nf / (nf + 1.0);
        let v = post.variance().unwrap();
        assert!((v / want - 1.0).abs() < 0.05, "{v} vs {want}");
    }

    #[test]
    fn cross_fit_pools_in_dataset_order() {
        let n = 10;
        let x = CovariateMatrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let data = CausalDataset::new(x, (0..n).map(|i| i % 2 == 0).collect(), (0..n).map(|i| i as f64).collect()).unwrap();
        let pipe = |_: &CausalDataset, test: &CausalDataset, _| {
            let m = test.n();
            Ok(FoldNuisances { mu0_at: test.covariates().column(0), mu1_at: vec![1.0; m], pi_at: vec![0.5; m] })
        };
        let loo = cross_fit(&data, n, &mut seed::rng(3), pipe).unwrap();
        assert_eq!(loo.len(), n);
        let pooled = pool_folds(&data, &loo).unwrap();
        assert_eq!(pooled.mu0_at, (0..n).map(|i| i as f64).collect::<Vec<_>>());
        let mut rev = loo.clone();
        rev.reverse();
        assert_eq!(pool_folds(&data, &rev).unwrap(), pooled);
        assert!(cross_fit(&data, 1, &mut seed::rng(3), pipe).is_err());
        let lonely = CausalDataset::new(
            CovariateMatrix::new(4, 1, vec![0.0; 4]).unwrap(),
            vec![true, false, false, false],
            vec![0.0; 4],
        )
        .unwrap();
        assert!(matches!(cross_fit(&lonely, 2, &mut seed::rng(3), pipe), Err(EstimatorError::Fold { .. })));
    }
}
