use super::{Basis, BasisConfig, OutcomePpd, PpdError};
use crate::data::CausalDataset;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};
use std::sync::Arc;

/// Normal–inverse-gamma prior: β | σ² ~ N(m0, σ²Λ0⁻¹), σ² ~ IG(shape, rate),
/// with Λ0 = precision·I. An empty `mean` is the zero vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NigPrior {
    pub mean: Vec<f64>,
    pub precision: f64,
    pub shape: f64,
    pub rate: f64,
}

impl Default for NigPrior {
    fn default() -> Self {
        Self { mean: Vec::new(), precision: 1.0, shape: 2.0, rate: 2.0 }
    }
}

impl NigPrior {
    fn validate(&self, p: usize) -> Result<(), PpdError> {
        if !self.mean.is_empty() && self.mean.len() != p {
            return Err(PpdError::Config(format!("prior mean has length {}, basis has {p} features", self.mean.len())));
        }
        for (name, v) in [("precision", self.precision), ("shape", self.shape), ("rate", self.rate)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PpdError::Config(format!("prior {name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    fn mean_vector(&self, p: usize) -> DVector<f64> {
        if self.mean.is_empty() {
            DVector::zeros(p)
        } else {
            DVector::from_column_slice(&self.mean)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConjugateConfig {
    pub basis: BasisConfig,
    pub prior: NigPrior,
    /// Features of the Laplace-approximated logistic propensity model.
    pub propensity_basis: BasisConfig,
    pub propensity_prior_precision: f64,
}

impl Default for ConjugateConfig {
    fn default() -> Self {
        Self {
            basis: BasisConfig::LinearSquares,
            prior: NigPrior::default(),
            propensity_basis: BasisConfig::Linear,
            propensity_prior_precision: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SufficientStats {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub count: usize,
}

impl SufficientStats {
    pub fn zeros(p: usize) -> Self {
        Self { xtx: DMatrix::zeros(p, p), xty: DVector::zeros(p), yty: 0.0, count: 0 }
    }

    pub fn add(&mut self, phi: &DVector<f64>, y: f64) {
        self.xtx.ger(1.0, phi, phi, 1.0);
        self.xty.axpy(y, phi, 1.0);
        self.yty += y * y;
        self.count += 1;
    }
}

/// Location-scale Student-t.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StudentLaw {
    pub loc: f64,
    pub scale: f64,
    pub df: f64,
}

impl StudentLaw {
    fn dist(&self) -> StudentsT {
        StudentsT::new(self.loc, self.scale, self.df).expect("validated t parameters")
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.dist().cdf(y)
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.dist().pdf(y)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.dist().inverse_cdf(p)
    }

    pub fn variance(&self) -> f64 {
        self.scale * self.scale * self.df / (self.df - 2.0)
    }
}

#[derive(Clone, Debug)]
pub struct NigPosterior {
    pub mean: DVector<f64>,
    pub shape: f64,
    pub rate: f64,
    chol: Cholesky<f64, Dyn>,
}

impl NigPosterior {
    pub fn from_stats(prior: &NigPrior, stats: &SufficientStats) -> Result<Self, PpdError> {
        let p = stats.xty.len();
        let m0 = prior.mean_vector(p);
        let mut lambda = stats.xtx.clone();
        for j in 0..p {
            lambda[(j, j)] += prior.precision;
        }
        let chol = lambda.cholesky().ok_or_else(|| PpdError::Numerical("posterior precision not positive definite".into()))?;
        let rhs = &m0 * prior.precision + &stats.xty;
        let mean = chol.solve(&rhs);
        let shape = prior.shape + 0.5 * stats.count as f64;
        let rate = prior.rate + 0.5 * (stats.yty + prior.precision * m0.dot(&m0) - mean.dot(&rhs));
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(PpdError::Numerical(format!("posterior rate {rate} not positive")));
        }
        Ok(Self { mean, shape, rate, chol })
    }

    fn quad(&self, phi: &DVector<f64>) -> f64 {
        phi.dot(&self.chol.solve(phi))
    }

    /// Posterior law of φᵀβ.
    pub fn mean_law(&self, phi: &DVector<f64>) -> StudentLaw {
        StudentLaw { loc: self.mean.dot(phi), scale: (self.rate / self.shape * self.quad(phi)).sqrt(), df: 2.0 * self.shape }
    }

    /// Posterior predictive law of a new outcome with features φ.
    pub fn predictive(&self, phi: &DVector<f64>) -> StudentLaw {
        StudentLaw {
            loc: self.mean.dot(phi),
            scale: (self.rate / self.shape * (1.0 + self.quad(phi))).sqrt(),
            df: 2.0 * self.shape,
        }
    }
}

#[derive(Clone, Debug)]
struct ArmModel {
    stats: SufficientStats,
    posterior: NigPosterior,
}

/// Bayesian linear regression per treatment arm with a conjugate NIG prior.
#[derive(Clone, Debug)]
pub struct ConjugateLinearBackend {
    basis: Arc<Basis>,
    prior: Arc<NigPrior>,
    arms: [Arc<ArmModel>; 2],
}

impl ConjugateLinearBackend {
    pub fn fit(config: &ConjugateConfig, data: &CausalDataset) -> Result<Self, PpdError> {
        let basis = Basis::new(&config.basis, data.d_x());
        let p = basis.dim();
        config.prior.validate(p)?;
        let mut stats = [SufficientStats::zeros(p), SufficientStats::zeros(p)];
        for i in 0..data.n() {
            let phi = basis.expand(data.x(i));
            stats[data.treatments()[i] as usize].add(&phi, data.outcomes()[i]);
        }
        let [s0, s1] = stats;
        let arms = [
            Arc::new(ArmModel { posterior: NigPosterior::from_stats(&config.prior, &s0)?, stats: s0 }),
            Arc::new(ArmModel { posterior: NigPosterior::from_stats(&config.prior, &s1)?, stats: s1 }),
        ];
        Ok(Self { basis: Arc::new(basis), prior: Arc::new(config.prior.clone()), arms })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn stats(&self, arm: bool) -> &SufficientStats {
        &self.arms[arm as usize].stats
    }

    pub fn posterior(&self, arm: bool) -> &NigPosterior {
        &self.arms[arm as usize].posterior
    }

    pub fn predictive_law(&self, x: &[f64], arm: bool) -> StudentLaw {
        self.posterior(arm).predictive(&self.basis.expand(x))
    }

    /// Posterior law of the conditional mean μ_arm(x).
    pub fn mean_law(&self, x: &[f64], arm: bool) -> StudentLaw {
        self.posterior(arm).mean_law(&self.basis.expand(x))
    }

    /// Exact conjugate update with one observation.
    pub fn absorb_exact(&self, x: &[f64], arm: bool, y: f64) -> Result<Self, PpdError> {
        let mut stats = self.stats(arm).clone();
        stats.add(&self.basis.expand(x), y);
        let posterior = NigPosterior::from_stats(&self.prior, &stats)?;
        let mut arms = self.arms.clone();
        arms[arm as usize] = Arc::new(ArmModel { stats, posterior });
        Ok(Self { basis: Arc::clone(&self.basis), prior: Arc::clone(&self.prior), arms })
    }
}

impl OutcomePpd for ConjugateLinearBackend {
    fn predictive_cdf(&self, y: f64, x: &[f64], arm: bool) -> Result<f64, PpdError> {
        Ok(self.predictive_law(x, arm).cdf(y))
    }

    fn predictive_density(&self, y: f64, x: &[f64], arm: bool) -> Result<f64, PpdError> {
        Ok(self.predictive_law(x, arm).pdf(y))
    }

    fn posterior_mean(&self, x: &[f64], arm: bool) -> Result<f64, PpdError> {
        Ok(self.posterior(arm).mean.dot(&self.basis.expand(x)))
    }

    fn predictive_quantile(&self, p: f64, x: &[f64], arm: bool) -> Result<f64, PpdError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(PpdError::Numerical(format!("quantile level {p} outside (0,1)")));
        }
        Ok(self.predictive_law(x, arm).quantile(p))
    }

    fn absorb(&self, x: &[f64], arm: bool, y: f64) -> Result<Box<dyn OutcomePpd>, PpdError> {
        Ok(Box::new(self.absorb_exact(x, arm, y)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CovariateMatrix;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// y = 1 + 2x₁ − x₂ + N(0, 0.5²) in both arms (arm 1 shifted by +3).
    fn linear_data(n: usize, s: u64) -> CausalDataset {
        let mut rng = seed::rng(s);
        let mut xs = Vec::new();
        let mut a = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let x1: f64 = rng.sample(StandardNormal);
            let x2: f64 = rng.sample(StandardNormal);
            let arm = i % 2 == 0;
            let e: f64 = rng.sample(StandardNormal);
            xs.extend([x1, x2]);
            a.push(arm);
            y.push(1.0 + 2.0 * x1 - x2 + if arm { 3.0 } else { 0.0 } + 0.5 * e);
        }
        CausalDataset::new(CovariateMatrix::new(n, 2, xs).unwrap(), a, y).unwrap()
    }

    fn linear_cfg() -> ConjugateConfig {
        ConjugateConfig { basis: BasisConfig::Linear, ..ConjugateConfig::default() }
    }

    #[test]
    fn recovers_ols_coefficients() {
        let data = linear_data(20_000, 1);
        let b = ConjugateLinearBackend::fit(&linear_cfg(), &data).unwrap();
        // oracle: OLS via normal equations on the treated arm
        let idx = data.arm_indices(true);
        let phi = DMatrix::from_fn(idx.len(), 3, |r, c| if c == 0 { 1.0 } else { data.x(idx[r])[c - 1] });
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| data.outcomes()[i]));
        let ols = (phi.transpose() * &phi).cholesky().unwrap().solve(&(phi.transpose() * y));
        for j in 0..3 {
            assert!((b.posterior(true).mean[j] - ols[j]).abs() < 1e-2);
        }
        let m = b.posterior_mean(&[0.5, -1.0], true).unwrap();
        assert!((m - (1.0 + 1.0 + 1.0 + 3.0)).abs() < 2e-2, "{m}");
    }

    #[test]
    fn cdf_matches_student_t_law() {
        let data = linear_data(40, 2);
        let b = ConjugateLinearBackend::fit(&ConjugateConfig::default(), &data).unwrap();
        let x = [0.3, -0.7];
        let law = b.predictive_law(&x, false);
        // independent route: Simpson integration of the t density
        let dens = |t: f64| {
            let z = (t - law.loc) / law.scale;
            let nu = law.df;
            let c = statrs::function::gamma::ln_gamma((nu + 1.0) / 2.0)
                - statrs::function::gamma::ln_gamma(nu / 2.0)
                - 0.5 * (nu * std::f64::consts::PI).ln();
            (c - (nu + 1.0) / 2.0 * (1.0 + z * z / nu).ln()).exp() / law.scale
        };
        for &y in &[law.loc - 2.0 * law.scale, law.loc + 0.4 * law.scale, law.loc + 3.0 * law.scale] {
            let n = 200_000;
            let h = (y - law.loc) / n as f64;
            let mut s = dens(law.loc) + dens(y);
            for k in 1..n {
                s += dens(law.loc + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            let exact = 0.5 + s * h / 3.0;
            assert!((b.predictive_cdf(y, &x, false).unwrap() - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn posterior_mean_is_predictive_integral() {
        let data = linear_data(60, 3);
        let b = ConjugateLinearBackend::fit(&ConjugateConfig::default(), &data).unwrap();
        let mut rng = seed::rng(5);
        for _ in 0..20 {
            let x = [rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)];
            let arm = rng.random::<bool>();
            let law = b.predictive_law(&x, arm);
            // E[Y] = ∫ y f(y) dy on ±400 scales (t_ν tails are polynomial)
            let (lo, hi, n) = (law.loc - 400.0 * law.scale, law.loc + 400.0 * law.scale, 400_000);
            let h = (hi - lo) / n as f64;
            let mut s = 0.0;
            for k in 0..=n {
                let y = lo + k as f64 * h;
                let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                s += w * y * law.pdf(y);
            }
            let m = b.posterior_mean(&x, arm).unwrap();
            assert!((s * h / 3.0 - m).abs() < 1e-6, "{} vs {m}", s * h / 3.0);
        }
    }

    #[test]
    fn cdf_monotone() {
        let data = linear_data(30, 4);
        let b = ConjugateLinearBackend::fit(&ConjugateConfig::default(), &data).unwrap();
        let mut rng = seed::rng(8);
        for _ in 0..1000 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let arm = rng.random::<bool>();
            let mut prev = 0.0;
            for k in 0..50 {
                let c = b.predictive_cdf(-30.0 + 1.2 * k as f64, &x, arm).unwrap();
                assert!(c >= prev && (0.0..=1.0).contains(&c));
                prev = c;
            }
        }
    }

    #[test]
    fn absorb_equals_refit() {
        let data = linear_data(25, 6);
        let b = ConjugateLinearBackend::fit(&ConjugateConfig::default(), &data).unwrap();
        let (xn, yn) = ([0.4, 1.1], 2.5);
        let absorbed = b.absorb_exact(&xn, true, yn).unwrap();
        let mut rows: Vec<Vec<f64>> = (0..data.n()).map(|i| data.x(i).to_vec()).collect();
        rows.push(xn.to_vec());
        let mut a = data.treatments().to_vec();
        a.push(true);
        let mut y = data.outcomes().to_vec();
        y.push(yn);
        let aug = CausalDataset::new(CovariateMatrix::from_rows(&rows).unwrap(), a, y).unwrap();
        let refit = ConjugateLinearBackend::fit(&ConjugateConfig::default(), &aug).unwrap();
        for arm in [false, true] {
            let (s, r) = (absorbed.stats(arm), refit.stats(arm));
            assert_eq!(s.count, r.count);
            assert!((&s.xtx - &r.xtx).abs().max() < 1e-12);
            assert!((&s.xty - &r.xty).abs().max() < 1e-12);
            assert!((s.yty - r.yty).abs() < 1e-12);
        }
        assert_eq!(absorbed.stats(false), b.stats(false));
    }

    #[test]
    fn rejects_bad_prior() {
        let data = linear_data(10, 7);
        let cfg = ConjugateConfig { prior: NigPrior { shape: 0.0, ..NigPrior::default() }, ..ConjugateConfig::default() };
        assert!(matches!(ConjugateLinearBackend::fit(&cfg, &data), Err(PpdError::Config(_))));
        let cfg = ConjugateConfig { prior: NigPrior { mean: vec![1.0], ..NigPrior::default() }, ..ConjugateConfig::default() };
        assert!(ConjugateLinearBackend::fit(&cfg, &data).is_err());
    }
}
