use super::copula::{alpha_schedule, localized_weight, GaussianCopula};
use super::coupling::{CouplingVariant, RSource};
use super::state::{propensity_update, PredictiveState, PropensityState, P_CLAMP};
use super::MpError;
use crate::data::{CausalDataset, CovariateMatrix};
use crate::ppd::{OutcomePpd, PropensityPpd};
use crate::seed;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CopulaConfig {
    pub rho: f64,
    pub variant: CouplingVariant,
    pub steps: usize,
    pub draws: usize,
    pub grid_size: usize,
    /// RBF length scale of the smooth variant; defaults to √d.
    pub smooth_lengthscale: Option<f64>,
    pub smooth_features: usize,
    /// Localized weights below this fraction of α_N are treated as zero.
    pub weight_floor: f64,
}

impl Default for CopulaConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            variant: CouplingVariant::Smooth,
            steps: 100,
            draws: 100,
            grid_size: 201,
            smooth_lengthscale: None,
            smooth_features: 64,
            weight_floor: 0.05,
        }
    }
}

impl CopulaConfig {
    pub fn validate(&self) -> Result<(), MpError> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(MpError::Config(format!("rho = {} not in (0,1)", self.rho)));
        }
        if self.draws == 0 {
            return Err(MpError::Config("draws must be positive".into()));
        }
        if self.grid_size < 3 {
            return Err(MpError::Config(format!("grid size {} < 3", self.grid_size)));
        }
        if self.smooth_features == 0 {
            return Err(MpError::Config("smooth_features must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.weight_floor) {
            return Err(MpError::Config(format!("weight_floor = {} not in [0, 1)", self.weight_floor)));
        }
        if let Some(l) = self.smooth_lengthscale {
            if !(l > 0.0 && l.is_finite()) {
                return Err(MpError::Config(format!("smooth length scale {l} must be positive")));
            }
        }
        Ok(())
    }
}

/// One joint posterior draw of the nuisances at the evaluation points.
#[derive(Clone, Debug, PartialEq)]
pub struct NuisanceDraw {
    pub mu0_at: Vec<f64>,
    pub mu1_at: Vec<f64>,
    pub pi_at: Vec<f64>,
    pub draw_seed: u64,
    /// Propensity clamp activations during this draw.
    pub clamp_events: usize,
}

impl NuisanceDraw {
    pub fn len(&self) -> usize {
        self.pi_at.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi_at.is_empty()
    }

    pub fn mu_at(&self, arm: bool) -> &[f64] {
        if arm {
            &self.mu1_at
        } else {
            &self.mu0_at
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct PropensityStep {
    unit: usize,
    label: bool,
    v1: f64,
    alpha: f64,
}

/// The propensity MP. Pseudo-labels at a training point are drawn from the
/// chain's own current predictive there, obtained by replaying the history.
#[derive(Clone, Debug)]
pub struct PropensityChain<'a> {
    train: &'a CovariateMatrix,
    eval: &'a CovariateMatrix,
    p0_train: &'a [f64],
    states: Vec<PropensityState>,
    history: Vec<PropensityStep>,
    cop: GaussianCopula,
    rho: f64,
    clamp_events: usize,
}

impl<'a> PropensityChain<'a> {
    pub fn new(train: &'a CovariateMatrix, p0_train: &'a [f64], eval: &'a CovariateMatrix, p0_eval: &[f64], rho: f64) -> Result<Self, MpError> {
        if p0_train.len() != train.rows() || p0_eval.len() != eval.rows() {
            return Err(MpError::Config("propensity initial values misaligned with points".into()));
        }
        let states = p0_eval.iter().enumerate().map(|(point, &p)| PropensityState { p, point }).collect();
        Ok(Self { train, eval, p0_train, states, history: Vec::new(), cop: GaussianCopula::new(rho)?, rho, clamp_events: 0 })
    }

    pub fn states(&self) -> &[PropensityState] {
        &self.states
    }

    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    /// Current predictive P(A = 1) at training unit `i`.
    pub fn prob_at_train(&self, i: usize) -> f64 {
        let x = self.train.row(i);
        let mut p = self.p0_train[i];
        for h in &self.history {
            let w = localized_weight(h.alpha, self.cop.log_product(x, self.train.row(h.unit)));
            p = propensity_update(p, w, h.label, h.v1, self.rho).0;
        }
        p
    }

    /// Advances the chain with pseudo-point `unit`; `weights` are the
    /// localized α weights at the evaluation points for this step, or `None`
    /// to compute them.
    pub fn step<R: Rng + ?Sized>(&mut self, unit: usize, step: usize, weights: Option<&[f64]>, rng: &mut R) {
        let alpha = alpha_schedule(step);
        let v1 = self.prob_at_train(unit);
        let label = rng.random::<f64>() < v1;
        let v = self.train.row(unit);
        for (m, s) in self.states.iter_mut().enumerate() {
            let w = match weights {
                Some(w) => w[m],
                None => localized_weight(alpha, self.cop.log_product(self.eval.row(m), v)),
            };
            let (p, clamped) = propensity_update(s.p, w, label, v1, self.rho);
            s.p = p;
            self.clamp_events += clamped as usize;
        }
        self.history.push(PropensityStep { unit, label, v1, alpha });
    }
}

/// One outcome MP step: draws a pseudo-point from the empirical law of
/// `train` and updates the states of the matching arm. Returns the unit index.
pub fn mp_step_outcome<R: Rng + ?Sized>(
    states: &mut [PredictiveState],
    eval: &CovariateMatrix,
    train: &CausalDataset,
    step: usize,
    rho: f64,
    rng: &mut R,
    source: &mut RSource,
) -> Result<usize, MpError> {
    if train.n() == 0 {
        return Err(MpError::Data(crate::data::DataError::TooFewUnits { needed: 1, found: 0 }));
    }
    let cop = GaussianCopula::new(rho)?;
    let unit = rng.random_range(0..train.n());
    let mut scores = vec![0.0; eval.rows()];
    source.draw_scores(rng, &mut scores);
    let (v, arm, alpha) = (train.x(unit), train.treatments()[unit], alpha_schedule(step));
    for s in states.iter_mut().filter(|s| s.arm() == arm) {
        let w = localized_weight(alpha, cop.log_product(eval.row(s.point()), v));
        s.update_scored(w, scores[s.point()], &cop, step)?;
    }
    Ok(unit)
}

/// One propensity MP step with a pseudo-point drawn from the empirical law.
pub fn mp_step_propensity<R: Rng + ?Sized>(chain: &mut PropensityChain<'_>, step: usize, rng: &mut R) -> usize {
    let unit = rng.random_range(0..chain.train.rows());
    chain.step(unit, step, None, rng);
    unit
}

/// Precomputed initial laws for repeated posterior draws.
#[derive(Clone, Debug)]
pub struct MpSampler {
    config: CopulaConfig,
    cop: GaussianCopula,
    eval: CovariateMatrix,
    train_x: CovariateMatrix,
    train_arm: Vec<bool>,
    init: [Vec<PredictiveState>; 2],
    init_means: [Vec<f64>; 2],
    base_means: [Vec<f64>; 2],
    p0_eval: Vec<f64>,
    p0_train: Vec<f64>,
    init_clamps: usize,
    lengthscale: f64,
}

fn clamp_p(p: f64, count: &mut usize) -> Result<f64, MpError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MpError::Ppd(crate::ppd::PpdError::Numerical(format!("propensity {p} not in (0,1)"))));
    }
    if !(P_CLAMP..=1.0 - P_CLAMP).contains(&p) {
        *count += 1;
    }
    Ok(p.clamp(P_CLAMP, 1.0 - P_CLAMP))
}

impl MpSampler {
    pub fn new(
        outcome: &dyn OutcomePpd,
        propensity: &dyn PropensityPpd,
        train: &CausalDataset,
        eval: &CovariateMatrix,
        config: &CopulaConfig,
    ) -> Result<Self, MpError> {
        config.validate()?;
        if eval.rows() == 0 {
            return Err(MpError::NoEvalPoints);
        }
        if eval.cols() != train.d_x() {
            return Err(MpError::Config(format!("eval points have {} columns, training data {}", eval.cols(), train.d_x())));
        }
        train.require_both_arms()?;
        let mut init: [Vec<PredictiveState>; 2] = [Vec::new(), Vec::new()];
        let mut init_means: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut base_means: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for a in [false, true] {
            for (m, x) in eval.iter_rows().enumerate() {
                let law = outcome.grid_law(x, a, config.grid_size)?;
                let s = PredictiveState::new(law.y_grid, law.density, m, a)?;
                init_means[a as usize].push(s.mean());
                init[a as usize].push(s);
                base_means[a as usize].push(outcome.posterior_mean(x, a)?);
            }
        }
        let mut init_clamps = 0;
        let p0_eval = eval
            .iter_rows()
            .map(|x| clamp_p(propensity.predictive_prob(x)?, &mut init_clamps))
            .collect::<Result<Vec<_>, _>>()?;
        let mut ignored = 0;
        let p0_train = train
            .covariates()
            .iter_rows()
            .map(|x| clamp_p(propensity.predictive_prob(x)?, &mut ignored))
            .collect::<Result<Vec<_>, _>>()?;
        let lengthscale = config.smooth_lengthscale.unwrap_or_else(|| (eval.cols().max(1) as f64).sqrt());
        Ok(Self {
            config: config.clone(),
            cop: GaussianCopula::new(config.rho)?,
            eval: eval.clone(),
            train_x: train.covariates().clone(),
            train_arm: train.treatments().to_vec(),
            init,
            init_means,
            base_means,
            p0_eval,
            p0_train,
            init_clamps,
            lengthscale,
        })
    }

    pub fn config(&self) -> &CopulaConfig {
        &self.config
    }

    pub fn eval_points(&self) -> &CovariateMatrix {
        &self.eval
    }

    pub fn initial_states(&self, arm: bool) -> &[PredictiveState] {
        &self.init[arm as usize]
    }

    /// The draw with no MP updates: backend posterior means and propensities.
    pub fn posterior_mean_draw(&self) -> NuisanceDraw {
        NuisanceDraw {
            mu0_at: self.base_means[0].clone(),
            mu1_at: self.base_means[1].clone(),
            pi_at: self.p0_eval.clone(),
            draw_seed: 0,
            clamp_events: self.init_clamps,
        }
    }

    /// One joint posterior draw; a pure function of `draw_seed`.
    pub fn draw(&self, draw_seed: u64) -> Result<NuisanceDraw, MpError> {
        let mut rng_v: ChaCha8Rng = seed::rng(seed::derive_labeled(draw_seed, "pseudo-data"));
        let mut rng_r: ChaCha8Rng = seed::rng(seed::derive_labeled(draw_seed, "innovations"));
        let mut rng_p: ChaCha8Rng = seed::rng(seed::derive_labeled(draw_seed, "labels"));
        let m = self.eval.rows();
        let mut source = RSource::new(self.config.variant, &self.eval, self.lengthscale, self.config.smooth_features, &mut rng_r);
        let mut states = self.init.clone();
        let mut chain = PropensityChain::new(&self.train_x, &self.p0_train, &self.eval, &self.p0_eval, self.config.rho)?;
        let mut scores = vec![0.0; m];
        let mut weights = vec![0.0; m];
        let n = self.train_x.rows();
        for step in 1..=self.config.steps {
            let unit = rng_v.random_range(0..n);
            let alpha = alpha_schedule(step);
            let floor = self.config.weight_floor * alpha;
            let v = self.train_x.row(unit);
            for (k, w) in weights.iter_mut().enumerate() {
                let x = localized_weight(alpha, self.cop.log_product(self.eval.row(k), v));
                *w = if x < floor { 0.0 } else { x };
            }
            source.draw_scores(&mut rng_r, &mut scores);
            let arm = self.train_arm[unit] as usize;
            for (k, s) in states[arm].iter_mut().enumerate() {
                if weights[k] > 0.0 {
                    s.update_scored(weights[k], scores[k], &self.cop, step)?;
                }
            }
            chain.step(unit, step, Some(&weights), &mut rng_p);
        }
        let mu = |a: usize| -> Vec<f64> {
            (0..m).map(|k| self.base_means[a][k] + (states[a][k].mean() - self.init_means[a][k])).collect()
        };
        Ok(NuisanceDraw {
            mu0_at: mu(0),
            mu1_at: mu(1),
            pi_at: chain.states().iter().map(|s| s.p).collect(),
            draw_seed,
            clamp_events: self.init_clamps + chain.clamp_events(),
        })
    }

    /// `config.draws` draws with seeds derive_seed(master_seed, j), computed on
    /// `workers` threads. The result does not depend on `workers`.
    pub fn draw_many(&self, master_seed: u64, workers: usize) -> Result<Vec<NuisanceDraw>, MpError> {
        let seeds: Vec<u64> = (0..self.config.draws as u64).map(|j| seed::derive_seed(master_seed, j)).collect();
        let run = || seeds.par_iter().map(|&s| self.draw(s)).collect::<Result<Vec<_>, _>>();
        match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
            Ok(pool) => pool.install(run),
            Err(_) => seeds.iter().map(|&s| self.draw(s)).collect(),
        }
    }
}

pub fn draw_nuisance_posterior(
    outcome: &dyn OutcomePpd,
    propensity: &dyn PropensityPpd,
    train: &CausalDataset,
    eval: &CovariateMatrix,
    config: &CopulaConfig,
    draw_seed: u64,
) -> Result<NuisanceDraw, MpError> {
    MpSampler::new(outcome, propensity, train, eval, config)?.draw(draw_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CausalDataset;
    use crate::ppd::{BasisConfig, ConjugateConfig, ConjugateLinearBackend, ConstantPropensity, LaplaceLogistic};
    use rand_distr::{Distribution, StandardNormal};

    fn toy(n: usize, seed_: u64) -> CausalDataset {
        let mut rng = seed::rng(seed_);
        let mut x = Vec::new();
        let (mut a, mut y) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let (x0, x1): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            let t = rng.random::<f64>() < 0.5;
            let e: f64 = StandardNormal.sample(&mut rng);
            x.extend([x0, x1]);
            a.push(t);
            y.push(1.0 + x0 - 0.5 * x1 + if t { 2.0 } else { 0.0 } + 0.5 * e);
        }
        CausalDataset::new(CovariateMatrix::new(n, 2, x).unwrap(), a, y).unwrap()
    }

    fn eval() -> CovariateMatrix {
        CovariateMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, -1.0], vec![-2.0, 0.5]]).unwrap()
    }

    fn backend(d: &CausalDataset) -> ConjugateLinearBackend {
        let cfg = ConjugateConfig { basis: BasisConfig::Linear, ..Default::default() };
        ConjugateLinearBackend::fit(&cfg, d).unwrap()
    }

    #[test]
    fn zero_steps_returns_posterior_means() {
        let d = toy(80, 1);
        let (o, e) = (backend(&d), eval());
        let p = LaplaceLogistic::fit(&BasisConfig::Linear, 1.0, &d).unwrap();
        let cfg = CopulaConfig { steps: 0, ..Default::default() };
        let draw = draw_nuisance_posterior(&o, &p, &d, &e, &cfg, 9).unwrap();
        for (m, x) in e.iter_rows().enumerate() {
            assert_eq!(draw.mu0_at[m], o.posterior_mean(x, false).unwrap());
            assert_eq!(draw.mu1_at[m], o.posterior_mean(x, true).unwrap());
            assert_eq!(draw.pi_at[m], p.predictive_prob(x).unwrap());
        }
    }

    #[test]
    fn draws_are_deterministic_and_worker_invariant() {
        let d = toy(60, 2);
        let (o, e) = (backend(&d), eval());
        let cfg = CopulaConfig { steps: 30, draws: 6, ..Default::default() };
        let s = MpSampler::new(&o, &ConstantPropensity(0.4), &d, &e, &cfg).unwrap();
        assert_eq!(s.draw(5).unwrap(), s.draw(5).unwrap());
        assert_ne!(s.draw(5).unwrap(), s.draw(6).unwrap());
        assert_eq!(s.draw_many(77, 1).unwrap(), s.draw_many(77, 3).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = toy(40, 3);
        let o = backend(&d);
        let empty = CovariateMatrix::new(0, 2, vec![]).unwrap();
        let cfg = CopulaConfig::default();
        let p = ConstantPropensity(0.5);
        assert!(matches!(MpSampler::new(&o, &p, &d, &empty, &cfg), Err(MpError::NoEvalPoints)));
        let bad = CopulaConfig { rho: 1.0, ..Default::default() };
        assert!(matches!(MpSampler::new(&o, &p, &d, &eval(), &bad), Err(MpError::Config(_))));
        let wide = CovariateMatrix::new(1, 3, vec![0.0; 3]).unwrap();
        assert!(MpSampler::new(&o, &p, &d, &wide, &cfg).is_err());
    }

    #[test]
    fn states_keep_unit_mass() {
        let d = toy(50, 4);
        let (o, e) = (backend(&d), eval());
        let mut states = Vec::new();
        for a in [false, true] {
            for (m, x) in e.iter_rows().enumerate() {
                let law = o.grid_law(x, a, 201).unwrap();
                states.push(PredictiveState::new(law.y_grid, law.density, m, a).unwrap());
            }
        }
        let mut rng = seed::rng(11);
        for variant in CouplingVariant::ALL {
            let mut st = states.clone();
            let mut src = RSource::new(variant, &e, 1.0, 16, &mut rng);
            for step in 1..=100 {
                mp_step_outcome(&mut st, &e, &d, step, 0.7, &mut rng, &mut src).unwrap();
                for s in &st {
                    assert!((s.mass() - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn outcome_draws_center_on_posterior_mean() {
        let d = toy(40, 5);
        let (o, e) = (backend(&d), eval());
        let cfg = CopulaConfig { steps: 100, draws: 200, rho: 0.8, ..Default::default() };
        let s = MpSampler::new(&o, &ConstantPropensity(0.5), &d, &e, &cfg).unwrap();
        let draws = s.draw_many(123, 1).unwrap();
        for a in [false, true] {
            let v: Vec<f64> = draws.iter().map(|dr| dr.mu_at(a)[0]).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
            let target = o.posterior_mean(e.row(0), a).unwrap();
            assert!(sd > 0.0);
            assert!((mean - target).abs() < 3.0 * sd / (v.len() as f64).sqrt(), "arm {a}: {mean} vs {target}");
        }
    }

    #[test]
    fn propensity_drift_is_centered() {
        let d = toy(60, 6);
        let e = eval();
        let cfg = CopulaConfig { steps: 100, draws: 200, ..Default::default() };
        let s = MpSampler::new(&backend(&d), &ConstantPropensity(0.5), &d, &e, &cfg).unwrap();
        let draws = s.draw_many(321, 1).unwrap();
        for m in 0..e.rows() {
            let v: Vec<f64> = draws.iter().map(|dr| dr.pi_at[m] - 0.5).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
            assert!(sd > 0.0);
            assert!(mean.abs() < 3.0 * sd / (v.len() as f64).sqrt(), "point {m}: drift {mean}");
        }
    }

    #[test]
    fn propensity_chain_is_inert_for_tiny_rho() {
        let d = toy(30, 7);
        let e = eval();
        let p0_train = vec![0.3; d.n()];
        let p0_eval = vec![0.3; e.rows()];
        let mut chain = PropensityChain::new(d.covariates(), &p0_train, &e, &p0_eval, 1e-9).unwrap();
        let mut rng = seed::rng(1);
        for step in 1..=50 {
            mp_step_propensity(&mut chain, step, &mut rng);
        }
        for s in chain.states() {
            assert!((s.p - 0.3).abs() < 1e-6);
        }
        assert_eq!(chain.clamp_events(), 0);
    }
}
