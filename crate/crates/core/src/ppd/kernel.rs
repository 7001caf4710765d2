use super::{OutcomePpd, PpdError, PropensityPpd};
use crate::data::CausalDataset;
use crate::normal;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    /// Multiplies the rule-of-thumb covariate bandwidths.
    pub bandwidth_scale: f64,
    /// Explicit per-covariate bandwidths; overrides the rule of thumb.
    pub bandwidths: Option<Vec<f64>>,
    /// Explicit outcome smoothing bandwidth, shared by both arms.
    pub outcome_bandwidth: Option<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { bandwidth_scale: 1.0, bandwidths: None, outcome_bandwidth: None }
    }
}

fn sd(v: impl Iterator<Item = f64> + Clone) -> (f64, usize) {
    let n = v.clone().count();
    if n < 2 {
        return (0.0, n);
    }
    let m = v.clone().sum::<f64>() / n as f64;
    ((v.map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt(), n)
}

/// Scott-rule bandwidths sd_j · n^(−1/(d+4)), times `scale`.
fn covariate_bandwidths(config: &KernelConfig, data: &CausalDataset) -> Result<Vec<f64>, PpdError> {
    let d = data.d_x();
    let bw = match &config.bandwidths {
        Some(b) if b.len() != d => return Err(PpdError::Config(format!("{} bandwidths for {d} covariates", b.len()))),
        Some(b) => b.clone(),
        None => {
            let n = data.n().max(1) as f64;
            let factor = config.bandwidth_scale * n.powf(-1.0 / (d as f64 + 4.0));
            (0..d)
                .map(|j| {
                    let (s, _) = sd((0..data.n()).map(|i| data.x(i)[j]));
                    if s > 0.0 { s * factor } else { factor }
                })
                .collect()
        }
    };
    if let Some(b) = bw.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return Err(PpdError::Config(format!("bandwidth {b} must be positive")));
    }
    Ok(bw)
}

#[derive(Clone, Debug)]
struct Points {
    d: usize,
    xs: Vec<f64>,
    vals: Vec<f64>,
}

impl Points {
    fn push(&mut self, x: &[f64], v: f64) {
        self.xs.extend_from_slice(x);
        self.vals.push(v);
    }

    fn log_weights(&self, x: &[f64], bw: &[f64]) -> Vec<f64> {
        self.xs
            .chunks_exact(self.d.max(1))
            .take(self.vals.len())
            .map(|xi| {
                -0.5 * xi.iter().zip(x).zip(bw).map(|((a, b), h)| ((a - b) / h).powi(2)).sum::<f64>()
            })
            .collect()
    }

    /// Weights normalized to sum to one (log-sum-exp stabilized).
    fn normalized_weights(&self, x: &[f64], bw: &[f64]) -> Vec<f64> {
        let mut lw = self.log_weights(x, bw);
        let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for w in &mut lw {
            *w = (*w - m).exp();
            s += *w;
        }
        lw.iter_mut().for_each(|w| *w /= s);
        lw
    }
}

/// Kernel-weighted empirical predictive, smoothed in y with a Gaussian kernel.
#[derive(Clone, Debug)]
pub struct KernelBackend {
    bandwidths: Arc<Vec<f64>>,
    outcome_bw: [f64; 2],
    arms: [Arc<Points>; 2],
}

impl KernelBackend {
    pub fn fit(config: &KernelConfig, data: &CausalDataset) -> Result<Self, PpdError> {
        let bandwidths = covariate_bandwidths(config, data)?;
        let d = data.d_x();
        let mut arms = [Points { d, xs: vec![], vals: vec![] }, Points { d, xs: vec![], vals: vec![] }];
        for i in 0..data.n() {
            arms[data.treatments()[i] as usize].push(data.x(i), data.outcomes()[i]);
        }
        let mut outcome_bw = [0.0; 2];
        for a in 0..2 {
            if arms[a].vals.is_empty() {
                return Err(PpdError::EmptyArm { arm: a as u8 });
            }
            let (s, n) = sd(arms[a].vals.iter().cloned());
            if !(s > 0.0) {
                return Err(PpdError::Degenerate { arm: a as u8, reason: "all outcomes identical".into() });
            }
            outcome_bw[a] = match config.outcome_bandwidth {
                Some(h) if h > 0.0 => h,
                Some(h) => return Err(PpdError::Config(format!("outcome bandwidth {h} must be positive"))),
                None => 1.06 * s * (n as f64).powf(-0.2),
            };
        }
        let [a0, a1] = arms;
        Ok(Self { bandwidths: Arc::new(bandwidths), outcome_bw, arms: [Arc::new(a0), Arc::new(a1)] })
    }

    fn weights(&self, x: &[f64], arm: bool) -> (&Points, Vec<f64>) {
        let pts = &self.arms[arm as usize];
        (pts, pts.normalized_weights(x, &self.bandwidths))
    }
}

impl OutcomePpd for KernelBackend {
    fn predictive_cdf(&self, y: f64, x: &[f64], arm: bool) -> Result<f64, PpdError> {
        let h = self.outcome_bw[arm as usize];
        let (pts, w) = self.weights(x, arm);
        Ok(w.iter().zip(&pts.vals).map(|(w, yi)| w * normal::cdf((y - yi) / h)).sum::<f64>().clamp(0.0, 1.0))
    }

    fn predictive_density(&self, y: f64, x: &[f64], arm: bool) -> Result<f64, PpdError> {
        let h = self.outcome_bw[arm as usize];
        let (pts, w) = self.weights(x, arm);
        Ok(w.iter().zip(&pts.vals).map(|(w, yi)| w * normal::pdf((y - yi) / h)).sum::<f64>() / h)
    }

    fn posterior_mean(&self, x: &[f64], arm: bool) -> Result<f64, PpdError> {
        let (pts, w) = self.weights(x, arm);
        Ok(w.iter().zip(&pts.vals).map(|(w, yi)| w * yi).sum())
    }

    /// Appends the point with bandwidths held fixed, so it equals a refit only
    /// when bandwidths are pinned in the configuration.
    fn absorb(&self, x: &[f64], arm: bool, y: f64) -> Result<Box<dyn OutcomePpd>, PpdError> {
        let mut next = self.clone();
        let mut pts = (*self.arms[arm as usize]).clone();
        pts.push(x, y);
        next.arms[arm as usize] = Arc::new(pts);
        Ok(Box::new(next))
    }
}

/// Kernel-weighted Beta(1,1)–Bernoulli propensity model.
#[derive(Clone, Debug)]
pub struct KernelPropensity {
    bandwidths: Arc<Vec<f64>>,
    points: Arc<Points>,
}

impl KernelPropensity {
    pub fn fit(config: &KernelConfig, data: &CausalDataset) -> Result<Self, PpdError> {
        let bandwidths = covariate_bandwidths(config, data)?;
        let mut points = Points { d: data.d_x(), xs: vec![], vals: vec![] };
        for i in 0..data.n() {
            points.push(data.x(i), data.treatments()[i] as u8 as f64);
        }
        Ok(Self { bandwidths: Arc::new(bandwidths), points: Arc::new(points) })
    }

    /// Total kernel weight W(x) = Σ w_i with w_i ∈ (0, 1].
    pub fn total_weight(&self, x: &[f64]) -> f64 {
        self.points.log_weights(x, &self.bandwidths).iter().map(|l| l.exp()).sum()
    }
}

impl PropensityPpd for KernelPropensity {
    fn predictive_prob(&self, x: &[f64]) -> Result<f64, PpdError> {
        let lw = self.points.log_weights(x, &self.bandwidths);
        let (mut sw, mut swa) = (0.0, 0.0);
        for (l, a) in lw.iter().zip(&self.points.vals) {
            let w = l.exp();
            sw += w;
            swa += w * a;
        }
        Ok((1.0 + swa) / (2.0 + sw))
    }

    fn absorb(&self, x: &[f64], arm: bool) -> Result<Box<dyn PropensityPpd>, PpdError> {
        let mut pts = (*self.points).clone();
        pts.push(x, arm as u8 as f64);
        Ok(Box::new(Self { bandwidths: Arc::clone(&self.bandwidths), points: Arc::new(pts) }))
    }
}
