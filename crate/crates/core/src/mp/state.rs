use super::copula::{bb_mixture_unchecked, clamp_unit, GaussianCopula};
use super::MpError;
use crate::normal;
use std::sync::Arc;

/// Propensity states live in [P_CLAMP, 1 − P_CLAMP].
pub const P_CLAMP: f64 = 1e-4;
const DRIFT_TOLERANCE: f64 = 1e-3;

/// A boundary score with its normal tail, kept on the accurate side.
#[derive(Clone, Copy)]
struct Edge {
    t: f64,
    tail: f64,
}

impl Edge {
    const LOW: Edge = Edge { t: f64::NEG_INFINITY, tail: 0.0 };
    const HIGH: Edge = Edge { t: f64::INFINITY, tail: 0.0 };

    fn at(t: f64) -> Self {
        Self { t, tail: normal::tail(t) }
    }

    /// Φ(b) − Φ(a) for a ≤ b.
    fn between(a: Edge, b: Edge) -> f64 {
        if a.t >= 0.0 {
            a.tail - b.tail
        } else if b.t < 0.0 {
            b.tail - a.tail
        } else {
            1.0 - a.tail - b.tail
        }
    }
}

/// A predictive law on a value grid, held as node densities with trapezoid
/// quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveState {
    y_grid: Arc<Vec<f64>>,
    node_weights: Arc<Vec<f64>>,
    density: Vec<f64>,
    point: usize,
    arm: bool,
}

impl PredictiveState {
    /// Normalizes `density` to unit trapezoid mass.
    pub fn new(y_grid: Vec<f64>, density: Vec<f64>, point: usize, arm: bool) -> Result<Self, MpError> {
        if y_grid.len() < 3 || y_grid.len() != density.len() {
            return Err(MpError::Grid(format!("grid of {} points with {} densities", y_grid.len(), density.len())));
        }
        if !y_grid.windows(2).all(|w| w[1] > w[0]) || !y_grid.iter().all(|y| y.is_finite()) {
            return Err(MpError::Grid("grid not strictly increasing".into()));
        }
        if !density.iter().all(|d| *d >= 0.0 && d.is_finite()) {
            return Err(MpError::Grid("density negative or non-finite".into()));
        }
        let g = y_grid.len();
        let node_weights = (0..g)
            .map(|k| {
                let lo = if k > 0 { y_grid[k] - y_grid[k - 1] } else { 0.0 };
                let hi = if k + 1 < g { y_grid[k + 1] - y_grid[k] } else { 0.0 };
                0.5 * (lo + hi)
            })
            .collect();
        let mut s = Self { y_grid: Arc::new(y_grid), node_weights: Arc::new(node_weights), density, point, arm };
        let mass = s.mass();
        if !(mass > 0.0) {
            return Err(MpError::Grid("density has zero mass".into()));
        }
        s.density.iter_mut().for_each(|d| *d /= mass);
        Ok(s)
    }

    pub fn y_grid(&self) -> &[f64] {
        &self.y_grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Running trapezoid integral of the density at the grid nodes.
    pub fn cdf(&self) -> Vec<f64> {
        let y = &self.y_grid;
        let mut out = Vec::with_capacity(y.len());
        let mut acc = 0.0;
        out.push(0.0);
        for k in 1..y.len() {
            acc += 0.5 * (self.density[k - 1] + self.density[k]) * (y[k] - y[k - 1]);
            out.push(acc.min(1.0));
        }
        out
    }

    pub fn point(&self) -> usize {
        self.point
    }

    pub fn arm(&self) -> bool {
        self.arm
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().zip(self.node_weights.iter()).map(|(d, w)| d * w).sum()
    }

    pub fn mean(&self) -> f64 {
        self.density.iter().zip(self.node_weights.iter()).zip(self.y_grid.iter()).map(|((d, w), y)| d * w * y).sum()
    }

    /// Linear interpolation of the CDF at level `p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let cdf = self.cdf();
        let k = cdf.partition_point(|&c| c < p).clamp(1, cdf.len() - 1);
        let (c0, c1) = (cdf[k - 1], cdf[k]);
        let t = if c1 > c0 { ((p - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.5 };
        self.y_grid[k - 1] + t * (self.y_grid[k] - self.y_grid[k - 1])
    }

    /// Multiplies the density by 1 − w + w·c_ρ(F(y), r) where `r_score` = Φ⁻¹(r),
    /// then renormalizes. Returns the mass before renormalization.
    ///
    /// Node k owns the probability slice d_k·h_k of its quadrature weight, and
    /// c_ρ is averaged over that slice in closed form through the conditional
    /// copula CDF Φ((Φ⁻¹(u) − ρ·z_r)/√(1−ρ²)). The slices tile (0,1), so the
    /// update preserves mass up to rounding whatever the grid resolution.
    pub(crate) fn update_scored(&mut self, weight: f64, r_score: f64, cop: &GaussianCopula, step: usize) -> Result<f64, MpError> {
        let zr = r_score.clamp(-super::Z_CLAMP, super::Z_CLAMP);
        let rho = cop.rho();
        let (shift, inv_scale) = (rho * zr, 1.0 / (1.0 - rho * rho).sqrt());
        let total = self.mass();
        let inv_total = 1.0 / total;
        let g = self.density.len();
        // interior slice boundaries as cumulative probabilities
        let mut edges = Vec::with_capacity(g + 1);
        edges.push(Edge::LOW);
        let mut below = 0.0;
        for k in 0..g - 1 {
            below += self.density[k] * self.node_weights[k] * inv_total;
            edges.push(Edge { t: below, tail: 0.0 });
        }
        edges.push(Edge::HIGH);
        for e in &mut edges[1..g] {
            let z = if e.t <= 0.5 { normal::inv_lower_tail(e.t) } else { -normal::inv_lower_tail((1.0 - e.t).max(0.0)) };
            *e = Edge::at((z - shift) * inv_scale);
        }
        let mut mass = 0.0;
        for k in 0..g {
            let h = self.node_weights[k];
            let slice = self.density[k] * h * inv_total;
            if slice > 0.0 {
                let avg = (Edge::between(edges[k], edges[k + 1]) / slice).max(0.0);
                self.density[k] *= 1.0 + weight * (avg - 1.0);
            }
            mass += self.density[k] * h;
        }
        if !((mass - 1.0).abs() <= DRIFT_TOLERANCE) {
            return Err(MpError::NumericalInstability { step, point: self.point, mass });
        }
        let inv = 1.0 / mass;
        self.density.iter_mut().for_each(|d| *d *= inv);
        Ok(mass)
    }

    /// One copula update with weight `weight` and innovation `r` ∈ (0,1).
    pub fn apply_copula_update(&mut self, weight: f64, r: f64, rho: f64, step: usize) -> Result<f64, MpError> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(MpError::Domain(format!("weight {weight} outside [0,1]")));
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(MpError::Domain(format!("r = {r} not in (0,1)")));
        }
        let cop = GaussianCopula::new(rho)?;
        self.update_scored(weight, normal::inv_cdf(clamp_unit(r)), &cop, step)
    }
}

/// Predictive probability of treatment at one evaluation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropensityState {
    pub p: f64,
    pub point: usize,
}

impl PropensityState {
    /// Bernoulli copula update after observing `label` at a pseudo-point whose
    /// predictive probability of treatment was `v1`. Returns true when the
    /// result had to be clamped.
    pub fn apply(&mut self, weight: f64, label: bool, v1: f64, rho: f64) -> bool {
        let (p, clamped) = propensity_update(self.p, weight, label, v1, rho);
        self.p = p;
        clamped
    }
}

#[inline]
pub(crate) fn propensity_update(p: f64, weight: f64, label: bool, v1: f64, rho: f64) -> (f64, bool) {
    // u: probability of the queried label (treatment) at x;
    // v: predictive probability of the observed label at the pseudo-point
    let factor = if label {
        bb_mixture_unchecked(p, v1, rho, true)
    } else {
        bb_mixture_unchecked(p, 1.0 - v1, rho, false)
    };
    let next = p * (1.0 - weight + weight * factor);
    if next.is_nan() || next < P_CLAMP || next > 1.0 - P_CLAMP {
        (if next.is_nan() { 0.5 } else { next.clamp(P_CLAMP, 1.0 - P_CLAMP) }, true)
    } else {
        (next, false)
    }
}
