use crate::data::CovariateMatrix;
use crate::normal;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// How the innovations r_N are shared across evaluation points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingVariant {
    /// Independent innovation per evaluation point.
    XIndependent,
    /// One innovation per step, shared by every point.
    XParallel,
    /// Innovations from a Gaussian field that is smooth in x.
    #[default]
    Smooth,
}

impl CouplingVariant {
    pub const ALL: [CouplingVariant; 3] = [CouplingVariant::XIndependent, CouplingVariant::XParallel, CouplingVariant::Smooth];

    pub fn as_str(self) -> &'static str {
        match self {
            CouplingVariant::XIndependent => "x_independent",
            CouplingVariant::XParallel => "x_parallel",
            CouplingVariant::Smooth => "smooth",
        }
    }
}

impl std::fmt::Display for CouplingVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Unit-variance Gaussian field Z(x) = Σ_k ξ_k φ_k(x)/‖φ(x)‖ with random
/// Fourier features φ_k(x) = cos(ω_k·x + b_k), ω_k ~ N(0, I/ℓ²).
#[derive(Clone, Debug)]
pub struct SmoothField {
    features: usize,
    /// Normalized feature rows, one per evaluation point.
    phi: Vec<f64>,
}

impl SmoothField {
    pub fn new<R: Rng + ?Sized>(eval: &CovariateMatrix, lengthscale: f64, features: usize, rng: &mut R) -> Self {
        let d = eval.cols();
        let omega: Vec<f64> = (0..features * d).map(|_| rng.sample::<f64, _>(StandardNormal) / lengthscale).collect();
        let phase: Vec<f64> = (0..features).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
        let mut phi = Vec::with_capacity(eval.rows() * features);
        for x in eval.iter_rows() {
            let start = phi.len();
            for k in 0..features {
                let t: f64 = omega[k * d..(k + 1) * d].iter().zip(x).map(|(w, v)| w * v).sum();
                phi.push((t + phase[k]).cos());
            }
            let row = &mut phi[start..];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            } else {
                row[0] = 1.0;
            }
        }
        Self { features, phi }
    }

    /// Correlation of the field between evaluation points i and j.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let f = self.features;
        self.phi[i * f..(i + 1) * f].iter().zip(&self.phi[j * f..(j + 1) * f]).map(|(a, b)| a * b).sum()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, xi: &mut Vec<f64>, out: &mut [f64]) {
        xi.clear();
        xi.extend((0..self.features).map(|_| rng.sample::<f64, _>(StandardNormal)));
        for (m, z) in out.iter_mut().enumerate() {
            *z = self.phi[m * self.features..(m + 1) * self.features].iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
        }
    }
}

/// Per-step innovations for a fixed list of evaluation points. Every variant
/// gives each point an i.i.d. Uniform(0,1) sequence over steps; they differ
/// only in the dependence across points. One value per point is shared by
/// that point's whole value grid.
#[derive(Clone, Debug)]
pub struct RSource {
    variant: CouplingVariant,
    points: usize,
    field: Option<SmoothField>,
    scratch: Vec<f64>,
}

impl RSource {
    /// Smooth-variant features are drawn from `rng` here, once per posterior draw.
    pub fn new<R: Rng + ?Sized>(variant: CouplingVariant, eval: &CovariateMatrix, lengthscale: f64, features: usize, rng: &mut R) -> Self {
        let field = (variant == CouplingVariant::Smooth).then(|| SmoothField::new(eval, lengthscale, features.max(1), rng));
        Self { variant, points: eval.rows(), field, scratch: Vec::new() }
    }

    pub fn variant(&self) -> CouplingVariant {
        self.variant
    }

    pub fn field(&self) -> Option<&SmoothField> {
        self.field.as_ref()
    }

    /// Normal scores Φ⁻¹(r) for one step.
    pub fn draw_scores<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.points);
        match self.variant {
            CouplingVariant::XIndependent => out.iter_mut().for_each(|z| *z = rng.sample(StandardNormal)),
            CouplingVariant::XParallel => {
                let z: f64 = rng.sample(StandardNormal);
                out.fill(z);
            }
            CouplingVariant::Smooth => self.field.as_ref().expect("smooth field").sample(rng, &mut self.scratch, out),
        }
    }

    /// Uniform innovations r = Φ(score) for one step.
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.points];
        self.draw_scores(rng, &mut out);
        out.iter_mut().for_each(|z| *z = normal::cdf(*z));
        out
    }
}
