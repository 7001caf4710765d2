use crate::seed;
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisConfig {
    /// Constant feature only.
    Intercept,
    Linear,
    #[default]
    LinearSquares,
    /// Random Fourier features of an RBF kernel; length scale defaults to √d.
    Fourier {
        features: usize,
        #[serde(default)]
        lengthscale: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

/// Feature map; every variant starts with a constant 1.
#[derive(Clone, Debug, PartialEq)]
pub enum Basis {
    Intercept,
    Linear { d: usize },
    LinearSquares { d: usize },
    Fourier { d: usize, omega: Vec<f64>, phase: Vec<f64> },
}

impl Basis {
    pub fn new(config: &BasisConfig, d: usize) -> Self {
        match *config {
            BasisConfig::Intercept => Basis::Intercept,
            BasisConfig::Linear => Basis::Linear { d },
            BasisConfig::LinearSquares => Basis::LinearSquares { d },
            BasisConfig::Fourier { features, lengthscale, seed: s } => {
                let ell = lengthscale.unwrap_or((d as f64).sqrt().max(1.0));
                let mut rng = seed::rng(s);
                let omega = (0..features * d).map(|_| rng.sample::<f64, _>(StandardNormal) / ell).collect();
                let phase = (0..features).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
                Basis::Fourier { d, omega, phase }
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Basis::Intercept => 1,
            Basis::Linear { d } => 1 + d,
            Basis::LinearSquares { d } => 1 + 2 * d,
            Basis::Fourier { phase, .. } => 1 + phase.len(),
        }
    }

    pub fn expand_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        match self {
            Basis::Intercept => {}
            Basis::Linear { d } => out.extend_from_slice(&x[..*d]),
            Basis::LinearSquares { d } => {
                out.extend_from_slice(&x[..*d]);
                out.extend(x[..*d].iter().map(|v| v * v));
            }
            Basis::Fourier { d, omega, phase } => {
                let scale = (2.0 / phase.len() as f64).sqrt();
                for (k, b) in phase.iter().enumerate() {
                    let w = &omega[k * d..(k + 1) * d];
                    let t: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
                    out.push(scale * (t + b).cos());
                }
            }
        }
    }

    pub fn expand(&self, x: &[f64]) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.dim());
        self.expand_into(x, &mut v);
        DVector::from_vec(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        let x = [1.0, -2.0, 3.0];
        assert_eq!(Basis::new(&BasisConfig::Intercept, 3).expand(&x).as_slice(), &[1.0]);
        assert_eq!(Basis::new(&BasisConfig::Linear, 3).expand(&x).as_slice(), &[1.0, 1.0, -2.0, 3.0]);
        assert_eq!(
            Basis::new(&BasisConfig::LinearSquares, 3).expand(&x).as_slice(),
            &[1.0, 1.0, -2.0, 3.0, 1.0, 4.0, 9.0]
        );
        let f = Basis::new(&BasisConfig::Fourier { features: 16, lengthscale: None, seed: 3 }, 3);
        assert_eq!(f.dim(), 17);
        assert_eq!(f, Basis::new(&BasisConfig::Fourier { features: 16, lengthscale: None, seed: 3 }, 3));
    }

    #[test]
    fn fourier_approximates_rbf_kernel() {
        let f = Basis::new(&BasisConfig::Fourier { features: 4000, lengthscale: Some(1.0), seed: 1 }, 2);
        let (a, b) = ([0.2, -0.1], [0.9, 0.4]);
        let (pa, pb) = (f.expand(&a), f.expand(&b));
        let k: f64 = pa.iter().zip(pb.iter()).skip(1).map(|(u, v)| u * v).sum();
        let exact = (-0.5 * ((0.7f64).powi(2) + 0.25)).exp();
        assert!((k - exact).abs() < 0.05, "{k} vs {exact}");
    }
}
