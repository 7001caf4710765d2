use super::{Basis, BasisConfig, PpdError, PropensityPpd};
use crate::data::CausalDataset;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::sync::Arc;

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Bayesian logistic regression with an isotropic Gaussian prior, summarized
/// by its Laplace approximation; predictions use the probit approximation of
/// the logistic-Gaussian integral.
#[derive(Clone, Debug)]
pub struct LaplaceLogistic {
    basis: Arc<Basis>,
    prior_precision: f64,
    mode: DVector<f64>,
    hessian: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl LaplaceLogistic {
    pub fn fit(basis: &BasisConfig, prior_precision: f64, data: &CausalDataset) -> Result<Self, PpdError> {
        if !(prior_precision > 0.0 && prior_precision.is_finite()) {
            return Err(PpdError::Config(format!("propensity prior precision {prior_precision} must be positive")));
        }
        let basis = Basis::new(basis, data.d_x());
        let p = basis.dim();
        let phi: Vec<DVector<f64>> = (0..data.n()).map(|i| basis.expand(data.x(i))).collect();
        let labels: Vec<f64> = data.treatments().iter().map(|&a| a as u8 as f64).collect();

        let objective = |w: &DVector<f64>| -> f64 {
            let mut s = 0.5 * prior_precision * w.dot(w);
            for (f, &a) in phi.iter().zip(&labels) {
                let t = w.dot(f);
                s += log1p_exp(t) - a * t;
            }
            s
        };
        let mut w = DVector::zeros(p);
        let mut obj = objective(&w);
        for _ in 0..100 {
            let mut grad = &w * prior_precision;
            let mut hess = DMatrix::identity(p, p) * prior_precision;
            for (f, &a) in phi.iter().zip(&labels) {
                let s = sigmoid(w.dot(f));
                grad.axpy(s - a, f, 1.0);
                hess.ger(s * (1.0 - s), f, f, 1.0);
            }
            let chol = hess.cholesky().ok_or_else(|| PpdError::Numerical("logistic Hessian not positive definite".into()))?;
            let step = chol.solve(&grad);
            let mut t = 1.0;
            let mut next = &w - &step * t;
            let mut next_obj = objective(&next);
            while next_obj > obj && t > 1e-10 {
                t *= 0.5;
                next = &w - &step * t;
                next_obj = objective(&next);
            }
            let moved = (&next - &w).amax();
            w = next;
            obj = next_obj;
            if moved < 1e-10 {
                break;
            }
        }
        let mut hess = DMatrix::identity(p, p) * prior_precision;
        for f in &phi {
            let s = sigmoid(w.dot(f));
            hess.ger(s * (1.0 - s), f, f, 1.0);
        }
        Self::assemble(Arc::new(basis), prior_precision, w, hess)
    }

    fn assemble(basis: Arc<Basis>, prior_precision: f64, mode: DVector<f64>, hessian: DMatrix<f64>) -> Result<Self, PpdError> {
        let chol = hessian
            .clone()
            .cholesky()
            .ok_or_else(|| PpdError::Numerical("logistic Hessian not positive definite".into()))?;
        Ok(Self { basis, prior_precision, mode, hessian, chol })
    }

    pub fn mode(&self) -> &DVector<f64> {
        &self.mode
    }

    pub fn prior_precision(&self) -> f64 {
        self.prior_precision
    }

    /// One Newton step from the current mode with the new observation added.
    pub fn absorb_step(&self, x: &[f64], arm: bool) -> Result<Self, PpdError> {
        let f = self.basis.expand(x);
        let s = sigmoid(self.mode.dot(&f));
        let mut hess = self.hessian.clone();
        hess.ger(s * (1.0 - s), &f, &f, 1.0);
        let chol = hess
            .clone()
            .cholesky()
            .ok_or_else(|| PpdError::Numerical("logistic Hessian not positive definite".into()))?;
        let grad = &f * (arm as u8 as f64 - s);
        let mode = &self.mode + chol.solve(&grad);
        Ok(Self { basis: Arc::clone(&self.basis), prior_precision: self.prior_precision, mode, hessian: hess, chol })
    }
}

impl PropensityPpd for LaplaceLogistic {
    fn predictive_prob(&self, x: &[f64]) -> Result<f64, PpdError> {
        let f = self.basis.expand(x);
        let m = self.mode.dot(&f);
        let v = f.dot(&self.chol.solve(&f));
        let kappa = 1.0 / (1.0 + std::f64::consts::PI * v / 8.0).sqrt();
        Ok(sigmoid(kappa * m).clamp(f64::EPSILON, 1.0 - f64::EPSILON))
    }

    fn absorb(&self, x: &[f64], arm: bool) -> Result<Box<dyn PropensityPpd>, PpdError> {
        Ok(Box::new(self.absorb_step(x, arm)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CovariateMatrix;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn logistic_data(n: usize, coef: [f64; 2], s: u64) -> CausalDataset {
        let mut rng = seed::rng(s);
        let mut xs = Vec::new();
        let mut a = Vec::new();
        for _ in 0..n {
            let x: f64 = rng.sample(StandardNormal);
            xs.push(x);
            a.push(rng.random::<f64>() < sigmoid(coef[0] + coef[1] * x));
        }
        CausalDataset::new(CovariateMatrix::new(n, 1, xs).unwrap(), a, vec![0.0; n]).unwrap()
    }

    #[test]
    fn recovers_coefficients() {
        let m = LaplaceLogistic::fit(&BasisConfig::Linear, 1.0, &logistic_data(20_000, [-0.5, 1.2], 1)).unwrap();
        assert!((m.mode()[0] + 0.5).abs() < 0.06, "{}", m.mode());
        assert!((m.mode()[1] - 1.2).abs() < 0.06, "{}", m.mode());
    }

    #[test]
    fn rct_probabilities_near_half() {
        let m = LaplaceLogistic::fit(&BasisConfig::Linear, 1.0, &logistic_data(5000, [0.0, 0.0], 2)).unwrap();
        let mut rng = seed::rng(3);
        for _ in 0..100 {
            let p = m.predictive_prob(&[rng.sample::<f64, _>(StandardNormal)]).unwrap();
            assert!((p - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn empty_data_gives_prior_half() {
        let empty = CausalDataset::new(CovariateMatrix::new(0, 2, vec![]).unwrap(), vec![], vec![]).unwrap();
        let m = LaplaceLogistic::fit(&BasisConfig::Linear, 1.0, &empty).unwrap();
        assert_eq!(m.predictive_prob(&[0.3, -2.0]).unwrap(), 0.5);
    }

    #[test]
    fn separable_data_stays_interior() {
        let x = CovariateMatrix::new(6, 1, vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]).unwrap();
        let d = CausalDataset::new(x, vec![false, false, false, true, true, true], vec![0.0; 6]).unwrap();
        let m = LaplaceLogistic::fit(&BasisConfig::Linear, 1.0, &d).unwrap();
        for v in [-50.0, 0.0, 50.0] {
            let p = m.predictive_prob(&[v]).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn absorb_moves_toward_label() {
        let m = LaplaceLogistic::fit(&BasisConfig::Linear, 1.0, &logistic_data(200, [0.0, 0.5], 4)).unwrap();
        let x = [0.7];
        let p = m.predictive_prob(&x).unwrap();
        assert!(m.absorb_step(&x, true).unwrap().predictive_prob(&x).unwrap() > p);
        assert!(m.absorb_step(&x, false).unwrap().predictive_prob(&x).unwrap() < p);
    }
}
