use super::MpError;
use crate::normal;

/// Copula arguments are clamped to [U_CLAMP, 1 − U_CLAMP].
pub const U_CLAMP: f64 = 1e-9;
/// Φ⁻¹(1 − U_CLAMP).
pub const Z_CLAMP: f64 = 5.997_807_015_007_686_5;

#[inline]
pub fn clamp_unit(u: f64) -> f64 {
    u.clamp(U_CLAMP, 1.0 - U_CLAMP)
}

fn check_rho(rho: f64) -> Result<(), MpError> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(MpError::Domain(format!("rho = {rho} not in (0,1)")))
    }
}

fn check_unit(name: &str, u: f64) -> Result<(), MpError> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(MpError::Domain(format!("{name} = {u} not in (0,1)")))
    }
}

/// Bivariate Gaussian copula density in normal-score coordinates.
#[derive(Clone, Copy, Debug)]
pub struct GaussianCopula {
    rho: f64,
    c0: f64,
    k1: f64,
    k2: f64,
}

impl GaussianCopula {
    pub fn new(rho: f64) -> Result<Self, MpError> {
        check_rho(rho)?;
        let s = 1.0 - rho * rho;
        Ok(Self { rho, c0: -0.5 * s.ln(), k1: rho * rho / (2.0 * s), k2: rho / s })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// log c_ρ(Φ(a), Φ(b)).
    #[inline]
    pub fn log_density_z(&self, a: f64, b: f64) -> f64 {
        self.c0 - self.k1 * (a * a + b * b) + self.k2 * a * b
    }

    /// Σ_j log c_ρ(Φ(v_j), Φ(w_j)) with scores clamped to ±Z_CLAMP.
    #[inline]
    pub fn log_product(&self, v: &[f64], w: &[f64]) -> f64 {
        v.iter()
            .zip(w)
            .map(|(&a, &b)| self.log_density_z(a.clamp(-Z_CLAMP, Z_CLAMP), b.clamp(-Z_CLAMP, Z_CLAMP)))
            .sum()
    }
}

/// c_ρ(u, v) = φ₂(Φ⁻¹u, Φ⁻¹v; ρ) / (φ(Φ⁻¹u) φ(Φ⁻¹v)).
pub fn gaussian_copula_density(u: f64, v: f64, rho: f64) -> Result<f64, MpError> {
    check_unit("u", u)?;
    check_unit("v", v)?;
    let c = GaussianCopula::new(rho)?;
    Ok(c.log_density_z(normal::inv_cdf(u), normal::inv_cdf(v)).exp())
}

/// Beta–Bernoulli mixture copula d_ρ(u, v) for label agreement (`matched`)
/// or disagreement.
pub fn bb_mixture_copula(u: f64, v: f64, rho: f64, matched: bool) -> Result<f64, MpError> {
    check_unit("u", u)?;
    check_unit("v", v)?;
    if !(0.0..1.0).contains(&rho) {
        return Err(MpError::Domain(format!("rho = {rho} not in [0,1)")));
    }
    Ok(bb_mixture_unchecked(u, v, rho, matched))
}

#[inline]
pub(crate) fn bb_mixture_unchecked(u: f64, v: f64, rho: f64, matched: bool) -> f64 {
    if matched {
        1.0 - rho + rho * u.min(v) / (u * v)
    } else {
        1.0 - rho + rho * (u - u.min(1.0 - v)) / (u * v)
    }
}

/// α_N = (2 − 1/N)/(N + 1).
pub fn alpha_schedule(n: usize) -> f64 {
    assert!(n >= 1, "alpha_schedule is defined for N >= 1");
    let n = n as f64;
    (2.0 - 1.0 / n) / (n + 1.0)
}

/// Logistic combination α·P/(1 − α + α·P) given log P.
#[inline]
pub(crate) fn localized_weight(alpha: f64, log_p: f64) -> f64 {
    let t = (alpha / (1.0 - alpha)).ln() + log_p;
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// α_N(v, v') with P = Π_j c_ρ(Φ(v_j), Φ(v'_j)), computed in log space.
pub fn alpha_weight(v: &[f64], v_new: &[f64], n: usize, rho: f64) -> Result<f64, MpError> {
    if v.len() != v_new.len() {
        return Err(MpError::Domain(format!("vector lengths differ: {} vs {}", v.len(), v_new.len())));
    }
    if v.iter().chain(v_new).any(|x| x.is_nan()) {
        return Err(MpError::Domain("NaN covariate".into()));
    }
    let c = GaussianCopula::new(rho)?;
    Ok(localized_weight(alpha_schedule(n), c.log_product(v, v_new)))
}
