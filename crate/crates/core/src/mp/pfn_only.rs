use super::engine::NuisanceDraw;
use super::MpError;
use crate::data::{CausalDataset, CovariateMatrix};
use crate::ppd::{OutcomePpd, PropensityPpd};
use crate::seed;
use rand::Rng;

/// Predictive resampling through the backend itself: draw a pseudo-point from
/// the empirical law, sample its outcome from the current PPD, absorb it, and
/// repeat. The propensity model absorbs a pseudo-label drawn from its own
/// predictive at the same point.
pub fn pfn_only_mp(
    outcome: &dyn OutcomePpd,
    propensity: &dyn PropensityPpd,
    train: &CausalDataset,
    eval: &CovariateMatrix,
    steps: usize,
    draw_seed: u64,
) -> Result<NuisanceDraw, MpError> {
    if eval.rows() == 0 {
        return Err(MpError::NoEvalPoints);
    }
    train.require_both_arms()?;
    let mut rng = seed::rng(draw_seed);
    let mut out: Option<Box<dyn OutcomePpd>> = None;
    let mut prop: Option<Box<dyn PropensityPpd>> = None;
    for _ in 0..steps {
        let i = rng.random_range(0..train.n());
        let (x, a) = (train.x(i), train.treatments()[i]);
        let cur_out: &dyn OutcomePpd = out.as_deref().unwrap_or(outcome);
        let y = cur_out.sample_outcome(x, a, &mut rng)?;
        let next_out = cur_out.absorb(x, a, y)?;
        let cur_prop: &dyn PropensityPpd = prop.as_deref().unwrap_or(propensity);
        let label = rng.random::<f64>() < cur_prop.predictive_prob(x)?;
        let next_prop = cur_prop.absorb(x, label)?;
        out = Some(next_out);
        prop = Some(next_prop);
    }
    let o: &dyn OutcomePpd = out.as_deref().unwrap_or(outcome);
    let p: &dyn PropensityPpd = prop.as_deref().unwrap_or(propensity);
    let mut draw = NuisanceDraw { mu0_at: vec![], mu1_at: vec![], pi_at: vec![], draw_seed, clamp_events: 0 };
    for x in eval.iter_rows() {
        draw.mu0_at.push(o.posterior_mean(x, false)?);
        draw.mu1_at.push(o.posterior_mean(x, true)?);
        draw.pi_at.push(p.predictive_prob(x)?);
    }
    Ok(draw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppd::{BasisConfig, ConjugateConfig, ConjugateLinearBackend, ConstantPropensity};
    use rand_distr::{Distribution, StandardNormal};

    fn toy(n: usize) -> CausalDataset {
        let mut rng = seed::rng(42);
        let mut x = Vec::new();
        let (mut a, mut y) = (Vec::new(), Vec::new());
        for i in 0..n {
            let x0: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            x.push(x0);
            a.push(i % 2 == 0);
            y.push(0.5 + x0 + e);
        }
        CausalDataset::new(CovariateMatrix::new(n, 1, x).unwrap(), a, y).unwrap()
    }

    #[test]
    fn zero_steps_and_determinism() {
        let d = toy(20);
        let o = ConjugateLinearBackend::fit(&ConjugateConfig { basis: BasisConfig::Linear, ..Default::default() }, &d).unwrap();
        let e = CovariateMatrix::new(2, 1, vec![0.0, 1.0]).unwrap();
        let p = ConstantPropensity(0.5);
        let z = pfn_only_mp(&o, &p, &d, &e, 0, 3).unwrap();
        assert_eq!(z.mu1_at[1], o.posterior_mean(&[1.0], true).unwrap());
        assert_eq!(pfn_only_mp(&o, &p, &d, &e, 40, 3).unwrap(), pfn_only_mp(&o, &p, &d, &e, 40, 3).unwrap());
    }

    #[test]
    fn conjugate_resampling_recovers_mean_posterior() {
        let d = toy(16);
        let o = ConjugateLinearBackend::fit(&ConjugateConfig { basis: BasisConfig::Linear, ..Default::default() }, &d).unwrap();
        let e = CovariateMatrix::new(1, 1, vec![0.7]).unwrap();
        let law = o.mean_law(&[0.7], true);
        let p = ConstantPropensity(0.5);
        let b = 500;
        let mut u: Vec<f64> = (0..b)
            .map(|j| law.cdf(pfn_only_mp(&o, &p, &d, &e, 4000, seed::derive_seed(8, j)).unwrap().mu1_at[0]))
            .collect();
        u.sort_by(f64::total_cmp);
        let ks = u
            .iter()
            .enumerate()
            .map(|(i, v)| ((i + 1) as f64 / b as f64 - v).max(v - i as f64 / b as f64))
            .fold(0.0, f64::max);
        assert!(ks < 1.628 / (b as f64).sqrt(), "KS = {ks}");
    }
}
