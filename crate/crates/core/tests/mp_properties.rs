use ospc_core::data::{generate_synthetic, CovariateMatrix, DgpSpec};
use ospc_core::mp::{CopulaConfig, CouplingVariant, MpSampler, NuisanceDraw};
use ospc_core::ppd::{fit_outcome, BackendConfig, ConstantPropensity};

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let c: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|x| (x - mb).powi(2)).sum();
    c / (va * vb).sqrt()
}

fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn draws(variant: CouplingVariant, rho: f64, b: usize, eval: &CovariateMatrix) -> Vec<NuisanceDraw> {
    let (data, _) = generate_synthetic(&DgpSpec::new(500, 25, 3)).unwrap();
    let outcome = fit_outcome(&BackendConfig::default(), &data).unwrap();
    let cfg = CopulaConfig { rho, variant, draws: b, ..Default::default() };
    MpSampler::new(outcome.as_ref(), &ConstantPropensity(0.5), &data, eval, &cfg).unwrap().draw_many(11, 1).unwrap()
}

#[test]
fn variants_share_pointwise_marginals() {
    let eval = CovariateMatrix::from_rows(&[vec![0.3; 25]]).unwrap();
    let b = 1000;
    let sets: Vec<Vec<f64>> =
        CouplingVariant::ALL.iter().map(|&v| draws(v, 0.5, b, &eval).iter().map(|d| d.mu1_at[0]).collect()).collect();
    let crit = 1.628 * (2.0 / b as f64).sqrt();
    for i in 0..3 {
        for j in i + 1..3 {
            let ks = ks_two_sample(&sets[i], &sets[j]);
            assert!(ks < crit, "{:?} vs {:?}: KS {ks} >= {crit}", CouplingVariant::ALL[i], CouplingVariant::ALL[j]);
        }
    }
}

#[test]
fn coupling_orders_cross_point_correlation() {
    let eval = CovariateMatrix::from_rows(&[vec![-0.5; 25], vec![0.5; 25]]).unwrap();
    let c = |v| {
        let d = draws(v, 0.2, 400, &eval);
        let a: Vec<f64> = d.iter().map(|x| x.mu0_at[0]).collect();
        let b: Vec<f64> = d.iter().map(|x| x.mu0_at[1]).collect();
        corr(&a, &b)
    };
    let (ind, par, smooth) = (c(CouplingVariant::XIndependent), c(CouplingVariant::XParallel), c(CouplingVariant::Smooth));
    assert!(ind.abs() < 0.15, "independent {ind}");
    assert!(smooth - ind > 0.1 && par - smooth > 0.1, "independent {ind}, smooth {smooth}, parallel {par}");
}
