use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ospc_bench::fixture;
use ospc_core::mp::{CopulaConfig, CouplingVariant, MpSampler};
use ospc_core::ppd::{self, BackendConfig};
use std::hint::black_box;

fn mp_draw(c: &mut Criterion) {
    let mut group = c.benchmark_group("mp_draw");
    group.sample_size(10);
    for n in [200, 1000] {
        let f = fixture(n, 7);
        let cfg = BackendConfig::default();
        let outcome = ppd::fit_outcome(&cfg, &f.train).unwrap();
        let propensity = ppd::fit_propensity(&cfg, &f.train).unwrap();
        for variant in CouplingVariant::ALL {
            let copula = CopulaConfig { variant, steps: 100, ..Default::default() };
            let sampler = MpSampler::new(outcome.as_ref(), propensity.as_ref(), &f.train, f.test.covariates(), &copula).unwrap();
            group.bench_with_input(BenchmarkId::new(variant.as_str(), n), &sampler, |b, s| {
                let mut k = 0u64;
                b.iter(|| {
                    k += 1;
                    black_box(s.draw(k).unwrap())
                })
            });
        }
    }
    group.finish();
}

fn backend_fit(c: &mut Criterion) {
    let f = fixture(2000, 11);
    let cfg = BackendConfig::default();
    c.bench_function("conjugate_fit_n2000", |b| b.iter(|| black_box(ppd::fit_outcome(&cfg, &f.train).unwrap())));
}

criterion_group!(benches, mp_draw, backend_fit);
criterion_main!(benches);
