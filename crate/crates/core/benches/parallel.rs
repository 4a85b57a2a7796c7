use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mfcl_core::kernels::InteractionSpec;
use mfcl_core::particles::{simulate_ensemble_full, EnsembleSpec, GaussianSampler};
use mfcl_core::transforms::Coords;

fn ensemble(c: &mut Criterion) {
    let spec = InteractionSpec::gradient(1, 0.0, 2.0).unwrap();
    let ens = EnsembleSpec::new(128, 16, 7, 0.01, Coords::Original);
    let sampler = GaussianSampler { mean: vec![0.0], var: 1.0 };
    let mut group = c.benchmark_group("ensemble_n128_r16");
    group.sample_size(10);
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &parallel, |b, &parallel| {
            b.iter(|| simulate_ensemble_full(&spec, &ens, &sampler, 0.2, &[0.2], &[], false, parallel).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
