use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use granular_core::background::KernelParams;
use granular_core::simulator::{self, ParticleEnsemble};
use granular_core::spectral::{default_grid, discretize_l, reduce_kernel_radial, spectral_gap};
use granular_core::{BathParams, SimConfig};

fn dsmc_step(c: &mut Criterion) {
    let bath = BathParams::centered(1.0, 0.5).unwrap();
    let config = SimConfig::new(0.8, bath, 100_000, 1).unwrap();
    let ensemble = ParticleEnsemble::initial(&config).unwrap();
    c.bench_function("dsmc_step_n1e5", |b| {
        b.iter_batched_ref(
            || ensemble.clone(),
            |ens| simulator::step(ens, &config).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn radial_reduction(c: &mut Criterion) {
    let bath = BathParams::centered(1.0, 0.5).unwrap();
    let kp = KernelParams::calibrate(&bath).unwrap();
    let grid = default_grid(&bath).unwrap();
    let mut group = c.benchmark_group("spectral");
    group.sample_size(10);
    group.bench_function("radial_reduction_200", |b| b.iter(|| reduce_kernel_radial(&kp, &grid).unwrap()));
    let op = discretize_l(&grid, &bath).unwrap();
    group.bench_function("eigensolve_200", |b| b.iter(|| spectral_gap(&op).unwrap()));
    group.finish();
}

criterion_group!(benches, dsmc_step, radial_reduction);
criterion_main!(benches);
