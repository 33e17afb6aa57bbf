use criterion::{criterion_group, criterion_main, Criterion};
use landau_bench::operators;
use landau_core::kinetic::{chain_states, mixture_apply};
use landau_core::mode::mode_operator_unchecked;
use landau_core::ode::OdeOptions;
use landau_core::spectral::full_spectrum;
use landau_core::{Generator, C64};
use ndarray::Array1;

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assembly");
    g.sample_size(10);
    g.bench_function("n7_gamma0", |b| b.iter(|| operators(7, 0.0).unwrap()));
    g.finish();
}

fn mode_spectrum(c: &mut Criterion) {
    let ops = operators(7, -1.0).unwrap();
    let mut g = c.benchmark_group("mode");
    g.sample_size(10);
    g.bench_function("eig_n7", |b| {
        b.iter(|| {
            let a = mode_operator_unchecked(&ops, [1, 0, 0], 0.1, Generator::FullL);
            full_spectrum(&a).unwrap()
        })
    });
    g.finish();
}

fn chain(c: &mut Criterion) {
    let ops = operators(5, 0.0).unwrap();
    let f0 = Array1::from_elem(ops.dof(), C64::new(0.1, 0.0));
    let times: Vec<f64> = (0..=20).map(|i| 0.25 * i as f64).collect();
    let opts = OdeOptions::default();
    let mut g = c.benchmark_group("chain");
    g.sample_size(10);
    g.bench_function("picard_n5_j4", |b| b.iter(|| chain_states(&ops, [1, 0, 0], 0.1, &f0, 4, &times, &opts).unwrap()));
    g.bench_function("mixture2_n5", |b| b.iter(|| mixture_apply(&f0, 2, &ops, [1, 0, 0], 0.1, &times, &opts).unwrap()));
    g.finish();
}

criterion_group!(benches, assembly, mode_spectrum, chain);
criterion_main!(benches);
