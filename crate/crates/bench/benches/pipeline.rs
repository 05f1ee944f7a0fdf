use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mor_bench::{dataset, directions, model, SIGMAS};
use mor_core::h2;
use mor_core::irka;
use mor_core::loewner;
use mor_core::{Complex64, TimeSeries, TransferFunction};

fn transfer(c: &mut Criterion) {
    let mut group = c.benchmark_group("apply_tf");
    for n in [12, 20] {
        let m = model(n);
        let (ps, _) = directions(&m);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| m.apply_tf(black_box(SIGMAS[2]), &ps[0]).unwrap())
        });
    }
    group.finish();
}

fn reduction(c: &mut Criterion) {
    let m = model(12);
    c.bench_function("collect_r4", |b| b.iter(|| dataset(&m)));
    let data = dataset(&m);
    c.bench_function("assemble_r4", |b| b.iter(|| loewner::assemble(black_box(&data)).unwrap()));
    let rom = loewner::assemble(&data).unwrap();
    c.bench_function("pole_residue_r4", |b| b.iter(|| rom.pole_residue().unwrap()));
}

fn norms(c: &mut Criterion) {
    let m = model(12);
    c.bench_function("h2_closed_n12", |b| b.iter(|| m.h2_norm_squared_closed().unwrap()));
    c.bench_function("h2_quadrature_n12", |b| b.iter(|| h2::h2_norm_squared_quadrature(&m).unwrap()));
}

fn iteration(c: &mut Criterion) {
    let m = model(12);
    let (ps, qs) = directions(&m);
    let points = [Complex64::new(1.0, 0.0), Complex64::new(10.0, 0.0)];
    c.bench_function("irka_step_r2", |b| b.iter(|| irka::step(&m, &points, &ps[..2], &qs[..2], false).unwrap()));
}

fn simulation(c: &mut Criterion) {
    let m = model(12);
    let (ps, _) = directions(&m);
    let u = TimeSeries::sample(0.01, 2.0, |t| ps[0].scaled(Complex64::new(t.sin(), 0.0))).unwrap();
    let rom = loewner::assemble(&dataset(&m)).unwrap();
    c.bench_function("simulate_full_n12", |b| b.iter(|| m.simulate(&u, 2.0).unwrap()));
    c.bench_function("simulate_rom_r4", |b| b.iter(|| rom.simulate(&u, 2.0).unwrap()));
}

criterion_group!(benches, transfer, reduction, norms, iteration, simulation);
criterion_main!(benches);
