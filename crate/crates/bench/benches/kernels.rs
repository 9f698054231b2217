use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use dicke_tc::analysis::tc_lifetime;
use dicke_tc::mean_field;
use dicke_tc::quantum::{self, QuantumNumerics};
use dicke_tc::sweep::evaluate_cell;
use dicke_tc::{evolve_dtwa, AnalysisConfig, Drive, DriveProtocol, DtwaRun, InitialStateSpec, ModelParams, Numerics, SweepSpec};

fn point(kappa: f64, ratio: f64, duty: f64, omega_d: f64) -> (ModelParams, Drive) {
    let p = ModelParams::new(1.0, 1.0, kappa, DriveProtocol::binary(ratio, duty, omega_d));
    let d = Drive::clean(p.drive.clone()).unwrap();
    (p, d)
}

fn mean_field_cell(c: &mut Criterion) {
    let spec = SweepSpec::default();
    c.bench_function("mean-field cell, kappa=1", |b| {
        b.iter(|| evaluate_cell(black_box(&spec), 1.0, 0.65, 1.3, 0).unwrap())
    });
}

fn lifetime(c: &mut Criterion) {
    let (p, drive) = point(1.0, 1.1, 0.65, 1.3);
    let init = InitialStateSpec::broken(1.1);
    let s0 = mean_field::initial_state(&init, &p, p.kind()).unwrap();
    let series = mean_field::simulate(p.kind(), &p, &drive, s0, 100, &Numerics::default()).unwrap();
    let t_f = 100.0 * drive.period();
    let cfg = AnalysisConfig::default();
    c.bench_function("tc_lifetime, 100 periods", |b| {
        b.iter(|| tc_lifetime(black_box(&series), 1.3, t_f, &cfg).unwrap())
    });
}

fn lindblad_period(c: &mut Criterion) {
    let (p, drive) = point(1.0, 1.1, 0.5, 1.6);
    let rho = quantum::initial_state(&InitialStateSpec::polarized_x(), 4, Some(16), true).unwrap();
    let q = QuantumNumerics::default();
    c.bench_function("Lindblad, N=4 n_max=16, one period", |b| {
        b.iter(|| quantum::evolve_lindblad(&p, &drive, black_box(&rho), 1, &q).unwrap())
    });
}

fn dtwa_ensemble(c: &mut Criterion) {
    let (p, drive) = point(1.0, 1.1, 0.5, 1.6);
    let run = DtwaRun {
        n_spins: 6,
        n_traj: 16,
        n_periods: 10,
        seed: 1,
    };
    let x = InitialStateSpec::polarized_x();
    c.bench_function("DTWA, 16 trajectories x 10 periods", |b| {
        b.iter(|| evolve_dtwa(p.kind(), &p, &drive, black_box(&x), &run, &Numerics::default()).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = mean_field_cell, lifetime, lindblad_period, dtwa_ensemble
}
criterion_main!(benches);
