use criterion::{black_box, criterion_group, criterion_main, Criterion};
use psc_core::airy::{self, Contour};
use psc_core::exact::{k_exact_series, nelson_potential, GridSpec};
use psc_core::scan::{run_cut, ScanConfig};
use psc_core::trajectory::newton_shoot;
use psc_core::{ShootingProblem, C64};

fn airy_functions(c: &mut Criterion) {
    let xs: Vec<C64> = (0..64)
        .map(|k| C64::from_polar(0.3 * k as f64, 0.37 * k as f64))
        .collect();
    c.bench_function("airy_contour_fn_64", |b| {
        b.iter(|| {
            for &x in &xs {
                black_box(airy::contour_fn(Contour::J2, x));
            }
        })
    });
}

fn shooting(c: &mut Criterion) {
    let cfg = ScanConfig::default();
    let model = cfg.model();
    let z = cfg.resolve_point(0.6).unwrap().z;
    let prob = ShootingProblem::diagonal(&model, z, 7.5);
    let seed = newton_shoot(&prob, z.conj()).map(|r| r.v0).unwrap_or(z.conj());
    c.bench_function("newton_shoot_converged_seed", |b| {
        b.iter(|| black_box(newton_shoot(&prob, seed).ok()))
    });
}

fn line_cut(c: &mut Criterion) {
    let cfg = ScanConfig::default();
    let mut g = c.benchmark_group("scan");
    g.sample_size(10);
    g.bench_function("cut_qx058_41", |b| {
        b.iter(|| black_box(run_cut(&cfg, 0.58, 41).unwrap()))
    });
    g.finish();
}

fn exact_column(c: &mut Criterion) {
    let cfg = ScanConfig::default();
    let cp = cfg.coherent();
    let z = cfg.resolve_point(0.6).unwrap().z;
    let gs = GridSpec::square(4.0, 128, 2e-3);
    let times = [0.5, 1.0];
    let mut g = c.benchmark_group("exact");
    g.sample_size(10);
    g.bench_function("split_operator_128_t1", |b| {
        b.iter(|| black_box(k_exact_series(&z, &z, &times, &cp, &gs, nelson_potential(cfg.nelson())).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, airy_functions, shooting, line_cut, exact_column);
criterion_main!(benches);
