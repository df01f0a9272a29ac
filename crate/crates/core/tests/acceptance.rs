//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout. The
//! process fails when a criterion outside `KNOWN_UNATTAINABLE` fails, or
//! when one of those starts passing (so the list cannot go stale).

use std::time::Instant;

use psc_core::airy::{self, Contour};
use psc_core::exact::{k_exact, k_exact_series, nelson_potential, GridSpec};
use psc_core::phase::overlap;
use psc_core::scan::{self, continue_loop, locate_caustic, run_cut, PointRecord, ScanConfig, ScanGrid};
use psc_core::semiclassical::{k2_single, Family};
use psc_core::trajectory::newton_shoot;
use psc_core::{CoherentLabel, CoherentParams, HarmonicModel, ShootingProblem, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria whose thresholds the physics here does not allow; the reasons
/// are recorded with the project decisions.
const KNOWN_UNATTAINABLE: &[usize] = &[2, 6, 7];

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
    seconds: f64,
}

fn criterion(id: usize, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t0 = Instant::now();
    let (pass, detail) = f();
    let o = Outcome {
        id,
        pass,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    };
    println!(
        "{} criterion {:>2}: {} [{:.1} s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.id,
        o.detail,
        o.seconds
    );
    o
}

fn grid_config() -> ScanConfig {
    let mut cfg = ScanConfig::default();
    cfg.n_qx = 41;
    cfg.n_t = 41;
    cfg.methods = "all".parse().unwrap();
    cfg
}

fn harmonic() -> (bool, String) {
    let cp = CoherentParams::new(0.2, 0.3, 0.05).unwrap();
    let model = HarmonicModel::matched(cp);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let mut c = || C64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let z1 = CoherentLabel::new(c(), c());
        let z2 = CoherentLabel::new(c(), c());
        let t = rng.gen_range(0.0..10.0);
        let prob = ShootingProblem {
            z_dprime_star: z2.conj(),
            ..ShootingProblem::diagonal(&model, z1, t)
        };
        let k = newton_shoot(&prob, z2.conj())
            .ok()
            .and_then(|tr| k2_single(&tr, Family::A, &z1, &z2, cp.hbar(), None).ok());
        match k {
            Some(k) => worst = worst.max((k.value - model.propagator(&z1, &z2, t)).norm()),
            None => return (false, format!("no converged trajectory at T = {t}")),
        }
    }
    (worst < 1e-8, format!("max |K2 - K| = {worst:.2e} over 50 samples"))
}

fn zero_time(cfg: &ScanConfig) -> (bool, String) {
    let model = cfg.model();
    let cp = cfg.coherent();
    let t = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_k2, mut worst_ex) = (0.0_f64, 0.0_f64);
    for _ in 0..20 {
        let qx = rng.gen_range(cfg.qx_range[0]..cfg.qx_range[1]);
        let z = cfg.resolve_point(qx).unwrap().z;
        let want = overlap(&z, &z);
        let prob = ShootingProblem::diagonal(&model, z, t);
        let k2 = newton_shoot(&prob, z.conj())
            .ok()
            .and_then(|tr| k2_single(&tr, Family::A, &z, &z, cfg.hbar, None).ok());
        let Some(k2) = k2 else {
            return (false, format!("no trajectory at qx = {qx}"));
        };
        worst_k2 = worst_k2.max((k2.value - want).norm());
        let ex = k_exact(&z, &z, t, &cp, &cfg.exact_grid, nelson_potential(cfg.nelson())).unwrap();
        worst_ex = worst_ex.max((ex - want).norm());
    }
    (
        worst_k2 < 1e-5 && worst_ex < 1e-5,
        format!("max |K - <z|z>| at T = 1e-6: K2 {worst_k2:.3e}, exact {worst_ex:.3e}"),
    )
}

fn trajectories(grid: &ScanGrid) -> impl Iterator<Item = &psc_core::TrajectoryResult> {
    grid.points
        .iter()
        .flat_map(|p| p.families.iter().flatten().map(|fp| &fp.trajectory))
}

fn liouville(grid: &ScanGrid) -> (bool, String) {
    let all: Vec<_> = trajectories(grid).collect();
    if all.len() < 20 {
        return (false, format!("only {} trajectories", all.len()));
    }
    let step = all.len() / 20;
    let worst = (0..20)
        .map(|k| (all[k * step].det_m() - 1.0).norm())
        .fold(0.0, f64::max);
    (
        worst < 1e-8,
        format!("max |det M - 1| = {worst:.2e} on 20 trajectories"),
    )
}

fn two_families(grid: &ScanGrid) -> (bool, String) {
    let n = grid.points.len();
    let complete = grid.points.iter().filter(|p| p.complete()).count();
    let frac = complete as f64 / n as f64;
    (
        frac >= 0.99,
        format!(
            "{complete}/{n} points with two distinct families ({:.2}%)",
            100.0 * frac
        ),
    )
}

/// Number of 4-connected components of the marked grid points.
fn components(grid: &ScanGrid, marked: &[bool]) -> usize {
    let n_t = grid.t_values.len();
    let n_qx = grid.qx_values.len();
    let mut seen = vec![false; marked.len()];
    let mut count = 0;
    for s in 0..marked.len() {
        if !marked[s] || seen[s] {
            continue;
        }
        count += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(p) = stack.pop() {
            let (iq, it) = (p / n_t, p % n_t);
            let around = [
                (it > 0).then(|| p - 1),
                (it + 1 < n_t).then(|| p + 1),
                (iq > 0).then(|| p - n_t),
                (iq + 1 < n_qx).then(|| p + n_t),
            ];
            for q in around.into_iter().flatten() {
                if marked[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
    }
    count
}

fn stokes_asymmetry(grid: &ScanGrid) -> (bool, String) {
    let f0 = |p: &PointRecord, f: Family| p.family(f).map(|fp| fp.contribution.f0);
    let neg_a = grid
        .points
        .iter()
        .filter(|p| f0(p, Family::A).is_some_and(|v| v < 0.0))
        .count();
    let neg_b: Vec<bool> = grid
        .points
        .iter()
        .map(|p| f0(p, Family::B).is_some_and(|v| v < 0.0))
        .collect();
    let n_b = neg_b.iter().filter(|&&b| b).count();
    let parts = components(grid, &neg_b);
    (
        neg_a == 0 && n_b > 0 && parts == 1,
        format!("F0(f_a) < 0 at {neg_a} points; F0(f_b) < 0 at {n_b} points in {parts} component(s)"),
    )
}

fn caustic_signature(cfg: &ScanConfig, grid: &ScanGrid) -> (bool, String) {
    let mut line_cfg = cfg.clone();
    line_cfg.methods = "k2,uniform".parse().unwrap();
    let cut = run_cut(&line_cfg, 0.58, 161).unwrap();
    let min_root = |f: Family| {
        cut.points
            .iter()
            .filter_map(|p| p.family(f))
            .map(|fp| fp.contribution.det_mvv.norm().sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let (ma, mb) = (min_root(Family::A), min_root(Family::B));
    let max_kun = cut
        .points
        .iter()
        .filter_map(|p| p.kun_elected)
        .map(|k| k.norm())
        .fold(0.0, f64::max);
    let (refined, interior, b) = match locate_caustic(grid) {
        Ok(c) => {
            let inside =
                c.t > cfg.t_range[0] && c.t < cfg.t_range[1] && c.qx > cfg.qx_range[0] && c.qx < cfg.qx_range[1];
            (
                c.abs_b < 1e-6,
                inside,
                format!("|B| = {:.1e} at ({:.5}, {:.5})", c.abs_b, c.t, c.qx),
            )
        }
        Err(e) => (false, false, e.to_string()),
    };
    (
        ma < 0.05 && mb < 0.05 && refined && interior && max_kun < 10.0,
        format!("min |det Mvv|^1/2 on qx = 0.58: f_a {ma:.3}, f_b {mb:.3}; caustic {b}; max |Kun| = {max_kun:.3}"),
    )
}

fn exact_agreement(grid: &ScanGrid) -> (bool, String) {
    match scan::error_stats(&grid.rel_errors()) {
        Some(s) => (
            s.frac_below_5pct >= 0.90 && s.frac_below_10pct >= 0.98,
            format!(
                "{} points: <5% on {:.1}%, <10% on {:.1}% (median {:.3}, max {:.3})",
                s.n,
                100.0 * s.frac_below_5pct,
                100.0 * s.frac_below_10pct,
                s.q50,
                s.max
            ),
        ),
        None => (false, "no exact values".into()),
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    Some(scan::export::quantile(&v, 0.5))
}

fn asymptotic_merger(grid: &ScanGrid) -> (bool, String) {
    let dev = |lo: f64, hi: f64| {
        grid.points
            .iter()
            .filter_map(|p| Some((p.abs_b()?, p.kun_elected?, p.k2?)))
            .filter(|&(b, _, _)| b > lo && b <= hi)
            .map(|(_, kun, k2)| (kun.norm() - k2.norm()).abs() / k2.norm())
            .collect::<Vec<_>>()
    };
    let all = dev(2.0, f64::INFINITY);
    let n_all = all.len();
    let Some(m) = median(all) else {
        return (false, "no points with |B| > 2".into());
    };
    let bands = [(2.0, 4.0), (4.0, 8.0), (8.0, f64::INFINITY)];
    let meds: Vec<(usize, Option<f64>)> = bands
        .iter()
        .map(|&(lo, hi)| {
            let d = dev(lo, hi);
            (d.len(), median(d))
        })
        .collect();
    let present: Vec<f64> = meds.iter().filter_map(|m| m.1).collect();
    let monotone = present.windows(2).all(|w| w[1] < w[0]);
    let bands_txt: Vec<String> = meds
        .iter()
        .zip(["2-4", "4-8", ">8"])
        .map(|((n, m), name)| match m {
            Some(m) => format!("{name}: {m:.4} (n = {n})"),
            None => format!("{name}: empty"),
        })
        .collect();
    (
        m < 1e-2 && monotone,
        format!(
            "median over {n_all} points with |B| > 2 = {m:.4}; bands {}",
            bands_txt.join(", ")
        ),
    )
}

fn airy_oracle() -> (bool, String) {
    use std::f64::consts::PI;
    let rel = |a: C64, b: C64| (a - b).norm() / b.norm().max(1e-300);
    // the quadrature's steepest-descent paths collide on the Stokes directions
    let stokes = [0.0, 2.0 * PI / 3.0, -2.0 * PI / 3.0];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst, mut connection) = (0.0_f64, 0.0_f64);
    let mut checked = 0;
    while checked < 100 {
        let xi = C64::from_polar(rng.gen_range(0.0..20.0), rng.gen_range(-PI..PI));
        if xi.norm() >= 1.0 && stokes.iter().any(|s| (xi.arg() - s).abs() < 0.05) {
            continue;
        }
        let vals = Contour::ALL.map(|j| airy::contour_fn(j, xi));
        let scale = vals.iter().map(|v| v.0.norm().max(v.1.norm())).fold(0.0, f64::max);
        let s0: C64 = vals.iter().map(|v| v.0).sum();
        let s1: C64 = vals.iter().map(|v| v.1).sum();
        connection = connection.max(s0.norm().max(s1.norm()) / scale);
        let j = Contour::ALL[checked % 3];
        match airy::quadrature::contour_integral(j, xi) {
            Ok((q, dq)) => {
                let (f, d) = vals[j.index() - 1];
                worst = worst.max(rel(f, q)).max(rel(d, dq));
            }
            Err(e) => return (false, format!("quadrature failed at {xi}: {e}")),
        }
        checked += 1;
    }
    (
        worst < 1e-9 && connection < 1e-10,
        format!("max rel mismatch vs quadrature {worst:.2e}; max |f1 + f2 + f3| / scale {connection:.2e}"),
    )
}

fn mobius(cfg: &ScanConfig, grid: &ScanGrid) -> (bool, String) {
    let c = match locate_caustic(grid) {
        Ok(c) => c,
        Err(e) => return (false, e.to_string()),
    };
    let model = cfg.model();
    let opts = scan::shooting_options(cfg);
    let make = |t: f64, qx: f64| ShootingProblem {
        opts,
        ..ShootingProblem::diagonal(&model, cfg.resolve_point(qx).unwrap().z, t)
    };
    let around = |t0: f64, t1: f64, q0: f64, q1: f64| -> Result<(f64, f64), String> {
        let corners = [(t0, q0), (t1, q0), (t1, q1), (t0, q1)];
        let start = scan::run_grid(cfg, &[q0], &[t0]).map_err(|e| e.to_string())?;
        let p = &start.points[0];
        let (Some(a), Some(b)) = (p.family(Family::A), p.family(Family::B)) else {
            return Err(format!("no two families at ({t0}, {q0})"));
        };
        let end = continue_loop(&make, &corners, &a.trajectory, 40).map_err(|e| e.to_string())?;
        let d = |x: &psc_core::TrajectoryResult| (0..2).map(|k| (end.v0[k] - x.v0[k]).norm()).fold(0.0, f64::max);
        Ok((d(&a.trajectory), d(&b.trajectory)))
    };
    let (dt, dq) = (0.1, 0.05);
    let enclosing = around(c.t - dt, c.t + dt, c.qx - dq, c.qx + dq);
    let away = around(7.6, 7.8, 0.8, 0.9);
    match (enclosing, away) {
        (Ok((ea, eb)), Ok((aa, ab))) => (
            eb < 1e-6 && ea > 1e-3 && aa < 1e-6 && ab > 1e-3,
            format!(
                "loop around caustic ends {eb:.1e} from the other family ({ea:.1e} from start); \
                 loop away ends {aa:.1e} from the start family"
            ),
        ),
        (Err(e), _) | (_, Err(e)) => (false, e),
    }
}

fn exact_convergence(cfg: &ScanConfig, grid: &ScanGrid) -> (bool, String) {
    let cp = cfg.coherent();
    let base = cfg.exact_grid;
    let fine = GridSpec {
        n: [2 * base.n[0], 2 * base.n[1]],
        dt: 0.5 * base.dt,
        ..base
    };
    let times = [cfg.t_range[0], cfg.t_range[1]];
    let n_qx = grid.qx_values.len();
    let mut worst = 0.0_f64;
    let mut samples = 0;
    for iq in (0..n_qx).step_by((n_qx - 1) / 4) {
        let z = grid.at(iq, 0).point.z;
        let hi = k_exact_series(&z, &z, &times, &cp, &fine, nelson_potential(cfg.nelson())).unwrap();
        for (k, it) in [0, grid.t_values.len() - 1].into_iter().enumerate() {
            let lo = grid.at(iq, it).k_exact.expect("exact computed");
            worst = worst.max((hi[k].norm() - lo.norm()).abs());
            samples += 1;
        }
    }
    (
        worst < 1e-4 && samples == 10,
        format!(
            "max ||K| change| {worst:.2e} over {samples} samples ({}^2, dt {} vs {}^2, dt {})",
            base.n[0], base.dt, fine.n[0], fine.dt
        ),
    )
}

fn main() {
    let started = Instant::now();
    let cfg = grid_config();
    let mut out = Vec::new();
    out.push(criterion(1, harmonic));
    out.push(criterion(2, || zero_time(&cfg)));

    println!("running the {}x{} scan with exact reference", cfg.n_qx, cfg.n_t);
    let t0 = Instant::now();
    let grid = scan::run_scan(&cfg).expect("scan");
    println!("scan done [{:.1} s]", t0.elapsed().as_secs_f64());

    out.push(criterion(3, || liouville(&grid)));
    out.push(criterion(4, || two_families(&grid)));
    out.push(criterion(5, || stokes_asymmetry(&grid)));
    out.push(criterion(6, || caustic_signature(&cfg, &grid)));
    out.push(criterion(7, || exact_agreement(&grid)));
    out.push(criterion(8, || asymptotic_merger(&grid)));
    out.push(criterion(9, airy_oracle));
    out.push(criterion(10, || mobius(&cfg, &grid)));
    out.push(criterion(11, || exact_convergence(&cfg, &grid)));

    let passed = out.iter().filter(|o| o.pass).count();
    println!(
        "{passed}/{} criteria pass [{:.0} s total]",
        out.len(),
        started.elapsed().as_secs_f64()
    );
    let unexpected: Vec<usize> = out
        .iter()
        .filter(|o| o.pass == KNOWN_UNATTAINABLE.contains(&o.id))
        .map(|o| o.id)
        .collect();
    if !unexpected.is_empty() {
        eprintln!("criteria with unexpected outcome: {unexpected:?} (expected failures: {KNOWN_UNATTAINABLE:?})");
        std::process::exit(1);
    }
}
