//! `psc`: the coherent-state propagator of the Nelson Hamiltonian over the
//! `(T, qx)` plane, semiclassically and exactly.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use psc_core::airy::{self, Contour};
use psc_core::scan::{self, export, ScanConfig, ScanError, ScanGrid};
use psc_core::semiclassical::{k2_single, Family};
use psc_core::trajectory::newton_shoot;
use psc_core::{CoherentLabel, CoherentParams, HarmonicModel, ShootingProblem, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "psc",
    version,
    about = "Semiclassical, uniform and exact coherent-state propagators"
)]
struct Cli {
    /// Config file of `key = value` lines (`#` starts a comment).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides one config key; repeatable, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Full grid: families, K2, uniform surfaces, optional exact reference.
    Scan {
        /// Points per axis.
        #[arg(long)]
        resolution: Option<usize>,
        /// Comma list of k2, uniform, exact (or all).
        #[arg(long)]
        methods: Option<String>,
        /// Per-point table [default: scan.csv].
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
        /// Run metadata and error summary [default: scan.json].
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
    },
    /// One `(T, qx)` point with per-family diagnostics.
    Point {
        #[arg(long = "t", value_name = "T")]
        t: f64,
        #[arg(long)]
        qx: f64,
        /// As for `scan`.
        #[arg(long)]
        methods: Option<String>,
    },
    /// A fixed-`qx` line over the `T` range.
    Cut {
        #[arg(long, default_value_t = 0.58)]
        qx: f64,
        /// Number of `T` samples.
        #[arg(long, default_value_t = 161)]
        samples: usize,
        /// As for `scan`.
        #[arg(long)]
        methods: Option<String>,
        /// Cut CSV; stdout when absent.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Locates and refines the coalescence point of the two families.
    Caustic {
        /// Points per axis of the search grid.
        #[arg(long)]
        resolution: Option<usize>,
        /// Writes the refinement record here.
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
    },
    /// Harmonic and Airy oracles.
    Selftest {
        /// Random harmonic cases.
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Exit statuses: 1 bad configuration, 2 finished but incomplete (gaps,
/// no caustic, failed self-test), 3 I/O.
enum Failure {
    Config(String),
    Incomplete(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Incomplete(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Incomplete(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ScanError> for Failure {
    fn from(e: ScanError) -> Self {
        let m = e.to_string();
        match e {
            ScanError::Io { .. } => Failure::Io(m),
            ScanError::Transfer { .. } | ScanError::NotFound(_) => Failure::Incomplete(m),
            ScanError::Config(_)
            | ScanError::EnergyInfeasible { .. }
            | ScanError::Anchor { .. }
            | ScanError::Exact(_) => Failure::Config(m),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ScanConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            ScanConfig::parse(&text)?
        }
        None => ScanConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn apply(cfg: &mut ScanConfig, resolution: Option<usize>, methods: Option<&str>) -> Result<(), Failure> {
    if let Some(n) = resolution {
        cfg.set("resolution", &n.to_string())?;
    }
    if let Some(m) = methods {
        cfg.set("methods", m)?;
    }
    cfg.validate()?;
    Ok(())
}

fn gaps_failure(grid: &ScanGrid) -> Result<(), Failure> {
    let gaps = grid.gaps().len();
    if gaps == 0 {
        Ok(())
    } else {
        Err(Failure::Incomplete(format!(
            "{gaps} of {} points lack a second family",
            grid.points.len()
        )))
    }
}

fn fmt_c(z: C64) -> String {
    format!("{:+.10e} {:+.10e}i (|.| = {:.10e})", z.re, z.im, z.norm())
}

fn run_scan_cmd(
    mut cfg: ScanConfig,
    resolution: Option<usize>,
    methods: Option<&str>,
    csv: Option<PathBuf>,
    json: Option<PathBuf>,
) -> Result<(), Failure> {
    apply(&mut cfg, resolution, methods)?;
    let csv = csv.or(cfg.out_csv.clone()).unwrap_or_else(|| "scan.csv".into());
    let json = json.or(cfg.out_json.clone()).unwrap_or_else(|| "scan.json".into());
    let grid = scan::run_scan(&cfg)?;
    let caustic = scan::locate_caustic(&grid);
    export::write_csv(&grid, &csv)?;
    export::write_json(&grid, Some(&caustic), &json)?;
    if let (Some(qx), Some(path)) = (cfg.cut_qx, cfg.out_cut.as_ref()) {
        let cut = scan::run_cut(&cfg, qx, cfg.n_t)?;
        export::write_cut(&cut, path)?;
    }
    println!("points     {}", grid.points.len());
    println!("gaps       {}", grid.gaps().len());
    if let Some(e) = &grid.election {
        println!(
            "elected    surface {} (scores {:?}, {} far points)",
            e.surface, e.scores, e.n_far
        );
        if let Some(w) = &e.warning {
            println!("warning    {w}");
        }
    }
    match &caustic {
        Ok(c) => println!("caustic    T = {:.7}, qx = {:.7}, |B| = {:.2e}", c.t, c.qx, c.abs_b),
        Err(e) => println!("caustic    {e}"),
    }
    if let Some(s) = export::error_stats(&grid.rel_errors()) {
        println!(
            "rel err    median {:.4} q90 {:.4} max {:.4}; <5% {:.3}, <10% {:.3}",
            s.q50, s.q90, s.max, s.frac_below_5pct, s.frac_below_10pct
        );
    }
    println!("wrote      {} and {}", csv.display(), json.display());
    gaps_failure(&grid)
}

fn run_point_cmd(mut cfg: ScanConfig, t: f64, qx: f64, methods: Option<&str>) -> Result<(), Failure> {
    apply(&mut cfg, None, methods)?;
    let grid = scan::run_grid(&cfg, &[qx], &[t])?;
    let p = &grid.points[0];
    println!("T = {t}, qx = {qx}");
    println!("q = {:?}, p = {:?}", p.point.q, p.point.p);
    for f in [Family::A, Family::B] {
        let Some(fp) = p.family(f) else {
            println!("family {f:?}: not found");
            continue;
        };
        let c = &fp.contribution;
        println!("family {f:?}:");
        let v0 = fp.trajectory.v0;
        println!("  v0        ({}, {})", fmt_c(v0[0]), fmt_c(v0[1]));
        println!("  S         {}", fmt_c(c.action));
        println!("  G         {}", fmt_c(c.g));
        println!("  det Mvv   {}", fmt_c(c.det_mvv));
        println!(
            "  F0        {:+.6e} ({})",
            c.f0,
            if c.included { "included" } else { "excluded" }
        );
        println!("  K2 term   {}", fmt_c(c.value));
    }
    if let Some(k) = p.k2 {
        println!("K2         {} from {:?}", fmt_c(k), p.k2_members);
    }
    if let Some(b) = p.abs_b() {
        println!("|B|        {b:.6e}");
    }
    if let Some(k) = p.kun {
        for (j, v) in k.iter().enumerate() {
            println!("Kun_{}      {}", j + 1, fmt_c(*v));
        }
    }
    if let (Some(k), Some(e)) = (p.kun_elected, &grid.election) {
        // a lone point is usually near the caustic, so the vote falls back to it
        let basis = if p.abs_b().is_some_and(|b| b > psc_core::uniform::FAR_FROM_CAUSTIC) {
            "|B| above threshold"
        } else {
            "closest to K2 here"
        };
        println!("Kun elected {} (surface {}, {basis})", fmt_c(k), e.surface);
    }
    if let Some(k) = p.k_exact {
        println!("K exact    {}", fmt_c(k));
    }
    if let Some(e) = p.rel_err {
        println!("rel err    {e:.6e}");
    }
    gaps_failure(&grid)
}

fn run_cut_cmd(
    mut cfg: ScanConfig,
    qx: f64,
    samples: usize,
    methods: Option<&str>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    apply(&mut cfg, None, methods)?;
    if samples < 2 {
        return Err(Failure::Config("a cut needs at least 2 samples".into()));
    }
    let grid = scan::run_cut(&cfg, qx, samples)?;
    match out.or(cfg.out_cut.clone()) {
        Some(path) => {
            export::write_cut(&grid, &path)?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            export::write_cut_to(&grid, stdout.lock()).map_err(|e| Failure::Io(format!("stdout: {e}")))?;
        }
    }
    gaps_failure(&grid)
}

fn run_caustic_cmd(mut cfg: ScanConfig, resolution: Option<usize>, json: Option<&Path>) -> Result<(), Failure> {
    apply(&mut cfg, resolution, Some("k2"))?;
    let grid = scan::run_scan(&cfg)?;
    let c = scan::locate_caustic(&grid)?;
    println!(
        "grid min   T = {}, qx = {}, |B| = {:.3e}",
        c.grid_t, c.grid_qx, c.grid_abs_b
    );
    println!("refined    T = {:.9}, qx = {:.9}", c.t, c.qx);
    println!(
        "|B|        {:.3e} ({})",
        c.abs_b,
        if c.converged { "converged" } else { "not converged" }
    );
    println!("|Sb - Sa|  {:.3e}", c.action_gap);
    println!("|v0 diff|  {:.3e}", c.dv0);
    println!("|det Mvv|  {:.3e} {:.3e}", c.abs_det_a, c.abs_det_b);
    if let Some(path) = json {
        let mut w = std::fs::File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let text = psc_core::scan::export::caustic_json(&c);
        writeln!(w, "{text}").map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    }
    if c.converged {
        Ok(())
    } else {
        Err(Failure::Incomplete("caustic refinement did not converge".into()))
    }
}

/// Largest `|K2 - K|` for the matched harmonic model at random labels and times.
fn harmonic_oracle(samples: usize, rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let cp = CoherentParams::new(0.2, 0.3, 0.05).map_err(|e| e.to_string())?;
    let model = HarmonicModel::matched(cp);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let mut c = || C64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let z1 = CoherentLabel::new(c(), c());
        let z2 = CoherentLabel::new(c(), c());
        let t = rng.gen_range(0.0..10.0);
        let prob = ShootingProblem {
            z_dprime_star: z2.conj(),
            ..ShootingProblem::diagonal(&model, z1, t)
        };
        let tr = newton_shoot(&prob, z2.conj()).map_err(|e| e.to_string())?;
        let k = k2_single(&tr, Family::A, &z1, &z2, cp.hbar(), None).map_err(|e| e.to_string())?;
        worst = worst.max((k.value - model.propagator(&z1, &z2, t)).norm());
    }
    Ok(worst)
}

/// Largest relative mismatch between the Airy routines and quadrature, and
/// the largest `|f1 + f2 + f3|` relative to the terms. Arguments on the
/// Stokes directions, where the steepest-descent paths run into each other,
/// are skipped.
fn airy_oracle(samples: usize, rng: &mut ChaCha8Rng) -> (f64, f64, usize) {
    use std::f64::consts::PI;
    let rel = |a: C64, b: C64| (a - b).norm() / b.norm().max(1e-300);
    let stokes = [0.0, 2.0 * PI / 3.0, -2.0 * PI / 3.0];
    let (mut worst, mut connection, mut failed) = (0.0_f64, 0.0_f64, 0);
    let mut checked = 0;
    while checked < samples {
        let xi = C64::from_polar(rng.gen_range(0.0..20.0), rng.gen_range(-PI..PI));
        if xi.norm() >= 1.0 && stokes.iter().any(|s| (xi.arg() - s).abs() < 0.05) {
            continue;
        }
        let vals = Contour::ALL.map(|j| airy::contour_fn(j, xi));
        let sum = vals
            .iter()
            .fold((C64::default(), C64::default()), |s, v| (s.0 + v.0, s.1 + v.1));
        let scale = vals.iter().map(|v| v.0.norm().max(v.1.norm())).fold(0.0, f64::max);
        connection = connection.max(sum.0.norm().max(sum.1.norm()) / scale);
        let j = Contour::ALL[checked % 3];
        match airy::quadrature::contour_integral(j, xi) {
            Ok(q) => {
                let (f, d) = vals[j.index() - 1];
                worst = worst.max(rel(f, q.0)).max(rel(d, q.1));
            }
            Err(_) => failed += 1,
        }
        checked += 1;
    }
    (worst, connection, failed)
}

fn run_selftest(samples: usize, seed: u64) -> Result<(), Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = true;
    match harmonic_oracle(samples, &mut rng) {
        Ok(w) => {
            let pass = w < 1e-8;
            ok &= pass;
            println!(
                "{} harmonic: max |K2 - K| = {w:.3e} over {samples} samples",
                verdict(pass)
            );
        }
        Err(e) => {
            ok = false;
            println!("FAIL harmonic: {e}");
        }
    }
    let (worst, connection, failed) = airy_oracle(100, &mut rng);
    let pass = worst < 1e-9 && failed == 0;
    ok &= pass;
    println!(
        "{} airy: max mismatch against quadrature {worst:.3e} ({failed} quadratures failed)",
        verdict(pass)
    );
    let pass = connection < 1e-10;
    ok &= pass;
    println!("{} airy: max |f1 + f2 + f3| = {connection:.3e}", verdict(pass));
    if ok {
        Ok(())
    } else {
        Err(Failure::Incomplete("self-test failed".into()))
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    match cli.cmd {
        Cmd::Scan {
            resolution,
            methods,
            csv,
            json,
        } => run_scan_cmd(cfg, resolution, methods.as_deref(), csv, json),
        Cmd::Point { t, qx, methods } => run_point_cmd(cfg, t, qx, methods.as_deref()),
        Cmd::Cut {
            qx,
            samples,
            methods,
            out,
        } => run_cut_cmd(cfg, qx, samples, methods.as_deref(), out),
        Cmd::Caustic { resolution, json } => run_caustic_cmd(cfg, resolution, json.as_deref()),
        Cmd::Selftest { samples, seed } => run_selftest(samples, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("psc: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
