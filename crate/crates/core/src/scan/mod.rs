//! Scans of the `(T, qx)` plane: family continuation, `K2`, the uniform
//! surfaces and the exact reference on one grid, plus caustic location and
//! file output.

pub mod caustic;
pub mod config;
pub mod export;
pub mod labels;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{k_exact_series, ExactError};
use crate::linalg::{max_abs, sub2, C2};
use crate::semiclassical::{k2_combine, k2_single, matched_prefactor, Contribution, Family, EPS_STOKES};
use crate::trajectory::{
    continue_family, continue_segment, find_roots, multistart_seeds, ShootingOptions, ShootingProblem, TrajectoryError,
    TrajectoryResult,
};
use crate::uniform::{
    align_family_signs, k_uniform_all, select_uniform_branch, uniform_inputs, UniformError, UniformInputs,
    FAR_FROM_CAUSTIC,
};
use crate::C64;

pub use caustic::{continue_loop, locate_caustic, CausticRecord};
pub use config::{linspace, Methods, ResolvedPoint, ScanConfig};
pub use export::{error_stats, ErrorStats};
pub use labels::{CutDirection, CutRay, Labelling, RawGrid};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("config error: {0}")]
    Config(String),
    #[error("energy infeasible at qx = {qx}: |p|^2 = {p2}")]
    EnergyInfeasible { qx: f64, p2: f64 },
    #[error("found {found} admissible roots at the anchor ({t}, {qx}); need two")]
    Anchor { t: f64, qx: f64, found: usize },
    #[error("could not carry family {family} from the anchor to ({t}, {qx}): {cause}")]
    Transfer {
        family: usize,
        t: f64,
        qx: f64,
        cause: TrajectoryError,
    },
    #[error("no caustic in the window: smallest |B| on the grid is {0}")]
    NotFound(f64),
    #[error("exact propagation failed: {0}")]
    Exact(#[from] ExactError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Per-family data at one grid point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyPoint {
    pub trajectory: TrajectoryResult,
    pub contribution: Contribution,
    /// Whether the neighbour-continued prefactor equals the time-continued one.
    pub time_branch_agrees: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointRecord {
    pub it: usize,
    pub iq: usize,
    pub t: f64,
    pub point: ResolvedPoint,
    pub families: [Option<FamilyPoint>; 2],
    pub k2: Option<C64>,
    pub k2_members: Vec<Family>,
    pub uniform: Option<UniformInputs>,
    /// The three continuous uniform surfaces.
    pub kun: Option<[C64; 3]>,
    pub kun_elected: Option<C64>,
    pub k_exact: Option<C64>,
    pub rel_err: Option<f64>,
}

impl PointRecord {
    pub fn qx(&self) -> f64 {
        self.point.q[0]
    }

    /// Both families present and distinct.
    pub fn complete(&self) -> bool {
        match (&self.families[0], &self.families[1]) {
            (Some(a), Some(b)) => max_abs(&sub2(&a.trajectory.v0, &b.trajectory.v0)) > 1e-8,
            _ => false,
        }
    }

    pub fn abs_b(&self) -> Option<f64> {
        self.uniform.map(|u| u.b.norm())
    }

    pub fn family(&self, f: Family) -> Option<&FamilyPoint> {
        self.families[f as usize].as_ref()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElectionSummary {
    /// Elected surface, 1-based.
    pub surface: usize,
    pub scores: [f64; 3],
    pub n_far: usize,
    pub warning: Option<UniformError>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LostRecord {
    /// Continuation track (raw family index before labelling).
    pub track: usize,
    pub t: f64,
    pub qx: f64,
    pub cause: String,
}

/// Rectangular scan; `points[iq * n_t + it]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanGrid {
    pub config: ScanConfig,
    pub t_values: Vec<f64>,
    pub qx_values: Vec<f64>,
    pub points: Vec<PointRecord>,
    /// Point indices in the order they were swept.
    pub sweep: Vec<usize>,
    pub election: Option<ElectionSummary>,
    pub lost: Vec<LostRecord>,
    /// Points where the continued prefactor differs from the time-continued one.
    pub branch_mismatches: usize,
    /// Family labels, their cut ray and the order quantities were continued in.
    pub labels: Labelling,
}

impl ScanGrid {
    pub fn index(&self, iq: usize, it: usize) -> usize {
        iq * self.t_values.len() + it
    }

    pub fn at(&self, iq: usize, it: usize) -> &PointRecord {
        &self.points[self.index(iq, it)]
    }

    /// Points where either family is missing.
    pub fn gaps(&self) -> Vec<usize> {
        (0..self.points.len()).filter(|&i| !self.points[i].complete()).collect()
    }
}

/// Serpentine order over `(iq, it)`: `T` runs forward on even rows and back
/// on odd ones, so consecutive points are always grid neighbours.
pub fn serpentine(n_qx: usize, n_t: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n_qx * n_t);
    for iq in 0..n_qx {
        for k in 0..n_t {
            let it = if iq % 2 == 0 { k } else { n_t - 1 - k };
            out.push((iq, it));
        }
    }
    out
}

pub fn shooting_options(cfg: &ScanConfig) -> ShootingOptions {
    ShootingOptions {
        tol_shoot: cfg.tol_shoot,
        integrator_tol: cfg.integrator_tol,
        ..ShootingOptions::default()
    }
}

/// `F0 = Im S + hbar |z|^2` on the diagonal.
fn f0_of(tr: &TrajectoryResult, z_norm_sqr: f64, hbar: f64) -> f64 {
    tr.action.im + hbar * z_norm_sqr
}

/// Finds the two families at the anchor: the two admissible (`F0 >= 0`)
/// roots of largest `|K2|`, largest first.
pub fn identify_families(cfg: &ScanConfig, model: &crate::NelsonModel) -> Result<[TrajectoryResult; 2], ScanError> {
    let [t, qx] = cfg.anchor;
    let z = cfg.resolve_point(qx)?.z;
    let prob = ShootingProblem {
        opts: shooting_options(cfg),
        ..ShootingProblem::diagonal(model, z, t)
    };
    let roots = find_roots(&prob, &multistart_seeds(&z, &cfg.seed_radii), 1e-6);
    let hbar = cfg.hbar;
    let weight = |r: &TrajectoryResult| {
        // |K2| up to the common factor N
        (-(r.action.im + r.g.im) / hbar).exp() / r.det_mvv.norm().sqrt()
    };
    let mut ok: Vec<TrajectoryResult> = roots
        .into_iter()
        .filter(|r| f0_of(r, z.norm_sqr(), hbar) >= 0.0 && r.det_mvv.norm() > 1e-12)
        .collect();
    if ok.len() < 2 {
        return Err(ScanError::Anchor { t, qx, found: ok.len() });
    }
    ok.sort_by(|a, b| weight(b).partial_cmp(&weight(a)).unwrap());
    let mut it = ok.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap()])
}

/// Runs the full pipeline on the configured window.
pub fn run_scan(cfg: &ScanConfig) -> Result<ScanGrid, ScanError> {
    run_grid(cfg, &cfg.qx_values(), &cfg.t_values())
}

/// Runs the pipeline on a single `qx` line with `n_t` samples.
pub fn run_cut(cfg: &ScanConfig, qx: f64, n_t: usize) -> Result<ScanGrid, ScanError> {
    run_grid(cfg, &[qx], &linspace(cfg.t_range, n_t))
}

/// Runs the pipeline on an arbitrary rectangular grid.
pub fn run_grid(cfg: &ScanConfig, qx_values: &[f64], t_values: &[f64]) -> Result<ScanGrid, ScanError> {
    cfg.validate()?;
    let model = cfg.model();
    let cp = cfg.coherent();
    let hbar = cfg.hbar;
    let n_t = t_values.len();
    let resolved: Vec<ResolvedPoint> = qx_values
        .iter()
        .map(|&qx| cfg.resolve_point(qx))
        .collect::<Result<_, _>>()?;
    let opts = shooting_options(cfg);
    let make = |t: f64, qx: f64| ShootingProblem {
        opts,
        ..ShootingProblem::diagonal(&model, cfg.resolve_point(qx).expect("validated window").z, t)
    };

    let order = serpentine(qx_values.len(), n_t);
    let coords: Vec<(f64, f64)> = order.iter().map(|&(iq, it)| (t_values[it], qx_values[iq])).collect();

    let idx = |iq: usize, it: usize| iq * n_t + it;
    let sweep: Vec<usize> = order.iter().map(|&(iq, it)| idx(iq, it)).collect();
    let n_points = sweep.len();

    // both families, carried from the anchor to the first sweep point and
    // then along the sweep
    let mut raw: Vec<[Option<TrajectoryResult>; 2]> = vec![[None, None]; n_points];
    let mut lost = Vec::new();
    if cfg.methods.k2 {
        let fams = identify_families(cfg, &model)?;
        let anchor = (cfg.anchor[0], cfg.anchor[1]);
        for (fi, fam) in fams.iter().enumerate() {
            let start =
                continue_segment(&make, anchor, fam, coords[0], 3, 20).map_err(|cause| ScanError::Transfer {
                    family: fi,
                    t: coords[0].0,
                    qx: coords[0].1,
                    cause,
                })?;
            let (track, l) = continue_family(&coords, make, &start);
            for (s, r) in track.results.into_iter().enumerate() {
                raw[sweep[s]][fi] = r;
            }
            lost.extend(l.into_iter().map(|e| LostRecord {
                track: fi,
                t: e.t,
                qx: e.qx,
                cause: e.cause.to_string(),
            }));
        }
    }
    let labels = RawGrid {
        n_qx: qx_values.len(),
        n_t,
        raw: &raw,
        sweep: &sweep,
    }
    .label(
        |p, f| {
            raw[p][f]
                .as_ref()
                .map_or(f64::INFINITY, |r| f0_of(r, resolved[p / n_t].z.norm_sqr(), hbar))
        },
        EPS_STOKES,
    );
    let crosses_cut = |p: usize, q: usize| {
        labels
            .cut
            .is_some_and(|c| c.crosses((p / n_t, p % n_t), (q / n_t, q % n_t)))
    };

    let mut points: Vec<PointRecord> = Vec::with_capacity(n_points);
    for (iq, rp) in resolved.iter().enumerate() {
        for (it, &t) in t_values.iter().enumerate() {
            points.push(PointRecord {
                it,
                iq,
                t,
                point: *rp,
                families: [None, None],
                k2: None,
                k2_members: Vec::new(),
                uniform: None,
                kun: None,
                kun_elected: None,
                k_exact: None,
                rel_err: None,
            });
        }
    }

    // contributions take the time-continued prefactor root; uniform inputs
    // are continued from the point's parent in the labelling order
    let mut branch_mismatches = 0;
    let mut resolved_k2: Vec<Option<f64>> = vec![None; n_points];
    if cfg.methods.k2 {
        for &p in &labels.order {
            let z = resolved[p / n_t].z;
            let parent = labels.parent[p];
            for f in 0..2 {
                let Some(tr) = raw[p][f ^ labels.swap[p] as usize].as_ref() else {
                    continue;
                };
                let fam = if f == 0 { Family::A } else { Family::B };
                let Ok(c) = k2_single(tr, fam, &z, &z, hbar, None) else {
                    continue;
                };
                // cross-check the time-tracked root against the parent's
                let agrees = parent.and_then(|q| points[q].families[f].as_ref()).is_none_or(|fp| {
                    let m = matched_prefactor(c.det_mvv, fp.contribution.prefactor);
                    (m - c.prefactor).norm() < (m + c.prefactor).norm()
                });
                if !agrees {
                    branch_mismatches += 1;
                }
                points[p].families[f] = Some(FamilyPoint {
                    trajectory: tr.clone(),
                    contribution: c,
                    time_branch_agrees: agrees,
                });
            }
            if cfg.methods.uniform && points[p].complete() {
                let a = &points[p].families[0].as_ref().unwrap().trajectory;
                let b = &points[p].families[1].as_ref().unwrap().trajectory;
                let n = crate::semiclassical::norm_factor(&z, &z);
                let prev = parent.and_then(|q| points[q].uniform);
                points[p].uniform = Some(uniform_inputs(a, b, n, hbar, prev.as_ref()));
            }
        }

        // K2 membership by breadth-first continuation, starting where one
        // term is most negligible against the other so the choice there is
        // immaterial. |K2| does not depend on labels, so this walk crosses
        // the cut; there the parent's dominant family carries the other
        // label, and only the full sum keeps it.
        let mut seen = vec![false; n_points];
        let mut queue = std::collections::VecDeque::new();
        let mut k2_parent: Vec<Option<usize>> = vec![None; n_points];
        let ratio = |p: usize| match &points[p].families {
            [Some(a), Some(b)] => b.contribution.value.norm() / a.contribution.value.norm(),
            _ => f64::INFINITY,
        };
        if let Some(root) = (0..n_points)
            .filter(|&p| ratio(p).is_finite())
            .min_by(|&x, &y| ratio(x).total_cmp(&ratio(y)))
        {
            seen[root] = true;
            queue.push_back(root);
        }
        while let Some(p) = queue.pop_front() {
            let (iq, it) = (p / n_t, p % n_t);
            let around: Vec<usize> = [
                (it > 0).then(|| idx(iq, it - 1)),
                (it + 1 < n_t).then(|| idx(iq, it + 1)),
                (iq > 0).then(|| idx(iq - 1, it)),
                (iq + 1 < qx_values.len()).then(|| idx(iq + 1, it)),
            ]
            .into_iter()
            .flatten()
            .collect();
            let neigh: Vec<f64> = around.iter().filter_map(|&q| resolved_k2[q]).collect();
            let previous = k2_parent[p].map(|q| {
                if crosses_cut(p, q) {
                    vec![Family::A, Family::B]
                } else {
                    points[q].k2_members.clone()
                }
            });
            let contribs: Vec<Contribution> = points[p].families.iter().flatten().map(|fp| fp.contribution).collect();
            let Ok(comb) = k2_combine(&contribs, &neigh, previous.as_deref()) else {
                continue;
            };
            resolved_k2[p] = Some(comb.value.norm());
            points[p].k2 = Some(comb.value);
            points[p].k2_members = comb.members;
            for q in around {
                if !seen[q] {
                    seen[q] = true;
                    k2_parent[q] = Some(p);
                    queue.push_back(q);
                }
            }
        }
    }

    // uniform surfaces and election
    let mut election = None;
    if cfg.methods.uniform {
        let with_ui: Vec<usize> = labels
            .order
            .iter()
            .copied()
            .filter(|&p| points[p].uniform.is_some())
            .collect();
        let mut slot = vec![None; n_points];
        for (k, &p) in with_ui.iter().enumerate() {
            slot[p] = Some(k);
        }
        let parent: Vec<Option<usize>> = with_ui
            .iter()
            .map(|&p| labels.parent[p].and_then(|q| slot[q]))
            .collect();
        let mut inputs: Vec<UniformInputs> = with_ui.iter().map(|&p| points[p].uniform.unwrap()).collect();
        align_family_signs(&mut inputs, &parent);
        let values: Vec<[C64; 3]> = inputs.iter().map(k_uniform_all).collect();
        let abs_b: Vec<f64> = inputs.iter().map(|u| u.b.norm()).collect();
        let k2: Vec<Option<f64>> = with_ui.iter().map(|&p| points[p].k2.map(|k| k.norm())).collect();
        if let Ok(e) = select_uniform_branch(&values, &abs_b, &k2, FAR_FROM_CAUSTIC) {
            for (k, &p) in with_ui.iter().enumerate() {
                points[p].uniform = Some(inputs[k]);
                points[p].kun = Some(e.surfaces[k]);
                points[p].kun_elected = Some(e.elected_value(k));
            }
            election = Some(ElectionSummary {
                surface: e.elected + 1,
                scores: e.scores,
                n_far: e.n_far,
                warning: e.warning,
            });
        }
    }

    // exact reference, one propagation per column
    if cfg.methods.exact {
        let potential = cfg.nelson();
        for (iq, rp) in resolved.iter().enumerate() {
            let ks = k_exact_series(&rp.z, &rp.z, t_values, &cp, &cfg.exact_grid, move |x, y| {
                potential.potential(x, y)
            })?;
            for (it, k) in ks.into_iter().enumerate() {
                let p = &mut points[idx(iq, it)];
                p.k_exact = Some(k);
                if let Some(ku) = p.kun_elected {
                    p.rel_err = Some((k.norm() - ku.norm()).abs() / k.norm());
                }
            }
        }
    }

    Ok(ScanGrid {
        config: cfg.clone(),
        t_values: t_values.to_vec(),
        qx_values: qx_values.to_vec(),
        points,
        sweep,
        election,
        lost,
        branch_mismatches,
        labels,
    })
}

/// `v0` of both families at a point, if present.
pub fn family_v0(p: &PointRecord) -> [Option<C2>; 2] {
    [0, 1].map(|f| p.families[f].as_ref().map(|fp| fp.trajectory.v0))
}
