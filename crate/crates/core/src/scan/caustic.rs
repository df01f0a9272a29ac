//! Locating the coalescence point of the two families, and loops around it.

use serde::{Deserialize, Serialize};

use super::{shooting_options, ScanError, ScanGrid};
use crate::linalg::{max_abs, sub2, C2};
use crate::trajectory::{continue_segment, newton_shoot, ShootingProblem, TrajectoryError, TrajectoryResult};
use crate::C64;

/// A grid minimum of `|B|` above this is not treated as a caustic.
pub const CAUSTIC_B_THRESHOLD: f64 = 0.1;
/// Refinement stops once `|B|` is this small.
const REFINE_B_TOL: f64 = 1e-6;
const REFINE_MAX_ITER: usize = 40;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RefineStep {
    pub t: f64,
    pub qx: f64,
    pub abs_b: f64,
    pub abs_det_a: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CausticRecord {
    /// Grid point of smallest `|B|`.
    pub grid_t: f64,
    pub grid_qx: f64,
    pub grid_abs_b: f64,
    /// Refined location.
    pub t: f64,
    pub qx: f64,
    pub abs_b: f64,
    /// `|S_b - S_a|` at the refined point.
    pub action_gap: f64,
    /// `max |v0_a - v0_b|` at the refined point.
    pub dv0: f64,
    pub abs_det_a: f64,
    pub abs_det_b: f64,
    pub converged: bool,
    pub steps: Vec<RefineStep>,
}

fn abs_b(a: &TrajectoryResult, b: &TrajectoryResult, hbar: f64) -> f64 {
    (C64::new(0.0, 0.75 / hbar) * (b.action - a.action))
        .norm()
        .powf(2.0 / 3.0)
}

/// Finds the smallest `|B|` on the grid, then refines by Newton iteration
/// on `det_a^2` (which vanishes linearly at the fold) with finite-difference
/// derivatives in `(T, qx)`.
pub fn locate_caustic(grid: &ScanGrid) -> Result<CausticRecord, ScanError> {
    let cfg = &grid.config;
    let best = grid
        .points
        .iter()
        .filter(|p| p.complete())
        .filter_map(|p| match &p.families {
            // from the actions, so a scan without uniform surfaces still works
            [Some(a), Some(b)] => Some((abs_b(&a.trajectory, &b.trajectory, cfg.hbar), p)),
            _ => None,
        })
        .min_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let Some((grid_abs_b, start)) = best else {
        return Err(ScanError::NotFound(f64::INFINITY));
    };
    if grid_abs_b > CAUSTIC_B_THRESHOLD {
        return Err(ScanError::NotFound(grid_abs_b));
    }

    let model = cfg.model();
    let opts = shooting_options(cfg);
    let make = |t: f64, qx: f64| -> Result<ShootingProblem<'_>, ScanError> {
        Ok(ShootingProblem {
            opts,
            ..ShootingProblem::diagonal(&model, cfg.resolve_point(qx)?.z, t)
        })
    };
    let hbar = cfg.hbar;
    let mut a = start.families[0].as_ref().unwrap().trajectory.clone();
    let mut b = start.families[1].as_ref().unwrap().trajectory.clone();
    // iterate on whichever determinant is the smaller one
    if b.det_mvv.norm() < a.det_mvv.norm() {
        std::mem::swap(&mut a, &mut b);
    }
    let mut p = (start.t, start.qx());
    let mut steps = Vec::new();
    let mut converged = abs_b(&a, &b, hbar) < REFINE_B_TOL;
    let g = |tr: &TrajectoryResult| tr.det_mvv * tr.det_mvv;

    for _ in 0..REFINE_MAX_ITER {
        if converged {
            break;
        }
        let h = 1e-6_f64.max(1e-3 * g(&a).norm());
        let (Ok(ta), Ok(tq)) = (
            newton_shoot(&make(p.0 + h, p.1)?, a.v0),
            newton_shoot(&make(p.0, p.1 + h)?, a.v0),
        ) else {
            break;
        };
        let g0 = g(&a);
        let gt = (g(&ta) - g0) / h;
        let gq = (g(&tq) - g0) / h;
        let det = gt.re * gq.im - gq.re * gt.im;
        if det.abs() < 1e-300 {
            break;
        }
        let mut dt = -(g0.re * gq.im - gq.re * g0.im) / det;
        let mut dq = -(gt.re * g0.im - g0.re * gt.im) / det;
        // damped step: accept the first one that lowers |det_a^2|
        let mut accepted = None;
        for _ in 0..8 {
            let np = (p.0 + dt, p.1 + dq);
            if let Ok(na) = newton_shoot(&make(np.0, np.1)?, a.v0) {
                if g(&na).norm() < g0.norm() {
                    accepted = Some((np, na));
                    break;
                }
            }
            dt *= 0.5;
            dq *= 0.5;
        }
        let Some((np, na)) = accepted else { break };
        let mid: C2 = std::array::from_fn(|k| 0.5 * (a.v0[k] + b.v0[k]));
        let mut nb = newton_shoot(&make(np.0, np.1)?, b.v0).ok();
        if nb.as_ref().is_none_or(|nb| max_abs(&sub2(&nb.v0, &na.v0)) < 1e-9) {
            // b fell onto a; reseed on the far side of the midpoint
            let seed: C2 = std::array::from_fn(|k| 2.0 * mid[k] - na.v0[k]);
            nb = newton_shoot(&make(np.0, np.1)?, seed)
                .ok()
                .filter(|nb| max_abs(&sub2(&nb.v0, &na.v0)) >= 1e-9);
        }
        let Some(nb) = nb else { break };
        p = np;
        a = na;
        b = nb;
        let ab = abs_b(&a, &b, hbar);
        steps.push(RefineStep {
            t: p.0,
            qx: p.1,
            abs_b: ab,
            abs_det_a: a.det_mvv.norm(),
        });
        converged = ab < REFINE_B_TOL;
    }

    Ok(CausticRecord {
        grid_t: start.t,
        grid_qx: start.qx(),
        grid_abs_b,
        t: p.0,
        qx: p.1,
        abs_b: abs_b(&a, &b, hbar),
        action_gap: (b.action - a.action).norm(),
        dv0: max_abs(&sub2(&a.v0, &b.v0)),
        abs_det_a: a.det_mvv.norm(),
        abs_det_b: b.det_mvv.norm(),
        converged,
        steps,
    })
}

/// Carries `start` (a root at `corners[0]`) along the closed polygon
/// `corners[0] -> corners[1] -> ... -> corners[0]`.
pub fn continue_loop<'m, F>(
    make: &F,
    corners: &[(f64, f64)],
    start: &TrajectoryResult,
    base_steps: usize,
) -> Result<TrajectoryResult, TrajectoryError>
where
    F: Fn(f64, f64) -> ShootingProblem<'m>,
{
    let mut cur = start.clone();
    for k in 0..corners.len() {
        let to = corners[(k + 1) % corners.len()];
        cur = continue_segment(make, corners[k], &cur, to, 4, base_steps)?;
    }
    Ok(cur)
}
