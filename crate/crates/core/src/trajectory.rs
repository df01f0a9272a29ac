//! Complex classical trajectories: integration of the complexified Hamilton
//! equations together with the action, the `G` correction and the monodromy
//! matrix, and Newton shooting for the mixed boundary conditions
//! `u(0) = z'`, `v(T) = z''*`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hamiltonian::HamiltonianModel;
use crate::linalg::{block, det2, det4, dot, mat4_identity, max_abs, solve2, sub2, Mat2, Mat4, C2, ZERO};
use crate::ode::{self, Dopri5Options, StepFailure, Verdict};
use crate::phase::{CoherentLabel, PhasePointUV};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("integration failed: {0}")]
    StepFailure(#[from] StepFailure),
    #[error("Newton shooting did not converge after {iterations} iterations (|R| = {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("shooting Jacobian det M_vv = {det:e} is singular")]
    SingularJacobian { det: f64 },
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
}

/// Largest change of `arg det M_vv` allowed within one accepted step.
const MAX_PHASE_STEP: f64 = 1.0;
/// Trajectories beyond this modulus are treated as escaping.
const ESCAPE: f64 = 1e6;

const NSTATE: usize = 22;

/// State at the end of an integration: the trajectory point, the running
/// action and `G` integrals, and the monodromy matrix in `(u, v)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedState {
    pub t: f64,
    pub u0: C2,
    pub v0: C2,
    pub u: C2,
    pub v: C2,
    pub s_accum: C64,
    pub g_accum: C64,
    pub m: Mat4,
    /// `arg det M_vv(t)` continued in time from 0 at `t = 0`.
    pub mvv_arg: f64,
}

impl ExtendedState {
    pub fn mvv(&self) -> Mat2 {
        block(&self.m, 1, 1)
    }

    pub fn det_mvv(&self) -> C64 {
        det2(&self.mvv())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub u: C2,
    pub v: C2,
    pub det_mvv: C64,
}

fn pack(u: &C2, v: &C2, m: &Mat4) -> [C64; NSTATE] {
    let mut y = [ZERO; NSTATE];
    y[0..2].copy_from_slice(u);
    y[2..4].copy_from_slice(v);
    for i in 0..4 {
        y[4 + 4 * i..8 + 4 * i].copy_from_slice(&m[i]);
    }
    y
}

fn unpack_m(y: &[C64; NSTATE]) -> Mat4 {
    std::array::from_fn(|i| std::array::from_fn(|j| y[4 + 4 * i + j]))
}

fn det_mvv_of(y: &[C64; NSTATE]) -> C64 {
    // M_vv rows 2,3 cols 2,3
    y[4 + 4 * 2 + 2] * y[4 + 4 * 3 + 3] - y[4 + 4 * 2 + 3] * y[4 + 4 * 3 + 2]
}

fn rhs(model: &dyn HamiltonianModel, y: &[C64; NSTATE]) -> [C64; NSTATE] {
    let hbar = model.coherent().hbar();
    let ih = C64::i() / hbar;
    let pt = PhasePointUV::new([y[0], y[1]], [y[2], y[3]]);
    let gu = model.grad_u(&pt);
    let gv = model.grad_v(&pt);
    let hs = model.hess(&pt);
    let du = [-ih * gv[0], -ih * gv[1]];
    let dv = [ih * gu[0], ih * gu[1]];

    // Jacobian of (du, dv) with respect to (u, v)
    let mut jac = [[ZERO; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            jac[i][j] = -ih * hs.vu[i][j];
            jac[i][j + 2] = -ih * hs.vv[i][j];
            jac[i + 2][j] = ih * hs.uu[i][j];
            jac[i + 2][j + 2] = ih * hs.uv[i][j];
        }
    }
    let m = unpack_m(y);
    let mut out = [ZERO; NSTATE];
    out[0..2].copy_from_slice(&du);
    out[2..4].copy_from_slice(&dv);
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = ZERO;
            for k in 0..4 {
                acc += jac[i][k] * m[k][j];
            }
            out[4 + 4 * i + j] = acc;
        }
    }
    let h = model.value(&pt);
    out[20] = 0.5 * C64::i() * hbar * (dot(&du, &pt.v) - dot(&pt.u, &dv)) - h;
    out[21] = 0.5 * (hs.uv[0][0] + hs.uv[1][1]);
    out
}

/// Integrates the extended system from `(u0, v0)` over `[0, t_final]` at
/// local tolerance `tol`, optionally recording the path.
pub fn integrate_extended_with(
    model: &dyn HamiltonianModel,
    u0: C2,
    v0: C2,
    t_final: f64,
    tol: f64,
    mut samples: Option<&mut Vec<PathSample>>,
) -> Result<ExtendedState, TrajectoryError> {
    if t_final < 0.0 {
        return Err(TrajectoryError::NegativeTime(t_final));
    }
    let y0 = pack(&u0, &v0, &mat4_identity());
    let mut arg = 0.0f64;
    let mut prev_det = C64::new(1.0, 0.0);
    if let Some(s) = samples.as_deref_mut() {
        s.push(PathSample {
            t: 0.0,
            u: u0,
            v: v0,
            det_mvv: prev_det,
        });
    }
    let opts = Dopri5Options::with_tol(tol);
    let y = ode::integrate(
        |_t, y| rhs(model, y),
        0.0,
        y0,
        t_final,
        &opts,
        |t, _old, new| {
            let d = det_mvv_of(new);
            let step = if d == ZERO || prev_det == ZERO {
                0.0
            } else {
                (d / prev_det).arg()
            };
            if step.abs() > MAX_PHASE_STEP {
                return Verdict::Shrink;
            }
            arg += step;
            prev_det = d;
            if let Some(s) = samples.as_deref_mut() {
                s.push(PathSample {
                    t,
                    u: [new[0], new[1]],
                    v: [new[2], new[3]],
                    det_mvv: d,
                });
            }
            Verdict::Accept
        },
    )?;
    if y[..4].iter().any(|c| c.norm() > ESCAPE) {
        return Err(StepFailure::NonFinite { t: t_final }.into());
    }
    Ok(ExtendedState {
        t: t_final,
        u0,
        v0,
        u: [y[0], y[1]],
        v: [y[2], y[3]],
        s_accum: y[20],
        g_accum: y[21],
        m: unpack_m(&y),
        mvv_arg: arg,
    })
}

pub fn integrate_extended(
    model: &dyn HamiltonianModel,
    u0: C2,
    v0: C2,
    t_final: f64,
    tol: f64,
) -> Result<ExtendedState, TrajectoryError> {
    integrate_extended_with(model, u0, v0, t_final, tol, None)
}

/// Complex action `S = s_accum - Lambda`,
/// `Lambda = (i hbar/2)[u(0).v(0) + u(T).v(T)]`.
pub fn action_total(st: &ExtendedState, model: &dyn HamiltonianModel) -> C64 {
    let hbar = model.coherent().hbar();
    let lambda = 0.5 * C64::i() * hbar * (dot(&st.u0, &st.v0) + dot(&st.u, &st.v));
    st.s_accum - lambda
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    /// Convergence threshold on `max |v(T) - z''*|`.
    pub tol_shoot: f64,
    pub max_iter: usize,
    /// Local tolerance of the integrator.
    pub integrator_tol: f64,
    /// Jacobians with `|det M_vv|` below this abort the iteration.
    pub min_jacobian_det: f64,
    pub max_halvings: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            tol_shoot: 1e-10,
            max_iter: 50,
            integrator_tol: 1e-11,
            min_jacobian_det: 1e-14,
            max_halvings: 8,
        }
    }
}

pub struct ShootingProblem<'a> {
    pub model: &'a dyn HamiltonianModel,
    pub z_prime: CoherentLabel,
    pub z_dprime_star: C2,
    pub t: f64,
    pub opts: ShootingOptions,
}

impl<'a> ShootingProblem<'a> {
    /// The diagonal problem `z' = z'' = z`.
    pub fn diagonal(model: &'a dyn HamiltonianModel, z: CoherentLabel, t: f64) -> Self {
        Self {
            model,
            z_prime: z,
            z_dprime_star: z.conj(),
            t,
            opts: ShootingOptions::default(),
        }
    }
}

/// A converged contributing trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub t: f64,
    pub u0: C2,
    pub v0: C2,
    pub u_final: C2,
    pub v_final: C2,
    /// Full action including the boundary term.
    pub action: C64,
    pub g: C64,
    pub m: Mat4,
    pub det_mvv: C64,
    /// `arg det M_vv` continued along the trajectory.
    pub mvv_arg: f64,
    pub residual_norm: f64,
    pub n_newton: usize,
    #[serde(skip)]
    pub path_samples: Option<Vec<PathSample>>,
}

impl TrajectoryResult {
    pub fn det_m(&self) -> C64 {
        det4(&self.m)
    }

    pub fn mvv(&self) -> Mat2 {
        block(&self.m, 1, 1)
    }

    fn from_state(st: &ExtendedState, model: &dyn HamiltonianModel, residual: f64, n: usize) -> Self {
        Self {
            t: st.t,
            u0: st.u0,
            v0: st.v0,
            u_final: st.u,
            v_final: st.v,
            action: action_total(st, model),
            g: st.g_accum,
            m: st.m,
            det_mvv: st.det_mvv(),
            mvv_arg: st.mvv_arg,
            residual_norm: residual,
            n_newton: n,
            path_samples: None,
        }
    }
}

/// Newton iteration on `R(v0) = v(T; z', v0) - z''*` with Jacobian `M_vv`.
///
/// `n_newton` counts residual evaluations, so an exact seed reports 1.
pub fn newton_shoot(prob: &ShootingProblem<'_>, v0_seed: C2) -> Result<TrajectoryResult, TrajectoryError> {
    let o = &prob.opts;
    let run = |v0: C2| integrate_extended(prob.model, prob.z_prime.z, v0, prob.t, o.integrator_tol);
    let mut v0 = v0_seed;
    let mut st = run(v0)?;
    let mut r = sub2(&st.v, &prob.z_dprime_star);
    let mut rn = max_abs(&r);
    for it in 1..=o.max_iter {
        if rn < o.tol_shoot {
            return Ok(TrajectoryResult::from_state(&st, prob.model, rn, it));
        }
        let mvv = st.mvv();
        let det = det2(&mvv);
        let delta =
            solve2(&mvv, &r, o.min_jacobian_det).ok_or(TrajectoryError::SingularJacobian { det: det.norm() })?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=o.max_halvings {
            let trial = [v0[0] - lambda * delta[0], v0[1] - lambda * delta[1]];
            if let Ok(st_t) = run(trial) {
                let r_t = sub2(&st_t.v, &prob.z_dprime_star);
                let rn_t = max_abs(&r_t);
                if rn_t < rn || rn_t < o.tol_shoot {
                    accepted = Some((trial, st_t, r_t, rn_t));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((v, s, rr, n)) => {
                v0 = v;
                st = s;
                r = rr;
                rn = n;
            }
            None => {
                return Err(TrajectoryError::NoConvergence {
                    iterations: it,
                    residual: rn,
                });
            }
        }
    }
    if rn < o.tol_shoot {
        return Ok(TrajectoryResult::from_state(&st, prob.model, rn, o.max_iter + 1));
    }
    Err(TrajectoryError::NoConvergence {
        iterations: o.max_iter,
        residual: rn,
    })
}

/// Re-integrates a converged trajectory and attaches its path samples.
pub fn with_path_samples(
    prob: &ShootingProblem<'_>,
    tr: &TrajectoryResult,
) -> Result<TrajectoryResult, TrajectoryError> {
    let mut samples = Vec::new();
    integrate_extended_with(
        prob.model,
        tr.u0,
        tr.v0,
        tr.t,
        prob.opts.integrator_tol,
        Some(&mut samples),
    )?;
    let mut out = tr.clone();
    out.path_samples = Some(samples);
    Ok(out)
}

/// Writes path samples as CSV: `t` then real/imaginary parts of `u`, `v`
/// and `det M_vv`.
pub fn write_path_csv<W: std::io::Write>(mut w: W, samples: &[PathSample]) -> std::io::Result<()> {
    writeln!(
        w,
        "t,re_ux,im_ux,re_uy,im_uy,re_vx,im_vx,re_vy,im_vy,re_det_mvv,im_det_mvv"
    )?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.t,
            s.u[0].re,
            s.u[0].im,
            s.u[1].re,
            s.u[1].im,
            s.v[0].re,
            s.v[0].im,
            s.v[1].re,
            s.v[1].im,
            s.det_mvv.re,
            s.det_mvv.im
        )?;
    }
    Ok(())
}

/// Seeds for the first grid point: the real guess `conj(z')` followed by a
/// ring of 16 perturbations at each of the given radii.
pub fn multistart_seeds(z_prime: &CoherentLabel, radii: &[f64]) -> Vec<C2> {
    let base = z_prime.conj();
    let mut seeds = vec![base];
    for &r in radii {
        for k in 0..16 {
            let a = 2.0 * PI * k as f64 / 16.0;
            // alternate between moving one component, the other, or both
            let dir = match k % 4 {
                0 => [C64::from_polar(1.0, a), ZERO],
                1 => [ZERO, C64::from_polar(1.0, a)],
                2 => [C64::from_polar(1.0, a), C64::from_polar(1.0, a)],
                _ => [C64::from_polar(1.0, a), -C64::from_polar(1.0, a)],
            };
            seeds.push([base[0] + r * dir[0], base[1] + r * dir[1]]);
        }
    }
    seeds
}

/// Runs Newton from every seed and keeps the distinct converged roots
/// (distance > `dedup` in the max norm), in order of discovery.
pub fn find_roots(prob: &ShootingProblem<'_>, seeds: &[C2], dedup: f64) -> Vec<TrajectoryResult> {
    let mut roots: Vec<TrajectoryResult> = Vec::new();
    for seed in seeds {
        if let Ok(tr) = newton_shoot(prob, *seed) {
            if roots.iter().all(|r| max_abs(&sub2(&r.v0, &tr.v0)) > dedup) {
                roots.push(tr);
            }
        }
    }
    roots
}

/// Outcome of continuing one family across a sequence of parameter points.
#[derive(Clone, Debug, Default)]
pub struct FamilyTrack {
    pub results: Vec<Option<TrajectoryResult>>,
    /// Indices of points where the family was lost.
    pub gaps: Vec<usize>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("family lost at point {index} ({t}, {qx}): {cause}")]
pub struct FamilyLost {
    pub index: usize,
    pub t: f64,
    pub qx: f64,
    pub cause: TrajectoryError,
}

/// Maximum refinement depth when a continuation step fails.
pub const MAX_REFINE_LEVELS: u32 = 3;

/// First-order prediction of the root at a new boundary problem from a
/// solved one, by the implicit function theorem on
/// `R = v(T; u0, v0) - z''*`:
/// `dv0 = -M_vv^-1 (M_vu du0 + vdot(T) dT - dz''*)`.
pub fn tangent_predict(
    model: &dyn HamiltonianModel,
    tr: &TrajectoryResult,
    from: &ShootingProblem<'_>,
    to: &ShootingProblem<'_>,
) -> Option<C2> {
    let mvv = block(&tr.m, 1, 1);
    let mvu = block(&tr.m, 1, 0);
    let du0 = sub2(&to.z_prime.z, &from.z_prime.z);
    let dtarget = sub2(&to.z_dprime_star, &from.z_dprime_star);
    let dt = to.t - from.t;
    let ih = C64::i() / model.coherent().hbar();
    let gu = model.grad_u(&PhasePointUV::new(tr.u_final, tr.v_final));
    let rhs: C2 = std::array::from_fn(|i| mvu[i][0] * du0[0] + mvu[i][1] * du0[1] + ih * gu[i] * dt - dtarget[i]);
    let d = solve2(&mvv, &rhs, 1e-300)?;
    Some([tr.v0[0] - d[0], tr.v0[1] - d[1]])
}

/// Tracks one root from `(t, qx)` point `from` with solution `seed` to point
/// `to`, subdividing the segment into up to `2^MAX_REFINE_LEVELS` sub-steps.
///
/// Each sub-step is predicted along the tangent and corrected by Newton; a
/// correction larger than `max(0.5 |prediction step|, 1e-3)` is treated as a
/// jump to another root and triggers refinement.
pub fn continue_step<'m, F>(
    make: &F,
    from: (f64, f64),
    seed: &TrajectoryResult,
    to: (f64, f64),
) -> Result<TrajectoryResult, TrajectoryError>
where
    F: Fn(f64, f64) -> ShootingProblem<'m>,
{
    continue_segment(make, from, seed, to, MAX_REFINE_LEVELS, 1)
}

/// As [`continue_step`] but starting from `base_steps` sub-steps.
pub fn continue_segment<'m, F>(
    make: &F,
    from: (f64, f64),
    seed: &TrajectoryResult,
    to: (f64, f64),
    levels: u32,
    base_steps: usize,
) -> Result<TrajectoryResult, TrajectoryError>
where
    F: Fn(f64, f64) -> ShootingProblem<'m>,
{
    let mut last_err = None;
    for level in 0..=levels {
        let n = base_steps << level;
        let mut cur = seed.clone();
        let mut cur_p = from;
        let mut ok = true;
        for k in 1..=n {
            let s = k as f64 / n as f64;
            let p = (from.0 + s * (to.0 - from.0), from.1 + s * (to.1 - from.1));
            let prob_from = make(cur_p.0, cur_p.1);
            let prob = make(p.0, p.1);
            let guess = tangent_predict(prob.model, &cur, &prob_from, &prob).unwrap_or(cur.v0);
            let predicted_move = max_abs(&sub2(&guess, &cur.v0));
            match newton_shoot(&prob, guess) {
                Ok(tr) => {
                    let correction = max_abs(&sub2(&tr.v0, &guess));
                    if correction > (0.5 * predicted_move).max(1e-3) {
                        last_err = Some(TrajectoryError::NoConvergence {
                            iterations: tr.n_newton,
                            residual: correction,
                        });
                        ok = false;
                        break;
                    }
                    cur = tr;
                    cur_p = p;
                }
                Err(e) => {
                    last_err = Some(e);
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(cur);
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Continues a family along `points` (already in sweep order), starting from
/// `initial`, which must solve the problem at `points[0]`.
///
/// Each point is seeded from the last solved point; failures are recorded as
/// gaps and the sweep carries on from the last success.
pub fn continue_family<'m, F>(
    points: &[(f64, f64)],
    make: F,
    initial: &TrajectoryResult,
) -> (FamilyTrack, Vec<FamilyLost>)
where
    F: Fn(f64, f64) -> ShootingProblem<'m>,
{
    let mut track = FamilyTrack {
        results: vec![None; points.len()],
        gaps: Vec::new(),
    };
    let mut lost = Vec::new();
    if points.is_empty() {
        return (track, lost);
    }
    track.results[0] = Some(initial.clone());
    let mut anchor = (points[0], initial.clone());
    for (idx, &p) in points.iter().enumerate().skip(1) {
        match continue_step(&make, anchor.0, &anchor.1, p) {
            Ok(tr) => {
                anchor = (p, tr.clone());
                track.results[idx] = Some(tr);
            }
            Err(cause) => {
                track.gaps.push(idx);
                lost.push(FamilyLost {
                    index: idx,
                    t: p.0,
                    qx: p.1,
                    cause,
                });
            }
        }
    }
    (track, lost)
}
