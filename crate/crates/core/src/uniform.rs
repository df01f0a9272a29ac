//! Uniform (Airy) propagator through a coalescence of two trajectories.
//!
//! With `A = (i/2hbar)(S_a + S_b)`, `r^3 = (3i/4hbar)(S_b - S_a)`, `B = r^2`,
//! `h_a = sqrt(-r/det M_vv,a) N e^(iG_a/hbar)`, `h_b = sqrt(r/det M_vv,b) N e^(iG_b/hbar)`,
//! `c1 = (h_b - h_a)/r` and `c2 = h_a + h_b`:
//!
//! `Kun_j = i sqrt(pi) [c1 f_j'(B) + c2 f_j(B)] e^A`.
//!
//! Every root is taken on a branch continued from a neighbouring point, so a
//! sweep over a parameter grid produces three continuous surfaces `j = 1..3`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::airy::{contour_fn, Contour};
use crate::trajectory::TrajectoryResult;
use crate::C64;

/// Below this `|B|`, `c1` is taken from the recorded neighbouring limit.
pub const DELTA_CAUSTIC: f64 = 1e-4;
/// `|B|` above which a point counts as far from the caustic.
pub const FAR_FROM_CAUSTIC: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum UniformError {
    #[error("surfaces {0} and {1} agree with K2 equally well (scores within 1e-6)")]
    AmbiguousBranch(usize, usize),
    #[error("no point has both families and a K2 reference")]
    NoReference,
}

/// Inputs of the uniform formula at one point, with their branch choices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformInputs {
    pub s_a: C64,
    pub s_b: C64,
    pub g_a: C64,
    pub g_b: C64,
    pub det_a: C64,
    pub det_b: C64,
    pub a: C64,
    pub b: C64,
    /// `sqrt(B)`: the chosen cube root of `(3i/4hbar)(S_b - S_a)`.
    pub sqrt_b: C64,
    /// `sqrt(-sqrt(B)/det_a)` on the continued branch.
    pub root_a: C64,
    /// `sqrt(sqrt(B)/det_b)` on the continued branch, times the family sign.
    pub root_b: C64,
    pub norm_n: f64,
    pub hbar: f64,
    /// `c1` carried over from the nearest point with `|B| >= DELTA_CAUSTIC`.
    pub c1_limit: Option<C64>,
}

fn closest_sign(x: C64, prev: C64) -> C64 {
    if (x - prev).norm() <= (x + prev).norm() {
        x
    } else {
        -x
    }
}

impl UniformInputs {
    pub fn h(&self) -> (C64, C64) {
        let i_h = C64::i() / self.hbar;
        (
            self.root_a * self.norm_n * (i_h * self.g_a).exp(),
            self.root_b * self.norm_n * (i_h * self.g_b).exp(),
        )
    }

    /// `(c1, c2)` of the formula.
    pub fn coefficients(&self) -> (C64, C64) {
        let (ha, hb) = self.h();
        let c2 = ha + hb;
        let c1 = if self.b.norm() < DELTA_CAUSTIC {
            match self.c1_limit {
                Some(c) => c,
                None if self.sqrt_b.norm() > 0.0 => (hb - ha) / self.sqrt_b,
                None => C64::new(0.0, 0.0),
            }
        } else {
            (hb - ha) / self.sqrt_b
        };
        (c1, c2)
    }
}

/// Builds the inputs at one point. Without `prev` every root is principal;
/// with `prev` each root continues the previous choice.
pub fn uniform_inputs(
    tr_a: &TrajectoryResult,
    tr_b: &TrajectoryResult,
    norm_n: f64,
    hbar: f64,
    prev: Option<&UniformInputs>,
) -> UniformInputs {
    let (s_a, s_b) = (tr_a.action, tr_b.action);
    let (det_a, det_b) = (tr_a.det_mvv, tr_b.det_mvv);
    let a = C64::i() / (2.0 * hbar) * (s_a + s_b);
    let w = C64::i() * 3.0 / (4.0 * hbar) * (s_b - s_a);
    let r0 = if w.norm() > 0.0 {
        w.powf(1.0 / 3.0)
    } else {
        C64::new(0.0, 0.0)
    };
    let roots = [0.0, 2.0 * PI / 3.0, -2.0 * PI / 3.0].map(|t| r0 * C64::from_polar(1.0, t));

    let sqrt_b = match prev {
        None => r0,
        Some(p) => {
            // -r/det_a stays smooth and nonzero through the caustic, unlike B
            let key = |r: C64| -r / det_a;
            let target = -p.sqrt_b / p.det_a;
            *roots
                .iter()
                .min_by(|x, y| {
                    (key(**x) - target)
                        .norm()
                        .partial_cmp(&(key(**y) - target).norm())
                        .unwrap()
                })
                .unwrap()
        }
    };
    let b = sqrt_b * sqrt_b;

    let ra = (-sqrt_b / det_a).sqrt();
    let rb = (sqrt_b / det_b).sqrt();
    let (root_a, root_b) = match prev {
        None => (ra, rb),
        Some(p) => (closest_sign(ra, p.root_a), closest_sign(rb, p.root_b)),
    };
    let mut ui = UniformInputs {
        s_a,
        s_b,
        g_a: tr_a.g,
        g_b: tr_b.g,
        det_a,
        det_b,
        a,
        b,
        sqrt_b,
        root_a: if root_a.re.is_finite() {
            root_a
        } else {
            prev.map_or(root_a, |p| p.root_a)
        },
        root_b: if root_b.re.is_finite() {
            root_b
        } else {
            prev.map_or(root_b, |p| p.root_b)
        },
        norm_n,
        hbar,
        c1_limit: None,
    };
    if b.norm() < DELTA_CAUSTIC {
        ui.c1_limit = prev.map(|p| {
            if p.b.norm() >= DELTA_CAUSTIC {
                p.coefficients().0
            } else {
                p.c1_limit.unwrap_or_else(|| p.coefficients().0)
            }
        });
    }
    ui
}

/// `Kun_j` at one point.
pub fn k_uniform(ui: &UniformInputs, j: Contour) -> C64 {
    let (c1, c2) = ui.coefficients();
    let (f, fp) = contour_fn(j, ui.b);
    C64::i() * PI.sqrt() * (c1 * fp + c2 * f) * ui.a.exp()
}

/// All three surfaces at one point, in `j` order.
pub fn k_uniform_all(ui: &UniformInputs) -> [C64; 3] {
    Contour::ALL.map(|j| k_uniform(ui, j))
}

/// Makes `h_a` and `h_b` agree at the point closest to the caustic, by
/// flipping `h_b` on every point if needed. `parent[i]` is the earlier
/// point that `i` was continued from; caustic limits are re-derived along
/// it. Returns whether a flip happened.
pub fn align_family_signs(inputs: &mut [UniformInputs], parent: &[Option<usize>]) -> bool {
    let Some(k) = (0..inputs.len()).min_by(|&x, &y| inputs[x].b.norm().partial_cmp(&inputs[y].b.norm()).unwrap())
    else {
        return false;
    };
    let (ha, hb) = inputs[k].h();
    if (hb - ha).norm() <= (hb + ha).norm() {
        return false;
    }
    for ui in inputs.iter_mut() {
        ui.root_b = -ui.root_b;
        ui.c1_limit = None;
    }
    for i in 0..inputs.len() {
        if inputs[i].b.norm() < DELTA_CAUSTIC {
            if let Some(p) = parent[i].map(|j| inputs[j]) {
                inputs[i].c1_limit = Some(
                    p.c1_limit
                        .filter(|_| p.b.norm() < DELTA_CAUSTIC)
                        .unwrap_or_else(|| p.coefficients().0),
                );
            }
        }
    }
    true
}

/// Outcome of the election among the three surfaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Election {
    /// `surfaces[p][s]` is the value of surface `s` at point `p`.
    pub surfaces: Vec<[C64; 3]>,
    pub elected: usize,
    /// Mean relative deviation from `|K2|` per surface over far points.
    pub scores: [f64; 3],
    pub n_far: usize,
    pub warning: Option<UniformError>,
}

impl Election {
    pub fn elected_value(&self, p: usize) -> C64 {
        self.surfaces[p][self.elected]
    }
}

/// Elects, among per-point `Kun_j` values, the surface closest to `|K2|`
/// where `|B| > far`.
///
/// Surface `s` is contour `s + 1` throughout. The values are continuous
/// along the sweep because the cube-root branch behind `B` is itself
/// continued from point to point in [`uniform_inputs`]; re-matching by value
/// is not attempted, since far from the caustic two surfaces can have
/// nearly equal moduli while their phases still turn quickly.
pub fn select_uniform_branch(
    values: &[[C64; 3]],
    abs_b: &[f64],
    k2: &[Option<f64>],
    far: f64,
) -> Result<Election, UniformError> {
    let n = values.len();
    let surfaces = values.to_vec();
    let mut scores = [0.0; 3];
    let mut n_far = 0;
    let collect = |thr: f64, scores: &mut [f64; 3], n_far: &mut usize| {
        for p in 0..n {
            if let Some(k) = k2[p] {
                if abs_b[p] > thr && k > 0.0 {
                    for s in 0..3 {
                        scores[s] += (surfaces[p][s].norm() - k).abs() / k;
                    }
                    *n_far += 1;
                }
            }
        }
    };
    collect(far, &mut scores, &mut n_far);
    if n_far == 0 {
        collect(-1.0, &mut scores, &mut n_far);
    }
    if n_far == 0 {
        return Err(UniformError::NoReference);
    }
    for s in scores.iter_mut() {
        *s /= n_far as f64;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| scores[x].partial_cmp(&scores[y]).unwrap().then(x.cmp(&y)));
    let warning = if (scores[order[1]] - scores[order[0]]).abs() < 1e-6 {
        let (lo, hi) = (order[0].min(order[1]), order[0].max(order[1]));
        order[0] = lo;
        Some(UniformError::AmbiguousBranch(lo + 1, hi + 1))
    } else {
        None
    };
    Ok(Election {
        surfaces,
        elected: order[0],
        scores,
        n_far,
        warning,
    })
}
