//! Quadratic semiclassical propagator from contributing trajectories:
//! `K = N sqrt(1/det M_vv) exp((i/hbar)(S + G))`, the Stokes discriminant
//! `F0` and the combination of the two families.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phase::CoherentLabel;
use crate::trajectory::TrajectoryResult;
use crate::C64;

/// Default guard on `|det M_vv|` below which `K2` is not evaluated.
pub const CAUSTIC_GUARD: f64 = 1e-12;
/// Default tolerance on the sign of `F0`.
pub const EPS_STOKES: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemiclassicalError {
    #[error("|det M_vv| = {0:e} is at a caustic; use the uniform formula")]
    CausticSingular(f64),
    #[error("no included contribution to combine")]
    EmptyContributionSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    A,
    B,
}

impl Family {
    pub fn other(self) -> Family {
        match self {
            Family::A => Family::B,
            Family::B => Family::A,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Family::A => "fa",
            Family::B => "fb",
        }
    }
}

/// One trajectory's term of the semiclassical sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub family: Family,
    pub action: C64,
    pub g: C64,
    pub det_mvv: C64,
    /// Branch-resolved `sqrt(1/det M_vv)`.
    pub prefactor: C64,
    pub norm_n: f64,
    pub f0: f64,
    pub included: bool,
    /// `N * prefactor * exp((i/hbar)(S + G))`.
    pub value: C64,
}

/// `N = exp(-|z'|^2/2 - |z''|^2/2)`.
pub fn norm_factor(z_prime: &CoherentLabel, z_dprime: &CoherentLabel) -> f64 {
    (-0.5 * (z_prime.norm_sqr() + z_dprime.norm_sqr())).exp()
}

/// `sqrt(1/det)` from the time-continued phase of `det M_vv`.
pub fn time_tracked_prefactor(det_mvv: C64, mvv_arg: f64) -> C64 {
    C64::from_polar(det_mvv.norm().powf(-0.5), -0.5 * mvv_arg)
}

/// Picks the square root of `1/det` closest to `prev`.
pub fn matched_prefactor(det_mvv: C64, prev: C64) -> C64 {
    let p = det_mvv.inv().sqrt();
    if (p - prev).norm() <= (p + prev).norm() {
        p
    } else {
        -p
    }
}

/// Evaluates one trajectory's contribution. The prefactor branch follows
/// `prev` when given, otherwise the time continuation of `det M_vv(t)`.
pub fn k2_single(
    tr: &TrajectoryResult,
    family: Family,
    z_prime: &CoherentLabel,
    z_dprime: &CoherentLabel,
    hbar: f64,
    prev: Option<&Contribution>,
) -> Result<Contribution, SemiclassicalError> {
    let det = tr.det_mvv;
    if det.norm() < CAUSTIC_GUARD {
        return Err(SemiclassicalError::CausticSingular(det.norm()));
    }
    let prefactor = match prev {
        Some(p) => matched_prefactor(det, p.prefactor),
        None => time_tracked_prefactor(det, tr.mvv_arg),
    };
    let norm_n = norm_factor(z_prime, z_dprime);
    let f0 = tr.action.im - hbar * norm_n.ln();
    let value = norm_n * prefactor * (C64::i() / hbar * (tr.action + tr.g)).exp();
    Ok(stokes_filter(Contribution {
        family,
        action: tr.action,
        g: tr.g,
        det_mvv: det,
        prefactor,
        norm_n,
        f0,
        included: true,
        value,
    }))
}

/// Flags contributions with `F0 < -EPS_STOKES` as excluded.
pub fn stokes_filter(mut c: Contribution) -> Contribution {
    c.included = c.f0 >= -EPS_STOKES;
    c
}

/// Result of combining contributions at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Combined {
    pub value: C64,
    pub members: Vec<Family>,
}

/// Sums the included terms. With resolved neighbouring `|K2|` values
/// available, chooses instead between `{f_a}` and `{f_a + f_b}` so that
/// `|K2|` is closest to their mean; ties go to the smaller set.
///
/// `previous` is the membership at the point this one was continued from.
/// Leaving it means switching `f_b` on or off, which is only allowed while
/// `f_b` is the smaller term: a Stokes switch happens where the switched
/// contribution is subdominant, and switching a dominant term would make
/// `|K2|` jump across the whole region beyond.
pub fn k2_combine(
    contribs: &[Contribution],
    neighbors: &[f64],
    previous: Option<&[Family]>,
) -> Result<Combined, SemiclassicalError> {
    let inc: Vec<&Contribution> = contribs.iter().filter(|c| c.included).collect();
    if inc.is_empty() {
        return Err(SemiclassicalError::EmptyContributionSet);
    }
    let lead = inc.iter().find(|c| c.family == Family::A).copied().unwrap_or(inc[0]);
    let single = Combined {
        value: lead.value,
        members: vec![lead.family],
    };
    if inc.len() == 1 {
        return Ok(single);
    }
    let both = Combined {
        value: inc.iter().map(|c| c.value).sum(),
        members: inc.iter().map(|c| c.family).collect(),
    };
    if neighbors.is_empty() {
        return Ok(both);
    }
    let target = neighbors.iter().sum::<f64>() / neighbors.len() as f64;
    let d1 = (single.value.norm() - target).abs();
    let d2 = (both.value.norm() - target).abs();
    let closer = if d2 < d1 && (d1 - d2) > 1e-12 * target.max(1e-300) {
        both
    } else {
        single
    };
    let Some(prev) = previous else { return Ok(closer) };
    let other = inc.iter().find(|c| c.family != lead.family).unwrap();
    let was_both = prev.len() > 1;
    let is_both = closer.members.len() > 1;
    if was_both == is_both || other.value.norm() < lead.value.norm() {
        return Ok(closer);
    }
    // switch refused: keep the previous membership
    Ok(Combined {
        value: if was_both {
            inc.iter().map(|c| c.value).sum()
        } else {
            lead.value
        },
        members: if was_both {
            inc.iter().map(|c| c.family).collect()
        } else {
            vec![lead.family]
        },
    })
}
