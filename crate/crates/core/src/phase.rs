//! Coherent-state parameterization and the `(q, p) <-> (u, v)` change of
//! variables.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, C2};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("position width must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("hbar must be positive, got {0}")]
    NonPositiveHbar(f64),
}

/// Widths `b_r` (position) and `c_r = hbar / b_r` (momentum) of the coherent
/// state family, together with `hbar`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentParams {
    b: [f64; 2],
    c: [f64; 2],
    hbar: f64,
}

impl CoherentParams {
    pub fn new(b_x: f64, b_y: f64, hbar: f64) -> Result<Self, ParamError> {
        for b in [b_x, b_y] {
            if !(b > 0.0) || !b.is_finite() {
                return Err(ParamError::NonPositiveWidth(b));
            }
        }
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(ParamError::NonPositiveHbar(hbar));
        }
        Ok(Self {
            b: [b_x, b_y],
            c: [hbar / b_x, hbar / b_y],
            hbar,
        })
    }

    /// Equal widths on both axes.
    pub fn isotropic(b: f64, hbar: f64) -> Result<Self, ParamError> {
        Self::new(b, b, hbar)
    }

    pub fn b(&self) -> [f64; 2] {
        self.b
    }

    pub fn c(&self) -> [f64; 2] {
        self.c
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }
}

/// Label `z = (z_x, z_y)` of a coherent state `|z>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentLabel {
    pub z: C2,
}

impl CoherentLabel {
    pub fn new(z_x: C64, z_y: C64) -> Self {
        Self { z: [z_x, z_y] }
    }

    /// Label of the state centred at real `(q̄, p̄)`.
    pub fn from_centroid(q: [f64; 2], p: [f64; 2], params: &CoherentParams) -> Self {
        let z = std::array::from_fn(|r| C64::new(q[r] / params.b[r], p[r] / params.c[r]) / SQRT_2);
        Self { z }
    }

    /// Real centroids `(q̄, p̄)` of the state.
    pub fn centroid(&self, params: &CoherentParams) -> ([f64; 2], [f64; 2]) {
        let q = std::array::from_fn(|r| SQRT_2 * params.b[r] * self.z[r].re);
        let p = std::array::from_fn(|r| SQRT_2 * params.c[r] * self.z[r].im);
        (q, p)
    }

    /// `|z|^2 = |z_x|^2 + |z_y|^2`.
    pub fn norm_sqr(&self) -> f64 {
        self.z[0].norm_sqr() + self.z[1].norm_sqr()
    }

    pub fn conj(&self) -> C2 {
        [self.z[0].conj(), self.z[1].conj()]
    }
}

/// A point `(u, v)` of complexified phase space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePointUV {
    pub u: C2,
    pub v: C2,
}

impl PhasePointUV {
    pub fn new(u: C2, v: C2) -> Self {
        Self { u, v }
    }
}

/// `u_r = (q_r/b_r + i p_r/c_r)/sqrt2`, `v_r = (q_r/b_r - i p_r/c_r)/sqrt2`.
pub fn uv_from_qp(q: C2, p: C2, params: &CoherentParams) -> PhasePointUV {
    let i = C64::i();
    let u = std::array::from_fn(|r| (q[r] / params.b[r] + i * p[r] / params.c[r]) / SQRT_2);
    let v = std::array::from_fn(|r| (q[r] / params.b[r] - i * p[r] / params.c[r]) / SQRT_2);
    PhasePointUV { u, v }
}

/// Inverse of [`uv_from_qp`].
pub fn qp_from_uv(pt: &PhasePointUV, params: &CoherentParams) -> (C2, C2) {
    let i = C64::i();
    let q = std::array::from_fn(|r| params.b[r] * (pt.u[r] + pt.v[r]) / SQRT_2);
    let p = std::array::from_fn(|r| -i * params.c[r] * (pt.u[r] - pt.v[r]) / SQRT_2);
    (q, p)
}

/// Exact overlap `<z2|z1> = exp(-|z1|^2/2 - |z2|^2/2 + z2* . z1)`.
pub fn overlap(z1: &CoherentLabel, z2: &CoherentLabel) -> C64 {
    if z1 == z2 {
        // exact, rather than exp of a rounded zero
        return C64::new(1.0, 0.0);
    }
    let cross = dot(&z2.conj(), &z1.z);
    (cross - 0.5 * (z1.norm_sqr() + z2.norm_sqr())).exp()
}
