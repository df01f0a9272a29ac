//! Smoothed Hamiltonians `H(v, u) = <z|H|z>` with `(z*, z) -> (v, u)`.
//!
//! Both models are polynomial in `(u, v)`, so values and derivatives are
//! coded analytically. Finite differences appear only in tests.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{transpose2, Mat2, C2, ZERO};
use crate::phase::{qp_from_uv, CoherentLabel, CoherentParams, PhasePointUV};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("coupling mu must be non-negative, got {0}")]
    NegativeMu(f64),
    #[error("width b_{axis} = {b} does not match sqrt(hbar/omega) = {expected}")]
    UnmatchedWidth { axis: char, b: f64, expected: f64 },
    #[error("frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
}

/// Second derivatives of `H` as 2x2 blocks: `uv[i][j] = d2H/du_i dv_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HessianBlocks {
    pub uu: Mat2,
    pub uv: Mat2,
    pub vu: Mat2,
    pub vv: Mat2,
}

/// A holomorphic Hamiltonian on complexified phase space.
pub trait HamiltonianModel: Send + Sync {
    fn name(&self) -> String;
    fn coherent(&self) -> &CoherentParams;
    fn value(&self, pt: &PhasePointUV) -> C64;
    fn grad_u(&self, pt: &PhasePointUV) -> C2;
    fn grad_v(&self, pt: &PhasePointUV) -> C2;
    fn hess(&self, pt: &PhasePointUV) -> HessianBlocks;
}

/// Shape of the coupling term of the Nelson potential.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingForm {
    /// `(q_y - q_x^2/2)^2`, the standard Nelson valley.
    #[default]
    Parabolic,
    /// `(q_y - q_x/2)^2`, a purely quadratic variant.
    Linear,
}

impl std::str::FromStr for CouplingForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parabolic" => Ok(Self::Parabolic),
            "linear" => Ok(Self::Linear),
            other => Err(format!("unknown coupling form '{other}' (expected parabolic|linear)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NelsonParams {
    pub mu: f64,
    pub form: CouplingForm,
}

impl NelsonParams {
    pub fn new(mu: f64, form: CouplingForm) -> Result<Self, ModelError> {
        if !(mu >= 0.0) {
            return Err(ModelError::NegativeMu(mu));
        }
        Ok(Self { mu, form })
    }

    /// Bare potential `V(q) = (q_y - f(q_x))^2 + mu q_x^2 / 2`.
    pub fn potential(&self, qx: f64, qy: f64) -> f64 {
        let d = match self.form {
            CouplingForm::Parabolic => qy - 0.5 * qx * qx,
            CouplingForm::Linear => qy - 0.5 * qx,
        };
        d * d + 0.5 * self.mu * qx * qx
    }
}

/// `H = p^2/2 + W(q)`, with `W` the Gaussian-smoothed Nelson potential.
#[derive(Clone, Debug)]
pub struct NelsonModel {
    params: NelsonParams,
    cp: CoherentParams,
}

/// Value, gradient and Hessian of the smoothed potential in `q`.
struct PotentialJet {
    w: C64,
    dw: C2,
    d2w: Mat2,
}

pub fn nelson_smoothed(params: NelsonParams, cp: CoherentParams) -> NelsonModel {
    NelsonModel { params, cp }
}

impl NelsonModel {
    pub fn params(&self) -> &NelsonParams {
        &self.params
    }

    /// Constant left over by smoothing: the value of `H` at `q = p = 0`.
    pub fn zero_point(&self) -> f64 {
        let zero = PhasePointUV::new([ZERO; 2], [ZERO; 2]);
        self.value(&zero).re
    }

    fn jet(&self, q: &C2) -> PotentialJet {
        let mu = self.params.mu;
        // Gaussian variances <dq_r^2> = b_r^2/2
        let sx = 0.5 * self.cp.b()[0].powi(2);
        let sy = 0.5 * self.cp.b()[1].powi(2);
        let (x, y) = (q[0], q[1]);
        match self.params.form {
            CouplingForm::Linear => {
                let d = y - 0.5 * x;
                let w = d * d + 0.5 * mu * x * x + sy + 0.25 * sx + 0.5 * mu * sx;
                let dw = [-d + mu * x, 2.0 * d];
                let d2w = [
                    [C64::from(0.5 + mu), C64::from(-1.0)],
                    [C64::from(-1.0), C64::from(2.0)],
                ];
                PotentialJet { w, dw, d2w }
            }
            CouplingForm::Parabolic => {
                // <(Y - X^2/2)^2> = D^2 + sy + x^2 sx + 3 sx^2/4 - D sx, D = y - x^2/2
                let d = y - 0.5 * x * x;
                let w = d * d + sy + x * x * sx + 0.75 * sx * sx - d * sx + 0.5 * mu * (x * x + sx);
                let dw = [-2.0 * d * x + 3.0 * sx * x + mu * x, 2.0 * d - sx];
                let dxx = 2.0 * x * x - 2.0 * d + 3.0 * sx + mu;
                let d2w = [[dxx, -2.0 * x], [-2.0 * x, C64::from(2.0)]];
                PotentialJet { w, dw, d2w }
            }
        }
    }
}

impl HamiltonianModel for NelsonModel {
    fn name(&self) -> String {
        let form = match self.params.form {
            CouplingForm::Parabolic => "parabolic",
            CouplingForm::Linear => "linear",
        };
        format!("nelson(mu={}, {form})", self.params.mu)
    }

    fn coherent(&self) -> &CoherentParams {
        &self.cp
    }

    fn value(&self, pt: &PhasePointUV) -> C64 {
        let (q, p) = qp_from_uv(pt, &self.cp);
        let c = self.cp.c();
        let kinetic = 0.5 * (p[0] * p[0] + p[1] * p[1]) + 0.25 * (c[0] * c[0] + c[1] * c[1]);
        kinetic + self.jet(&q).w
    }

    fn grad_u(&self, pt: &PhasePointUV) -> C2 {
        let (q, p) = qp_from_uv(pt, &self.cp);
        let jet = self.jet(&q);
        let (b, c) = (self.cp.b(), self.cp.c());
        // dq/du = b/sqrt2, dp/du = -i c/sqrt2
        std::array::from_fn(|r| (b[r] * jet.dw[r] - C64::i() * c[r] * p[r]) / SQRT_2)
    }

    fn grad_v(&self, pt: &PhasePointUV) -> C2 {
        let (q, p) = qp_from_uv(pt, &self.cp);
        let jet = self.jet(&q);
        let (b, c) = (self.cp.b(), self.cp.c());
        std::array::from_fn(|r| (b[r] * jet.dw[r] + C64::i() * c[r] * p[r]) / SQRT_2)
    }

    fn hess(&self, pt: &PhasePointUV) -> HessianBlocks {
        let (q, _) = qp_from_uv(pt, &self.cp);
        let jet = self.jet(&q);
        let (b, c) = (self.cp.b(), self.cp.c());
        let qq: Mat2 = std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * b[i] * b[j] * jet.d2w[i][j]));
        let mut uu = qq;
        let mut uv = qq;
        for r in 0..2 {
            let kin = 0.5 * c[r] * c[r];
            uu[r][r] -= kin;
            uv[r][r] += kin;
        }
        HessianBlocks {
            uu,
            uv,
            vu: transpose2(&uv),
            vv: uu,
        }
    }
}

/// `H = hbar w_x (v_x u_x + 1/2) + hbar w_y (v_y u_y + 1/2)`, the smoothed
/// oscillator for matched widths `b_r = sqrt(hbar / w_r)`.
#[derive(Clone, Debug)]
pub struct HarmonicModel {
    omega: [f64; 2],
    cp: CoherentParams,
}

pub fn harmonic_smoothed(omega_x: f64, omega_y: f64, cp: CoherentParams) -> Result<HarmonicModel, ModelError> {
    for (axis, (w, b)) in ['x', 'y'].into_iter().zip([omega_x, omega_y].into_iter().zip(cp.b())) {
        if !(w > 0.0) {
            return Err(ModelError::NonPositiveFrequency(w));
        }
        let expected = (cp.hbar() / w).sqrt();
        if ((b - expected) / expected).abs() > 1e-12 {
            return Err(ModelError::UnmatchedWidth { axis, b, expected });
        }
    }
    Ok(HarmonicModel {
        omega: [omega_x, omega_y],
        cp,
    })
}

impl HarmonicModel {
    /// Oscillator whose widths match the given coherent parameters.
    pub fn matched(cp: CoherentParams) -> Self {
        let omega = std::array::from_fn(|r| cp.hbar() / cp.b()[r].powi(2));
        Self { omega, cp }
    }

    pub fn omega(&self) -> [f64; 2] {
        self.omega
    }

    /// Closed form `<z''|exp(-iHT/hbar)|z'>`: each axis contributes
    /// `exp(-iwT/2) exp(-|z'|^2/2 - |z''|^2/2 + z''* z' e^(-iwT))`.
    pub fn propagator(&self, z_prime: &CoherentLabel, z_dprime: &CoherentLabel, t: f64) -> C64 {
        (0..2)
            .map(|r| {
                let (a, b) = (z_prime.z[r], z_dprime.z[r]);
                let rot = C64::from_polar(1.0, -self.omega[r] * t);
                (C64::new(-0.5 * (a.norm_sqr() + b.norm_sqr()), -0.5 * self.omega[r] * t) + b.conj() * a * rot).exp()
            })
            .product()
    }
}

impl HamiltonianModel for HarmonicModel {
    fn name(&self) -> String {
        format!("harmonic(wx={}, wy={})", self.omega[0], self.omega[1])
    }

    fn coherent(&self) -> &CoherentParams {
        &self.cp
    }

    fn value(&self, pt: &PhasePointUV) -> C64 {
        let h = self.cp.hbar();
        (0..2).map(|r| h * self.omega[r] * (pt.v[r] * pt.u[r] + 0.5)).sum()
    }

    fn grad_u(&self, pt: &PhasePointUV) -> C2 {
        let h = self.cp.hbar();
        std::array::from_fn(|r| h * self.omega[r] * pt.v[r])
    }

    fn grad_v(&self, pt: &PhasePointUV) -> C2 {
        let h = self.cp.hbar();
        std::array::from_fn(|r| h * self.omega[r] * pt.u[r])
    }

    fn hess(&self, _pt: &PhasePointUV) -> HessianBlocks {
        let h = self.cp.hbar();
        let uv = [
            [C64::from(h * self.omega[0]), ZERO],
            [ZERO, C64::from(h * self.omega[1])],
        ];
        HessianBlocks {
            uu: [[ZERO; 2]; 2],
            uv,
            vu: uv,
            vv: [[ZERO; 2]; 2],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::uv_from_qp;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cp() -> CoherentParams {
        CoherentParams::isotropic(0.2, 0.05).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, scale: f64) -> PhasePointUV {
        let mut c = || C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale));
        PhasePointUV::new([c(), c()], [c(), c()])
    }

    /// Nodes and weights for integrals against exp(-x^2): the trapezoid rule
    /// on [-9, 9] converges geometrically for such integrands.
    fn gaussian_nodes() -> Vec<(f64, f64)> {
        let h = 0.05;
        (-180..=180)
            .map(|k| {
                let x = k as f64 * h;
                (x, h * (-x * x).exp())
            })
            .collect()
    }

    /// <z|H|z> by tensor quadrature of the
    /// position-space form: a Gaussian in q with variance b^2/2 per axis,
    /// plus the momentum variance c^2/2 contributed by the kinetic term.
    fn smoothed_by_quadrature(params: &NelsonParams, q: [f64; 2], p: [f64; 2], cp: &CoherentParams) -> f64 {
        let nodes = gaussian_nodes();
        let b = cp.b();
        let c = cp.c();
        let mut pot = 0.0;
        for &(xi, wi) in &nodes {
            for &(yj, wj) in &nodes {
                // |psi(q)|^2 = prod exp(-(q-qb)^2/b^2)/(sqrt(pi) b)
                let qx = q[0] + b[0] * xi;
                let qy = q[1] + b[1] * yj;
                pot += wi * wj * params.potential(qx, qy);
            }
        }
        pot /= std::f64::consts::PI;
        0.5 * (p[0] * p[0] + p[1] * p[1]) + 0.25 * (c[0] * c[0] + c[1] * c[1]) + pot
    }

    #[test]
    fn linear_zero_point_constant() {
        let m = nelson_smoothed(NelsonParams::new(0.1, CouplingForm::Linear).unwrap(), cp());
        assert_relative_eq!(m.zero_point(), 0.05725, max_relative = 1e-13);
        let quad = smoothed_by_quadrature(m.params(), [0.0, 0.0], [0.0, 0.0], &cp());
        assert_relative_eq!(quad, 0.05725, max_relative = 1e-12);
    }

    #[test]
    fn smoothed_value_matches_gaussian_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for form in [CouplingForm::Linear, CouplingForm::Parabolic] {
            let m = nelson_smoothed(NelsonParams::new(0.1, form).unwrap(), cp());
            for _ in 0..20 {
                let q = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let pt = uv_from_qp(q.map(C64::from), p.map(C64::from), &cp());
                let h = m.value(&pt);
                assert!(h.im.abs() < 1e-13);
                let quad = smoothed_by_quadrature(m.params(), q, p, &cp());
                assert_relative_eq!(h.re, quad, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn linear_form_shifts_classical_value_by_constant() {
        let m = nelson_smoothed(NelsonParams::new(0.1, CouplingForm::Linear).unwrap(), cp());
        let c0 = m.zero_point();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let q = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let pt = uv_from_qp(q.map(C64::from), p.map(C64::from), &cp());
            let classical = 0.5 * (p[0] * p[0] + p[1] * p[1]) + m.params().potential(q[0], q[1]);
            assert_relative_eq!(m.value(&pt).re - c0, classical, max_relative = 1e-12);
        }
    }

    fn check_derivatives(model: &dyn HamiltonianModel, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = 1e-5;
        let rel = |a: C64, b: C64| (a - b).norm() / b.norm().max(1.0);
        for _ in 0..20 {
            let pt = random_point(&mut rng, 2.0);
            let gu = model.grad_u(&pt);
            let gv = model.grad_v(&pt);
            let hs = model.hess(&pt);
            for r in 0..2 {
                let shift = |du: C64, dv: C64| {
                    let mut p2 = pt;
                    p2.u[r] += du;
                    p2.v[r] += dv;
                    p2
                };
                let e = C64::from(eps);
                let z = C64::from(0.0);
                let fd_u = (model.value(&shift(e, z)) - model.value(&shift(-e, z))) / (2.0 * eps);
                let fd_v = (model.value(&shift(z, e)) - model.value(&shift(z, -e))) / (2.0 * eps);
                assert!(rel(gu[r], fd_u) < 1e-6, "grad_u {r}: {} vs {}", gu[r], fd_u);
                assert!(rel(gv[r], fd_v) < 1e-6, "grad_v {r}");
                // holomorphy: derivative along the imaginary direction agrees
                let fd_ui = (model.value(&shift(C64::i() * eps, z)) - model.value(&shift(-C64::i() * eps, z)))
                    / (2.0 * C64::i() * eps);
                assert!(rel(gu[r], fd_ui) < 1e-6);
                let gu_p = model.grad_u(&shift(e, z));
                let gu_m = model.grad_u(&shift(-e, z));
                let gv_p = model.grad_v(&shift(e, z));
                let gv_m = model.grad_v(&shift(-e, z));
                for s in 0..2 {
                    let fd_uu = (gu_p[s] - gu_m[s]) / (2.0 * eps);
                    let fd_vu = (gv_p[s] - gv_m[s]) / (2.0 * eps);
                    assert!(rel(hs.uu[r][s], fd_uu) < 1e-6, "H_uu");
                    // d2H/du_r dv_s
                    assert!(rel(hs.uv[r][s], fd_vu) < 1e-6, "H_uv");
                }
                let gv_pv = model.grad_v(&shift(z, e));
                let gv_mv = model.grad_v(&shift(z, -e));
                for s in 0..2 {
                    assert!(rel(hs.vv[r][s], (gv_pv[s] - gv_mv[s]) / (2.0 * eps)) < 1e-6, "H_vv");
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    assert!((hs.uv[i][j] - hs.vu[j][i]).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn nelson_derivatives_match_finite_differences() {
        for (seed, form) in [(1, CouplingForm::Parabolic), (2, CouplingForm::Linear)] {
            let m = nelson_smoothed(NelsonParams::new(0.1, form).unwrap(), cp());
            check_derivatives(&m, seed);
        }
    }

    #[test]
    fn harmonic_model() {
        let cp = cp();
        let h = HarmonicModel::matched(cp);
        check_derivatives(&h, 9);
        let zero = PhasePointUV::new([ZERO; 2], [ZERO; 2]);
        let w = h.omega();
        assert_relative_eq!(h.value(&zero).re, 0.05 * (w[0] + w[1]) / 2.0, max_relative = 1e-15);
        let hs = h.hess(&random_point(&mut ChaCha8Rng::seed_from_u64(1), 1.0));
        assert_eq!(hs.uu, [[ZERO; 2]; 2]);
        assert_eq!(hs.vv, [[ZERO; 2]; 2]);
        assert_eq!(hs.uv[0][0].re, 0.05 * w[0]);
        assert_eq!(hs.uv[0][1], ZERO);
        assert!(harmonic_smoothed(w[0], w[1], cp).is_ok());
        assert!(matches!(
            harmonic_smoothed(2.0 * w[0], w[1], cp),
            Err(ModelError::UnmatchedWidth { axis: 'x', .. })
        ));
    }

    #[test]
    fn negative_mu_rejected() {
        assert_eq!(
            NelsonParams::new(-0.1, CouplingForm::Parabolic),
            Err(ModelError::NegativeMu(-0.1))
        );
    }
}
