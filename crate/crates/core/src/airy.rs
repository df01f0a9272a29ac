//! Airy function of complex argument and the three contour solutions
//! `f_j(xi) = (1/2pi) Int_{C_j} exp(i(xi t + t^3/3)) dt`.
//!
//! The integrand decays in the valleys `arg t = pi/6` (V0), `5pi/6` (V1) and
//! `-pi/2` (V2). `C_1` runs V1 -> V0, `C_2` runs V0 -> V2 and `C_3` runs
//! V2 -> V1, so `f_1 = Ai(xi)`, `f_2 = w^2 Ai(w^2 xi)`, `f_3 = w Ai(w xi)`
//! with `w = exp(2 pi i / 3)`, and `f_1 + f_2 + f_3 = 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::C64;

/// `Ai(0) = 3^(-2/3) / Gamma(2/3)`.
pub const AI0: f64 = 0.355_028_053_887_817_24;
/// `Ai'(0) = -3^(-1/3) / Gamma(1/3)`.
pub const AIP0: f64 = -0.258_819_403_792_806_8;

const SERIES_RADIUS: f64 = 3.0;
const ASYMPTOTIC_RADIUS: f64 = 7.0;

fn omega() -> C64 {
    C64::from_polar(1.0, 2.0 * PI / 3.0)
}

/// Maclaurin series, `a_n = a_(n-3) / (n (n-1))`.
fn ai_series(z: C64) -> (C64, C64) {
    let r = z.norm();
    let mut coef = vec![AI0, AIP0, 0.0];
    let mut val = C64::new(AI0, 0.0);
    let mut der = C64::new(0.0, 0.0);
    let mut zn1 = C64::new(1.0, 0.0); // z^(n-1)
    for n in 1..400usize {
        if n >= 3 {
            coef.push(coef[n - 3] / (n * (n - 1)) as f64);
        }
        let a = coef[n];
        der += a * n as f64 * zn1;
        zn1 *= z;
        val += a * zn1;
        // the next nonzero term bounds the tail once terms shrink
        if n > 6 && n % 3 == 0 {
            let tail = coef[n - 2].abs().max(coef[n - 1].abs()) * r.powi(n as i32 - 2) * (n as f64 + 1.0);
            if tail < 1e-18 * (val.norm() + der.norm()) {
                break;
            }
        }
    }
    (val, der)
}

/// Leading asymptotic expansion, valid for `|arg z| <= 2pi/3` and large `|z|`.
fn ai_asymptotic(z: C64) -> (C64, C64) {
    let zeta = 2.0 / 3.0 * z.powf(1.5);
    let mut su = C64::new(1.0, 0.0);
    let mut sv = C64::new(1.0, 0.0);
    let mut u = 1.0f64;
    let mut zpow = C64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf);
        let v = -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * u;
        zpow *= -zeta;
        let tu = u / zpow;
        let tv = v / zpow;
        let size = tu.norm().max(tv.norm());
        if size > last {
            break;
        }
        su += tu;
        sv += tv;
        last = size;
        if size < 1e-17 {
            break;
        }
    }
    let e = (-zeta).exp() / (2.0 * PI.sqrt());
    let q = z.powf(0.25);
    (e / q * su, -e * q * sv)
}

/// Taylor stepping of `w'' = z w` from `(z0, w0, w0')` to `z1` along the
/// straight segment.
fn taylor_walk(z0: C64, w0: C64, d0: C64, z1: C64) -> (C64, C64) {
    let span = z1 - z0;
    let n_steps = (span.norm() / 0.4).ceil().max(1.0) as usize;
    let h = span / n_steps as f64;
    let (mut z, mut w, mut d) = (z0, w0, d0);
    for _ in 0..n_steps {
        // coefficients a_n of w(z + s) = sum a_n s^n, evaluated at s = h
        let mut a_nm1 = d; // a_1
        let mut a_nm2 = w; // a_0
        let mut a_nm3 = C64::new(0.0, 0.0); // a_(-1)
        let mut hp = h; // h^1
        let mut val = w + d * h;
        let mut der = d;
        for n in 2..80 {
            // n(n-1) a_n = z a_(n-2) + a_(n-3)
            let a_n = (z * a_nm2 + a_nm3) / ((n * (n - 1)) as f64);
            let t_der = a_n * (n as f64) * hp;
            hp *= h;
            let t_val = a_n * hp;
            val += t_val;
            der += t_der;
            a_nm3 = a_nm2;
            a_nm2 = a_nm1;
            a_nm1 = a_n;
            if n > 6 && t_val.norm() < 1e-18 * val.norm() && t_der.norm() < 1e-18 * der.norm() {
                break;
            }
        }
        z += h;
        w = val;
        d = der;
    }
    (w, d)
}

/// `(Ai(z), Ai'(z))`.
pub fn ai(z: C64) -> (C64, C64) {
    let r = z.norm();
    let arg = z.arg();
    if r <= SERIES_RADIUS {
        return ai_series(z);
    }
    if r >= ASYMPTOTIC_RADIUS {
        if arg.abs() <= 2.0 * PI / 3.0 {
            return ai_asymptotic(z);
        }
        // Ai(z) = -w Ai(w z) - w^2 Ai(w^2 z), both rotated arguments inside
        // the sector of the expansion
        let w = omega();
        let (a1, d1) = ai_asymptotic(w * z);
        let (a2, d2) = ai_asymptotic(w * w * z);
        return (-w * a1 - w * w * a2, -w * w * d1 - w * w * w * w * d2);
    }
    if arg.abs() < PI / 3.0 {
        // recessive sector: walk inwards from the asymptotic radius
        let start = C64::from_polar(ASYMPTOTIC_RADIUS, arg);
        let (w0, d0) = ai_asymptotic(start);
        return taylor_walk(start, w0, d0, z);
    }
    ai_series(z)
}

/// One of the three integration contours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Contour {
    J1,
    J2,
    J3,
}

impl Contour {
    pub const ALL: [Contour; 3] = [Contour::J1, Contour::J2, Contour::J3];

    pub fn index(self) -> usize {
        match self {
            Contour::J1 => 1,
            Contour::J2 => 2,
            Contour::J3 => 3,
        }
    }

    /// Start and end valley.
    pub fn valleys(self) -> (usize, usize) {
        match self {
            Contour::J1 => (1, 0),
            Contour::J2 => (0, 2),
            Contour::J3 => (2, 1),
        }
    }
}

/// `(f_j(xi), f_j'(xi))`.
pub fn contour_fn(j: Contour, xi: C64) -> (C64, C64) {
    let w = omega();
    match j {
        Contour::J1 => ai(xi),
        Contour::J2 => {
            let (a, d) = ai(w * w * xi);
            (w * w * a, w * d)
        }
        Contour::J3 => {
            let (a, d) = ai(w * xi);
            (w * a, w * w * d)
        }
    }
}

/// Direct numerical evaluation of the contour integrals, used to check the
/// special-function route above. Slow.
pub mod quadrature {
    use super::*;

    /// Valley centre angles for V0, V1, V2.
    pub const VALLEYS: [f64; 3] = [PI / 6.0, 5.0 * PI / 6.0, -PI / 2.0];

    #[derive(Debug, thiserror::Error, PartialEq)]
    pub enum QuadratureError {
        #[error("steepest-descent path of saddle {0} did not reach a valley")]
        Lost(C64),
        #[error("saddle paths do not connect the requested valleys (Stokes line?)")]
        Disconnected,
    }

    fn phi(t: C64, xi: C64) -> C64 {
        C64::i() * (xi * t + t * t * t / 3.0)
    }

    fn dphi(t: C64, xi: C64) -> C64 {
        C64::i() * (xi + t * t)
    }

    /// Gauss-Legendre nodes and weights on `[-1, 1]`.
    pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            x[i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (x, w)
    }

    /// `Int_0^inf exp(phi(r e^(ia))) (1, i t) e^(ia) dr` along a valley ray.
    fn ray(alpha: f64, xi: C64) -> (C64, C64) {
        let (x, w) = gauss_legendre(24);
        let e = C64::from_polar(1.0, alpha);
        let panels = 24;
        let len = 12.0 / panels as f64;
        let mut acc = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for p in 0..panels {
            let a = p as f64 * len;
            for (xk, wk) in x.iter().zip(&w) {
                let r = a + 0.5 * len * (xk + 1.0);
                let t = e * r;
                let g = phi(t, xi).exp() * e * (0.5 * len * wk);
                acc.0 += g;
                acc.1 += g * C64::i() * t;
            }
        }
        acc
    }

    /// Saddle path: `(start valley, end valley, Int e^phi dt, Int i t e^phi dt)`.
    fn saddle_path(ts: C64, xi: C64) -> Result<(usize, usize, C64, C64), QuadratureError> {
        let ps = phi(ts, xi);
        let d0 = (-2.0 / (2.0 * C64::i() * ts)).sqrt();
        let h = 0.004;
        let cut = 8.0;
        let mut sums = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        // sigma = 0
        sums.0 += d0 * h;
        sums.1 += C64::i() * ts * d0 * h;
        let mut ends = [0usize; 2];
        for (side, sgn) in [(0usize, -1.0f64), (1, 1.0)] {
            let mut t = ts;
            let mut slope = d0 * sgn;
            let mut k = 1usize;
            loop {
                let s = sgn * k as f64 * h;
                let target = ps - s * s;
                let mut tn = t + slope * h;
                for _ in 0..50 {
                    let dt = (phi(tn, xi) - target) / dphi(tn, xi);
                    tn -= dt;
                    if dt.norm() < 1e-15 * (1.0 + tn.norm()) {
                        break;
                    }
                }
                let dp = dphi(tn, xi);
                let dtds = -2.0 * s / dp;
                if !dtds.re.is_finite() || !dtds.im.is_finite() {
                    return Err(QuadratureError::Lost(ts));
                }
                slope = dtds * sgn;
                t = tn;
                if s.abs() <= cut {
                    let g = (-s * s).exp() * dtds * h;
                    sums.0 += g;
                    sums.1 += g * C64::i() * t;
                }
                if s.abs() > cut && t.norm() > (3.0 * ts.norm()).max(4.0) {
                    let ang = t.arg();
                    let dist = |c: f64| {
                        let d = (ang - c).rem_euclid(2.0 * PI);
                        d.min(2.0 * PI - d)
                    };
                    let best = (0..3)
                        .min_by(|&a, &b| dist(VALLEYS[a]).partial_cmp(&dist(VALLEYS[b])).unwrap())
                        .unwrap();
                    if dist(VALLEYS[best]) > PI / 6.0 {
                        return Err(QuadratureError::Lost(ts));
                    }
                    ends[side] = best;
                    break;
                }
                k += 1;
                if k > 200_000 {
                    return Err(QuadratureError::Lost(ts));
                }
            }
        }
        let e = ps.exp();
        Ok((ends[0], ends[1], e * sums.0, e * sums.1))
    }

    /// `(f_j, f_j')` by quadrature. Uses valley rays from the origin for
    /// small `|xi|` and steepest-descent paths through the saddles otherwise.
    pub fn contour_integral(j: Contour, xi: C64) -> Result<(C64, C64), QuadratureError> {
        let (from, to) = j.valleys();
        let scale = 1.0 / (2.0 * PI);
        if xi.norm() < 1.0 {
            let a = ray(VALLEYS[from], xi);
            let b = ray(VALLEYS[to], xi);
            return Ok(((b.0 - a.0) * scale, (b.1 - a.1) * scale));
        }
        let r = (-xi).sqrt();
        let edges = [saddle_path(r, xi)?, saddle_path(-r, xi)?];
        // signed edge between two valleys
        let edge = |a: usize, b: usize| -> Option<(C64, C64)> {
            for &(s, e, i0, i1) in &edges {
                if s == a && e == b {
                    return Some((i0, i1));
                }
                if s == b && e == a {
                    return Some((-i0, -i1));
                }
            }
            None
        };
        let total = match edge(from, to) {
            Some(v) => v,
            None => {
                let mid = 3 - from - to;
                match (edge(from, mid), edge(mid, to)) {
                    (Some(p), Some(q)) => (p.0 + q.0, p.1 + q.1),
                    _ => return Err(QuadratureError::Disconnected),
                }
            }
        };
        Ok((total.0 * scale, total.1 * scale))
    }
}
