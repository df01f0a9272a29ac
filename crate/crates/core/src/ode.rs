//! Dormand-Prince 5(4) embedded Runge-Kutta pair on complex state vectors.

use thiserror::Error;

use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepFailure {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    Underflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on a single step; `None` means unbounded.
    pub h_max: Option<f64>,
}

impl Dopri5Options {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_steps: 2_000_000,
            h_max: None,
        }
    }
}

/// What the caller's step hook decides about a candidate step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    /// Reject and retry with half the step (e.g. a tracked phase moved too far).
    Shrink,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[C64; N], h: f64, terms: &[(f64, &[C64; N])]) -> [C64; N] {
    let mut out = *y;
    for &(a, k) in terms {
        if a == 0.0 {
            continue;
        }
        let ha = h * a;
        for i in 0..N {
            out[i] += ha * k[i];
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 >= t0`.
///
/// `hook(t_new, y_old, y_new)` is consulted before each step is accepted and
/// may ask for a smaller step; it must only commit its own bookkeeping when
/// it returns [`Verdict::Accept`].
pub fn integrate<const N: usize, F, H>(
    mut f: F,
    t0: f64,
    y0: [C64; N],
    t1: f64,
    opts: &Dopri5Options,
    mut hook: H,
) -> Result<[C64; N], StepFailure>
where
    F: FnMut(f64, &[C64; N]) -> [C64; N],
    H: FnMut(f64, &[C64; N], &[C64; N]) -> Verdict,
{
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(y0);
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);

    // initial step from the local scale of y and y'
    let scale = |v: &[C64; N], y: &[C64; N]| -> f64 {
        let s: f64 = (0..N)
            .map(|i| {
                let sc = opts.atol + opts.rtol * y[i].norm();
                (v[i].norm() / sc).powi(2)
            })
            .sum();
        (s / N as f64).sqrt()
    };
    let d0 = scale(&y, &y);
    let d1 = scale(&k1, &y);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(span);
    if let Some(hm) = opts.h_max {
        h = h.min(hm);
    }
    let h_floor = 1e-14 * span.max(t1.abs());

    let mut steps = 0usize;
    let mut last_rejected = false;
    loop {
        if steps >= opts.max_steps {
            return Err(StepFailure::TooManySteps(opts.max_steps));
        }
        steps += 1;
        let remaining = t1 - t;
        let final_step = h >= remaining * (1.0 - 1e-12);
        if final_step {
            h = remaining;
        }

        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y_new);

        let mut err_sq = 0.0;
        let mut finite = true;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
            err_sq += (e.norm() / sc).powi(2);
            finite &= y_new[i].re.is_finite() && y_new[i].im.is_finite();
        }
        let err = (err_sq / N as f64).sqrt();

        if !finite || !err.is_finite() {
            h *= 0.25;
            if h < h_floor {
                return Err(StepFailure::NonFinite { t });
            }
            last_rejected = true;
            continue;
        }

        if err <= 1.0 {
            let t_new = if final_step { t1 } else { t + h };
            if hook(t_new, &y, &y_new) == Verdict::Shrink {
                h *= 0.5;
                if h < h_floor {
                    return Err(StepFailure::Underflow { t, h });
                }
                last_rejected = true;
                continue;
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            if final_step {
                return Ok(y);
            }
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            if let Some(hm) = opts.h_max {
                h = h.min(hm);
            }
            last_rejected = false;
        } else {
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            last_rejected = true;
        }
        if h < h_floor {
            return Err(StepFailure::Underflow { t, h });
        }
    }
}
