//! Exact quantum reference: split-operator propagation of a coherent state
//! on a uniform 2D position grid.
//!
//! The kinetic factor is applied exactly in momentum space and the potential
//! factor exactly in position space (Strang splitting), with FFTs between
//! the two representations.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phase::{CoherentLabel, CoherentParams};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("grid points per axis must be a power of two, got {0}")]
    NotPowerOfTwo(usize),
    #[error("grid spacing {spacing} exceeds b/4 = {limit}")]
    SpacingTooCoarse { spacing: f64, limit: f64 },
    #[error("coherent state tail mass {tail:e} outside the box exceeds 1e-10")]
    GridTooSmall { tail: f64 },
    #[error("norm drifted to {norm} after t = {t}")]
    NormDrift { norm: f64, t: f64 },
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("requested times must be non-negative and sorted")]
    UnsortedTimes,
}

/// Rectangular box `[q_min, q_max]` per axis, points per axis and time step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q_min: [f64; 2],
    pub q_max: [f64; 2],
    pub n: [usize; 2],
    pub dt: f64,
}

impl GridSpec {
    pub fn square(half_width: f64, n: usize, dt: f64) -> Self {
        Self {
            q_min: [-half_width; 2],
            q_max: [half_width; 2],
            n: [n; 2],
            dt,
        }
    }

    pub fn spacing(&self) -> [f64; 2] {
        std::array::from_fn(|r| (self.q_max[r] - self.q_min[r]) / self.n[r] as f64)
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.q_min[axis] + i as f64 * self.spacing()[axis]
    }

    /// Checks the power-of-two sizes, the time step and `spacing <= b/4`.
    pub fn validate(&self, cp: &CoherentParams) -> Result<(), ExactError> {
        for r in 0..2 {
            if !self.n[r].is_power_of_two() {
                return Err(ExactError::NotPowerOfTwo(self.n[r]));
            }
            let limit = cp.b()[r] / 4.0;
            let spacing = self.spacing()[r];
            if spacing > limit * (1.0 + 1e-12) {
                return Err(ExactError::SpacingTooCoarse { spacing, limit });
            }
        }
        if !(self.dt > 0.0) {
            return Err(ExactError::BadTimeStep(self.dt));
        }
        Ok(())
    }
}

/// Amplitudes on the grid, `x`-index fastest.
#[derive(Clone, Debug)]
pub struct WaveField {
    pub grid: GridSpec,
    pub psi: Vec<C64>,
}

impl WaveField {
    fn cell(&self) -> f64 {
        let d = self.grid.spacing();
        d[0] * d[1]
    }

    pub fn norm(&self) -> f64 {
        self.psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.cell()
    }

    /// `<other|self>` by grid quadrature.
    pub fn inner(&self, other: &WaveField) -> C64 {
        self.psi.iter().zip(&other.psi).map(|(a, b)| b.conj() * a).sum::<C64>() * self.cell()
    }

    /// Expectation value of the position operator.
    pub fn mean_position(&self) -> [f64; 2] {
        let nx = self.grid.n[0];
        let mut acc = [0.0; 2];
        for (idx, c) in self.psi.iter().enumerate() {
            let w = c.norm_sqr();
            acc[0] += w * self.grid.coord(0, idx % nx);
            acc[1] += w * self.grid.coord(1, idx / nx);
        }
        let n = self.norm() / self.cell();
        [acc[0] / n, acc[1] / n]
    }
}

/// Tail mass of a 1D normalized Gaussian `|psi|^2 ~ exp(-(q - c)^2/b^2)`
/// outside `[lo, hi]`.
fn gaussian_tail(c: f64, b: f64, lo: f64, hi: f64) -> f64 {
    0.5 * (erfc((hi - c) / b) + erfc((c - lo) / b))
}

/// Complementary error function (Numerical Recipes erfcc, |rel err| < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Samples `<q|z> = prod_r (pi b_r^2)^(-1/4) exp(-(q_r - qb_r)^2/(2 b_r^2)
/// + i pb_r (q_r - qb_r/2)/hbar)`.
pub fn coherent_wavefunction(z: &CoherentLabel, cp: &CoherentParams, gs: &GridSpec) -> Result<WaveField, ExactError> {
    gs.validate(cp)?;
    let (qb, pb) = z.centroid(cp);
    let b = cp.b();
    let hbar = cp.hbar();
    let tail: f64 = (0..2)
        .map(|r| gaussian_tail(qb[r], b[r], gs.q_min[r], gs.q_max[r]))
        .sum();
    if tail > 1e-10 {
        return Err(ExactError::GridTooSmall { tail });
    }
    let axis = |r: usize| -> Vec<C64> {
        let norm = (PI * b[r] * b[r]).powf(-0.25);
        (0..gs.n[r])
            .map(|i| {
                let q = gs.coord(r, i);
                let d = q - qb[r];
                norm * C64::new(-d * d / (2.0 * b[r] * b[r]), pb[r] * (q - 0.5 * qb[r]) / hbar).exp()
            })
            .collect()
    };
    let ax = axis(0);
    let ay = axis(1);
    let mut psi = Vec::with_capacity(gs.n[0] * gs.n[1]);
    for y in &ay {
        for x in &ax {
            psi.push(x * y);
        }
    }
    Ok(WaveField { grid: *gs, psi })
}

/// Split-operator propagator for `H = p^2/2 + V(q)` on a fixed grid.
pub struct SplitOperator {
    grid: GridSpec,
    hbar: f64,
    potential: Vec<f64>,
    /// `exp(-i V dt / (2 hbar))` on the grid.
    half_kick: Vec<C64>,
    /// `exp(-i hbar k^2 dt / 2)`, stored in the transposed (y-fastest) layout.
    drift: Vec<C64>,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
}

fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let m = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
            2.0 * PI * m / length
        })
        .collect()
}

fn phases(values: impl Iterator<Item = f64>, scale: f64) -> Vec<C64> {
    values.map(|v| C64::from_polar(1.0, -v * scale)).collect()
}

fn transpose(src: &[C64], dst: &mut [C64], rows: usize, cols: usize) {
    // src is rows x cols (cols fastest), dst is cols x rows
    const TILE: usize = 32;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

impl SplitOperator {
    pub fn new(grid: GridSpec, hbar: f64, potential: impl Fn(f64, f64) -> f64) -> Self {
        let [nx, ny] = grid.n;
        let mut v = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            let y = grid.coord(1, iy);
            for ix in 0..nx {
                v.push(potential(grid.coord(0, ix), y));
            }
        }
        let half_kick = phases(v.iter().copied(), grid.dt / (2.0 * hbar));
        let kx = wavenumbers(nx, grid.q_max[0] - grid.q_min[0]);
        let ky = wavenumbers(ny, grid.q_max[1] - grid.q_min[1]);
        let mut k2 = Vec::with_capacity(nx * ny);
        for x in &kx {
            for y in &ky {
                k2.push(x * x + y * y);
            }
        }
        let drift = phases(k2.into_iter(), 0.5 * hbar * grid.dt);
        let mut planner = FftPlanner::new();
        Self {
            grid,
            hbar,
            potential: v,
            half_kick,
            drift,
            fft_x: planner.plan_fft_forward(nx),
            ifft_x: planner.plan_fft_inverse(nx),
            fft_y: planner.plan_fft_forward(ny),
            ifft_y: planner.plan_fft_inverse(ny),
            scratch: vec![C64::new(0.0, 0.0); nx * ny],
        }
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// One Strang step of the grid length `dt`.
    fn step(&mut self, psi: &mut [C64]) {
        let kick = std::mem::take(&mut self.half_kick);
        let drift = std::mem::take(&mut self.drift);
        self.apply(psi, &kick, &drift);
        self.half_kick = kick;
        self.drift = drift;
    }

    fn apply(&mut self, psi: &mut [C64], kick: &[C64], drift: &[C64]) {
        let [nx, ny] = self.grid.n;
        for (p, k) in psi.iter_mut().zip(kick) {
            *p *= k;
        }
        self.fft_x.process(psi);
        transpose(psi, &mut self.scratch, ny, nx);
        self.fft_y.process(&mut self.scratch);
        for (p, d) in self.scratch.iter_mut().zip(drift) {
            *p *= d;
        }
        self.ifft_y.process(&mut self.scratch);
        transpose(&self.scratch, psi, nx, ny);
        self.ifft_x.process(psi);
        let norm = 1.0 / (nx * ny) as f64;
        for (p, k) in psi.iter_mut().zip(kick) {
            *p *= k * norm;
        }
    }

    fn fractional_step(&mut self, psi: &mut [C64], h: f64) {
        let [nx, ny] = self.grid.n;
        let kick = phases(self.potential.iter().copied(), h / (2.0 * self.hbar));
        let kx = wavenumbers(nx, self.grid.q_max[0] - self.grid.q_min[0]);
        let ky = wavenumbers(ny, self.grid.q_max[1] - self.grid.q_min[1]);
        let drift = phases(
            kx.iter().flat_map(|x| ky.iter().map(move |y| x * x + y * y)),
            0.5 * self.hbar * h,
        );
        self.apply(psi, &kick, &drift);
    }

    /// Evolves `psi` through the sorted `times`, calling `visit(k, &state)`
    /// with the state at each `times[k]`.
    ///
    /// Times that are not multiples of `dt` are reached by an extra
    /// fractional step on a copy; the main evolution stays on the `dt` lattice.
    pub fn evolve_through<F>(&mut self, psi: &mut WaveField, times: &[f64], mut visit: F) -> Result<(), ExactError>
    where
        F: FnMut(usize, &WaveField),
    {
        if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
            return Err(ExactError::UnsortedTimes);
        }
        let dt = self.grid.dt;
        let mut steps_done: u64 = 0;
        let check_every = 1000u64;
        for (k, &t) in times.iter().enumerate() {
            let target = (t / dt + 1e-9).floor() as u64;
            while steps_done < target {
                self.step(&mut psi.psi);
                steps_done += 1;
                if steps_done % check_every == 0 {
                    let n = psi.norm();
                    if (n - 1.0).abs() > 1e-6 {
                        return Err(ExactError::NormDrift {
                            norm: n,
                            t: steps_done as f64 * dt,
                        });
                    }
                }
            }
            let rem = t - steps_done as f64 * dt;
            if rem > 1e-12 * dt.max(t) {
                let mut tmp = psi.clone();
                self.fractional_step(&mut tmp.psi, rem);
                visit(k, &tmp);
            } else {
                visit(k, psi);
            }
        }
        Ok(())
    }
}

/// `V(q)` of the bare (unsmoothed) Hamiltonian as a closure.
pub fn nelson_potential(params: crate::hamiltonian::NelsonParams) -> impl Fn(f64, f64) -> f64 {
    move |x, y| params.potential(x, y)
}

/// Propagates `psi` for time `t` under `H = p^2/2 + V`.
pub fn propagate(
    psi: &WaveField,
    potential: impl Fn(f64, f64) -> f64,
    t: f64,
    hbar: f64,
) -> Result<WaveField, ExactError> {
    let mut sop = SplitOperator::new(psi.grid, hbar, potential);
    let mut state = psi.clone();
    let mut out = None;
    sop.evolve_through(&mut state, &[t], |_, s| out = Some(s.clone()))?;
    Ok(out.expect("one time requested"))
}

/// `<z''| exp(-i H t / hbar) |z'>` at each of the sorted `times`, from a
/// single propagation of `|z'>`.
pub fn k_exact_series(
    z_prime: &CoherentLabel,
    z_dprime: &CoherentLabel,
    times: &[f64],
    cp: &CoherentParams,
    gs: &GridSpec,
    potential: impl Fn(f64, f64) -> f64,
) -> Result<Vec<C64>, ExactError> {
    let mut psi = coherent_wavefunction(z_prime, cp, gs)?;
    let bra = coherent_wavefunction(z_dprime, cp, gs)?;
    let mut sop = SplitOperator::new(*gs, cp.hbar(), potential);
    let mut out = vec![C64::new(0.0, 0.0); times.len()];
    sop.evolve_through(&mut psi, times, |k, s| out[k] = s.inner(&bra))?;
    Ok(out)
}

pub fn k_exact(
    z_prime: &CoherentLabel,
    z_dprime: &CoherentLabel,
    t: f64,
    cp: &CoherentParams,
    gs: &GridSpec,
    potential: impl Fn(f64, f64) -> f64,
) -> Result<C64, ExactError> {
    Ok(k_exact_series(z_prime, z_dprime, &[t], cp, gs, potential)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{CouplingForm, NelsonParams};
    use crate::phase::overlap;

    fn cp() -> CoherentParams {
        CoherentParams::isotropic(0.2, 0.05).unwrap()
    }

    #[test]
    fn sampled_state_matches_analytic_overlaps() {
        let cp = cp();
        let gs = GridSpec::square(4.0, 256, 1e-3);
        let z1 = CoherentLabel::from_centroid([0.3, -0.2], [0.5, 0.1], &cp);
        let z2 = CoherentLabel::from_centroid([0.4, -0.1], [0.2, 0.3], &cp);
        let a = coherent_wavefunction(&z1, &cp, &gs).unwrap();
        let b = coherent_wavefunction(&z2, &cp, &gs).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-12);
        let got = a.inner(&b);
        let want = overlap(&z1, &z2);
        assert!((got - want).norm() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn free_particle_matches_gaussian_integral() {
        let cp = cp();
        let gs = GridSpec::square(4.0, 256, 1e-3);
        let q = [0.1, -0.3];
        let p = [0.6, -0.4];
        let z = CoherentLabel::from_centroid(q, p, &cp);
        let t = 0.7;
        let k = k_exact(&z, &z, t, &cp, &gs, |_, _| 0.0).unwrap();
        // per axis: (1 + i a c^2)^(-1/2) exp(-i a p^2 / (1 + i a c^2)), a = t/2hbar
        let a = t / (2.0 * cp.hbar());
        let want: C64 = (0..2)
            .map(|r| {
                let d = C64::new(1.0, a * cp.c()[r].powi(2));
                d.sqrt().inv() * (C64::new(0.0, -a * p[r] * p[r]) / d).exp()
            })
            .product();
        assert!((k - want).norm() < 1e-9, "{k} vs {want}");
    }

    #[test]
    fn matched_oscillator_keeps_coherent_state() {
        let cp = cp();
        let w = cp.hbar() / (cp.b()[0] * cp.b()[0]);
        let gs = GridSpec::square(4.0, 256, 1e-3);
        let z = CoherentLabel::from_centroid([0.5, -0.2], [0.3, 0.6], &cp);
        let times = [0.25, 0.5, 1.0];
        let ks = k_exact_series(&z, &z, &times, &cp, &gs, |x, y| 0.5 * w * w * (x * x + y * y)).unwrap();
        for (t, k) in times.iter().zip(ks) {
            let want: C64 =
                z.z.iter()
                    .map(|zr| {
                        C64::new(0.0, -w * t / 2.0).exp() * (zr.norm_sqr() * (C64::new(0.0, -w * t).exp() - 1.0)).exp()
                    })
                    .product();
            // the Strang splitting error is O(dt^2)
            assert!((k - want).norm() < 1e-5, "t={t}: {k} vs {want}");
        }
    }

    #[test]
    fn norm_is_conserved_under_nelson() {
        let cp = cp();
        let z = CoherentLabel::from_centroid([0.6, 0.4], [-0.7, 0.6], &cp);
        let psi = coherent_wavefunction(&z, &cp, &GridSpec::square(4.0, 256, 2e-3)).unwrap();
        let np = NelsonParams::new(0.1, CouplingForm::Parabolic).unwrap();
        let out = propagate(&psi, nelson_potential(np), 1.0, cp.hbar()).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-10);
        // coarse grids are refused
        assert!(matches!(
            coherent_wavefunction(&z, &cp, &GridSpec::square(4.0, 64, 1e-3)),
            Err(ExactError::SpacingTooCoarse { .. })
        ));
    }

    #[test]
    fn short_time_limit_is_the_overlap() {
        let cp = cp();
        let gs = GridSpec::square(4.0, 256, 1e-3);
        let z1 = CoherentLabel::from_centroid([0.6, 0.4], [-0.7, 0.6], &cp);
        let z2 = CoherentLabel::from_centroid([0.65, 0.4], [-0.6, 0.6], &cp);
        let np = NelsonParams::new(0.1, CouplingForm::Parabolic).unwrap();
        let k = k_exact(&z1, &z2, 1e-6, &cp, &gs, nelson_potential(np)).unwrap();
        assert!((k - overlap(&z1, &z2)).norm() < 1e-5);
    }

    #[test]
    fn state_outside_box_is_refused() {
        let cp = cp();
        let gs = GridSpec::square(4.0, 256, 1e-3);
        let z = CoherentLabel::from_centroid([3.9, 0.0], [0.0, 0.0], &cp);
        assert!(matches!(
            coherent_wavefunction(&z, &cp, &gs),
            Err(ExactError::GridTooSmall { .. })
        ));
        assert!(matches!(
            coherent_wavefunction(&z, &cp, &GridSpec::square(4.0, 200, 1e-3)),
            Err(ExactError::NotPowerOfTwo(200))
        ));
    }
}
