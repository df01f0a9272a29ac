//! Scan configuration: flat `key = value` text with `#` comments, every key
//! optional.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::ScanError;
use crate::exact::GridSpec;
use crate::hamiltonian::{nelson_smoothed, CouplingForm, NelsonModel, NelsonParams};
use crate::phase::{CoherentLabel, CoherentParams};

/// Which propagators a scan evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Methods {
    pub k2: bool,
    pub uniform: bool,
    pub exact: bool,
}

impl Default for Methods {
    fn default() -> Self {
        Self {
            k2: true,
            uniform: true,
            exact: false,
        }
    }
}

impl std::str::FromStr for Methods {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut m = Methods {
            k2: false,
            uniform: false,
            exact: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "k2" => m.k2 = true,
                "uniform" => m.uniform = true,
                "exact" => m.exact = true,
                "all" => {
                    m = Methods {
                        k2: true,
                        uniform: true,
                        exact: true,
                    }
                }
                other => return Err(format!("unknown method '{other}' (expected k2, uniform, exact)")),
            }
        }
        // the uniform formula needs the trajectories K2 is built from
        if m.uniform {
            m.k2 = true;
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub energy: f64,
    /// Momentum direction in degrees.
    pub theta_deg: f64,
    pub mu: f64,
    pub b: f64,
    pub hbar: f64,
    pub coupling: CouplingForm,
    pub qx_range: [f64; 2],
    pub t_range: [f64; 2],
    pub n_qx: usize,
    pub n_t: usize,
    pub methods: Methods,
    pub tol_shoot: f64,
    pub integrator_tol: f64,
    /// Point where the two families are identified by multistart.
    pub anchor: [f64; 2],
    pub seed_radii: Vec<f64>,
    pub exact_grid: GridSpec,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
    pub cut_qx: Option<f64>,
    pub out_cut: Option<PathBuf>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            energy: 0.5,
            theta_deg: 140.0,
            mu: 0.1,
            b: 0.2,
            hbar: 0.05,
            coupling: CouplingForm::Parabolic,
            qx_range: [0.2, 1.0],
            t_range: [7.0, 8.0],
            n_qx: 81,
            n_t: 81,
            methods: Methods::default(),
            tol_shoot: 1e-10,
            integrator_tol: 1e-11,
            anchor: [7.5, 0.6],
            seed_radii: vec![0.1, 0.3, 1.0],
            exact_grid: GridSpec::square(4.0, 256, 1e-3),
            out_csv: None,
            out_json: None,
            cut_qx: None,
            out_cut: None,
        }
    }
}

fn num(key: &str, v: &str) -> Result<f64, ScanError> {
    v.parse::<f64>()
        .map_err(|_| ScanError::Config(format!("{key}: '{v}' is not a number")))
}

fn count(key: &str, v: &str) -> Result<usize, ScanError> {
    v.parse::<usize>()
        .map_err(|_| ScanError::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

impl ScanConfig {
    /// Parses `key = value` lines over the defaults.
    pub fn parse(text: &str) -> Result<Self, ScanError> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ScanError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key; used by the file parser and by command-line overrides.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ScanError> {
        match key {
            "E" | "energy" => self.energy = num(key, v)?,
            "theta" => self.theta_deg = num(key, v)?,
            "mu" => self.mu = num(key, v)?,
            "b" => self.b = num(key, v)?,
            "hbar" => self.hbar = num(key, v)?,
            "coupling" => self.coupling = v.parse().map_err(ScanError::Config)?,
            "qx_min" => self.qx_range[0] = num(key, v)?,
            "qx_max" => self.qx_range[1] = num(key, v)?,
            "t_min" | "T_min" => self.t_range[0] = num(key, v)?,
            "t_max" | "T_max" => self.t_range[1] = num(key, v)?,
            "n_qx" => self.n_qx = count(key, v)?,
            "n_t" | "n_T" => self.n_t = count(key, v)?,
            "resolution" => {
                let n = count(key, v)?;
                self.n_qx = n;
                self.n_t = n;
            }
            "methods" => self.methods = v.parse().map_err(ScanError::Config)?,
            "tol_shoot" => self.tol_shoot = num(key, v)?,
            "integrator_tol" => self.integrator_tol = num(key, v)?,
            "anchor_t" | "anchor_T" => self.anchor[0] = num(key, v)?,
            "anchor_qx" => self.anchor[1] = num(key, v)?,
            "seed_radii" => self.seed_radii = v.split(',').map(|s| num(key, s.trim())).collect::<Result<_, _>>()?,
            "exact_n" => self.exact_grid.n = [count(key, v)?; 2],
            "exact_half_width" => {
                let h = num(key, v)?;
                self.exact_grid.q_min = [-h; 2];
                self.exact_grid.q_max = [h; 2];
            }
            "exact_dt" => self.exact_grid.dt = num(key, v)?,
            "out_csv" => self.out_csv = Some(v.into()),
            "out_json" => self.out_json = Some(v.into()),
            "cut_qx" => self.cut_qx = Some(num(key, v)?),
            "out_cut" => self.out_cut = Some(v.into()),
            other => return Err(ScanError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        let bad = |m: &str| Err(ScanError::Config(m.to_string()));
        if !(self.hbar > 0.0) || !(self.b > 0.0) {
            return bad("hbar and b must be positive");
        }
        if self.mu < 0.0 {
            return bad("mu must be non-negative");
        }
        if !(self.qx_range[0] < self.qx_range[1]) || !(self.t_range[0] < self.t_range[1]) {
            return bad("ranges must be increasing");
        }
        if self.t_range[0] < 0.0 {
            return bad("times must be non-negative");
        }
        if self.n_qx < 2 || self.n_t < 2 {
            return bad("grid needs at least 2 points per axis");
        }
        if !(self.tol_shoot > 0.0) || !(self.integrator_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        for qx in [self.qx_range[0], self.qx_range[1]] {
            self.resolve_point(qx)?;
        }
        Ok(())
    }

    pub fn coherent(&self) -> CoherentParams {
        CoherentParams::isotropic(self.b, self.hbar).expect("validated")
    }

    pub fn nelson(&self) -> NelsonParams {
        NelsonParams::new(self.mu, self.coupling).expect("validated")
    }

    pub fn model(&self) -> NelsonModel {
        nelson_smoothed(self.nelson(), self.coherent())
    }

    pub fn t_values(&self) -> Vec<f64> {
        linspace(self.t_range, self.n_t)
    }

    pub fn qx_values(&self) -> Vec<f64> {
        linspace(self.qx_range, self.n_qx)
    }

    /// The state at `qx`: `qy = 2 qx/3`, `|p|` from the energy rule, and
    /// momentum direction `theta`.
    pub fn resolve_point(&self, qx: f64) -> Result<ResolvedPoint, ScanError> {
        let qy = 2.0 * qx / 3.0;
        let v = self.nelson().potential(qx, qy);
        let p2 = 2.0 * (self.energy - v);
        if p2 < 0.0 {
            return Err(ScanError::EnergyInfeasible { qx, p2 });
        }
        let pm = p2.sqrt();
        let th = self.theta_deg.to_radians();
        let q = [qx, qy];
        let p = [pm * th.cos(), pm * th.sin()];
        let cp = CoherentParams::isotropic(self.b, self.hbar).map_err(|e| ScanError::Config(e.to_string()))?;
        Ok(ResolvedPoint {
            q,
            p,
            z: CoherentLabel::from_centroid(q, p, &cp),
        })
    }
}

/// Centroids and label of the state used at one `qx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPoint {
    pub q: [f64; 2],
    pub p: [f64; 2],
    pub z: CoherentLabel,
}

pub fn linspace(range: [f64; 2], n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            if k + 1 == n {
                range[1]
            } else {
                range[0] + (range[1] - range[0]) * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_form_energy_rule() {
        let cfg = ScanConfig::parse("coupling = linear").unwrap();
        let r = cfg.resolve_point(0.6).unwrap();
        assert!((r.q[1] - 0.4).abs() < 1e-15);
        let p2 = r.p[0].powi(2) + r.p[1].powi(2);
        assert!((p2 - 0.944).abs() < 1e-12);
        assert!((r.p[0] + 0.744_29).abs() < 1e-5);
        assert!((r.p[1] - 0.624_53).abs() < 1e-5);
    }

    #[test]
    fn parabolic_form_energy_rule() {
        let cfg = ScanConfig::default();
        let r = cfg.resolve_point(0.6).unwrap();
        // (0.4 - 0.18)^2 + 0.05 * 0.36
        let p2 = r.p[0].powi(2) + r.p[1].powi(2);
        assert!((p2 - 2.0 * (0.5 - 0.0484 - 0.018)).abs() < 1e-12);
    }

    #[test]
    fn resolved_points_have_the_scan_energy() {
        for form in ["linear", "parabolic"] {
            let cfg = ScanConfig::parse(&format!("coupling = {form}")).unwrap();
            for qx in cfg.qx_values() {
                let r = cfg.resolve_point(qx).unwrap();
                let e = 0.5 * (r.p[0].powi(2) + r.p[1].powi(2)) + cfg.nelson().potential(r.q[0], r.q[1]);
                assert!((e - 0.5).abs() < 1e-12);
                assert!((r.q[1] - 2.0 * qx / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn parse_keys_and_comments() {
        let cfg = ScanConfig::parse(
            "# paper window\nE = 0.5\ntheta = 140  # degrees\nresolution = 41\nmethods = k2,exact\nqx_min=0.3\n",
        )
        .unwrap();
        assert_eq!(cfg.n_qx, 41);
        assert_eq!(cfg.n_t, 41);
        assert_eq!(cfg.qx_range, [0.3, 1.0]);
        assert!(cfg.methods.exact && cfg.methods.k2 && !cfg.methods.uniform);
        assert!(matches!(ScanConfig::parse("nonsense = 1"), Err(ScanError::Config(_))));
        assert!(matches!(ScanConfig::parse("mu = abc"), Err(ScanError::Config(_))));
        assert!(matches!(
            ScanConfig::parse("E = 0.01"),
            Err(ScanError::EnergyInfeasible { .. })
        ));
        assert!(matches!(ScanConfig::parse("t_min = 9"), Err(ScanError::Config(_))));
    }

    #[test]
    fn grid_axes_hit_the_endpoints() {
        let v = linspace([7.0, 8.0], 41);
        assert_eq!(v[0], 7.0);
        assert_eq!(v[40], 8.0);
        assert!((v[20] - 7.5).abs() < 1e-15);
    }
}
