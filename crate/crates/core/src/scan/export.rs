//! CSV and JSON output of scans and line cuts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CausticRecord, ScanError, ScanGrid};
use crate::semiclassical::Family;

pub const CSV_HEADER: &str = "T,qx,qy,px,py,abs_K2_fa,abs_K2_fb,abs_K2,abs_Kun_1,abs_Kun_2,abs_Kun_3,\
abs_Kun_elected,abs_K_exact,rel_err,F0_fa,F0_fb,absB,gap_flag";

pub const CUT_HEADER: &str = "T,qx,abs_K2_fa,abs_K2_fb,abs_K2,abs_Kun,abs_K_exact,inv_abs_P_fa,inv_abs_P_fb,absB";

/// Summary of the relative error `||K| - |Kun|| / |K|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub q50: f64,
    pub q90: f64,
    pub q95: f64,
    pub max: f64,
    pub frac_below_5pct: f64,
    pub frac_below_10pct: f64,
}

/// Nearest-rank quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn error_stats(values: &[f64]) -> Option<ErrorStats> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let below = |lim: f64| v.iter().filter(|&&x| x < lim).count() as f64 / n as f64;
    Some(ErrorStats {
        n,
        q50: quantile(&v, 0.5),
        q90: quantile(&v, 0.9),
        q95: quantile(&v, 0.95),
        max: v[n - 1],
        frac_below_5pct: below(0.05),
        frac_below_10pct: below(0.10),
    })
}

impl ScanGrid {
    pub fn rel_errors(&self) -> Vec<f64> {
        self.points.iter().filter_map(|p| p.rel_err).collect()
    }
}

fn num(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{v}"),
        None => "NaN".into(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ScanError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| ScanError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| ScanError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScanError + '_ {
    move |source| ScanError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_csv_to<W: Write>(grid: &ScanGrid, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for p in &grid.points {
        let fam = |f: Family| p.family(f).map(|fp| fp.contribution);
        let kun = |j: usize| p.kun.map(|k| k[j].norm());
        let row = [
            num(Some(p.t)),
            num(Some(p.point.q[0])),
            num(Some(p.point.q[1])),
            num(Some(p.point.p[0])),
            num(Some(p.point.p[1])),
            num(fam(Family::A).map(|c| c.value.norm())),
            num(fam(Family::B).map(|c| c.value.norm())),
            num(p.k2.map(|k| k.norm())),
            num(kun(0)),
            num(kun(1)),
            num(kun(2)),
            num(p.kun_elected.map(|k| k.norm())),
            num(p.k_exact.map(|k| k.norm())),
            num(p.rel_err),
            num(fam(Family::A).map(|c| c.f0)),
            num(fam(Family::B).map(|c| c.f0)),
            num(p.abs_b()),
            if p.complete() { "0" } else { "1" }.to_string(),
        ];
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_csv(grid: &ScanGrid, path: &Path) -> Result<(), ScanError> {
    let mut w = create(path)?;
    write_csv_to(grid, &mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Run metadata: configuration, gaps, caustic, election and error summary.
pub fn metadata(grid: &ScanGrid, caustic: Option<&Result<CausticRecord, ScanError>>) -> serde_json::Value {
    let gaps = grid.gaps();
    let gap_points: Vec<[f64; 2]> = gaps.iter().map(|&i| [grid.points[i].t, grid.points[i].qx()]).collect();
    let caustic = match caustic {
        Some(Ok(c)) => json!(c),
        Some(Err(e)) => json!({ "error": e.to_string() }),
        None => serde_json::Value::Null,
    };
    json!({
        "version": crate::VERSION,
        "config": grid.config,
        "n_qx": grid.qx_values.len(),
        "n_t": grid.t_values.len(),
        "gaps": {
            "count": gaps.len(),
            "fraction": gaps.len() as f64 / grid.points.len() as f64,
            "points": gap_points,
        },
        "lost": grid.lost,
        "labels": {
            "cut": grid.labels.cut,
            "negative_f0_fa": grid.labels.negative_a,
            "negative_f0_fb": grid.labels.negative_b,
        },
        "prefactor_branch_mismatches": grid.branch_mismatches,
        "caustic": caustic,
        "election": grid.election,
        "rel_err": error_stats(&grid.rel_errors()),
    })
}

pub fn write_json(
    grid: &ScanGrid,
    caustic: Option<&Result<CausticRecord, ScanError>>,
    path: &Path,
) -> Result<(), ScanError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &metadata(grid, caustic))
        .map_err(|e| io_err(path)(std::io::Error::other(e)))?;
    writeln!(w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Pretty JSON of a caustic record.
pub fn caustic_json(c: &CausticRecord) -> String {
    serde_json::to_string_pretty(c).expect("caustic record serializes")
}

/// Writes a single-line scan as a cut table, `T` ascending.
pub fn write_cut_to<W: Write>(grid: &ScanGrid, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CUT_HEADER}")?;
    for p in &grid.points {
        let fam = |f: Family| p.family(f).map(|fp| fp.contribution);
        let row = [
            num(Some(p.t)),
            num(Some(p.qx())),
            num(fam(Family::A).map(|c| c.value.norm())),
            num(fam(Family::B).map(|c| c.value.norm())),
            num(p.k2.map(|k| k.norm())),
            num(p.kun_elected.map(|k| k.norm())),
            num(p.k_exact.map(|k| k.norm())),
            num(fam(Family::A).map(|c| c.det_mvv.norm().sqrt())),
            num(fam(Family::B).map(|c| c.det_mvv.norm().sqrt())),
            num(p.abs_b()),
        ];
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_cut(grid: &ScanGrid, path: &Path) -> Result<(), ScanError> {
    let mut w = create(path)?;
    write_cut_to(grid, &mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.5), 10.0);
        assert_eq!(quantile(&v, 0.95), 19.0);
        assert_eq!(quantile(&v, 0.9), 18.0);
        assert_eq!(quantile(&[3.0], 0.5), 3.0);
        let s = error_stats(&[0.01, 0.2, 0.07, f64::NAN]).unwrap();
        assert_eq!(s.n, 3);
        assert_eq!(s.max, 0.2);
        assert!((s.frac_below_5pct - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.frac_below_10pct - 2.0 / 3.0).abs() < 1e-15);
        assert!(error_stats(&[]).is_none());
    }

    #[test]
    fn full_precision_numbers() {
        let x = 0.1 + 0.2;
        assert_eq!(num(Some(x)).parse::<f64>().unwrap(), x);
        assert_eq!(num(None), "NaN");
    }
}
