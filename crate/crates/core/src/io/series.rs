//! Time series of reconstructed density matrices.
//!
//! One row per window: `t_start_ps,t_end_ps`, the 16 real parts and then the
//! 16 imaginary parts of rho in row-major order over {HH, HV, VH, VV},
//! `negativity,negativity_sigma,low_stats`.

use std::fmt::Write as _;
use std::path::Path;

use super::write_atomic;
use crate::density::{DensityMatrix, Mat4, C64};
use crate::error::{Error, Result};

/// Hermiticity and trace tolerance when loading.
pub const LOAD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub t_start_ps: f64,
    pub t_end_ps: f64,
    pub rho: DensityMatrix,
    pub negativity: f64,
    /// NaN when no bootstrap was run.
    pub negativity_sigma: f64,
    pub low_stats: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSeries {
    /// Free-form comment lines (without the leading `# `).
    pub comments: Vec<String>,
    pub rows: Vec<SeriesRow>,
}

pub fn header() -> String {
    let mut h = String::from("t_start_ps,t_end_ps");
    for part in ["re", "im"] {
        for i in 0..4 {
            for j in 0..4 {
                let _ = write!(h, ",{part}{i}{j}");
            }
        }
    }
    h.push_str(",negativity,negativity_sigma,low_stats");
    h
}

impl MatrixSeries {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.comments {
            let _ = writeln!(s, "# {c}");
        }
        s.push_str(&header());
        s.push('\n');
        for r in &self.rows {
            let m = r.rho.matrix();
            let _ = write!(s, "{},{}", r.t_start_ps, r.t_end_ps);
            for i in 0..4 {
                for j in 0..4 {
                    let _ = write!(s, ",{}", m[(i, j)].re);
                }
            }
            for i in 0..4 {
                for j in 0..4 {
                    let _ = write!(s, ",{}", m[(i, j)].im);
                }
            }
            let _ = writeln!(s, ",{},{},{}", r.negativity, r.negativity_sigma, u8::from(r.low_stats));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_text())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut comments = Vec::new();
        let mut rows = Vec::new();
        let mut seen_header = false;
        let expected = header();
        for (n, line) in text.lines().enumerate() {
            let n = n + 1;
            if let Some(c) = line.strip_prefix('#') {
                comments.push(c.strip_prefix(' ').unwrap_or(c).to_string());
                continue;
            }
            if !seen_header {
                if line != expected {
                    return Err(Error::Data(format!("line {n}: unexpected header")));
                }
                seen_header = true;
                continue;
            }
            rows.push(parse_row(line).map_err(|m| Error::Data(format!("line {n}: {m}")))?);
        }
        if !seen_header {
            return Err(Error::Data("missing header row".into()));
        }
        Ok(MatrixSeries { comments, rows })
    }
}

fn parse_row(line: &str) -> std::result::Result<SeriesRow, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 37 {
        return Err(format!("expected 37 fields, found {}", fields.len()));
    }
    let num = |k: usize| -> std::result::Result<f64, String> {
        fields[k].parse().map_err(|_| format!("bad number `{}`", fields[k]))
    };
    let mut m = Mat4::zeros();
    for k in 0..16 {
        m[(k / 4, k % 4)] = C64::new(num(2 + k)?, num(18 + k)?);
    }
    let rho = DensityMatrix::new(m, LOAD_TOLERANCE).map_err(|e| e.to_string())?;
    let low_stats = match fields[36] {
        "0" => false,
        "1" => true,
        other => return Err(format!("bad low_stats flag `{other}`")),
    };
    Ok(SeriesRow {
        t_start_ps: num(0)?,
        t_end_ps: num(1)?,
        rho,
        negativity: num(34)?,
        negativity_sigma: num(35)?,
        low_stats,
    })
}
