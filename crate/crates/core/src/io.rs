//! Artifact formats.
//!
//! Field binary, little endian throughout:
//!
//! | offset | type | content |
//! |---|---|---|
//! | 0 | `u64` | `n` |
//! | 8 | `f64` | `L` (box `[-L, L)^2`) |
//! | 16 | `n*n` x `f64` | `u[i][j]` row-major, `i` the x index, node `(-L + i h, -L + j h)` |
//!
//! Sweep CSV columns, in order: `a, E, kinetic, potential, quartic, gravity,
//! mu, width, peak_x, peak_y, l_pred, E_pred, err_L2, err_H1, converged`.
//! Floats carry 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::asymptotics::SweepRow;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};

pub const SWEEP_COLUMNS: [&str; 15] = [
    "a",
    "E",
    "kinetic",
    "potential",
    "quartic",
    "gravity",
    "mu",
    "width",
    "peak_x",
    "peak_y",
    "l_pred",
    "E_pred",
    "err_L2",
    "err_H1",
    "converged",
];

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn encode_field(u: &Field) -> Vec<u8> {
    let n = u.grid().n();
    let mut out = Vec::with_capacity(16 + 8 * n * n);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&u.grid().half_width().to_le_bytes());
    for v in u.values().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<Field> {
    let word = |k: usize| -> Result<[u8; 8]> {
        bytes
            .get(8 * k..8 * k + 8)
            .map(|s| s.try_into().expect("eight bytes"))
            .ok_or_else(|| Error::Serialization("truncated field file".into()))
    };
    let n = u64::from_le_bytes(word(0)?) as usize;
    let half_width = f64::from_le_bytes(word(1)?);
    let grid = Grid2D::new(half_width, n)?;
    if bytes.len() != 16 + 8 * n * n {
        return Err(Error::Serialization(format!(
            "expected {} bytes for n = {n}, got {}",
            16 + 8 * n * n,
            bytes.len()
        )));
    }
    let values: Vec<f64> =
        bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes"))).collect();
    Field::new(&grid, Array2::from_shape_vec((n, n), values).expect("n x n"))
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(SWEEP_COLUMNS).map_err(ser)?;
    for r in rows {
        let e = &r.energy;
        let mut rec: Vec<String> = [
            r.a,
            e.total,
            e.kinetic,
            e.potential,
            e.quartic,
            e.gravity,
            r.mu,
            r.width,
            r.peak.0,
            r.peak.1,
            r.l_pred,
            r.e_pred,
            r.err_l2,
            r.err_h1,
        ]
        .iter()
        .map(|v| format_float(*v))
        .collect();
        rec.push(r.converged.to_string());
        w.write_record(&rec).map_err(ser)?;
    }
    w.into_inner().map_err(|e| Error::Serialization(e.to_string()))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

/// Files produced by one command, written only once everything has been computed.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> Result<()> {
        self.add(name, to_json(value)?);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file under `dir`, each through a temporary file and a rename.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            let tmp = path.with_extension("partial");
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)?;
        }
        Ok(())
    }
}
