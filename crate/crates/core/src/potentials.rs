//! External potentials: power traps, periodic lattices and sums of
//! attractive singularities `-h(x) sum_j |x - z_j|^{-p_j}`.
//!
//! Singular terms are represented by exact cell averages of `|x - z|^{-p}`
//! over the square cell around each node, so that `h^2 sum V u^2` stays a
//! consistent quadrature of `int V u^2` at every resolution. Near the
//! singularity the averages come from Gauss-Legendre quadrature; far away a
//! fourth-order moment expansion is accurate to about `1e-9`.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_4;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::quadrature::{integrate_interval, integrate_rectangle};

/// Cells within this Chebyshev distance of a singular point get quadrature averages.
const WINDOW: i64 = 8;

/// Envelope `h(x)` multiplying a singular sum.
#[derive(Clone, Debug, PartialEq)]
pub enum Envelope {
    Constant(f64),
    /// Samples on the uniform `m x m` node lattice of `[-extent, extent]^2`,
    /// bilinearly interpolated and clamped to the edge values outside.
    Table {
        extent: f64,
        values: Array2<f64>,
    },
}

impl Envelope {
    pub fn at(&self, x: f64, y: f64) -> f64 {
        match self {
            Envelope::Constant(c) => *c,
            Envelope::Table { extent, values } => {
                let m = values.nrows();
                let step = 2.0 * extent / (m - 1) as f64;
                let locate = |t: f64| {
                    let s = ((t + extent) / step).clamp(0.0, (m - 1) as f64);
                    let i = (s.floor() as usize).min(m - 2);
                    (i, s - i as f64)
                };
                let (i, fx) = locate(x);
                let (j, fy) = locate(y);
                let v = |a: usize, b: usize| values[[a, b]];
                (1.0 - fx) * ((1.0 - fy) * v(i, j) + fy * v(i, j + 1))
                    + fx * ((1.0 - fy) * v(i + 1, j) + fy * v(i + 1, j + 1))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Envelope::Constant(c) => {
                if !(c.is_finite() && *c >= 0.0) {
                    return Err(Error::Domain(format!("envelope must be finite and >= 0, got {c}")));
                }
            }
            Envelope::Table { extent, values } => {
                if !(extent.is_finite() && *extent > 0.0) {
                    return Err(Error::Config(format!("envelope extent must be positive, got {extent}")));
                }
                if values.nrows() < 2 || values.nrows() != values.ncols() {
                    return Err(Error::Config("envelope table must be square with at least 2x2 samples".into()));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::Domain("envelope table must be finite and >= 0".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularPoint {
    pub z: (f64, f64),
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialSpec {
    Zero,
    /// `|x|^q`.
    Trap {
        q: f64,
    },
    /// `-h(x) sum_j |x - z_j|^{-p_j}`.
    SingularSum {
        points: Vec<SingularPoint>,
        envelope: Envelope,
    },
    /// Period-1 potential given by samples `values[[a, b]] = V(a/m, b/m)` on the unit cell.
    Periodic {
        values: Array2<f64>,
    },
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialSpec::Zero => Ok(()),
            PotentialSpec::Trap { q } => {
                if q.is_finite() && *q > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Domain(format!("trap exponent must be positive, got {q}")))
                }
            }
            PotentialSpec::SingularSum { points, envelope } => {
                envelope.validate()?;
                for (k, pt) in points.iter().enumerate() {
                    if !(pt.p > 0.0 && pt.p < 2.0) {
                        return Err(Error::Domain(format!("singular exponents must lie in (0, 2), got {}", pt.p)));
                    }
                    if !(pt.z.0.is_finite() && pt.z.1.is_finite()) {
                        return Err(Error::Config("singular point must be finite".into()));
                    }
                    if points[..k].iter().any(|o| o.z == pt.z) {
                        return Err(Error::Config(format!("duplicate singular point {:?}", pt.z)));
                    }
                }
                Ok(())
            }
            PotentialSpec::Periodic { values } => {
                if values.nrows() == 0 || values.nrows() != values.ncols() {
                    return Err(Error::Config("periodic table must be square and nonempty".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("periodic table must be finite".into()));
                }
                Ok(())
            }
        }
    }

    /// Convenience constructor for `-h0 |x - z|^{-p}`.
    pub fn single(z: (f64, f64), p: f64, h0: f64) -> Self {
        PotentialSpec::SingularSum { points: vec![SingularPoint { z, p }], envelope: Envelope::Constant(h0) }
    }

    /// True for potentials invariant under rotations about the origin.
    pub fn is_radial(&self) -> bool {
        match self {
            PotentialSpec::Zero | PotentialSpec::Trap { .. } => true,
            PotentialSpec::SingularSum { points, envelope } => {
                matches!(envelope, Envelope::Constant(_)) && points.iter().all(|p| p.z == (0.0, 0.0))
            }
            PotentialSpec::Periodic { .. } => false,
        }
    }
}

/// The most singular part of a singular sum.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularSet {
    /// `max p_j`.
    pub p: f64,
    /// `max { h(z_j) : p_j = p }`.
    pub h0: f64,
    /// Points attaining both maxima.
    pub z: Vec<(f64, f64)>,
}

pub fn singular_set(spec: &PotentialSpec) -> Option<SingularSet> {
    let PotentialSpec::SingularSum { points, envelope } = spec else {
        return None;
    };
    let p = points.iter().map(|pt| pt.p).fold(f64::NEG_INFINITY, f64::max);
    if !p.is_finite() {
        return None;
    }
    let top: Vec<_> = points.iter().filter(|pt| pt.p == p).collect();
    let h0 = top.iter().map(|pt| envelope.at(pt.z.0, pt.z.1)).fold(0.0, f64::max);
    let z = top
        .iter()
        .filter(|pt| (envelope.at(pt.z.0, pt.z.1) - h0).abs() <= 1e-12 * h0.max(1.0))
        .map(|pt| pt.z)
        .collect();
    Some(SingularSet { p, h0, z })
}

/// Position of a singular point after snapping to the nearest node.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Snap {
    pub requested: (f64, f64),
    pub snapped: (f64, f64),
    pub index: (usize, usize),
    pub distance: f64,
}

/// A potential sampled on a grid.
#[derive(Clone, Debug)]
pub struct SampledPotential {
    pub values: Array2<f64>,
    pub snaps: Vec<Snap>,
}

/// Average of `|x|^{-p}` over the unit square centred at `(di, dj)`.
pub fn unit_cell_average(p: f64, di: i64, dj: i64) -> f64 {
    let (a, b) = (di.unsigned_abs(), dj.unsigned_abs());
    if a == 0 && b == 0 {
        // eight congruent triangles 0 <= y <= x <= 1/2, in polar form
        let radial = |t: f64| (0.5 / t.cos()).powf(2.0 - p) / (2.0 - p);
        return 8.0 * integrate_interval(radial, 0.0, FRAC_PI_4, 24);
    }
    if a.max(b) as i64 > WINDOW {
        return far_cell_average(p, a as f64, b as f64);
    }
    let (cx, cy) = (a as f64, b as f64);
    let sub = if a.max(b) <= 2 { 8 } else { 3 };
    integrate_rectangle(|x, y| (x * x + y * y).powf(-0.5 * p), (cx - 0.5, cx + 0.5), (cy - 0.5, cy + 0.5), 12, sub)
}

/// Fourth-order moment expansion of the unit-cell average of `|x|^{-p}` about `(x, y)`.
fn far_cell_average(p: f64, x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    let f = r2.powf(-0.5 * p);
    let lap = p * p / r2;
    let bilap = lap * (p + 2.0).powi(2) / r2;
    let s = -0.5 * p;
    let xxyy = (4.0 * s * (s - 1.0) + 8.0 * s * (s - 1.0) * (s - 2.0)) / (r2 * r2)
        + 16.0 * s * (s - 1.0) * (s - 2.0) * (s - 3.0) * x * x * y * y / (r2 * r2 * r2 * r2);
    f * (1.0 + lap / 24.0 + bilap / 1920.0 + xxyy / 1440.0)
}

/// Table of unit-cell averages for offsets within the quadrature window.
fn window_table(p: f64) -> Vec<f64> {
    let w = WINDOW as usize;
    let mut t = vec![0.0; (w + 1) * (w + 1)];
    for a in 0..=w {
        for b in a..=w {
            let v = unit_cell_average(p, a as i64, b as i64);
            t[a * (w + 1) + b] = v;
            t[b * (w + 1) + a] = v;
        }
    }
    t
}

pub fn sample_potential(spec: &PotentialSpec, grid: &Grid2D) -> Result<SampledPotential> {
    spec.validate()?;
    let n = grid.n();
    let h = grid.spacing();
    match spec {
        PotentialSpec::Zero => Ok(SampledPotential { values: Array2::zeros((n, n)), snaps: vec![] }),
        PotentialSpec::Trap { q } => {
            let values = Array2::from_shape_fn((n, n), |(i, j)| {
                let (x, y) = (grid.coord(i), grid.coord(j));
                (x * x + y * y).powf(0.5 * q)
            });
            Ok(SampledPotential { values, snaps: vec![] })
        }
        PotentialSpec::Periodic { values: cell } => {
            let per = 1.0 / h;
            let m = per.round();
            if m < 1.0 || (per - m).abs() > 1e-9 * per {
                return Err(Error::Config(format!("periodic potentials need a spacing dividing 1, got h = {h}")));
            }
            let m = m as i64;
            let t = cell.nrows();
            let origin = (n / 2) as i64;
            let sample = |k: i64| {
                let s = k.rem_euclid(m) as f64 / m as f64 * t as f64;
                let i = s.floor() as usize % t;
                (i, (i + 1) % t, s - s.floor())
            };
            let values = Array2::from_shape_fn((n, n), |(i, j)| {
                let (a0, a1, fa) = sample(i as i64 - origin);
                let (b0, b1, fb) = sample(j as i64 - origin);
                (1.0 - fa) * ((1.0 - fb) * cell[[a0, b0]] + fb * cell[[a0, b1]])
                    + fa * ((1.0 - fb) * cell[[a1, b0]] + fb * cell[[a1, b1]])
            });
            Ok(SampledPotential { values, snaps: vec![] })
        }
        PotentialSpec::SingularSum { points, envelope } => {
            let mut snaps = Vec::with_capacity(points.len());
            for pt in points {
                let idx = match (grid.nearest_index(pt.z.0), grid.nearest_index(pt.z.1)) {
                    (Some(i), Some(j)) if i > 0 && j > 0 && i + 1 < n && j + 1 < n => (i, j),
                    _ => return Err(Error::Config(format!("singular point {:?} is not in the grid interior", pt.z))),
                };
                let snapped = (grid.coord(idx.0), grid.coord(idx.1));
                let distance = (snapped.0 - pt.z.0).hypot(snapped.1 - pt.z.1);
                snaps.push(Snap { requested: pt.z, snapped, index: idx, distance });
            }
            for (k, s) in snaps.iter().enumerate() {
                if snaps[..k].iter().any(|o| o.index == s.index) {
                    return Err(Error::Config(format!("singular points {:?} snap to the same node", s.requested)));
                }
            }

            let w = WINDOW as usize;
            let mut tables: HashMap<u64, Vec<f64>> = HashMap::new();
            let mut sum = Array2::<f64>::zeros((n, n));
            for (pt, s) in points.iter().zip(&snaps) {
                let table = tables.entry(pt.p.to_bits()).or_insert_with(|| window_table(pt.p));
                let scale = h.powf(-pt.p);
                let p = pt.p;
                for ((i, j), v) in sum.indexed_iter_mut() {
                    let di = (i as i64 - s.index.0 as i64).unsigned_abs() as usize;
                    let dj = (j as i64 - s.index.1 as i64).unsigned_abs() as usize;
                    let avg = if di.max(dj) <= w {
                        table[di * (w + 1) + dj]
                    } else {
                        far_cell_average(p, di as f64, dj as f64)
                    };
                    *v += scale * avg;
                }
            }
            let values = match envelope {
                Envelope::Constant(c) => sum.mapv(|s| -c * s),
                env => Array2::from_shape_fn((n, n), |(i, j)| -env.at(grid.coord(i), grid.coord(j)) * sum[[i, j]]),
            };
            Ok(SampledPotential { values, snaps })
        }
    }
}

/// `h^2 sum V u^2`.
pub fn potential_energy(v: &Array2<f64>, u: &Field) -> Result<f64> {
    let grid = u.grid();
    grid.check_shape(v)?;
    let h2 = grid.cell_area();
    Ok(h2 * v.iter().zip(u.values().iter()).map(|(v, u)| v * u * u).sum::<f64>())
}
