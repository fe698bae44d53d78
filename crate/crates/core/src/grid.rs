//! Square computational box, discrete fields and spectral calculus.
//!
//! The box is `[-L, L)^2` sampled at `x_i = -L + i h`, `h = 2L/n`, so the
//! origin is always a grid node (`i = n/2`). Values are indexed
//! `values[[i, j]] = u(x_i, y_j)`. Derivatives are spectral and periodic;
//! fields of interest decay exponentially, so the box only has to be wide
//! enough that the tails are negligible at its edge.
//!
//! Resolution guidance: a field concentrated on length scale `w` is
//! resolved to near machine precision when `h <= w / 4` and its tail at
//! the box edge is below `1e-8` of the peak.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use realfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{signed_index, RealFft2};

/// Square periodic grid `[-L, L)^2` with `n` points per dimension.
#[derive(Clone, Debug)]
pub struct Grid2D {
    half_width: f64,
    n: usize,
    spacing: f64,
    wavenumbers: Vec<f64>,
    fft: Arc<RealFft2>,
}

/// Validates `(L, n)` and builds the grid.
pub fn make_grid(half_width: f64, n: usize) -> Result<Grid2D> {
    Grid2D::new(half_width, n)
}

impl Grid2D {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Config(format!("half width must be positive, got {half_width}")));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::Config(format!("n must be a power of two >= 16, got {n}")));
        }
        let spacing = 2.0 * half_width / n as f64;
        let wavenumbers = (0..n).map(|j| PI * signed_index(j, n) as f64 / half_width).collect();
        Ok(Grid2D { half_width, n, spacing, wavenumbers, fft: Arc::new(RealFft2::new(n)) })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    /// Wavenumbers `pi j / L` in standard FFT ordering.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Coordinate of node `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }

    /// Index of the node nearest to coordinate `x`, if it lies in the box.
    pub fn nearest_index(&self, x: f64) -> Option<usize> {
        let k = ((x + self.half_width) / self.spacing).round();
        if k >= 0.0 && (k as usize) < self.n {
            Some(k as usize)
        } else {
            None
        }
    }

    /// True when both grids describe the same sampling.
    pub fn same_as(&self, other: &Grid2D) -> bool {
        self.n == other.n && self.half_width == other.half_width
    }

    pub(crate) fn check_shape(&self, table: &Array2<f64>) -> Result<()> {
        if table.dim() != (self.n, self.n) {
            return Err(Error::GridMismatch(format!(
                "table has shape {:?}, grid is {}x{}",
                table.dim(),
                self.n,
                self.n
            )));
        }
        Ok(())
    }

    /// `h^2 * sum(a * b)`.
    pub fn inner(&self, a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        self.cell_area() * Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + x * y)
    }

    pub(crate) fn forward(&self, table: &Array2<f64>) -> Vec<Complex64> {
        let data = table.as_standard_layout();
        self.fft.forward(data.as_slice().expect("standard layout"))
    }

    pub(crate) fn inverse(&self, spec: Vec<Complex64>) -> Array2<f64> {
        Array2::from_shape_vec((self.n, self.n), self.fft.inverse(spec)).expect("square spectrum")
    }

    /// Applies the Fourier multiplier `symbol(|k|^2)` to a table.
    pub(crate) fn apply_radial_symbol(&self, table: &Array2<f64>, symbol: impl Fn(f64) -> f64) -> Array2<f64> {
        let mut spec = self.forward(table);
        self.multiply_spectrum(&mut spec, symbol);
        self.inverse(spec)
    }

    pub(crate) fn multiply_spectrum(&self, spec: &mut [Complex64], symbol: impl Fn(f64) -> f64) {
        let n = self.n;
        for c in 0..self.fft.half() {
            let ky = self.wavenumbers[c];
            for r in 0..n {
                let kx = self.wavenumbers[r];
                spec[c * n + r] *= symbol(kx * kx + ky * ky);
            }
        }
    }

    /// `h^2/n^2 * sum_k w(k) |u_k|^2`, the Parseval form of `h^2 sum f(-Delta) u * u`.
    pub(crate) fn spectral_quadratic(&self, spec: &[Complex64], symbol: impl Fn(f64) -> f64) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for c in 0..self.fft.half() {
            let ky = self.wavenumbers[c];
            let w = self.fft.column_weight(c);
            let mut col = 0.0;
            for r in 0..n {
                let kx = self.wavenumbers[r];
                col += symbol(kx * kx + ky * ky) * spec[c * n + r].norm_sqr();
            }
            acc += w * col;
        }
        acc * self.cell_area() / (n as f64 * n as f64)
    }

    /// `h^2 sum grad a . grad b`, computed spectrally.
    pub(crate) fn kinetic_cross(&self, a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let (sa, sb) = (self.forward(a), self.forward(b));
        let n = self.n;
        let mut acc = 0.0;
        for c in 0..self.fft.half() {
            let ky = self.wavenumbers[c];
            let mut col = 0.0;
            for r in 0..n {
                let kx = self.wavenumbers[r];
                let (za, zb) = (sa[c * n + r], sb[c * n + r]);
                col += (kx * kx + ky * ky) * (za.re * zb.re + za.im * zb.im);
            }
            acc += self.fft.column_weight(c) * col;
        }
        acc * self.cell_area() / (n as f64 * n as f64)
    }

    /// Kinetic energy and `-Delta u` from a single forward transform.
    pub(crate) fn kinetic_and_neg_laplacian(&self, table: &Array2<f64>) -> (f64, Array2<f64>) {
        let mut spec = self.forward(table);
        let kinetic = self.spectral_quadratic(&spec, |k2| k2);
        self.multiply_spectrum(&mut spec, |k2| k2);
        (kinetic, self.inverse(spec))
    }

    /// `-Delta` applied spectrally.
    pub fn neg_laplacian(&self, table: &Array2<f64>) -> Array2<f64> {
        self.apply_radial_symbol(table, |k2| k2)
    }

    /// Fraction of the spectral power carried by modes with `|k| > (2/3) k_max`.
    pub fn spectral_tail_fraction(&self, table: &Array2<f64>) -> f64 {
        let spec = self.forward(table);
        let kcut = 2.0 / 3.0 * PI / self.spacing;
        let total = self.spectral_quadratic(&spec, |_| 1.0);
        if total == 0.0 {
            return 0.0;
        }
        let tail = self.spectral_quadratic(&spec, |k2| if k2 > kcut * kcut { 1.0 } else { 0.0 });
        tail / total
    }

    /// Fraction of `h^2 sum u^2` located within two cells of the box edge.
    pub fn edge_fraction(&self, table: &Array2<f64>) -> f64 {
        let n = self.n;
        let mut edge = 0.0;
        let mut total = 0.0;
        for ((i, j), v) in table.indexed_iter() {
            let w = v * v;
            total += w;
            if i < 2 || j < 2 || i >= n - 2 || j >= n - 2 {
                edge += w;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            edge / total
        }
    }
}

/// A nonnegative wavefunction sampled on a grid.
#[derive(Clone, Debug)]
pub struct Field {
    values: Array2<f64>,
    grid: Grid2D,
}

impl Field {
    /// Wraps a table; every entry must be finite and nonnegative.
    pub fn new(grid: &Grid2D, values: Array2<f64>) -> Result<Self> {
        grid.check_shape(&values)?;
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!("field values must be finite and >= 0, found {v}")));
        }
        Ok(Field { values, grid: grid.clone() })
    }

    /// Clamps negative entries to zero.
    pub fn from_table_clamped(grid: &Grid2D, mut values: Array2<f64>) -> Result<Self> {
        grid.check_shape(&values)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("field contains non-finite values".into()));
        }
        values.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
        Ok(Field { values, grid: grid.clone() })
    }

    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let n = grid.n();
        let values = Array2::from_shape_fn((n, n), |(i, j)| f(grid.coord(i), grid.coord(j)));
        Field::new(grid, values)
    }

    pub fn zeros(grid: &Grid2D) -> Self {
        Field { values: Array2::zeros((grid.n(), grid.n())), grid: grid.clone() }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// `c * u` for `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Field> {
        Field::new(&self.grid, self.values.mapv(|v| c * v))
    }

    /// Node index of the maximum value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut top = f64::NEG_INFINITY;
        for ((i, j), v) in self.values.indexed_iter() {
            if *v > top {
                top = *v;
                best = (i, j);
            }
        }
        best
    }
}

/// Discrete mass `h^2 sum u^2`.
pub fn mass(u: &Field) -> f64 {
    u.grid.inner(&u.values, &u.values)
}

/// Rescales `u` to unit mass.
pub fn normalize(u: &Field) -> Result<Field> {
    let m = mass(u);
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Degenerate(format!("cannot normalize a field of mass {m}")));
    }
    let c = 1.0 / m.sqrt();
    Ok(Field { values: u.values.mapv(|v| v * c), grid: u.grid.clone() })
}

/// `int |grad u|^2` evaluated spectrally (Parseval), exact for band-limited fields.
pub fn kinetic_energy(u: &Field) -> f64 {
    kinetic_of_table(&u.grid, &u.values)
}

pub(crate) fn kinetic_of_table(grid: &Grid2D, table: &Array2<f64>) -> f64 {
    let spec = grid.forward(table);
    grid.spectral_quadratic(&spec, |k2| k2)
}

/// How off-grid values are reconstructed when resampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    /// Band-limited trigonometric interpolation.
    Spectral,
    /// Bilinear interpolation between the four surrounding nodes.
    Bilinear,
}

/// What to do when a resampled field fails the resolution checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionPolicy {
    Error,
    Warn,
    Ignore,
}

#[derive(Clone, Copy, Debug)]
pub struct DilateOptions {
    pub method: Resample,
    pub policy: ResolutionPolicy,
    /// Largest admissible spectral tail fraction of the result.
    pub tail_tolerance: f64,
    /// Largest admissible fraction of mass within two cells of the edge.
    pub edge_tolerance: f64,
}

impl Default for DilateOptions {
    fn default() -> Self {
        DilateOptions {
            method: Resample::Spectral,
            policy: ResolutionPolicy::Error,
            tail_tolerance: 1e-8,
            edge_tolerance: 1e-8,
        }
    }
}

/// `v(x) = l u(l x)` resampled spectrally on the same grid.
pub fn dilate(u: &Field, scale: f64) -> Result<Field> {
    dilate_with(u, scale, &DilateOptions::default())
}

pub fn dilate_with(u: &Field, scale: f64, opts: &DilateOptions) -> Result<Field> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Domain(format!("dilation factor must be positive, got {scale}")));
    }
    let table = resample_affine(&u.values, &u.grid, &u.grid, scale, (0.0, 0.0), opts.method)?;
    let table = table.mapv(|v| scale * v);
    check_resolution(&u.grid, &table, opts)?;
    Field::from_table_clamped(&u.grid, table)
}

pub(crate) fn check_resolution(grid: &Grid2D, table: &Array2<f64>, opts: &DilateOptions) -> Result<()> {
    if opts.policy == ResolutionPolicy::Ignore {
        return Ok(());
    }
    let tail = grid.spectral_tail_fraction(table);
    let edge = grid.edge_fraction(table);
    if tail > opts.tail_tolerance || edge > opts.edge_tolerance {
        let msg = format!("spectral tail fraction {tail:.3e}, edge mass fraction {edge:.3e}");
        match opts.policy {
            ResolutionPolicy::Error => return Err(Error::Resolution(msg)),
            ResolutionPolicy::Warn => log_warning(&msg),
            ResolutionPolicy::Ignore => {}
        }
    }
    Ok(())
}

pub(crate) fn log_warning(msg: &str) {
    eprintln!("warning: {msg}");
}

/// Samples `src` (on `src_grid`) at the points `offset + scale * x'` for the
/// nodes `x'` of `dst_grid`. Points outside the source box read as zero.
pub fn resample_affine(
    src: &Array2<f64>,
    src_grid: &Grid2D,
    dst_grid: &Grid2D,
    scale: f64,
    offset: (f64, f64),
    method: Resample,
) -> Result<Array2<f64>> {
    src_grid.check_shape(src)?;
    let mx = interpolation_matrix(src_grid, dst_grid, scale, offset.0, method);
    let my = interpolation_matrix(src_grid, dst_grid, scale, offset.1, method);
    Ok(mx.dot(&src.dot(&my.t())))
}

/// Row `i` holds the weights reconstructing `u(offset + scale * x'_i)` from the
/// source nodes along one axis.
fn interpolation_matrix(src: &Grid2D, dst: &Grid2D, scale: f64, offset: f64, method: Resample) -> Array2<f64> {
    let n = src.n();
    let l = src.half_width();
    let h = src.spacing();
    let mut m = Array2::zeros((dst.n(), n));
    for i in 0..dst.n() {
        let t = offset + scale * dst.coord(i);
        if t < -l || t >= l {
            continue;
        }
        match method {
            Resample::Spectral => {
                for k in 0..n {
                    m[[i, k]] = dirichlet_kernel(t - src.coord(k), n, l);
                }
            }
            Resample::Bilinear => {
                let s = (t + l) / h;
                let k0 = s.floor() as usize;
                let frac = s - k0 as f64;
                m[[i, k0]] = 1.0 - frac;
                if k0 + 1 < n {
                    m[[i, k0 + 1]] = frac;
                }
            }
        }
    }
    m
}

/// Band-limited periodic interpolation kernel of an even-length grid of period `2L`.
fn dirichlet_kernel(dx: f64, n: usize, half_width: f64) -> f64 {
    let theta = PI * dx / half_width;
    let half = 0.5 * theta;
    let s = half.sin();
    if s.abs() < 1e-13 {
        // dx is a multiple of the period
        return 1.0;
    }
    (0.5 * n as f64 * theta).sin() * half.cos() / (s * n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gaussian(grid: &Grid2D, width: f64) -> Field {
        let c = 1.0 / (PI.sqrt() * width);
        Field::from_fn(grid, |x, y| c * (-(x * x + y * y) / (2.0 * width * width)).exp()).unwrap()
    }

    #[test]
    fn grid_spacing() {
        assert_eq!(make_grid(8.0, 16).unwrap().spacing(), 1.0);
        assert_eq!(make_grid(16.0, 256).unwrap().spacing(), 0.125);
        assert!(matches!(make_grid(8.0, 100), Err(Error::Config(_))));
        assert!(matches!(make_grid(-1.0, 64), Err(Error::Config(_))));
        assert!(matches!(make_grid(8.0, 8), Err(Error::Config(_))));
    }

    #[test]
    fn wavenumbers_follow_fft_order() {
        let g = make_grid(4.0, 16).unwrap();
        let k = g.wavenumbers();
        assert_eq!(k.len(), 16);
        assert_relative_eq!(k[1], PI / 4.0);
        assert_relative_eq!(k[8], 8.0 * PI / 4.0);
        assert_relative_eq!(k[15], -PI / 4.0);
        assert_eq!(g.coord(8), 0.0);
    }

    #[test]
    fn mass_of_zero_and_scaled_fields() {
        let g = make_grid(8.0, 64).unwrap();
        assert_eq!(mass(&Field::zeros(&g)), 0.0);
        let u = gaussian(&g, 1.0);
        let m = mass(&u);
        assert_relative_eq!(mass(&u.scaled(3.0).unwrap()), 9.0 * m, max_relative = 1e-14);
    }

    #[test]
    fn normalize_divides_by_root_mass() {
        let g = make_grid(8.0, 64).unwrap();
        let u = normalize(&gaussian(&g, 1.0)).unwrap().scaled(2.0).unwrap();
        assert_relative_eq!(mass(&u), 4.0, max_relative = 1e-13);
        let v = normalize(&u).unwrap();
        Zip::from(v.values()).and(u.values()).for_each(|a, b| assert!((a - b / 2.0).abs() < 1e-15));
        let w = normalize(&v).unwrap();
        Zip::from(w.values()).and(v.values()).for_each(|a, b| assert!((a - b).abs() < 1e-15));
        assert!(matches!(normalize(&Field::zeros(&g)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn negative_values_are_rejected() {
        let g = make_grid(8.0, 16).unwrap();
        let mut t = Array2::zeros((16, 16));
        t[[3, 3]] = -1.0;
        assert!(Field::new(&g, t).is_err());
    }

    #[test]
    fn kinetic_of_constant_is_zero() {
        let g = make_grid(8.0, 32).unwrap();
        let u = Field::from_fn(&g, |_, _| 0.7).unwrap();
        assert!(kinetic_energy(&u).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mass_and_kinetic() {
        let g = make_grid(8.0, 256).unwrap();
        let u = gaussian(&g, 1.0);
        assert!((mass(&u) - 1.0).abs() < 1e-8);
        assert!((kinetic_energy(&u) - 1.0).abs() < 1e-6);
        let v = dilate(&u, 2.0).unwrap();
        assert!((kinetic_energy(&v) - 4.0).abs() < 1e-5);
    }

    #[test]
    fn dilation_by_one_is_identity() {
        let g = make_grid(8.0, 64).unwrap();
        let u = gaussian(&g, 1.0);
        let v = dilate(&u, 1.0).unwrap();
        Zip::from(v.values()).and(u.values()).for_each(|a, b| assert!((a - b).abs() < 1e-12));
    }

    #[test]
    fn dilation_halves_width_and_doubles_amplitude() {
        let g = make_grid(8.0, 128).unwrap();
        let u = gaussian(&g, 1.0);
        let v = dilate(&u, 2.0).unwrap();
        let w = gaussian(&g, 0.5);
        Zip::from(v.values()).and(w.values()).for_each(|a, b| assert!((a - b).abs() < 1e-9));
    }

    #[test]
    fn bilinear_dilation_is_close() {
        let g = make_grid(8.0, 256).unwrap();
        let u = gaussian(&g, 1.0);
        let opts = DilateOptions { method: Resample::Bilinear, ..Default::default() };
        let v = dilate_with(&u, 1.3, &opts).unwrap();
        assert!((mass(&v) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn overly_strong_dilation_is_flagged() {
        let g = make_grid(8.0, 32).unwrap();
        let u = gaussian(&g, 1.0);
        assert!(matches!(dilate(&u, 6.0), Err(Error::Resolution(_))));
        let lax = DilateOptions { policy: ResolutionPolicy::Ignore, ..Default::default() };
        assert!(dilate_with(&u, 6.0, &lax).is_ok());
    }

    #[test]
    fn parseval_mass_matches_direct_mass() {
        let g = make_grid(6.0, 64).unwrap();
        let u = Field::from_fn(&g, |x, y| (-(x - 0.3).powi(2) - 2.0 * y * y).exp()).unwrap();
        let spec = g.forward(u.values());
        let spectral = g.spectral_quadratic(&spec, |_| 1.0);
        assert!((spectral - mass(&u)).abs() < 1e-12 * mass(&u));
    }
}
