//! Newtonian self-interaction `D(u) = int int u(x)^2 u(y)^2 / |x - y|`.
//!
//! The convolution `Phi = u^2 * |x|^{-1}` is computed in free space: the
//! density is zero-padded to a `2n x 2n` array, so circular wrap-around never
//! reaches the `n x n` output block. The kernel holds cell averages of
//! `1/|x|`, which keeps the origin finite and the quadrature second order.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::potentials::unit_cell_average;
use crate::spectral::{signed_index, RealFft2};

#[derive(Clone, Debug)]
pub struct GravityKernel {
    grid: Grid2D,
    fft: std::sync::Arc<RealFft2>,
    /// Real transform of the padded kernel, `spectrum[c * 2n + r]`.
    spectrum: Vec<f64>,
    origin_value: f64,
}

pub fn build_kernel(grid: &Grid2D) -> GravityKernel {
    let n = grid.n();
    let big = 2 * n;
    let h = grid.spacing();
    let fft = RealFft2::new(big);

    // the kernel depends on |offset| only, so tabulate one octant
    let mut octant = vec![0.0; (n + 1) * (n + 1)];
    for a in 0..=n {
        for b in a..=n {
            let v = unit_cell_average(1.0, a as i64, b as i64) / h;
            octant[a * (n + 1) + b] = v;
            octant[b * (n + 1) + a] = v;
        }
    }
    let mut table = vec![0.0; big * big];
    for r in 0..big {
        let a = signed_index(r, big).unsigned_abs() as usize;
        for c in 0..big {
            let b = signed_index(c, big).unsigned_abs() as usize;
            table[r * big + c] = octant[a * (n + 1) + b];
        }
    }
    let spectrum = fft.forward(&table).into_iter().map(|z| z.re).collect();
    GravityKernel { grid: grid.clone(), fft: std::sync::Arc::new(fft), spectrum, origin_value: octant[0] }
}

impl GravityKernel {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// Cell average of `1/|x|` over the cell centred at the origin.
    pub fn origin_value(&self) -> f64 {
        self.origin_value
    }

    fn check(&self, grid: &Grid2D) -> Result<()> {
        if self.grid.same_as(grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "kernel built for L = {}, n = {}; field has L = {}, n = {}",
                self.grid.half_width(),
                self.grid.n(),
                grid.half_width(),
                grid.n()
            )))
        }
    }

    /// `h^2 sum_y K(x - y) rho(y)` for an arbitrary table `rho`.
    pub fn convolve(&self, rho: &Array2<f64>) -> Result<Array2<f64>> {
        self.grid.check_shape(rho)?;
        let n = self.grid.n();
        let data = rho.as_standard_layout();
        let mut spec = self.fft.forward_block(data.as_slice().expect("standard layout"), n, n, n);
        let h2 = self.grid.cell_area();
        for (z, k) in spec.iter_mut().zip(&self.spectrum) {
            *z *= k * h2;
        }
        let out = self.fft.inverse_block(spec, n, n);
        Ok(Array2::from_shape_vec((n, n), out).expect("n x n block"))
    }

    #[cfg(test)]
    fn spectrum_len(&self) -> usize {
        self.spectrum.len()
    }
}

/// `Phi = u^2 * |x|^{-1}`.
pub fn gravity_potential(u: &Field, kernel: &GravityKernel) -> Result<Array2<f64>> {
    kernel.check(u.grid())?;
    let rho = u.values().mapv(|v| v * v);
    kernel.convolve(&rho)
}

/// `D(u) = h^2 sum u^2 Phi`.
pub fn gravity_energy(u: &Field, kernel: &GravityKernel) -> Result<f64> {
    let phi = gravity_potential(u, kernel)?;
    Ok(u.grid().inner(&u.values().mapv(|v| v * v), &phi))
}
