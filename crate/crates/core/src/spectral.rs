//! Real-to-complex 2D transforms on square arrays.
//!
//! Spectra are kept in a transposed half-plane layout: `spec[c * rows + r]`
//! holds frequency `r` along the first axis (full range) and `c` along the
//! second axis (`0..=cols/2`). Transforms are unnormalized.

use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

pub(crate) struct RealFft2 {
    len: usize,
    row_fwd: Arc<dyn RealToComplex<f64>>,
    row_inv: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RealFft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealFft2").field("len", &self.len).finish()
    }
}

impl RealFft2 {
    pub(crate) fn new(len: usize) -> Self {
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        RealFft2 {
            len,
            row_fwd: rp.plan_fft_forward(len),
            row_inv: rp.plan_fft_inverse(len),
            col_fwd: cp.plan_fft_forward(len),
            col_inv: cp.plan_fft_inverse(len),
        }
    }

    /// Number of retained frequencies along the second axis.
    pub(crate) fn half(&self) -> usize {
        self.len / 2 + 1
    }

    /// Forward transform of a `len x len` array of which only the leading
    /// `used_rows x used_cols` block is nonzero. `input` is row-major with
    /// row stride `stride`.
    pub(crate) fn forward_block(
        &self,
        input: &[f64],
        stride: usize,
        used_rows: usize,
        used_cols: usize,
    ) -> Vec<Complex64> {
        let n = self.len;
        let m = self.half();
        let mut spec = vec![Complex64::new(0.0, 0.0); m * n];
        let mut row = vec![0.0; n];
        let mut out = vec![Complex64::new(0.0, 0.0); m];
        let mut scratch = self.row_fwd.make_scratch_vec();
        for r in 0..used_rows {
            row[..used_cols].copy_from_slice(&input[r * stride..r * stride + used_cols]);
            row[used_cols..].iter_mut().for_each(|v| *v = 0.0);
            self.row_fwd.process_with_scratch(&mut row, &mut out, &mut scratch).expect("row length matches plan");
            for (c, v) in out.iter().enumerate() {
                spec[c * n + r] = *v;
            }
        }
        let mut cscratch = vec![Complex64::new(0.0, 0.0); self.col_fwd.get_inplace_scratch_len()];
        self.col_fwd.process_with_scratch(&mut spec, &mut cscratch);
        spec
    }

    pub(crate) fn forward(&self, input: &[f64]) -> Vec<Complex64> {
        self.forward_block(input, self.len, self.len, self.len)
    }

    /// Inverse transform returning the leading `want_rows x want_cols` block,
    /// scaled by `1/len^2`.
    pub(crate) fn inverse_block(&self, mut spec: Vec<Complex64>, want_rows: usize, want_cols: usize) -> Vec<f64> {
        let n = self.len;
        let m = self.half();
        let mut cscratch = vec![Complex64::new(0.0, 0.0); self.col_inv.get_inplace_scratch_len()];
        self.col_inv.process_with_scratch(&mut spec, &mut cscratch);
        let norm = 1.0 / (n as f64 * n as f64);
        let mut out = vec![0.0; want_rows * want_cols];
        let mut row_spec = vec![Complex64::new(0.0, 0.0); m];
        let mut row = vec![0.0; n];
        let mut scratch = self.row_inv.make_scratch_vec();
        for r in 0..want_rows {
            for c in 0..m {
                row_spec[c] = spec[c * n + r];
            }
            row_spec[0].im = 0.0;
            row_spec[m - 1].im = 0.0;
            self.row_inv
                .process_with_scratch(&mut row_spec, &mut row, &mut scratch)
                .expect("spectrum length matches plan");
            for (o, v) in out[r * want_cols..(r + 1) * want_cols].iter_mut().zip(&row[..want_cols]) {
                *o = v * norm;
            }
        }
        out
    }

    pub(crate) fn inverse(&self, spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse_block(spec, self.len, self.len)
    }

    /// Weight of half-plane column `c` in a full-plane sum (Hermitian symmetry).
    pub(crate) fn column_weight(&self, c: usize) -> f64 {
        if c == 0 || (self.len % 2 == 0 && c == self.len / 2) {
            1.0
        } else {
            2.0
        }
    }
}

/// Signed integer frequency of FFT index `j` for a transform of length `n`.
pub(crate) fn signed_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_identity() {
        let n = 16;
        let fft = RealFft2::new(n);
        let data: Vec<f64> = (0..n * n).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let back = fft.inverse(fft.forward(&data));
        for (a, b) in data.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn block_forward_matches_padded_input() {
        let n = 8;
        let fft = RealFft2::new(2 * n);
        let small: Vec<f64> = (0..n * n).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut padded = vec![0.0; 4 * n * n];
        for r in 0..n {
            padded[r * 2 * n..r * 2 * n + n].copy_from_slice(&small[r * n..(r + 1) * n]);
        }
        let a = fft.forward_block(&small, n, n, n);
        let b = fft.forward(&padded);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn parseval_with_half_plane_weights() {
        let n = 16;
        let fft = RealFft2::new(n);
        let data: Vec<f64> = (0..n * n).map(|i| (i as f64 * 0.17).sin() + 0.2).collect();
        let spec = fft.forward(&data);
        let direct: f64 = data.iter().map(|v| v * v).sum();
        let mut spectral = 0.0;
        for c in 0..fft.half() {
            for r in 0..n {
                spectral += fft.column_weight(c) * spec[c * n + r].norm_sqr();
            }
        }
        spectral /= (n * n) as f64;
        assert!((direct - spectral).abs() < 1e-12 * direct);
    }
}
