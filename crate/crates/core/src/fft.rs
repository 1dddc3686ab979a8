use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const BLOCK: usize = 32;

/// 2D FFT workspace for square row-major arrays.
///
/// The `*_transposed` pair skips the final transpose: the spectrum is left
/// with the two wavenumber axes swapped, which is harmless for multipliers
/// that are symmetric under `k1 <-> k2` and saves two passes per round trip.
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Fft2 {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unnormalized forward transform; output spectrum has swapped axes.
    pub fn forward_transposed(&mut self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.n * self.n);
        self.forward.process_with_scratch(data, &mut self.scratch);
        transpose_in_place(data, self.n);
        self.forward.process_with_scratch(data, &mut self.scratch);
    }

    /// Unnormalized inverse of [`Fft2::forward_transposed`].
    pub fn inverse_transposed(&mut self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.n * self.n);
        self.inverse.process_with_scratch(data, &mut self.scratch);
        transpose_in_place(data, self.n);
        self.inverse.process_with_scratch(data, &mut self.scratch);
    }

    /// Unnormalized forward transform in natural layout.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.forward_transposed(data);
        transpose_in_place(data, self.n);
    }

    /// Unnormalized inverse transform in natural layout.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        transpose_in_place(data, self.n);
        self.inverse_transposed(data);
    }

    /// Applies a spectral multiplier that is symmetric in `k1 <-> k2`,
    /// including the `1/n^2` normalization if `multiplier` carries it.
    pub fn filter_symmetric(&mut self, data: &mut [Complex64], multiplier: &[Complex64]) {
        self.forward_transposed(data);
        for (v, m) in data.iter_mut().zip(multiplier) {
            *v *= m;
        }
        self.inverse_transposed(data);
    }

    /// Real-valued symmetric multiplier variant of [`Fft2::filter_symmetric`].
    pub fn filter_symmetric_real(&mut self, data: &mut [Complex64], multiplier: &[f64]) {
        self.forward_transposed(data);
        for (v, m) in data.iter_mut().zip(multiplier) {
            *v *= m;
        }
        self.inverse_transposed(data);
    }
}

fn transpose_in_place(data: &mut [Complex64], n: usize) {
    for bi in (0..n).step_by(BLOCK) {
        for bj in (bi..n).step_by(BLOCK) {
            for i in bi..(bi + BLOCK).min(n) {
                let j0 = if bi == bj { i + 1 } else { bj };
                for j in j0..(bj + BLOCK).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}
