//! Two-dimensional complex FFT on row-major buffers.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

/// Planned 2-D transform for an `n1 x n2` row-major array (`s1` slow,
/// `s2` fast). Unnormalised in both directions.
#[derive(Clone)]
pub struct Fft2 {
    n1: usize,
    n2: usize,
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n1", &self.n1).field("n2", &self.n2).finish()
    }
}

impl Fft2 {
    pub fn new(n1: usize, n2: usize, direction: FftDirection) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n1,
            n2,
            rows: planner.plan_fft(n2, direction),
            cols: planner.plan_fft(n1, direction),
        }
    }

    pub fn forward(n1: usize, n2: usize) -> Self {
        Self::new(n1, n2, FftDirection::Forward)
    }

    pub fn inverse(n1: usize, n2: usize) -> Self {
        Self::new(n1, n2, FftDirection::Inverse)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn process(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n1 * self.n2);
        let scratch_len = self
            .rows
            .get_inplace_scratch_len()
            .max(self.cols.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
        // All rows in one call: rustfft processes consecutive chunks.
        self.rows.process_with_scratch(data, &mut scratch);
        let mut column = vec![Complex64::new(0.0, 0.0); self.n1];
        for c in 0..self.n2 {
            for (r, slot) in column.iter_mut().enumerate() {
                *slot = data[r * self.n2 + c];
            }
            self.cols.process_with_scratch(&mut column, &mut scratch);
            for (r, v) in column.iter().enumerate() {
                data[r * self.n2 + c] = *v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(data: &[Complex64], n1: usize, n2: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n1 * n2];
        for k1 in 0..n1 {
            for k2 in 0..n2 {
                let mut acc = Complex64::new(0.0, 0.0);
                for s1 in 0..n1 {
                    for s2 in 0..n2 {
                        let phase = -2.0
                            * std::f64::consts::PI
                            * ((k1 * s1) as f64 / n1 as f64 + (k2 * s2) as f64 / n2 as f64);
                        acc += data[s1 * n2 + s2] * Complex64::from_polar(1.0, phase);
                    }
                }
                out[k1 * n2 + k2] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft() {
        let (n1, n2) = (5, 6);
        let data: Vec<Complex64> = (0..n1 * n2)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let mut fast = data.clone();
        Fft2::forward(n1, n2).process(&mut fast);
        let slow = naive_dft(&data, n1, n2);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let (n1, n2) = (4, 7);
        let data: Vec<Complex64> = (0..n1 * n2).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let mut buf = data.clone();
        Fft2::forward(n1, n2).process(&mut buf);
        Fft2::inverse(n1, n2).process(&mut buf);
        for (a, b) in buf.iter().zip(&data) {
            assert!((a / (n1 * n2) as f64 - b).norm() < 1e-10);
        }
    }
}
