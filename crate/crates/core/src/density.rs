//! Kernel-smoothed periodogram as a spectral density estimate.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{FrequencyGrid, Periodogram};

/// Relative positivity floor.
pub const DENSITY_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Epanechnikov,
    Uniform,
}

impl Kernel {
    /// Weight at scaled distance `u = d / h >= 0`.
    fn weight(self, u: f64) -> f64 {
        match self {
            Kernel::Epanechnikov if u < 1.0 => 1.0 - u * u,
            Kernel::Uniform if u <= 1.0 => 1.0,
            _ => 0.0,
        }
    }
}

/// `c * n_k^(-1/6) * pi` per dimension.
pub fn default_bandwidth(n1: usize, n2: usize, c: f64) -> (f64, f64) {
    let bw = |n: usize| (c * (n as f64).powf(-1.0 / 6.0) * PI).min(PI);
    (bw(n1), bw(n2))
}

/// How to build the density estimate: explicit bandwidths, or the default
/// rule scaled by `scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityOptions {
    pub bandwidth: Option<(f64, f64)>,
    pub scale: f64,
    pub kernel: Kernel,
}

impl Default for DensityOptions {
    fn default() -> Self {
        DensityOptions { bandwidth: None, scale: 1.0, kernel: Kernel::Epanechnikov }
    }
}

impl DensityOptions {
    pub fn bandwidth_for(&self, n1: usize, n2: usize) -> (f64, f64) {
        self.bandwidth.unwrap_or_else(|| default_bandwidth(n1, n2, self.scale))
    }

    pub fn estimate(&self, pgram: &Periodogram) -> Result<SpectralDensityEstimate> {
        let bw = self.bandwidth_for(pgram.grid().n1(), pgram.grid().n2());
        kernel_density_estimate_with(pgram, bw, self.kernel)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDensityEstimate {
    grid: Arc<FrequencyGrid>,
    fhat: Vec<f64>,
    bandwidth: (f64, f64),
}

impl SpectralDensityEstimate {
    /// Wrap given values (no smoothing, no floor). Values must be finite,
    /// non-negative and symmetric under negation.
    pub fn from_values(grid: Arc<FrequencyGrid>, fhat: Vec<f64>) -> Result<Self> {
        if fhat.len() != grid.len() {
            return Err(Error::param("fhat", "length does not match the grid"));
        }
        if fhat.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param("fhat", "values must be finite and non-negative"));
        }
        if (0..grid.len()).any(|k| fhat[k] != fhat[grid.neg(k)]) {
            return Err(Error::param("fhat", "values must be symmetric under negation"));
        }
        Ok(SpectralDensityEstimate { grid, fhat, bandwidth: (0.0, 0.0) })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.fhat
    }

    pub fn bandwidth(&self) -> (f64, f64) {
        self.bandwidth
    }
}

/// Weights of one dimension by circular offset `0..n`.
fn axis_weights(n: usize, h: f64, kernel: Kernel) -> Vec<f64> {
    (0..n)
        .map(|d| {
            let wrapped = d.min(n - d) as f64;
            kernel.weight(2.0 * PI * wrapped / n as f64 / h)
        })
        .collect()
}

/// Circular convolution along one axis of a row-major `n1 x n2` array.
fn convolve_axis(data: &[f64], n1: usize, n2: usize, weights: &[f64], axis: usize) -> Vec<f64> {
    let support: Vec<(usize, f64)> = weights.iter().copied().enumerate().filter(|(_, w)| *w != 0.0).collect();
    let mut out = vec![0.0; data.len()];
    for a in 0..n1 {
        for b in 0..n2 {
            let mut acc = 0.0;
            for &(d, w) in &support {
                let v = if axis == 0 { data[((a + n1 - d) % n1) * n2 + b] } else { data[a * n2 + (b + n2 - d) % n2] };
                acc += w * v;
            }
            out[a * n2 + b] = acc;
        }
    }
    out
}

/// Product-kernel smoother of the periodogram with periodic (torus)
/// distances, symmetrised and floored at `1e-6` of its maximum (or at `1e-6`
/// itself when the periodogram vanishes, as for a constant field).
pub fn kernel_density_estimate(pgram: &Periodogram, bandwidth: (f64, f64)) -> Result<SpectralDensityEstimate> {
    kernel_density_estimate_with(pgram, bandwidth, Kernel::Epanechnikov)
}

pub fn kernel_density_estimate_with(
    pgram: &Periodogram,
    bandwidth: (f64, f64),
    kernel: Kernel,
) -> Result<SpectralDensityEstimate> {
    let (h1, h2) = bandwidth;
    if !(h1 > 0.0 && h1 <= PI && h2 > 0.0 && h2 <= PI) {
        return Err(Error::InvalidBandwidth(h1, h2));
    }
    let grid = pgram.shared_grid();
    let (n1, n2) = (grid.n1(), grid.n2());
    // Full DFT-ordered array with the origin left at zero.
    let mut full = vec![0.0; n1 * n2];
    for (k, &v) in pgram.intensity().iter().enumerate() {
        full[grid.dft_position(k)] = v;
    }
    let w1 = axis_weights(n1, h1, kernel);
    let w2 = axis_weights(n2, h2, kernel);
    let num = convolve_axis(&convolve_axis(&full, n1, n2, &w1, 0), n1, n2, &w2, 1);
    // Total weight at j excludes the origin's own weight.
    let total = w1.iter().sum::<f64>() * w2.iter().sum::<f64>();
    let mut fhat: Vec<f64> = (0..grid.len())
        .map(|k| {
            let p = grid.dft_position(k);
            num[p] / (total - w1[p / n2] * w2[p % n2])
        })
        .collect();
    let sym: Vec<f64> = (0..grid.len()).map(|k| 0.5 * (fhat[k] + fhat[grid.neg(k)])).collect();
    fhat = sym;
    let max = fhat.iter().copied().fold(0.0, f64::max);
    let floor = if max > 0.0 { (DENSITY_FLOOR * max).max(f64::MIN_POSITIVE) } else { DENSITY_FLOOR };
    for v in &mut fhat {
        *v = v.max(floor);
    }
    Ok(SpectralDensityEstimate { grid, fhat, bandwidth })
}
