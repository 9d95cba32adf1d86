//! Overlapping block subsampling: per-block spectral means, the variance
//! component estimators and block-size selection.

use std::sync::Arc;

use ndarray::s;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::lattice::{raw_periodogram, FrequencyGrid, LatticeField, TWO_PI_SQ};
use crate::spectral::{PsiFunction, SpectralMeanValue};
use crate::stats::EmpiricalDistribution;

/// Extents of the overlapping subsample blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSpec {
    pub b1: usize,
    pub b2: usize,
}

impl BlockSpec {
    pub fn new(b1: usize, b2: usize) -> Self {
        BlockSpec { b1, b2 }
    }

    pub fn square(b: usize) -> Self {
        BlockSpec { b1: b, b2: b }
    }

    /// Block size `b = b1 * b2`.
    pub fn size(&self) -> usize {
        self.b1 * self.b2
    }

    pub fn validate(&self, n1: usize, n2: usize) -> Result<()> {
        if self.b1 < 2 || self.b2 < 2 || self.b1 > n1 || self.b2 > n2 {
            return Err(Error::InvalidBlock { b1: self.b1, b2: self.b2, n1, n2 });
        }
        Ok(())
    }

    /// Number of blocks `L = (n1 - b1 + 1)(n2 - b2 + 1)`.
    pub fn block_count(&self, n1: usize, n2: usize) -> Result<usize> {
        self.validate(n1, n2)?;
        Ok((n1 - self.b1 + 1) * (n2 - self.b2 + 1))
    }

    pub fn transposed(&self) -> BlockSpec {
        BlockSpec { b1: self.b2, b2: self.b1 }
    }
}

/// Block origins `(i, j)`, `0 <= i <= n1 - b1`, `0 <= j <= n2 - b2`, row-major.
pub fn enumerate_blocks(n1: usize, n2: usize, spec: BlockSpec) -> Result<Vec<(usize, usize)>> {
    spec.validate(n1, n2)?;
    let mut out = Vec::with_capacity(spec.block_count(n1, n2)?);
    for i in 0..=n1 - spec.b1 {
        for j in 0..=n2 - spec.b2 {
            out.push((i, j));
        }
    }
    Ok(out)
}

/// Per-block spectral means plus per-frequency first and second moments of
/// the block periodograms.
#[derive(Clone, Debug)]
pub struct SubsampleEnsemble {
    pub spec: BlockSpec,
    pub block_means: Vec<f64>,
    pub grand_mean: f64,
    /// Mean over blocks of each block-grid ordinate.
    pub per_frequency_mean: Vec<f64>,
    /// Sum over blocks of squared deviations from `per_frequency_mean`.
    pub per_frequency_m2: Vec<f64>,
    /// Every block periodogram, when requested.
    pub block_periodograms: Option<Vec<Vec<f64>>>,
    pub block_grid: Arc<FrequencyGrid>,
    pub psi: PsiFunction,
}

impl SubsampleEnsemble {
    pub fn len(&self) -> usize {
        self.block_means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block_means.is_empty()
    }

    /// `b^{1/2} (M_l - M~)` for every block, in block order.
    pub fn centered_roots(&self) -> Vec<f64> {
        let rb = (self.spec.size() as f64).sqrt();
        self.block_means.iter().map(|m| rb * (m - self.grand_mean)).collect()
    }
}

/// Partial result over one row of block origins.
struct RowPartial {
    count: usize,
    means: Vec<f64>,
    sums: Vec<f64>,
    m2: Vec<f64>,
    block_means: Vec<f64>,
    periodograms: Vec<Vec<f64>>,
}

pub fn subsample_ensemble(field: &LatticeField, spec: BlockSpec, psi: &PsiFunction) -> Result<SubsampleEnsemble> {
    subsample_ensemble_with(field, spec, psi, false)
}

/// As [`subsample_ensemble`], optionally keeping all `L` block periodograms.
///
/// Rows of block origins are processed independently and merged in row
/// order, so the result does not depend on the number of worker threads.
pub fn subsample_ensemble_with(
    field: &LatticeField,
    spec: BlockSpec,
    psi: &PsiFunction,
    store_periodograms: bool,
) -> Result<SubsampleEnsemble> {
    let (n1, n2) = (field.n1(), field.n2());
    spec.validate(n1, n2)?;
    let (b1, b2) = (spec.b1, spec.b2);
    let grid = Arc::new(FrequencyGrid::new(b1, b2)?);
    let psi_b = psi.on_grid(&grid);
    let positions: Vec<usize> = (0..grid.len()).map(|k| grid.dft_position(k)).collect();
    let fft = Fft2::forward(b1, b2);
    let scale = TWO_PI_SQ / spec.size() as f64;
    let m = grid.len();
    let view = field.view();

    let rows: Vec<RowPartial> = (0..=n1 - b1)
        .into_par_iter()
        .map(|i| {
            let mut buf = Vec::with_capacity(b1 * b2);
            let mut part = RowPartial {
                count: 0,
                means: vec![0.0; m],
                sums: vec![0.0; m],
                m2: vec![0.0; m],
                block_means: Vec::with_capacity(n2 - b2 + 1),
                periodograms: Vec::new(),
            };
            let mut ord = vec![0.0; m];
            for j in 0..=n2 - b2 {
                let full = raw_periodogram(view.slice(s![i..i + b1, j..j + b2]), &fft, &mut buf);
                let mut acc = 0.0;
                for k in 0..m {
                    ord[k] = full[positions[k]];
                    acc += psi_b[k] * ord[k];
                }
                part.block_means.push(scale * acc);
                part.count += 1;
                let c = part.count as f64;
                for k in 0..m {
                    let x = ord[k];
                    part.sums[k] += x;
                    let d = x - part.means[k];
                    part.means[k] += d / c;
                    part.m2[k] += d * (x - part.means[k]);
                }
                if store_periodograms {
                    part.periodograms.push(ord.clone());
                }
            }
            part
        })
        .collect();

    let mut count = 0usize;
    let mut means = vec![0.0; m];
    let mut sums = vec![0.0; m];
    let mut m2 = vec![0.0; m];
    let mut block_means = Vec::new();
    let mut stored = store_periodograms.then(Vec::new);
    for row in rows {
        let (na, nb) = (count as f64, row.count as f64);
        let total = na + nb;
        for k in 0..m {
            let delta = row.means[k] - means[k];
            means[k] += delta * nb / total;
            m2[k] += row.m2[k] + delta * delta * na * nb / total;
            sums[k] += row.sums[k];
        }
        count += row.count;
        block_means.extend(row.block_means);
        if let Some(all) = stored.as_mut() {
            all.extend(row.periodograms);
        }
    }
    let l = count as f64;
    let grand_mean = block_means.iter().sum::<f64>() / l;
    let per_frequency_mean = match &stored {
        // Sum in block order so the mean is exactly that of the stored maps.
        Some(all) => (0..m).map(|k| all.iter().map(|p: &Vec<f64>| p[k]).sum::<f64>() / l).collect(),
        None => sums.iter().map(|s| s / l).collect(),
    };
    Ok(SubsampleEnsemble {
        spec,
        block_means,
        grand_mean,
        per_frequency_mean,
        per_frequency_m2: m2,
        block_periodograms: stored,
        block_grid: grid,
        psi: psi.clone(),
    })
}

/// Subsampling estimates of the total variance and its two components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimates {
    pub sigma_sq_hat: f64,
    pub sigma1_sq_hat: f64,
    /// `sigma_sq_hat - sigma1_sq_hat`; may be negative.
    pub sigma2_sq_hat: f64,
    pub floored_sigma2: f64,
}

pub fn variance_estimates(ens: &SubsampleEnsemble) -> VarianceEstimates {
    let b = ens.spec.size() as f64;
    let l = ens.len() as f64;
    let sigma_sq_hat = b * ens.block_means.iter().map(|m| (m - ens.grand_mean).powi(2)).sum::<f64>() / l;
    let grid = &ens.block_grid;
    let psi = ens.psi.on_grid(grid);
    // A self-conjugate ordinate is its own pair: its empirical variance
    // already carries the doubled chi-square(1) variance, so it enters once.
    let weighted: f64 = (0..grid.len())
        .map(|k| {
            let w = if grid.is_self_conjugate(k) { psi[k] * psi[k] } else { psi[k] * (psi[k] + psi[grid.neg(k)]) };
            w * ens.per_frequency_m2[k] / l
        })
        .sum();
    let sigma1_sq_hat = (TWO_PI_SQ * TWO_PI_SQ / b * weighted).max(0.0);
    let sigma2_sq_hat = sigma_sq_hat - sigma1_sq_hat;
    VarianceEstimates { sigma_sq_hat, sigma1_sq_hat, sigma2_sq_hat, floored_sigma2: sigma2_sq_hat.max(0.0) }
}

/// `b^{1/2} (M~ - M_n)`.
pub fn bias_estimate(ens: &SubsampleEnsemble, mhat: &SpectralMeanValue) -> f64 {
    (ens.spec.size() as f64).sqrt() * (ens.grand_mean - mhat.value)
}

/// Empirical distribution of `b^{1/2} (M_l - M~)`; needs `L >= 2`.
pub fn subsample_edf(ens: &SubsampleEnsemble) -> Result<EmpiricalDistribution> {
    if ens.len() < 2 {
        return Err(Error::TooFewValues { required: 2, got: ens.len() });
    }
    EmpiricalDistribution::new(ens.centered_roots())
}

/// Centre of the window of `window` consecutive values with the smallest
/// standard deviation; ties go to the earliest window.
pub fn min_volatility_index(values: &[f64], window: usize) -> Result<usize> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::param("window", format!("must be odd and at least 3, got {window}")));
    }
    if values.len() < window {
        return Err(Error::TooFewValues { required: window, got: values.len() });
    }
    let mut best = (f64::INFINITY, 0);
    for start in 0..=values.len() - window {
        let sd = crate::stats::sample_variance(&values[start..start + window]).sqrt();
        if sd < best.0 {
            best = (sd, start);
        }
    }
    Ok(best.1 + window / 2)
}

/// `sigma_hat` (root of the subsampling variance) for each candidate block.
pub fn block_size_profile(field: &LatticeField, psi: &PsiFunction, candidates: &[BlockSpec]) -> Result<Vec<f64>> {
    candidates
        .iter()
        .map(|&spec| Ok(variance_estimates(&subsample_ensemble(field, spec, psi)?).sigma_sq_hat.sqrt()))
        .collect()
}

/// Minimum-volatility block choice over candidates sorted by block size.
pub fn select_block_size_min_volatility(
    field: &LatticeField,
    psi: &PsiFunction,
    candidates: &[BlockSpec],
    window: usize,
) -> Result<BlockSpec> {
    if candidates.len() < window {
        return Err(Error::TooFewValues { required: window, got: candidates.len() });
    }
    if candidates.windows(2).any(|w| w[0].size() > w[1].size()) {
        return Err(Error::param("candidates", "must be sorted by block size"));
    }
    let sigmas = block_size_profile(field, psi, candidates)?;
    Ok(candidates[min_volatility_index(&sigmas, window)?])
}

/// Square blocks `b_k` from `ceil(0.5 n^{1/4})` to `ceil(2 n^{1/4})`, clipped
/// to `[2, min(n1, n2)]`.
pub fn default_block_candidates(n1: usize, n2: usize) -> Vec<BlockSpec> {
    let root = ((n1 * n2) as f64).powf(0.25);
    let lo = ((0.5 * root).ceil() as usize).max(2);
    let hi = ((2.0 * root).ceil() as usize).min(n1.min(n2));
    (lo..=hi).map(BlockSpec::square).collect()
}
