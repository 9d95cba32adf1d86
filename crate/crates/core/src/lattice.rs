//! Gridded observations, the Fourier frequency grid and the periodogram.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft2;

/// `(2*pi)^2`, the Riemann-sum weight that appears throughout.
pub const TWO_PI_SQ: f64 = 4.0 * PI * PI;

/// Real observations `Z(s)` on an `n1 x n2` integer grid. Row `s1`, column
/// `s2` (zero-based here, one-based in the usual notation).
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField {
    values: Array2<f64>,
}

impl LatticeField {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n1, n2) = values.dim();
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidGrid { n1, n2, reason: "empty grid" });
        }
        if let Some(((s1, s2), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { s1, s2 });
        }
        Ok(LatticeField { values })
    }

    /// Build from a row-major buffer of length `n1 * n2`.
    pub fn from_row_major(n1: usize, n2: usize, data: Vec<f64>) -> Result<Self> {
        let values = Array2::from_shape_vec((n1, n2), data)
            .map_err(|_| Error::InvalidGrid { n1, n2, reason: "buffer length mismatch" })?;
        Self::new(values)
    }

    pub fn zeros(n1: usize, n2: usize) -> Self {
        LatticeField { values: Array2::zeros((n1, n2)) }
    }

    pub fn n1(&self) -> usize {
        self.values.nrows()
    }

    pub fn n2(&self) -> usize {
        self.values.ncols()
    }

    /// Number of sites, `n1 * n2`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn transposed(&self) -> LatticeField {
        LatticeField { values: self.values.t().to_owned() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<LatticeField> {
        LatticeField::new(self.values.mapv(f))
    }

    fn require_spectral(&self) -> Result<()> {
        if self.n1() < 2 || self.n2() < 2 {
            return Err(Error::InvalidGrid {
                n1: self.n1(),
                n2: self.n2(),
                reason: "spectral operations need at least 2 sites per dimension",
            });
        }
        Ok(())
    }
}

/// Frequency indices of one dimension: `-floor((n-1)/2) ..= floor(n/2)`.
pub fn index_range(n: usize) -> std::ops::RangeInclusive<i64> {
    -(((n as i64) - 1) / 2)..=(n as i64) / 2
}

/// Map an integer index into `index_range(n)` modulo `n`.
pub fn wrap_index(j: i64, n: usize) -> i64 {
    let n = n as i64;
    let lo = -((n - 1) / 2);
    (j - lo).rem_euclid(n) + lo
}

/// The non-zero Fourier frequencies of an `n1 x n2` grid.
///
/// Indices are stored row-major by `j1` then `j2`. The half plane holds one
/// representative of every conjugate pair `{j, -j}` (the lexicographically
/// larger one) plus every self-conjugate index; for odd extents it is exactly
/// `{j1 > 0} U {j1 = 0, j2 > 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGrid {
    n1: usize,
    n2: usize,
    indices: Vec<(i64, i64)>,
    neg: Vec<usize>,
    in_half_plane: Vec<bool>,
    dft_pos: Vec<usize>,
}

impl FrequencyGrid {
    pub fn new(n1: usize, n2: usize) -> Result<Self> {
        if n1 < 2 || n2 < 2 {
            return Err(Error::InvalidGrid { n1, n2, reason: "each extent must be at least 2" });
        }
        let lo1 = *index_range(n1).start();
        let lo2 = *index_range(n2).start();
        let mut indices = Vec::with_capacity(n1 * n2 - 1);
        for j1 in index_range(n1) {
            for j2 in index_range(n2) {
                if (j1, j2) != (0, 0) {
                    indices.push((j1, j2));
                }
            }
        }
        // Position of (j1, j2) in `indices`: row-major offset minus the origin slot.
        let origin = ((-lo1) as usize) * n2 + (-lo2) as usize;
        let position = |j1: i64, j2: i64| {
            let raw = ((j1 - lo1) as usize) * n2 + (j2 - lo2) as usize;
            if raw > origin {
                raw - 1
            } else {
                raw
            }
        };
        let mut neg = Vec::with_capacity(indices.len());
        let mut in_half_plane = Vec::with_capacity(indices.len());
        let mut dft_pos = Vec::with_capacity(indices.len());
        for &(j1, j2) in &indices {
            let m = (wrap_index(-j1, n1), wrap_index(-j2, n2));
            neg.push(position(m.0, m.1));
            in_half_plane.push((j1, j2) >= m);
            dft_pos.push((j1.rem_euclid(n1 as i64) as usize) * n2 + j2.rem_euclid(n2 as i64) as usize);
        }
        Ok(FrequencyGrid { n1, n2, indices, neg, in_half_plane, dft_pos })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    /// Sample size `n = n1 * n2`.
    pub fn sample_size(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[(i64, i64)] {
        &self.indices
    }

    /// Position of the modular negation of index `k`.
    pub fn neg(&self, k: usize) -> usize {
        self.neg[k]
    }

    pub fn is_self_conjugate(&self, k: usize) -> bool {
        self.neg[k] == k
    }

    pub fn in_half_plane(&self, k: usize) -> bool {
        self.in_half_plane[k]
    }

    /// Positions of the half-plane indices, in grid order.
    pub fn half_plane(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.in_half_plane[k])
    }

    /// Frequency `(2 pi j1 / n1, 2 pi j2 / n2)` of index `k`.
    pub fn omega(&self, k: usize) -> [f64; 2] {
        let (j1, j2) = self.indices[k];
        [2.0 * PI * j1 as f64 / self.n1 as f64, 2.0 * PI * j2 as f64 / self.n2 as f64]
    }

    /// Row-major offset of index `k` in an unshifted `n1 x n2` DFT array.
    pub fn dft_position(&self, k: usize) -> usize {
        self.dft_pos[k]
    }
}

/// Periodogram ordinates aligned with a [`FrequencyGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Periodogram {
    grid: Arc<FrequencyGrid>,
    intensity: Vec<f64>,
}

impl Periodogram {
    /// Wrap precomputed ordinates, checking non-negativity.
    pub fn from_values(grid: Arc<FrequencyGrid>, intensity: Vec<f64>) -> Result<Self> {
        if intensity.len() != grid.len() {
            return Err(Error::param("intensity", "length does not match the grid"));
        }
        if intensity.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param("intensity", "ordinates must be finite and non-negative"));
        }
        Ok(Periodogram { grid, intensity })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn shared_grid(&self) -> Arc<FrequencyGrid> {
        Arc::clone(&self.grid)
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    /// Ordinate at frequency index `(j1, j2)`, if it is on the grid.
    pub fn at(&self, j: (i64, i64)) -> Option<f64> {
        self.grid.indices().iter().position(|&x| x == j).map(|k| self.intensity[k])
    }
}

/// `|DFT|^2 / ((2 pi)^2 n)` at every position of the unshifted DFT array.
pub(crate) fn raw_periodogram(view: ArrayView2<'_, f64>, fft: &Fft2, buf: &mut Vec<Complex64>) -> Vec<f64> {
    let (n1, n2) = view.dim();
    debug_assert_eq!(fft.shape(), (n1, n2));
    buf.clear();
    buf.extend(view.iter().map(|&v| Complex64::new(v, 0.0)));
    fft.process(buf);
    let scale = 1.0 / (TWO_PI_SQ * (n1 * n2) as f64);
    buf.iter().map(|c| c.norm_sqr() * scale).collect()
}

/// Periodogram of the raw (not demeaned) field at every non-zero Fourier
/// frequency, via the 2-D FFT.
pub fn periodogram(field: &LatticeField) -> Result<Periodogram> {
    field.require_spectral()?;
    let grid = Arc::new(FrequencyGrid::new(field.n1(), field.n2())?);
    let fft = Fft2::forward(field.n1(), field.n2());
    Ok(periodogram_on(field.view(), &grid, &fft))
}

pub(crate) fn periodogram_on(view: ArrayView2<'_, f64>, grid: &Arc<FrequencyGrid>, fft: &Fft2) -> Periodogram {
    let mut buf = Vec::with_capacity(view.len());
    let full = raw_periodogram(view, fft, &mut buf);
    let intensity = (0..grid.len()).map(|k| full[grid.dft_position(k)]).collect();
    Periodogram { grid: Arc::clone(grid), intensity }
}

/// Periodogram at an arbitrary frequency by direct summation, O(n).
pub fn periodogram_at(field: &LatticeField, omega: [f64; 2]) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for ((s1, s2), &z) in field.values().indexed_iter() {
        // One-based sites; the offset only changes the phase.
        let phase = -(((s1 + 1) as f64) * omega[0] + ((s2 + 1) as f64) * omega[1]);
        acc += Complex64::from_polar(z, phase);
    }
    acc.norm_sqr() / (TWO_PI_SQ * field.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    use crate::rng::SeedSequence;

    fn random_field(n1: usize, n2: usize, seed: u64) -> LatticeField {
        let mut rng = SeedSequence::new(seed).rng();
        let data = (0..n1 * n2).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        LatticeField::from_row_major(n1, n2, data).unwrap()
    }

    #[test]
    fn grid_2x2() {
        let g = FrequencyGrid::new(2, 2).unwrap();
        assert_eq!(g.indices(), &[(0, 1), (1, 0), (1, 1)]);
        assert!((0..3).all(|k| g.is_self_conjugate(k) && g.in_half_plane(k)));
    }

    #[test]
    fn grid_3x3_half_plane() {
        let g = FrequencyGrid::new(3, 3).unwrap();
        assert_eq!(g.len(), 8);
        let mut half: Vec<_> = g.half_plane().map(|k| g.indices()[k]).collect();
        half.sort();
        assert_eq!(half, vec![(0, 1), (1, -1), (1, 0), (1, 1)]);
    }

    #[test]
    fn grid_4x3_self_conjugate() {
        let g = FrequencyGrid::new(4, 3).unwrap();
        assert_eq!(g.len(), 11);
        let sc: Vec<_> = (0..g.len()).filter(|&k| g.is_self_conjugate(k)).map(|k| g.indices()[k]).collect();
        assert_eq!(sc, vec![(2, 0)]);
    }

    #[test]
    fn grid_rejects_degenerate_extent() {
        assert!(FrequencyGrid::new(1, 5).is_err());
        assert!(FrequencyGrid::new(5, 1).is_err());
    }

    #[test]
    fn half_plane_covers_once() {
        for (n1, n2) in [(2, 2), (3, 4), (4, 4), (5, 6), (8, 3), (7, 7)] {
            let g = FrequencyGrid::new(n1, n2).unwrap();
            assert_eq!(g.len(), n1 * n2 - 1);
            let mut hits = vec![0usize; g.len()];
            for k in g.half_plane() {
                hits[k] += 1;
                if !g.is_self_conjugate(k) {
                    hits[g.neg(k)] += 1;
                    assert!(!g.in_half_plane(g.neg(k)));
                }
            }
            assert!(hits.iter().all(|&h| h == 1), "{n1}x{n2}");
            for k in 0..g.len() {
                assert_eq!(g.neg(g.neg(k)), k);
            }
        }
    }

    #[test]
    fn zero_field_has_zero_periodogram() {
        let p = periodogram(&LatticeField::zeros(4, 4)).unwrap();
        assert!(p.intensity().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_spike_is_flat() {
        let f = LatticeField::new(array![[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let p = periodogram(&f).unwrap();
        let expected = 1.0 / TWO_PI_SQ / 4.0;
        assert_eq!(p.intensity().len(), 3);
        for &v in p.intensity() {
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            LatticeField::new(array![[1.0, f64::NAN]]),
            Err(Error::NonFinite { s1: 0, s2: 1 })
        ));
    }

    #[test]
    fn direct_sum_vanishes_for_constant() {
        let f = LatticeField::new(Array2::from_elem((3, 3), 2.5)).unwrap();
        assert!(periodogram_at(&f, [2.0 * PI / 3.0, 0.0]) < 1e-25);
        assert_eq!(periodogram_at(&LatticeField::zeros(3, 3), [0.3, -1.2]), 0.0);
    }

    #[test]
    fn direct_sum_matches_fft() {
        let f = random_field(4, 4, 11);
        let p = periodogram(&f).unwrap();
        let k = p.grid().indices().iter().position(|&j| j == (1, 1)).unwrap();
        let direct = periodogram_at(&f, p.grid().omega(k));
        assert!((direct - p.intensity()[k]).abs() <= 1e-10 * direct);
        for k in 0..p.grid().len() {
            let d = periodogram_at(&f, p.grid().omega(k));
            assert!((d - p.intensity()[k]).abs() <= 1e-10 * (1.0 + d));
        }
    }

    /// Parseval against a double-loop evaluation of the biased sample variance.
    fn parseval_gap(f: &LatticeField) -> f64 {
        let p = periodogram(f).unwrap();
        let n = f.len() as f64;
        let lhs = TWO_PI_SQ / n * p.intensity().iter().sum::<f64>();
        let mut s = 0.0;
        let mut s2 = 0.0;
        for s1 in 0..f.n1() {
            for t in 0..f.n2() {
                let z = f.values()[[s1, t]];
                s += z;
                s2 += z * z;
            }
        }
        let rhs = s2 / n - (s / n).powi(2);
        (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn parseval_identity() {
        for (n1, n2, seed) in [(2, 2, 1), (3, 5, 2), (16, 16, 3), (64, 64, 4), (33, 20, 5)] {
            assert!(parseval_gap(&random_field(n1, n2, seed)) < 1e-8);
        }
    }

    #[test]
    fn white_noise_periodogram_mean() {
        use rand_distr::{Distribution, StandardNormal};
        let root = SeedSequence::new(2024);
        let target = 1.0 / TWO_PI_SQ;
        let reps = 200;
        let means: Vec<f64> = (0..reps)
            .map(|r| {
                let mut rng = root.child(r).rng();
                let data = (0..64 * 64).map(|_| StandardNormal.sample(&mut rng)).collect();
                let p = periodogram(&LatticeField::from_row_major(64, 64, data).unwrap()).unwrap();
                crate::stats::mean(p.intensity())
            })
            .collect();
        let m = crate::stats::mean(&means);
        let se = (crate::stats::sample_variance(&means) / reps as f64).sqrt();
        assert!((m - target).abs() <= 3.0 * se, "mean {m} target {target} se {se}");
    }

    proptest! {
        #[test]
        fn symmetric_under_negation(n1 in 2usize..12, n2 in 2usize..12, seed in any::<u64>()) {
            let f = random_field(n1, n2, seed);
            let p = periodogram(&f).unwrap();
            let g = p.grid();
            for k in 0..g.len() {
                let (a, b) = (p.intensity()[k], p.intensity()[g.neg(k)]);
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
            }
        }

        #[test]
        fn invariant_to_mean_shift(n1 in 2usize..10, n2 in 2usize..10, seed in any::<u64>(), c in -50.0f64..50.0) {
            let f = random_field(n1, n2, seed);
            let shifted = f.map(|v| v + c).unwrap();
            let (p, q) = (periodogram(&f).unwrap(), periodogram(&shifted).unwrap());
            for (a, b) in p.intensity().iter().zip(q.intensity()) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + c * c));
            }
        }

        #[test]
        fn parseval_random_sizes(n1 in 2usize..40, n2 in 2usize..40, seed in any::<u64>()) {
            prop_assert!(parseval_gap(&random_field(n1, n2, seed)) < 1e-8);
        }
    }
}
