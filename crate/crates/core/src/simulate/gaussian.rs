//! Exact Gaussian simulation: circulant embedding with a dense Cholesky
//! fallback.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use super::{CovarianceModel, CovarianceTable};
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::lattice::LatticeField;
use crate::rng::StreamRng;

/// Largest grid (in sites) for which dense factorisations are attempted.
pub const DEFAULT_DENSE_LIMIT: usize = 64 * 64;

/// Relative size of negative embedding eigenvalues treated as round-off.
const EIGEN_TOL: f64 = 1e-8;

/// Draws mean-zero Gaussian fields with a fixed covariance on an `n1 x n2` grid.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    n1: usize,
    n2: usize,
    method: Method,
}

#[derive(Clone)]
enum Method {
    Circulant { m1: usize, m2: usize, sqrt_eig: Arc<Vec<f64>>, fft: Fft2 },
    Cholesky { factor: Arc<DMatrix<f64>> },
}

impl std::fmt::Debug for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Circulant { m1, m2, .. } => write!(f, "Circulant({m1}x{m2})"),
            Method::Cholesky { factor } => write!(f, "Cholesky({})", factor.nrows()),
        }
    }
}

impl GaussianSampler {
    pub fn new(model: &CovarianceModel, n1: usize, n2: usize) -> Result<Self> {
        Self::with_dense_limit(model, n1, n2, DEFAULT_DENSE_LIMIT)
    }

    pub fn with_dense_limit(model: &CovarianceModel, n1: usize, n2: usize, dense_limit: usize) -> Result<Self> {
        if !model.is_gaussian() {
            return Err(Error::param("model", "not a Gaussian-compatible covariance model"));
        }
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidGrid { n1, n2, reason: "empty grid" });
        }
        // Try the minimal even embedding, then one doubling.
        for scale in [2usize, 4] {
            let (m1, m2) = (scale * n1, scale * n2);
            let table = model.covariance_table(m1 / 2, m2 / 2)?;
            if let Some(sqrt_eig) = circulant_sqrt_eigenvalues(&table, m1, m2) {
                return Ok(GaussianSampler {
                    n1,
                    n2,
                    method: Method::Circulant { m1, m2, sqrt_eig: Arc::new(sqrt_eig), fft: Fft2::forward(m1, m2) },
                });
            }
        }
        let n = n1 * n2;
        if n > dense_limit {
            return Err(Error::EmbeddingFailed { n, limit: dense_limit });
        }
        log::debug!("circulant embedding failed for {n1}x{n2}; using dense Cholesky");
        let table = model.covariance_table(n1 - 1, n2 - 1)?;
        let factor = cholesky_factor(&table, n1, n2)?;
        Ok(GaussianSampler { n1, n2, method: Method::Cholesky { factor: Arc::new(factor) } })
    }

    /// Force the dense path (used to cross-check the embedding).
    pub fn dense(model: &CovarianceModel, n1: usize, n2: usize) -> Result<Self> {
        let table = model.covariance_table(n1 - 1, n2 - 1)?;
        let factor = cholesky_factor(&table, n1, n2)?;
        Ok(GaussianSampler { n1, n2, method: Method::Cholesky { factor: Arc::new(factor) } })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn uses_circulant_embedding(&self) -> bool {
        matches!(self.method, Method::Circulant { .. })
    }

    pub fn sample(&self, rng: &mut StreamRng) -> LatticeField {
        match &self.method {
            Method::Circulant { m2, sqrt_eig, fft, .. } => {
                let mut buf: Vec<Complex64> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let re: f64 = StandardNormal.sample(rng);
                        let im: f64 = StandardNormal.sample(rng);
                        Complex64::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                let data = (0..self.n1)
                    .flat_map(|s1| (0..self.n2).map(move |s2| (s1, s2)))
                    .map(|(s1, s2)| buf[s1 * m2 + s2].re)
                    .collect();
                LatticeField::from_row_major(self.n1, self.n2, data).expect("finite draw")
            }
            Method::Cholesky { factor } => {
                let z = DVector::from_iterator(factor.nrows(), (0..factor.nrows()).map(|_| StandardNormal.sample(rng)));
                column_major_field(self.n1, self.n2, &(factor.as_ref() * z))
            }
        }
    }
}

/// `sqrt(lambda / (m1 m2))` of the block-circulant embedding, or `None` if
/// it has materially negative eigenvalues.
fn circulant_sqrt_eigenvalues(table: &CovarianceTable, m1: usize, m2: usize) -> Option<Vec<f64>> {
    let lag = |i: usize, m: usize| if i <= m / 2 { i as i64 } else { i as i64 - m as i64 };
    let mut base = Vec::with_capacity(m1 * m2);
    for i1 in 0..m1 {
        for i2 in 0..m2 {
            let h = (lag(i1, m1), lag(i2, m2));
            // At the half-way wrap the lag sign is ambiguous; average both
            // readings so the base stays symmetric under negation.
            let mut v = table.get(h);
            let mut count = 1.0;
            if 2 * i1 == m1 {
                v += table.get((-h.0, h.1));
                count += 1.0;
            }
            if 2 * i2 == m2 {
                v += table.get((h.0, -h.1));
                count += 1.0;
            }
            if 2 * i1 == m1 && 2 * i2 == m2 {
                v += table.get((-h.0, -h.1));
                count += 1.0;
            }
            base.push(Complex64::new(v / count, 0.0));
        }
    }
    Fft2::forward(m1, m2).process(&mut base);
    let max = base.iter().map(|c| c.re).fold(0.0f64, f64::max);
    let min = base.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
    if min < -EIGEN_TOL * max {
        log::debug!("embedding {m1}x{m2}: min eigenvalue {min:e} (max {max:e})");
        return None;
    }
    let total = (m1 * m2) as f64;
    Some(base.iter().map(|c| (c.re.max(0.0) / total).sqrt()).collect())
}

/// Column-major site order: `p = s1 + n1 * s2`.
pub(crate) fn covariance_matrix(table: &CovarianceTable, n1: usize, n2: usize) -> DMatrix<f64> {
    let n = n1 * n2;
    DMatrix::from_fn(n, n, |p, q| {
        let h = ((p % n1) as i64 - (q % n1) as i64, (p / n1) as i64 - (q / n1) as i64);
        table.get(h)
    })
}

pub(crate) fn cholesky_factor(table: &CovarianceTable, n1: usize, n2: usize) -> Result<DMatrix<f64>> {
    let mut cov = covariance_matrix(table, n1, n2);
    let jitter = 1e-10 * table.get((0, 0)).abs().max(1.0);
    for i in 0..cov.nrows() {
        cov[(i, i)] += jitter;
    }
    let chol = nalgebra::linalg::Cholesky::new(cov).ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.unpack())
}

pub(crate) fn column_major_field(n1: usize, n2: usize, v: &DVector<f64>) -> LatticeField {
    let data = (0..n1).flat_map(|s1| (0..n2).map(move |s2| s1 + n1 * s2)).map(|p| v[p]).collect();
    LatticeField::from_row_major(n1, n2, data).expect("finite draw")
}

/// One Gaussian field; builds a sampler each call, so prefer
/// [`GaussianSampler`] for repeated draws.
pub fn simulate_gaussian(model: &CovarianceModel, n1: usize, n2: usize, rng: &mut StreamRng) -> Result<LatticeField> {
    Ok(GaussianSampler::new(model, n1, n2)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSequence;
    use crate::stats;

    fn lag_products(fields: &[LatticeField], h: (usize, usize)) -> f64 {
        let mut acc = 0.0;
        let mut count = 0.0;
        for f in fields {
            let v = f.values();
            for s1 in 0..f.n1() - h.0 {
                for s2 in 0..f.n2() - h.1 {
                    acc += v[[s1, s2]] * v[[s1 + h.0, s2 + h.1]];
                    count += 1.0;
                }
            }
        }
        acc / count
    }

    #[test]
    fn white_noise_moments() {
        let model = CovarianceModel::WhiteNoise { variance: 1.0 };
        let sampler = GaussianSampler::new(&model, 32, 32).unwrap();
        let root = SeedSequence::new(1);
        let fields: Vec<_> = (0..200).map(|r| sampler.sample(&mut root.child(r).rng())).collect();
        assert!(lag_products(&fields, (1, 0)).abs() < 0.02);
        assert!((lag_products(&fields, (0, 0)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn matern_variance_is_one() {
        let model = CovarianceModel::matern_normalized(1.0 / 3.0, 1.0).unwrap();
        let sampler = GaussianSampler::new(&model, 48, 48).unwrap();
        let root = SeedSequence::new(2);
        let fields: Vec<_> = (0..200).map(|r| sampler.sample(&mut root.child(r).rng())).collect();
        let v = lag_products(&fields, (0, 0));
        assert!((v - 1.0).abs() < 0.08, "{v}");
        let g1 = model.autocovariance((1, 0)).unwrap();
        assert!((lag_products(&fields, (1, 0)) - g1).abs() < 0.08);
    }

    #[test]
    fn spherical_embedding_reproduces_covariance() {
        let model = CovarianceModel::SphericalAniso { sill: 1.0, range: 5.0, nugget: 0.0, angle: 0.0, ratio: 1.4 };
        let sampler = GaussianSampler::new(&model, 30, 30).unwrap();
        let root = SeedSequence::new(3);
        let fields: Vec<_> = (0..300).map(|r| sampler.sample(&mut root.child(r).rng())).collect();
        for h in [(0usize, 0usize), (1, 0), (0, 1), (2, 2)] {
            let want = model.autocovariance((h.0 as i64, h.1 as i64)).unwrap();
            let got = lag_products(&fields, h);
            assert!((got - want).abs() < 0.05, "{h:?}: {got} vs {want}");
        }
    }

    #[test]
    fn rotated_anisotropy_is_symmetric() {
        let model = CovarianceModel::SphericalAniso { sill: 1.0, range: 6.0, nugget: 0.1, angle: 0.6, ratio: 2.0 };
        let sampler = GaussianSampler::new(&model, 12, 10).unwrap();
        let dense = GaussianSampler::dense(&model, 12, 10).unwrap();
        let root = SeedSequence::new(4);
        for s in [&sampler, &dense] {
            let fields: Vec<_> = (0..2000).map(|r| s.sample(&mut root.child(r).rng())).collect();
            let got = lag_products(&fields, (1, 1));
            let want = model.autocovariance((1, 1)).unwrap();
            assert!((got - want).abs() < 0.05, "{got} vs {want}");
        }
    }

    #[test]
    fn seed_determinism() {
        let model = CovarianceModel::matern_normalized(0.5, 1.0).unwrap();
        let sampler = GaussianSampler::new(&model, 20, 17).unwrap();
        let a = sampler.sample(&mut SeedSequence::new(9).rng());
        let b = sampler.sample(&mut SeedSequence::new(9).rng());
        assert_eq!(a, b);
    }

    #[test]
    fn margins_look_normal() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let model = CovarianceModel::matern_normalized(1.0, 1.0).unwrap();
        let sampler = GaussianSampler::new(&model, 24, 24).unwrap();
        let g0 = model.autocovariance((0, 0)).unwrap();
        let n01 = Normal::new(0.0, 1.0).unwrap();
        let root = SeedSequence::new(5);
        // Pointwise margins across replicates at a few fixed sites.
        let reps: Vec<_> = (0..400).map(|r| sampler.sample(&mut root.child(r).rng())).collect();
        let mut pass = 0;
        let sites = [(0, 0), (5, 7), (12, 12), (23, 1), (17, 20)];
        for &(a, b) in &sites {
            let xs: Vec<f64> = reps.iter().map(|f| f.values()[[a, b]] / g0.sqrt()).collect();
            if stats::ks_statistic(&xs, |x| n01.cdf(x)) < stats::ks_critical_value(0.01, xs.len()) {
                pass += 1;
            }
        }
        assert_eq!(pass, sites.len());
    }

    #[test]
    fn rejects_non_gaussian_model() {
        let m = CovarianceModel::SeparableArma {
            ar: 0.2,
            ma: 0.1,
            innov_x: super::super::Innovation::Gaussian,
            innov_y: super::super::Innovation::Gaussian,
        };
        assert!(GaussianSampler::new(&m, 4, 4).is_err());
    }
}
