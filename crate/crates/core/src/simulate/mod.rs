//! Covariance models and random field generators.

mod gaussian;
mod nongaussian;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::lattice::{index_range, LatticeField};
use crate::rng::StreamRng;
use crate::spectral::{midpoint_quadrature, Lag};

pub use gaussian::{simulate_gaussian, GaussianSampler, DEFAULT_DENSE_LIMIT};
pub use nongaussian::{
    quartic_transform, simulate_exp_cholesky, simulate_separable, simulate_transformed, ExpCholeskySampler,
    SeparableSampler,
};

/// Innovation law of the separable AR/MA construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Innovation {
    Gaussian,
    /// `Exp(1) - 1`: mean 0, variance 1, skewness 2.
    ExponentialCentered,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// `G^4 - E[G^4]`.
    Quartic,
}

/// Second-order description of the simulated processes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceModel {
    WhiteNoise {
        variance: f64,
    },
    /// Spectral density `phi (alpha^2 + |w|^2)^(-nu-1)` on `[-pi, pi]^2`.
    MaternSpectral {
        phi: f64,
        alpha: f64,
        nu: f64,
    },
    /// Spherical covariance with geometric anisotropy `r = sqrt(h' B h)`,
    /// `B = R' T' T R`, `R` the rotation by `angle`, `T = diag(1, ratio)`.
    SphericalAniso {
        sill: f64,
        range: f64,
        nugget: f64,
        angle: f64,
        ratio: f64,
    },
    /// `Z(i, j) = X_i Y_j` with `X` AR(1) along `s1` and `Y` MA(1) along `s2`,
    /// unit-variance innovations.
    SeparableArma {
        ar: f64,
        ma: f64,
        innov_x: Innovation,
        innov_y: Innovation,
    },
    TransformedGaussian {
        base: Box<CovarianceModel>,
        transform: Transform,
    },
}

/// Matérn spectral density `phi (alpha^2 + |w|^2)^(-nu-1)`.
pub fn matern_spectral_density(phi: f64, alpha: f64, nu: f64, omega: [f64; 2]) -> f64 {
    phi * (alpha * alpha + omega[0] * omega[0] + omega[1] * omega[1]).powf(-nu - 1.0)
}

/// Spherical covariance at lag `h`; the nugget only enters at `h = 0`.
pub fn spherical_covariance(sill: f64, range: f64, nugget: f64, angle: f64, ratio: f64, h: Lag) -> f64 {
    let r = anisotropic_distance(angle, ratio, h);
    let nug = if h == (0, 0) { nugget } else { 0.0 };
    if r <= range {
        let x = r / range;
        sill * (1.0 - 1.5 * x + 0.5 * x * x * x) + nug
    } else {
        nug
    }
}

/// `sqrt(h' B h)` with `B = R' T' T R`.
pub fn anisotropic_distance(angle: f64, ratio: f64, h: Lag) -> f64 {
    let (c, s) = (angle.cos(), angle.sin());
    let (x, y) = (h.0 as f64, h.1 as f64);
    // T R h
    let u = c * x + s * y;
    let v = ratio * (-s * x + c * y);
    (u * u + v * v).sqrt()
}

fn ar1_autocovariance(ar: f64, h: i64) -> f64 {
    ar.powi(h.unsigned_abs() as i32) / (1.0 - ar * ar)
}

fn ma1_autocovariance(ma: f64, h: i64) -> f64 {
    match h.unsigned_abs() {
        0 => 1.0 + ma * ma,
        1 => ma,
        _ => 0.0,
    }
}

impl CovarianceModel {
    /// Matérn with `phi` chosen so that `gamma(0) = \int f = 1`.
    pub fn matern_normalized(alpha: f64, nu: f64) -> Result<Self> {
        let raw = CovarianceModel::MaternSpectral { phi: 1.0, alpha, nu };
        raw.validate()?;
        let mass = midpoint_quadrature(|w| matern_spectral_density(1.0, alpha, nu, w))?;
        Ok(CovarianceModel::MaternSpectral { phi: 1.0 / mass, alpha, nu })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive, got {v}")))
            }
        };
        match self {
            CovarianceModel::WhiteNoise { variance } => positive("variance", *variance),
            CovarianceModel::MaternSpectral { phi, alpha, nu } => {
                positive("phi", *phi)?;
                positive("alpha", *alpha)?;
                positive("nu", *nu)
            }
            CovarianceModel::SphericalAniso { sill, range, nugget, angle, ratio } => {
                positive("sill", *sill)?;
                positive("range", *range)?;
                if !(*nugget >= 0.0) {
                    return Err(Error::param("nugget", "must be non-negative"));
                }
                if !angle.is_finite() {
                    return Err(Error::param("angle", "must be finite"));
                }
                if !(*ratio >= 1.0 && ratio.is_finite()) {
                    return Err(Error::param("ratio", format!("must be at least 1, got {ratio}")));
                }
                Ok(())
            }
            CovarianceModel::SeparableArma { ar, ma, .. } => {
                if !(ar.abs() < 1.0) {
                    return Err(Error::param("ar", format!("|ar| must be below 1, got {ar}")));
                }
                if !ma.is_finite() {
                    return Err(Error::param("ma", "must be finite"));
                }
                Ok(())
            }
            CovarianceModel::TransformedGaussian { base, .. } => {
                if !base.is_gaussian() {
                    return Err(Error::param("base", "transformed models need a Gaussian base"));
                }
                base.validate()
            }
        }
    }

    /// Whether the process this model describes is Gaussian when simulated
    /// with [`GaussianSampler`].
    pub fn is_gaussian(&self) -> bool {
        matches!(
            self,
            CovarianceModel::WhiteNoise { .. }
                | CovarianceModel::MaternSpectral { .. }
                | CovarianceModel::SphericalAniso { .. }
        )
    }

    /// Closed-form spectral density, where one exists.
    pub fn spectral_density_fn(&self) -> Result<Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>> {
        match *self {
            CovarianceModel::WhiteNoise { variance } => {
                let c = variance / (4.0 * PI * PI);
                Ok(Arc::new(move |_| c))
            }
            CovarianceModel::MaternSpectral { phi, alpha, nu } => {
                Ok(Arc::new(move |w| matern_spectral_density(phi, alpha, nu, w)))
            }
            CovarianceModel::SeparableArma { ar, ma, .. } => Ok(Arc::new(move |w: [f64; 2]| {
                let fx = 1.0 / (2.0 * PI * (1.0 - 2.0 * ar * w[0].cos() + ar * ar));
                let fy = (1.0 + 2.0 * ma * w[1].cos() + ma * ma) / (2.0 * PI);
                fx * fy
            })),
            _ => Err(Error::NoSpectralDensity(format!("{self:?}"))),
        }
    }

    /// `gamma(h)`.
    pub fn autocovariance(&self, h: Lag) -> Result<f64> {
        let span = (h.0.unsigned_abs() as usize, h.1.unsigned_abs() as usize);
        Ok(self.covariance_table(span.0, span.1)?.get(h))
    }

    /// `gamma(h)` for every `|h1| <= max1`, `|h2| <= max2`.
    pub fn covariance_table(&self, max1: usize, max2: usize) -> Result<CovarianceTable> {
        self.validate()?;
        match self {
            CovarianceModel::MaternSpectral { .. } => self.spectral_covariance_table(max1, max2, DEFAULT_REFINE),
            CovarianceModel::TransformedGaussian { base, transform: Transform::Quartic } => {
                let inner = base.covariance_table(max1, max2)?;
                let g0 = inner.get((0, 0));
                Ok(CovarianceTable::from_fn(max1, max2, |h| {
                    let rho = inner.get(h) / g0;
                    g0 * g0 * (72.0 * rho * rho + 24.0 * rho.powi(4))
                }))
            }
            _ => Ok(CovarianceTable::from_fn(max1, max2, |h| self.closed_form_covariance(h))),
        }
    }

    fn closed_form_covariance(&self, h: Lag) -> f64 {
        match *self {
            CovarianceModel::WhiteNoise { variance } => {
                if h == (0, 0) {
                    variance
                } else {
                    0.0
                }
            }
            CovarianceModel::SphericalAniso { sill, range, nugget, angle, ratio } => {
                spherical_covariance(sill, range, nugget, angle, ratio, h)
            }
            CovarianceModel::SeparableArma { ar, ma, .. } => ar1_autocovariance(ar, h.0) * ma1_autocovariance(ma, h.1),
            _ => unreachable!("no closed-form covariance"),
        }
    }

    /// Covariances from the spectral density by a Riemann sum on an
    /// `M x M` frequency grid, `M >= refine * 2 * max lag`, evaluated with
    /// one inverse FFT.
    pub fn spectral_covariance_table(&self, max1: usize, max2: usize, refine: usize) -> Result<CovarianceTable> {
        let f = self.spectral_density_fn()?;
        let m = (refine.max(1) * 2 * max1.max(max2).max(16)).next_power_of_two();
        let mut buf = Vec::with_capacity(m * m);
        for k1 in 0..m {
            for k2 in 0..m {
                let w = [wrapped_freq(k1, m), wrapped_freq(k2, m)];
                buf.push(rustfft::num_complex::Complex64::new(f(w), 0.0));
            }
        }
        // gamma(h) = (2 pi / M)^2 sum_k f(w_k) e^{i h.w_k}
        Fft2::inverse(m, m).process(&mut buf);
        let scale = (2.0 * PI / m as f64).powi(2);
        Ok(CovarianceTable::from_fn(max1, max2, |h| {
            let i = (h.0.rem_euclid(m as i64) as usize) * m + h.1.rem_euclid(m as i64) as usize;
            buf[i].re * scale
        }))
    }
}

pub const DEFAULT_REFINE: usize = 4;

fn wrapped_freq(k: usize, m: usize) -> f64 {
    let j = if k > m / 2 { k as f64 - m as f64 } else { k as f64 };
    2.0 * PI * j / m as f64
}

/// Dense table of `gamma(h)` for `|h_k| <= max_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceTable {
    max1: usize,
    max2: usize,
    values: Vec<f64>,
}

impl CovarianceTable {
    pub fn from_fn(max1: usize, max2: usize, f: impl Fn(Lag) -> f64) -> Self {
        let w2 = 2 * max2 + 1;
        let mut values = Vec::with_capacity((2 * max1 + 1) * w2);
        for h1 in -(max1 as i64)..=max1 as i64 {
            for h2 in -(max2 as i64)..=max2 as i64 {
                values.push(f((h1, h2)));
            }
        }
        CovarianceTable { max1, max2, values }
    }

    pub fn max_lags(&self) -> (usize, usize) {
        (self.max1, self.max2)
    }

    /// Panics if `h` is outside the table.
    pub fn get(&self, h: Lag) -> f64 {
        let (m1, m2) = (self.max1 as i64, self.max2 as i64);
        assert!(h.0.abs() <= m1 && h.1.abs() <= m2, "lag {h:?} outside covariance table");
        self.values[((h.0 + m1) * (2 * m2 + 1) + h.1 + m2) as usize]
    }
}

/// Any of the experiment processes, ready to draw fields.
#[derive(Clone, Debug)]
pub enum Simulator {
    Gaussian(GaussianSampler),
    Separable(SeparableSampler),
    Quartic { base: GaussianSampler, gamma0: f64 },
    ExpCholesky(ExpCholeskySampler),
    /// Degenerate all-zero process, a hook for harness tests.
    Zero { n1: usize, n2: usize },
}

impl Simulator {
    pub fn sample(&self, rng: &mut StreamRng) -> LatticeField {
        match self {
            Simulator::Gaussian(g) => g.sample(rng),
            Simulator::Separable(s) => s.sample(rng),
            Simulator::Quartic { base, gamma0 } => quartic_transform(&base.sample(rng), *gamma0),
            Simulator::ExpCholesky(e) => e.sample(rng),
            Simulator::Zero { n1, n2 } => LatticeField::zeros(*n1, *n2),
        }
    }
}

/// Frequencies of the `n`-point grid, used by tests and diagnostics.
pub fn fourier_frequencies(n: usize) -> Vec<f64> {
    index_range(n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matern_density_values() {
        assert_eq!(matern_spectral_density(1.0, 1.0, 1.0, [0.0, 0.0]), 1.0);
        assert_eq!(matern_spectral_density(1.0, 1.0, 1.0, [1.0, 0.0]), 0.25);
        assert_eq!(matern_spectral_density(2.0, 0.5, 1.0, [0.0, 0.0]), 32.0);
    }

    #[test]
    fn spherical_values() {
        assert_eq!(spherical_covariance(1.0, 5.0, 0.3, 0.0, 1.0, (0, 0)), 1.3);
        // r = range exactly: 1 - 3/2 + 1/2.
        assert!(spherical_covariance(2.0, 5.0, 0.3, 0.0, 1.0, (3, 4)).abs() < 1e-15);
        assert_eq!(spherical_covariance(1.0, 5.0, 0.0, 0.0, 1.0, (6, 0)), 0.0);
        for h in [(1, 2), (-3, 1), (0, 4)] {
            let r = anisotropic_distance(0.0, 1.0, h);
            assert!((r - ((h.0 * h.0 + h.1 * h.1) as f64).sqrt()).abs() < 1e-15);
        }
        // Ratio shrinks the second axis.
        assert!((anisotropic_distance(0.0, 1.5, (0, 2)) - 3.0).abs() < 1e-15);
        assert!((anisotropic_distance(0.0, 1.5, (2, 0)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn spherical_rejects_bad_ratio() {
        let m = CovarianceModel::SphericalAniso { sill: 1.0, range: 5.0, nugget: 0.0, angle: 0.0, ratio: 0.9 };
        assert!(m.validate().is_err());
    }

    #[test]
    fn matern_normalisation() {
        let m = CovarianceModel::matern_normalized(1.0 / 3.0, 1.0).unwrap();
        let g0 = m.autocovariance((0, 0)).unwrap();
        assert!((g0 - 1.0).abs() < 0.01, "{g0}");
        // Covariance decreases with distance and is symmetric.
        let g1 = m.autocovariance((1, 0)).unwrap();
        let g5 = m.autocovariance((5, 0)).unwrap();
        assert!(g0 > g1 && g1 > g5 && g5 > 0.0);
        assert!((m.autocovariance((0, 1)).unwrap() - g1).abs() < 1e-10);
        assert!((m.autocovariance((-2, 3)).unwrap() - m.autocovariance((2, -3)).unwrap()).abs() < 1e-12);
    }

    /// The FFT table must agree with direct quadrature of `f cos(h.w)`.
    #[test]
    fn matern_table_matches_quadrature() {
        let m = CovarianceModel::matern_normalized(0.5, 1.0).unwrap();
        let f = m.spectral_density_fn().unwrap();
        let table = m.covariance_table(3, 3).unwrap();
        for h in [(0, 0), (1, 0), (2, 1), (3, -3)] {
            let q = midpoint_quadrature(|w| f(w) * (h.0 as f64 * w[0] + h.1 as f64 * w[1]).cos()).unwrap();
            assert!((table.get(h) - q).abs() < 1e-4, "{h:?}: {} vs {q}", table.get(h));
        }
    }

    #[test]
    fn separable_covariance_closed_form() {
        let m = CovarianceModel::SeparableArma {
            ar: 0.2,
            ma: -0.7,
            innov_x: Innovation::ExponentialCentered,
            innov_y: Innovation::ExponentialCentered,
        };
        let expected = 0.2 / (1.0 - 0.04) * (1.0 + 0.49);
        assert!((m.autocovariance((1, 0)).unwrap() - expected).abs() < 1e-14);
        assert!((m.autocovariance((0, 1)).unwrap() + 0.7 / 0.96).abs() < 1e-14);
        assert_eq!(m.autocovariance((0, 2)).unwrap(), 0.0);
        // Spectral density integrates to the covariances.
        let f = m.spectral_density_fn().unwrap();
        let q = midpoint_quadrature(|w| f(w) * w[0].cos()).unwrap();
        assert!((q - expected).abs() < 1e-6);
    }

    #[test]
    fn quartic_covariance_hermite() {
        let base = CovarianceModel::WhiteNoise { variance: 2.0 };
        let m = CovarianceModel::TransformedGaussian { base: Box::new(base), transform: Transform::Quartic };
        // Var(G^4) = E G^8 - (E G^4)^2 = (105 - 9) var^4.
        assert!((m.autocovariance((0, 0)).unwrap() - 96.0 * 4.0).abs() < 1e-9);
        assert_eq!(m.autocovariance((1, 0)).unwrap(), 0.0);
        assert!(!m.is_gaussian());
        assert!(m.spectral_density_fn().is_err());
    }
}
