//! Non-Gaussian generators: the separable AR x MA product, the quartic
//! transform of a Gaussian field and the exponential-innovation Cholesky
//! construction.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::gaussian::{cholesky_factor, column_major_field};
use super::{CovarianceModel, GaussianSampler, Innovation, Transform, DEFAULT_DENSE_LIMIT};
use crate::error::{Error, Result};
use crate::lattice::LatticeField;
use crate::rng::StreamRng;

const AR_BURN_IN: usize = 500;

fn innovation(kind: Innovation, rng: &mut impl Rng) -> f64 {
    match kind {
        Innovation::Gaussian => StandardNormal.sample(rng),
        Innovation::ExponentialCentered => {
            let e: f64 = Exp1.sample(rng);
            e - 1.0
        }
    }
}

/// `Z(i, j) = X_i Y_j`, `X_t = ar X_{t-1} + e_t` along `s1`,
/// `Y_t = u_t + ma u_{t-1}` along `s2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparableSampler {
    pub ar: f64,
    pub ma: f64,
    pub innov_x: Innovation,
    pub innov_y: Innovation,
    pub n1: usize,
    pub n2: usize,
}

impl SeparableSampler {
    pub fn new(ar: f64, ma: f64, innov_x: Innovation, innov_y: Innovation, n1: usize, n2: usize) -> Result<Self> {
        if !(ar.abs() < 1.0) {
            return Err(Error::param("ar", format!("|ar| must be below 1, got {ar}")));
        }
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidGrid { n1, n2, reason: "empty grid" });
        }
        Ok(SeparableSampler { ar, ma, innov_x, innov_y, n1, n2 })
    }

    pub fn from_model(model: &CovarianceModel, n1: usize, n2: usize) -> Result<Self> {
        match *model {
            CovarianceModel::SeparableArma { ar, ma, innov_x, innov_y } => Self::new(ar, ma, innov_x, innov_y, n1, n2),
            _ => Err(Error::param("model", "not a separable AR/MA model")),
        }
    }

    /// Draw order: AR start, burn-in and `n1` AR innovations, then `n2 + 1`
    /// MA innovations.
    pub fn sample(&self, rng: &mut StreamRng) -> LatticeField {
        // Stationary-variance start, then burn-in.
        let mut x = innovation(self.innov_x, rng) / (1.0 - self.ar * self.ar).sqrt();
        for _ in 0..AR_BURN_IN {
            x = self.ar * x + innovation(self.innov_x, rng);
        }
        let xs: Vec<f64> = (0..self.n1)
            .map(|_| {
                x = self.ar * x + innovation(self.innov_x, rng);
                x
            })
            .collect();
        let mut prev = innovation(self.innov_y, rng);
        let ys: Vec<f64> = (0..self.n2)
            .map(|_| {
                let u = innovation(self.innov_y, rng);
                let y = u + self.ma * prev;
                prev = u;
                y
            })
            .collect();
        let data = xs.iter().flat_map(|&a| ys.iter().map(move |&b| a * b)).collect();
        LatticeField::from_row_major(self.n1, self.n2, data).expect("finite draw")
    }
}

pub fn simulate_separable(
    ar: f64,
    ma: f64,
    innov1: Innovation,
    innov2: Innovation,
    n1: usize,
    n2: usize,
    rng: &mut StreamRng,
) -> Result<LatticeField> {
    Ok(SeparableSampler::new(ar, ma, innov1, innov2, n1, n2)?.sample(rng))
}

/// `G^4 - 3 gamma0^2` pointwise, the centring taken from the model.
pub fn quartic_transform(field: &LatticeField, gamma0: f64) -> LatticeField {
    let centre = 3.0 * gamma0 * gamma0;
    field.map(|g| g.powi(4) - centre).expect("finite transform")
}

pub fn simulate_transformed(
    base: &CovarianceModel,
    transform: Transform,
    n1: usize,
    n2: usize,
    rng: &mut StreamRng,
) -> Result<LatticeField> {
    let Transform::Quartic = transform;
    let gamma0 = base.autocovariance((0, 0))?;
    Ok(quartic_transform(&GaussianSampler::new(base, n1, n2)?.sample(rng), gamma0))
}

/// `Z = C (E - 1)` with `C C'` the grid covariance matrix (column-major site
/// order) and `E` i.i.d. standard exponential.
#[derive(Clone, Debug)]
pub struct ExpCholeskySampler {
    n1: usize,
    n2: usize,
    factor: Arc<DMatrix<f64>>,
}

impl ExpCholeskySampler {
    pub fn new(model: &CovarianceModel, n1: usize, n2: usize) -> Result<Self> {
        Self::with_dense_limit(model, n1, n2, DEFAULT_DENSE_LIMIT)
    }

    pub fn with_dense_limit(model: &CovarianceModel, n1: usize, n2: usize, dense_limit: usize) -> Result<Self> {
        let n = n1 * n2;
        if n > dense_limit {
            return Err(Error::DenseLimit { n, limit: dense_limit });
        }
        if n == 0 {
            return Err(Error::InvalidGrid { n1, n2, reason: "empty grid" });
        }
        let table = model.covariance_table(n1 - 1, n2 - 1)?;
        Ok(ExpCholeskySampler { n1, n2, factor: Arc::new(cholesky_factor(&table, n1, n2)?) })
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Apply the factor to given centred innovations (column-major order).
    pub fn apply(&self, innovations: &[f64]) -> LatticeField {
        let e = DVector::from_column_slice(innovations);
        column_major_field(self.n1, self.n2, &(self.factor.as_ref() * e))
    }

    pub fn sample(&self, rng: &mut StreamRng) -> LatticeField {
        let e: Vec<f64> = (0..self.n1 * self.n2)
            .map(|_| {
                let x: f64 = Exp1.sample(rng);
                x - 1.0
            })
            .collect();
        self.apply(&e)
    }
}

pub fn simulate_exp_cholesky(model: &CovarianceModel, n1: usize, n2: usize, rng: &mut StreamRng) -> Result<LatticeField> {
    Ok(ExpCholeskySampler::new(model, n1, n2)?.sample(rng))
}
