//! Frequency-domain wild bootstrap (FDWB) and its hybrid rescaling (HFDB).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{DensityOptions, SpectralDensityEstimate};
use crate::error::{Error, Result};
use crate::lattice::{periodogram, FrequencyGrid, LatticeField, TWO_PI_SQ};
use crate::rng::SeedSequence;
use crate::spectral::{spectral_mean, PsiFunction};
use crate::subsample::{bias_estimate, subsample_ensemble, variance_estimates, BlockSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapKind {
    Fdwb,
    Hfdb,
    #[serde(rename = "hfdb_bias")]
    HfdbBiasCorrected,
}

impl BootstrapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BootstrapKind::Fdwb => "fdwb",
            BootstrapKind::Hfdb => "hfdb",
            BootstrapKind::HfdbBiasCorrected => "hfdb_bias",
        }
    }

    pub fn is_hybrid(self) -> bool {
        self != BootstrapKind::Fdwb
    }
}

impl fmt::Display for BootstrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BootstrapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fdwb" => Ok(BootstrapKind::Fdwb),
            "hfdb" => Ok(BootstrapKind::Hfdb),
            "hfdb_bias" => Ok(BootstrapKind::HfdbBiasCorrected),
            _ => Err(Error::param("boot.kind", format!("expected fdwb, hfdb or hfdb_bias, got `{s}`"))),
        }
    }
}

/// Multiplier weights on the Fourier grid, symmetric under negation.
///
/// Each conjugate pair shares one standard exponential draw. A
/// self-conjugate index (only present for even extents) gets a chi-square(1)
/// draw instead: it carries a single term rather than a pair, and the
/// doubled variance keeps the closed-form `Var*` exact.
pub fn draw_exponential_weights<R: Rng + ?Sized>(grid: &FrequencyGrid, rng: &mut R) -> Vec<f64> {
    let mut w = vec![0.0; grid.len()];
    for k in grid.half_plane() {
        let u = if grid.is_self_conjugate(k) {
            let z: f64 = StandardNormal.sample(rng);
            z * z
        } else {
            Exp1.sample(rng)
        };
        w[k] = u;
        w[grid.neg(k)] = u;
    }
    w
}

/// Precomputed per-pair coefficients: `Q* = sum_k c_k (U_k - 1)` over the
/// half plane.
#[derive(Clone, Debug)]
pub struct FdwbSampler {
    coef: Vec<f64>,
    self_conjugate: Vec<bool>,
}

impl FdwbSampler {
    pub fn new(fhat: &SpectralDensityEstimate, psi: &PsiFunction) -> Self {
        let grid = fhat.grid();
        let n = grid.sample_size() as f64;
        let scale = TWO_PI_SQ / n.sqrt();
        let psi_v = psi.on_grid(grid);
        let f = fhat.values();
        let mut coef = Vec::new();
        let mut self_conjugate = Vec::new();
        for k in grid.half_plane() {
            let m = grid.neg(k);
            if m == k {
                coef.push(scale * psi_v[k] * f[k]);
                self_conjugate.push(true);
            } else {
                coef.push(scale * (psi_v[k] * f[k] + psi_v[m] * f[m]));
                self_conjugate.push(false);
            }
        }
        FdwbSampler { coef, self_conjugate }
    }

    /// One replicate; consumes the stream exactly like
    /// [`draw_exponential_weights`].
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut acc = 0.0;
        for (c, &sc) in self.coef.iter().zip(&self.self_conjugate) {
            let u = if sc {
                let z: f64 = StandardNormal.sample(rng);
                z * z
            } else {
                Exp1.sample(rng)
            };
            acc += c * (u - 1.0);
        }
        acc
    }

    /// Replicate `r` drawn from stream `seq.child(r)`, in replicate order.
    pub fn draws(&self, seq: &SeedSequence, replicates: usize) -> Vec<f64> {
        (0..replicates as u64)
            .into_par_iter()
            .map(|r| self.draw(&mut seq.child(r).rng()))
            .collect()
    }
}

/// `Q* = n^{1/2} (2 pi)^2 n^{-1} sum_j psi(w_j) f(w_j) (U_j - 1)`.
pub fn fdwb_statistic<R: Rng + ?Sized>(fhat: &SpectralDensityEstimate, psi: &PsiFunction, rng: &mut R) -> f64 {
    let grid = fhat.grid();
    let u = draw_exponential_weights(grid, rng);
    let n = grid.sample_size() as f64;
    let sum: f64 = (0..grid.len())
        .map(|k| psi.eval(grid.omega(k)) * fhat.values()[k] * (u[k] - 1.0))
        .sum();
    n.sqrt() * TWO_PI_SQ / n * sum
}

/// `Var* = n^{-1} (4 pi^2)^2 sum_j psi(w_j) (psi(w_j) + psi(w_{-j})) f(w_j)^2`.
pub fn fdwb_variance(fhat: &SpectralDensityEstimate, psi: &PsiFunction) -> f64 {
    let grid = fhat.grid();
    let p = psi.on_grid(grid);
    let f = fhat.values();
    let sum: f64 = (0..grid.len()).map(|k| p[k] * (p[k] + p[grid.neg(k)]) * f[k] * f[k]).sum();
    (TWO_PI_SQ * TWO_PI_SQ / grid.sample_size() as f64 * sum).max(0.0)
}

/// `H* = ((Var* + sigma2) / Var*)^{1/2} Q*`.
pub fn hfdb_statistic(q_star: f64, var_star: f64, sigma2_hat: f64) -> Result<f64> {
    Ok(hfdb_factor(var_star, sigma2_hat)? * q_star)
}

fn hfdb_factor(var_star: f64, sigma2_hat: f64) -> Result<f64> {
    if !(var_star > 0.0) {
        return Err(Error::DegenerateBootstrap(var_star));
    }
    if !(sigma2_hat >= 0.0) {
        return Err(Error::param("sigma2_hat", "must be non-negative"));
    }
    Ok(((var_star + sigma2_hat) / var_star).sqrt())
}

/// Bootstrap replicates with their audit trail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDraws {
    pub values: Vec<f64>,
    pub var_star: f64,
    pub kind: BootstrapKind,
    /// Identifier of the seed stream the replicates came from.
    pub seed_info: u64,
    /// Unfloored second variance component (hybrid kinds only).
    pub sigma2_raw: Option<f64>,
    pub floored_sigma2: f64,
    /// `var_star + floored_sigma2`.
    pub total_var: f64,
    /// Shift added to every replicate (bias-corrected kind only).
    pub bias: f64,
}

impl BootstrapDraws {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Subsampling inputs for the hybrid kinds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridInputs {
    pub sigma2_raw: f64,
    pub bias: f64,
}

/// Replicates from a prepared density estimate.
pub fn bootstrap_from_estimate(
    fhat: &SpectralDensityEstimate,
    psi: &PsiFunction,
    kind: BootstrapKind,
    replicates: usize,
    seq: &SeedSequence,
    hybrid: Option<HybridInputs>,
) -> Result<BootstrapDraws> {
    if replicates == 0 {
        return Err(Error::param("boot.B", "must be positive"));
    }
    if kind.is_hybrid() && hybrid.is_none() {
        return Err(Error::param("hybrid", "hybrid kinds need subsampling inputs"));
    }
    let var_star = fdwb_variance(fhat, psi);
    let values = FdwbSampler::new(fhat, psi).draws(seq, replicates);
    let base = BootstrapDraws {
        values,
        var_star,
        kind: BootstrapKind::Fdwb,
        seed_info: seq.id(),
        sigma2_raw: None,
        floored_sigma2: 0.0,
        total_var: var_star,
        bias: 0.0,
    };
    match hybrid {
        Some(h) if kind.is_hybrid() => hybridize(&base, kind, h),
        _ => Ok(base),
    }
}

/// Turn FDWB draws into HFDB (optionally bias-corrected) draws from the same
/// stream: every value is rescaled by `((Var* + sigma2) / Var*)^{1/2}` and
/// shifted by the bias for the bias-corrected kind.
pub fn hybridize(base: &BootstrapDraws, kind: BootstrapKind, hybrid: HybridInputs) -> Result<BootstrapDraws> {
    if base.kind != BootstrapKind::Fdwb {
        return Err(Error::param("base", "hybrid draws are built from FDWB draws"));
    }
    if !kind.is_hybrid() {
        return Ok(base.clone());
    }
    let floored = hybrid.sigma2_raw.max(0.0);
    log::debug!("sigma2 unfloored = {}, floored = {}", hybrid.sigma2_raw, floored);
    let factor = hfdb_factor(base.var_star, floored)?;
    let bias = if kind == BootstrapKind::HfdbBiasCorrected { hybrid.bias } else { 0.0 };
    Ok(BootstrapDraws {
        values: base.values.iter().map(|v| v * factor + bias).collect(),
        var_star: base.var_star,
        kind,
        seed_info: base.seed_info,
        sigma2_raw: Some(hybrid.sigma2_raw),
        floored_sigma2: floored,
        total_var: base.var_star + floored,
        bias,
    })
}

/// Full pipeline: periodogram, density estimate, subsampling inputs for the
/// hybrid kinds, then `replicates` draws.
pub fn bootstrap_distribution(
    field: &LatticeField,
    psi: &PsiFunction,
    spec: BlockSpec,
    replicates: usize,
    kind: BootstrapKind,
    seq: &SeedSequence,
    density: &DensityOptions,
) -> Result<BootstrapDraws> {
    let pgram = periodogram(field)?;
    let fhat = density.estimate(&pgram)?;
    let hybrid = if kind.is_hybrid() {
        let ens = subsample_ensemble(field, spec, psi)?;
        let v = variance_estimates(&ens);
        let mhat = spectral_mean(&pgram, psi);
        Some(HybridInputs { sigma2_raw: v.sigma2_sq_hat, bias: bias_estimate(&ens, &mhat) })
    } else {
        None
    };
    bootstrap_from_estimate(&fhat, psi, kind, replicates, seq, hybrid)
}
