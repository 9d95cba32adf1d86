//! Confidence intervals for spectral means and the isotropy test.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_from_estimate, BootstrapDraws, BootstrapKind, HybridInputs};
use crate::density::{DensityOptions, SpectralDensityEstimate};
use crate::error::{Error, Result};
use crate::lattice::{periodogram, LatticeField};
use crate::rng::SeedSequence;
use crate::spectral::{psi_isotropy_contrast, spectral_mean, Lag, PsiFunction, SpectralMeanValue};
use crate::stats::{mean, EmpiricalDistribution};
use crate::subsample::{
    bias_estimate, enumerate_blocks, subsample_edf, subsample_ensemble, variance_estimates, BlockSpec, SubsampleEnsemble,
    VarianceEstimates,
};

/// Smallest number of bootstrap draws accepted for quantiles.
pub const MIN_BOOTSTRAP_DRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fdwb,
    Hfdb,
    HfdbBias,
    Subsample,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Fdwb, Method::Hfdb, Method::HfdbBias, Method::Subsample];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fdwb => "fdwb",
            Method::Hfdb => "hfdb",
            Method::HfdbBias => "hfdb_bias",
            Method::Subsample => "subsample",
        }
    }

    pub fn bootstrap_kind(self) -> Option<BootstrapKind> {
        match self {
            Method::Fdwb => Some(BootstrapKind::Fdwb),
            Method::Hfdb => Some(BootstrapKind::Hfdb),
            Method::HfdbBias => Some(BootstrapKind::HfdbBiasCorrected),
            Method::Subsample => None,
        }
    }

    /// Whether the method needs the subsample ensemble.
    pub fn needs_blocks(self) -> bool {
        self != Method::Fdwb
    }
}

impl From<BootstrapKind> for Method {
    fn from(kind: BootstrapKind) -> Self {
        match kind {
            BootstrapKind::Fdwb => Method::Fdwb,
            BootstrapKind::Hfdb => Method::Hfdb,
            BootstrapKind::HfdbBiasCorrected => Method::HfdbBias,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::param("method", format!("expected fdwb, hfdb, hfdb_bias or subsample, got `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: Method,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.5 && level < 1.0) {
        return Err(Error::param("ci.level", format!("must lie in (0.5, 1), got {level}")));
    }
    Ok(())
}

/// `(M - q_{1-a/2} / sqrt(n), M - q_{a/2} / sqrt(n))` with type-7 quantiles.
fn interval(mhat: &SpectralMeanValue, edf: &EmpiricalDistribution, level: f64, method: Method) -> ConfidenceInterval {
    let alpha = 1.0 - level;
    let rn = (mhat.n as f64).sqrt();
    let upper_q = edf.quantile(1.0 - alpha / 2.0);
    let lower_q = edf.quantile(alpha / 2.0);
    ConfidenceInterval { lower: mhat.value - upper_q / rn, upper: mhat.value - lower_q / rn, level, method }
}

pub fn confidence_interval(mhat: &SpectralMeanValue, draws: &BootstrapDraws, level: f64) -> Result<ConfidenceInterval> {
    check_level(level)?;
    if draws.len() < MIN_BOOTSTRAP_DRAWS {
        return Err(Error::TooFewValues { required: MIN_BOOTSTRAP_DRAWS, got: draws.len() });
    }
    let edf = EmpiricalDistribution::new(draws.values.clone())?;
    Ok(interval(mhat, &edf, level, draws.kind.into()))
}

/// Interval calibrated by the centred subsample distribution.
pub fn subsample_confidence_interval(
    mhat: &SpectralMeanValue,
    ens: &SubsampleEnsemble,
    level: f64,
) -> Result<ConfidenceInterval> {
    check_level(level)?;
    let edf = subsample_edf(ens)?;
    Ok(interval(mhat, &edf, level, Method::Subsample))
}

/// Mean of `(Z(s) - Z(s + h))^2` over all pairs inside the grid.
pub fn sample_variogram(field: &LatticeField, h: Lag) -> Result<f64> {
    if h == (0, 0) {
        return Err(Error::param("h", "lag must be non-zero"));
    }
    let (n1, n2) = (field.n1() as i64, field.n2() as i64);
    let (h1, h2) = h;
    if h1.abs() >= n1 || h2.abs() >= n2 {
        return Err(Error::NoLagPairs(h1, h2));
    }
    let v = field.values();
    let mut acc = 0.0;
    let mut count = 0usize;
    for s1 in 0.max(-h1)..n1.min(n1 - h1) {
        for s2 in 0.max(-h2)..n2.min(n2 - h2) {
            let d = v[[s1 as usize, s2 as usize]] - v[[(s1 + h1) as usize, (s2 + h2) as usize]];
            acc += d * d;
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

/// Squared increments `(Z(s) - Z(s + h))^2` as a summed-area table over the
/// origins `s` whose partner lies in the grid. Entry `[i][j]` holds the sum
/// over origins with offset row `< i` and offset column `< j`; origins are
/// offset by `max(0, -h)` per axis.
struct IncrementTable {
    h: Lag,
    m2: usize,
    sums: Vec<f64>,
}

impl IncrementTable {
    fn new(field: &LatticeField, h: Lag) -> Result<Self> {
        if h == (0, 0) {
            return Err(Error::param("h", "lag must be non-zero"));
        }
        let (n1, n2) = (field.n1() as i64, field.n2() as i64);
        if h.0.abs() >= n1 || h.1.abs() >= n2 {
            return Err(Error::NoLagPairs(h.0, h.1));
        }
        let (m1, m2) = ((n1 - h.0.abs()) as usize, (n2 - h.1.abs()) as usize);
        let (o1, o2) = (0.max(-h.0), 0.max(-h.1));
        let v = field.values();
        let mut sums = vec![0.0; (m1 + 1) * (m2 + 1)];
        for i in 0..m1 {
            let mut row = 0.0;
            for j in 0..m2 {
                let (s1, s2) = (i as i64 + o1, j as i64 + o2);
                let d = v[[s1 as usize, s2 as usize]] - v[[(s1 + h.0) as usize, (s2 + h.1) as usize]];
                row += d * d;
                sums[(i + 1) * (m2 + 1) + j + 1] = sums[i * (m2 + 1) + j + 1] + row;
            }
        }
        Ok(IncrementTable { h, m2, sums })
    }

    /// Mean squared increment over pairs inside the block at `origin`.
    fn block_mean(&self, origin: (usize, usize), spec: BlockSpec) -> Result<f64> {
        let (a1, a2) = (self.h.0.unsigned_abs() as usize, self.h.1.unsigned_abs() as usize);
        if a1 >= spec.b1 || a2 >= spec.b2 {
            return Err(Error::NoLagPairs(self.h.0, self.h.1));
        }
        let (r0, c0) = origin;
        let (r1, c1) = (r0 + spec.b1 - a1, c0 + spec.b2 - a2);
        let w = self.m2 + 1;
        let total = self.sums[r1 * w + c1] - self.sums[r0 * w + c1] - self.sums[r1 * w + c0] + self.sums[r0 * w + c0];
        Ok(total / ((spec.b1 - a1) * (spec.b2 - a2)) as f64)
    }
}

/// Contrast `2k(h2) - 2k(h1)` of sample variograms. Its expectation is
/// `2 gamma(h1) - 2 gamma(h2)`, the same target as the spectral mean of
/// the isotropy contrast.
pub fn variogram_contrast(field: &LatticeField, h1: Lag, h2: Lag) -> Result<f64> {
    Ok(sample_variogram(field, h2)? - sample_variogram(field, h1)?)
}

/// Which statistic the isotropy test squares.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestForm {
    /// Spectral mean of the contrast over the Fourier grid.
    #[default]
    Spectral,
    /// Sample-variogram contrast on the full grid and on every block.
    Variogram,
}

impl TestForm {
    pub fn as_str(self) -> &'static str {
        match self {
            TestForm::Variogram => "variogram",
            TestForm::Spectral => "spectral",
        }
    }
}

impl FromStr for TestForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "variogram" => Ok(TestForm::Variogram),
            "spectral" => Ok(TestForm::Spectral),
            other => Err(Error::param("test.form", format!("unknown form `{other}`"))),
        }
    }
}

/// Variogram contrast on the full grid and on each block of one size.
#[derive(Clone, Debug, PartialEq)]
pub struct VariogramContrast {
    pub value: f64,
    pub n: usize,
    pub spec: Option<BlockSpec>,
    /// Block contrasts in block order; empty without a block size.
    pub blocks: Vec<f64>,
}

impl VariogramContrast {
    pub fn new(field: &LatticeField, h1: Lag, h2: Lag, spec: Option<BlockSpec>) -> Result<Self> {
        let t1 = IncrementTable::new(field, h1)?;
        let t2 = IncrementTable::new(field, h2)?;
        let value = variogram_contrast(field, h1, h2)?;
        let blocks = match spec {
            Some(spec) => enumerate_blocks(field.n1(), field.n2(), spec)?
                .into_iter()
                .map(|o| Ok(t2.block_mean(o, spec)? - t1.block_mean(o, spec)?))
                .collect::<Result<Vec<f64>>>()?,
            None => Vec::new(),
        };
        Ok(VariogramContrast { value, n: field.len(), spec, blocks })
    }

    pub fn test_statistic(&self) -> f64 {
        self.n as f64 * self.value * self.value
    }

    fn block_size(&self) -> Result<f64> {
        match self.spec {
            Some(s) if !self.blocks.is_empty() => Ok(s.size() as f64),
            _ => Err(Error::param("block", "method needs a block specification")),
        }
    }

    /// `sqrt(b) (V_l - mean V)` for every block.
    pub fn centered_roots(&self) -> Result<Vec<f64>> {
        let b = self.block_size()?;
        let m = mean(&self.blocks);
        Ok(self.blocks.iter().map(|v| b.sqrt() * (v - m)).collect())
    }

    /// `b / L * sum (V_l - mean V)^2`.
    pub fn sigma_sq(&self) -> Result<f64> {
        let b = self.block_size()?;
        let m = mean(&self.blocks);
        Ok(b * self.blocks.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.blocks.len() as f64)
    }

    /// Hybrid inputs with the block variance of the contrast in place of
    /// the spectral one; `sigma1_sq` still comes from the block periodograms.
    pub fn hybrid_inputs(&self, sigma1_sq: f64) -> Result<HybridInputs> {
        let b = self.block_size()?;
        Ok(HybridInputs {
            sigma2_raw: self.sigma_sq()? - sigma1_sq,
            bias: b.sqrt() * (mean(&self.blocks) - self.value),
        })
    }
}

/// Everything the calibration back-ends need from one field, computed once.
#[derive(Clone, Debug)]
pub struct FieldAnalysis {
    pub mhat: SpectralMeanValue,
    pub fhat: SpectralDensityEstimate,
    pub ensemble: Option<SubsampleEnsemble>,
    pub variances: Option<VarianceEstimates>,
    pub bias: Option<f64>,
}

impl FieldAnalysis {
    /// `spec = None` skips subsampling, which leaves only FDWB usable.
    pub fn new(field: &LatticeField, psi: &PsiFunction, spec: Option<BlockSpec>, density: &DensityOptions) -> Result<Self> {
        let pgram = periodogram(field)?;
        let mhat = spectral_mean(&pgram, psi);
        let fhat = density.estimate(&pgram)?;
        let (ensemble, variances, bias) = match spec {
            Some(spec) => {
                let ens = subsample_ensemble(field, spec, psi)?;
                let v = variance_estimates(&ens);
                let bias = bias_estimate(&ens, &mhat);
                (Some(ens), Some(v), Some(bias))
            }
            None => (None, None, None),
        };
        Ok(FieldAnalysis { mhat, fhat, ensemble, variances, bias })
    }

    /// Copy of this analysis with the subsample quantities for `spec`.
    pub fn with_blocks(&self, field: &LatticeField, spec: BlockSpec) -> Result<FieldAnalysis> {
        let ens = subsample_ensemble(field, spec, &self.mhat.psi)?;
        let v = variance_estimates(&ens);
        let bias = bias_estimate(&ens, &self.mhat);
        Ok(FieldAnalysis {
            mhat: self.mhat.clone(),
            fhat: self.fhat.clone(),
            ensemble: Some(ens),
            variances: Some(v),
            bias: Some(bias),
        })
    }

    /// Subsampling inputs for the hybrid bootstrap, when blocks are present.
    pub fn hybrid_inputs(&self) -> Option<HybridInputs> {
        Some(HybridInputs { sigma2_raw: self.variances?.sigma2_sq_hat, bias: self.bias? })
    }

    pub fn ensemble(&self) -> Result<&SubsampleEnsemble> {
        self.ensemble.as_ref().ok_or_else(|| Error::param("block", "method needs a block specification"))
    }

    pub fn draws(&self, kind: BootstrapKind, replicates: usize, seq: &SeedSequence) -> Result<BootstrapDraws> {
        let hybrid = match (kind.is_hybrid(), self.hybrid_inputs()) {
            (true, None) => return Err(Error::param("block", "hybrid bootstrap needs a block specification")),
            (_, h) => h,
        };
        bootstrap_from_estimate(&self.fhat, &self.mhat.psi, kind, replicates, seq, hybrid)
    }

    pub fn confidence_interval(
        &self,
        method: Method,
        replicates: usize,
        seq: &SeedSequence,
        level: f64,
    ) -> Result<ConfidenceInterval> {
        match method.bootstrap_kind() {
            Some(kind) => confidence_interval(&self.mhat, &self.draws(kind, replicates, seq)?, level),
            None => subsample_confidence_interval(&self.mhat, self.ensemble()?, level),
        }
    }

    /// `TS = n M^2`.
    pub fn test_statistic(&self) -> f64 {
        self.mhat.n as f64 * self.mhat.value * self.mhat.value
    }

    /// Proportion of calibration values whose square reaches `TS`.
    pub fn p_value(&self, method: Method, replicates: usize, seq: &SeedSequence, plus_one: bool) -> Result<f64> {
        let ts = self.test_statistic();
        match method.bootstrap_kind() {
            Some(kind) => Ok(p_value_from(&self.draws(kind, replicates, seq)?.values, ts, plus_one)),
            None => {
                let ens = self.ensemble()?;
                if ens.len() < 2 {
                    return Err(Error::TooFewValues { required: 2, got: ens.len() });
                }
                Ok(p_value_from(&ens.centered_roots(), ts, plus_one))
            }
        }
    }
}

/// Proportion of `values` whose square is at least `ts`; with `plus_one`,
/// `(hits + 1) / (total + 1)`.
pub fn p_value_from(values: &[f64], ts: f64, plus_one: bool) -> f64 {
    let hits = values.iter().filter(|v| *v * *v >= ts).count();
    if plus_one {
        (hits + 1) as f64 / (values.len() + 1) as f64
    } else {
        hits as f64 / values.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropyTestResult {
    pub ts: f64,
    pub p_value: f64,
    pub method: Method,
    pub h1: Lag,
    pub h2: Lag,
    /// Estimate of `2 gamma(h1) - 2 gamma(h2)` in the chosen form.
    pub contrast: f64,
    pub form: TestForm,
}

impl IsotropyTestResult {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value <= level
    }
}

/// Options shared by the hypothesis tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub density: DensityOptions,
    /// Use `(hits + 1) / (total + 1)` instead of the plain proportion.
    pub plus_one: bool,
    pub form: TestForm,
}

fn lag_norm_sq(h: Lag) -> i64 {
    h.0 * h.0 + h.1 * h.1
}

/// p-value of the variogram-form test. Bootstrap draws still come from the
/// spectral density estimate; the block contrasts supply the subsample
/// calibration and the hybrid variance.
pub fn variogram_p_value(
    analysis: &FieldAnalysis,
    contrast: &VariogramContrast,
    method: Method,
    replicates: usize,
    seq: &SeedSequence,
    plus_one: bool,
) -> Result<f64> {
    let ts = contrast.test_statistic();
    match method.bootstrap_kind() {
        Some(kind) => {
            let hybrid = if kind.is_hybrid() { Some(variogram_hybrid_inputs(analysis, contrast)?) } else { None };
            let draws = bootstrap_from_estimate(&analysis.fhat, &analysis.mhat.psi, kind, replicates, seq, hybrid)?;
            Ok(p_value_from(&draws.values, ts, plus_one))
        }
        None => {
            if contrast.blocks.len() < 2 {
                return Err(Error::TooFewValues { required: 2, got: contrast.blocks.len() });
            }
            Ok(p_value_from(&contrast.centered_roots()?, ts, plus_one))
        }
    }
}

/// Hybrid inputs for the variogram-form test.
pub fn variogram_hybrid_inputs(analysis: &FieldAnalysis, contrast: &VariogramContrast) -> Result<HybridInputs> {
    let v = analysis.variances.ok_or_else(|| Error::param("block", "hybrid bootstrap needs a block specification"))?;
    contrast.hybrid_inputs(v.sigma1_sq_hat)
}

/// Test of `gamma(h1) = gamma(h2)` through `TS = n V^2`, where `V` is the
/// variogram contrast or the spectral mean of `psi_iso`, per `options.form`.
#[allow(clippy::too_many_arguments)]
pub fn isotropy_test(
    field: &LatticeField,
    h1: Lag,
    h2: Lag,
    method: Method,
    spec: BlockSpec,
    replicates: usize,
    seq: &SeedSequence,
    options: &TestOptions,
) -> Result<IsotropyTestResult> {
    if lag_norm_sq(h1) != lag_norm_sq(h2) {
        log::warn!("lags {h1:?} and {h2:?} differ in norm; the isotropy null is not meaningful");
    }
    let psi = psi_isotropy_contrast(h1, h2)?;
    let spec = method.needs_blocks().then_some(spec);
    let analysis = FieldAnalysis::new(field, &psi, spec, &options.density)?;
    let (ts, p_value, contrast) = match options.form {
        TestForm::Spectral => (
            analysis.test_statistic(),
            analysis.p_value(method, replicates, seq, options.plus_one)?,
            analysis.mhat.value,
        ),
        TestForm::Variogram => {
            let vc = VariogramContrast::new(field, h1, h2, spec)?;
            let p = variogram_p_value(&analysis, &vc, method, replicates, seq, options.plus_one)?;
            (vc.test_statistic(), p, vc.value)
        }
    };
    Ok(IsotropyTestResult { ts, p_value, method, h1, h2, contrast, form: options.form })
}
