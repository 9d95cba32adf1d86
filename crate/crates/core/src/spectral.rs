//! Weight functions `psi`, the spectral mean statistic and analytic limits.
//!
//! The spectral mean of a stationary lattice process with spectral density
//! `f` is `M(psi) = \int_{[-pi,pi]^2} psi(w) f(w) dw`, where `f` is scaled so
//! that `gamma(h) = \int e^{i h.w} f(w) dw`. Its estimator replaces `f` by the
//! periodogram in a Riemann sum over the non-zero Fourier frequencies.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{FrequencyGrid, Periodogram, TWO_PI_SQ};
use crate::simulate::CovarianceModel;

pub type Lag = (i64, i64);

type PsiFn = dyn Fn([f64; 2]) -> f64 + Send + Sync;

/// A real weight function on `[-pi, pi]^2`.
#[derive(Clone)]
pub struct PsiFunction {
    name: String,
    is_even: bool,
    eval: Arc<PsiFn>,
}

impl fmt::Debug for PsiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PsiFunction").field("name", &self.name).field("is_even", &self.is_even).finish()
    }
}

impl PsiFunction {
    pub fn new(
        name: impl Into<String>,
        is_even: bool,
        eval: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PsiFunction { name: name.into(), is_even, eval: Arc::new(eval) }
    }

    #[inline]
    pub fn eval(&self, omega: [f64; 2]) -> f64 {
        (self.eval)(omega)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_even(&self) -> bool {
        self.is_even
    }

    pub fn constant(c: f64) -> Self {
        PsiFunction::new(format!("constant{{c={c}}}"), true, move |_| c)
    }

    pub fn plus(&self, other: &PsiFunction) -> PsiFunction {
        let (a, b) = (Arc::clone(&self.eval), Arc::clone(&other.eval));
        PsiFunction::new(format!("({})+({})", self.name, other.name), self.is_even && other.is_even, move |w| {
            a(w) + b(w)
        })
    }

    pub fn scaled(&self, c: f64) -> PsiFunction {
        let a = Arc::clone(&self.eval);
        PsiFunction::new(format!("{c}*({})", self.name), self.is_even, move |w| c * a(w))
    }

    /// Values at every grid frequency, in grid order.
    pub fn on_grid(&self, grid: &FrequencyGrid) -> Vec<f64> {
        (0..grid.len()).map(|k| self.eval(grid.omega(k))).collect()
    }

    /// Check boundedness (`|psi| < 1e6`) and, if flagged even, evenness on a
    /// 101 x 101 sampling grid.
    pub fn validate(&self) -> Result<()> {
        let step = 2.0 * PI / 100.0;
        for a in 0..=100 {
            for b in 0..=100 {
                let w = [-PI + a as f64 * step, -PI + b as f64 * step];
                let v = self.eval(w);
                if !v.is_finite() || v.abs() >= 1e6 {
                    return Err(Error::param("psi", format!("{} is unbounded near {w:?}", self.name)));
                }
                if self.is_even && (v - self.eval([-w[0], -w[1]])).abs() > 1e-12 {
                    return Err(Error::param("psi", format!("{} is flagged even but is not", self.name)));
                }
            }
        }
        Ok(())
    }
}

/// `psi(w) = cos(h.w)`; `M(psi) = gamma(h)`.
pub fn psi_cos_lag(h: Lag) -> PsiFunction {
    let (a, b) = (h.0 as f64, h.1 as f64);
    PsiFunction::new(format!("cos_lag{{h=({},{})}}", h.0, h.1), true, move |w| (a * w[0] + b * w[1]).cos())
}

/// Indicator of `(-inf, t]` (componentwise); `M(psi)` is the spectral
/// distribution function at `t`.
pub fn psi_spectral_cdf(t: [f64; 2]) -> PsiFunction {
    PsiFunction::new(format!("spectral_cdf{{t=({},{})}}", t[0], t[1]), false, move |w| {
        if w[0] <= t[0] && w[1] <= t[1] {
            1.0
        } else {
            0.0
        }
    })
}

/// `psi(w) = 2 cos(h1.w) - 2 cos(h2.w)`.
///
/// Sign convention: `M(psi) = 2 gamma(h1) - 2 gamma(h2) = 2 kappa(h2) - 2 kappa(h1)`
/// where `2 kappa(h)` is the variogram. It vanishes under isotropy whenever
/// `|h1| = |h2|`; test statistics use its square, so the sign is immaterial there.
pub fn psi_isotropy_contrast(h1: Lag, h2: Lag) -> Result<PsiFunction> {
    if h1 == h2 {
        return Err(Error::param("h2", "contrast lags must differ"));
    }
    let (a1, b1, a2, b2) = (h1.0 as f64, h1.1 as f64, h2.0 as f64, h2.1 as f64);
    Ok(PsiFunction::new(
        format!("iso_contrast{{h1=({},{}),h2=({},{})}}", h1.0, h1.1, h2.0, h2.1),
        true,
        move |w| 2.0 * (a1 * w[0] + b1 * w[1]).cos() - 2.0 * (a2 * w[0] + b2 * w[1]).cos(),
    ))
}

/// Parsed form of a psi descriptor such as `cos_lag{h=(1,0)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PsiSpec {
    CosLag(Lag),
    IsoContrast(Lag, Lag),
    SpectralCdf([f64; 2]),
    Constant(f64),
}

impl PsiSpec {
    pub fn build(&self) -> Result<PsiFunction> {
        Ok(match *self {
            PsiSpec::CosLag(h) => psi_cos_lag(h),
            PsiSpec::IsoContrast(h1, h2) => psi_isotropy_contrast(h1, h2)?,
            PsiSpec::SpectralCdf(t) => psi_spectral_cdf(t),
            PsiSpec::Constant(c) => PsiFunction::constant(c),
        })
    }

    /// `M(psi)` for `model`, from its covariance where possible and by
    /// quadrature of `psi * f` otherwise.
    pub fn spectral_mean_truth(&self, model: &CovarianceModel) -> Result<f64> {
        match *self {
            PsiSpec::CosLag(h) => model.autocovariance(h),
            PsiSpec::IsoContrast(h1, h2) => Ok(2.0 * model.autocovariance(h1)? - 2.0 * model.autocovariance(h2)?),
            PsiSpec::Constant(c) => Ok(c * model.autocovariance((0, 0))?),
            PsiSpec::SpectralCdf(_) => analytic_spectral_mean(model, &self.build()?),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::PsiDescriptor(text.to_string());
        let text = text.trim();
        let (name, body) = match text.find('{') {
            Some(i) if text.ends_with('}') => (&text[..i], &text[i + 1..text.len() - 1]),
            _ => return Err(bad()),
        };
        let args = parse_args(body).ok_or_else(bad)?;
        let get = |key: &str| args.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_slice());
        let pair = |key: &str| -> Result<[f64; 2]> {
            match get(key) {
                Some([a, b]) => Ok([*a, *b]),
                _ => Err(bad()),
            }
        };
        let lag = |key: &str| -> Result<Lag> {
            let [a, b] = pair(key)?;
            if a.fract() != 0.0 || b.fract() != 0.0 {
                return Err(bad());
            }
            Ok((a as i64, b as i64))
        };
        let expect_keys = |keys: &[&str]| -> Result<()> {
            if args.len() != keys.len() || args.iter().any(|(k, _)| !keys.contains(&k.as_str())) {
                return Err(bad());
            }
            Ok(())
        };
        match name.trim() {
            "cos_lag" => {
                expect_keys(&["h"])?;
                Ok(PsiSpec::CosLag(lag("h")?))
            }
            "iso_contrast" => {
                expect_keys(&["h1", "h2"])?;
                let (h1, h2) = (lag("h1")?, lag("h2")?);
                if h1 == h2 {
                    return Err(bad());
                }
                Ok(PsiSpec::IsoContrast(h1, h2))
            }
            "spectral_cdf" => {
                expect_keys(&["t"])?;
                let t = pair("t")?;
                if t.iter().any(|v| v.abs() > PI) {
                    return Err(bad());
                }
                Ok(PsiSpec::SpectralCdf(t))
            }
            "constant" => {
                expect_keys(&["c"])?;
                match get("c") {
                    Some([c]) => Ok(PsiSpec::Constant(*c)),
                    _ => Err(bad()),
                }
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for PsiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PsiSpec::CosLag(h) => write!(f, "cos_lag{{h=({},{})}}", h.0, h.1),
            PsiSpec::IsoContrast(a, b) => write!(f, "iso_contrast{{h1=({},{}),h2=({},{})}}", a.0, a.1, b.0, b.1),
            PsiSpec::SpectralCdf(t) => write!(f, "spectral_cdf{{t=({},{})}}", t[0], t[1]),
            PsiSpec::Constant(c) => write!(f, "constant{{c={c}}}"),
        }
    }
}

impl std::str::FromStr for PsiSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PsiSpec::parse(s)
    }
}

/// `key=value` list where a value is a number or a parenthesised tuple.
fn parse_args(body: &str) -> Option<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    let mut rest = body.trim();
    while !rest.is_empty() {
        let eq = rest.find('=')?;
        let key = rest[..eq].trim().to_string();
        rest = rest[eq + 1..].trim_start();
        let (value, tail) = if let Some(inner) = rest.strip_prefix('(') {
            let close = inner.find(')')?;
            let nums: Option<Vec<f64>> = inner[..close].split(',').map(|s| s.trim().parse().ok()).collect();
            (nums?, &inner[close + 1..])
        } else {
            let end = rest.find(',').unwrap_or(rest.len());
            (vec![rest[..end].trim().parse().ok()?], &rest[end..])
        };
        out.push((key, value));
        rest = tail.trim_start();
        if let Some(t) = rest.strip_prefix(',') {
            rest = t.trim_start();
        } else if !rest.is_empty() {
            return None;
        }
    }
    Some(out)
}

/// `M_n(psi)` together with what it was computed from.
#[derive(Clone, Debug)]
pub struct SpectralMeanValue {
    pub value: f64,
    pub psi: PsiFunction,
    pub n: usize,
}

/// `(2 pi)^2 / n * sum_j psi(w_j) I_n(w_j)` over the non-zero Fourier grid.
pub fn spectral_mean(pgram: &Periodogram, psi: &PsiFunction) -> SpectralMeanValue {
    let grid = pgram.grid();
    let sum: f64 = pgram
        .intensity()
        .iter()
        .enumerate()
        .map(|(k, &i)| psi.eval(grid.omega(k)) * i)
        .sum();
    let n = grid.sample_size();
    SpectralMeanValue { value: TWO_PI_SQ / n as f64 * sum, psi: psi.clone(), n }
}

/// `H_n = sqrt(n) (M_n - M)`.
pub fn centered_statistic(mhat: &SpectralMeanValue, m_true: f64) -> f64 {
    (mhat.n as f64).sqrt() * (mhat.value - m_true)
}

const QUAD_START_LEVEL: u32 = 4;
const QUAD_MAX_LEVEL: u32 = 11;
const QUAD_REL_TOL: f64 = 1e-6;

/// Midpoint rule on `[-pi, pi]^2` with `2^k x 2^k` cells, doubled until the
/// relative change drops below 1e-6.
pub fn midpoint_quadrature(g: impl Fn([f64; 2]) -> f64 + Sync) -> Result<f64> {
    use rayon::prelude::*;
    let rule = |level: u32| {
        let m = 1usize << level;
        let h = 2.0 * PI / m as f64;
        let total: f64 = (0..m)
            .into_par_iter()
            .map(|a| {
                let w0 = -PI + (a as f64 + 0.5) * h;
                (0..m).map(|b| g([w0, -PI + (b as f64 + 0.5) * h])).sum::<f64>()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        total * h * h
    };
    let mut prev = rule(QUAD_START_LEVEL);
    for level in QUAD_START_LEVEL + 1..=QUAD_MAX_LEVEL {
        let next = rule(level);
        let change = (next - prev).abs();
        if change <= QUAD_REL_TOL * next.abs() || change <= 1e-14 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureDiverged(QUAD_MAX_LEVEL - QUAD_START_LEVEL))
}

/// `M(psi) = \int psi f` by quadrature.
pub fn analytic_spectral_mean(model: &CovarianceModel, psi: &PsiFunction) -> Result<f64> {
    let f = model.spectral_density_fn()?;
    midpoint_quadrature(|w| psi.eval(w) * f(w))
}

/// `sigma_1^2 = (2 pi)^2 \int psi(w) [psi(w) + psi(-w)] f(w)^2 dw`.
pub fn analytic_sigma1_sq(model: &CovarianceModel, psi: &PsiFunction) -> Result<f64> {
    let f = model.spectral_density_fn()?;
    let v = midpoint_quadrature(|w| {
        let fw = f(w);
        psi.eval(w) * (psi.eval(w) + psi.eval([-w[0], -w[1]])) * fw * fw
    })?;
    Ok(TWO_PI_SQ * v)
}

/// Limit variance components of `H_n(psi)`. `sigma_1^2` depends on `f`
/// only; `sigma_2^2` involves the fourth-order cumulant spectrum
/// `f_4(w1, w2, -w2)` and is only available where it is forced to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticLimits {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
}

impl AnalyticLimits {
    pub fn total(&self) -> f64 {
        self.sigma1_sq + self.sigma2_sq
    }
}

pub fn analytic_limits(model: &CovarianceModel, psi: &PsiFunction) -> Result<AnalyticLimits> {
    if !model.is_gaussian() {
        return Err(Error::param(
            "model",
            "sigma_2^2 has no closed form for non-Gaussian models; estimate it by simulation",
        ));
    }
    Ok(AnalyticLimits { sigma1_sq: analytic_sigma1_sq(model, psi)?.max(0.0), sigma2_sq: 0.0 })
}
