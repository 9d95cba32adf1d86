//! Flat `key = value` experiment configuration.
//!
//! Grammar: one assignment per line, `#` starts a comment, blank lines are
//! ignored. Keys are dotted names from the table in [`ExperimentConfig::set`].
//! List values are comma separated at the top level (commas inside
//! parentheses or braces do not split). Later assignments override earlier
//! ones; command-line overrides are applied after the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bootstrap::BootstrapKind;
use crate::density::DensityOptions;
use crate::error::{Error, Result};
use crate::infer::{Method, TestForm};
use crate::simulate::{
    CovarianceModel, ExpCholeskySampler, GaussianSampler, Innovation, SeparableSampler, Simulator, Transform,
};
use crate::spectral::{Lag, PsiSpec};
use crate::subsample::BlockSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Gaussian,
    Separable,
    Quartic,
    ExpCholesky,
    /// All-zero fields; a harness test hook.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    WhiteNoise,
    Matern,
    Spherical,
}

/// Process parameters. `ratios` lists the anisotropy ratios to sweep; each
/// entry defines one experiment cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessConfig {
    pub generator: Generator,
    pub model: ModelKind,
    pub variance: f64,
    /// Matérn amplitude; `None` normalises the variance to 1.
    pub phi: Option<f64>,
    pub alpha: f64,
    pub nu: f64,
    pub sill: f64,
    pub range: f64,
    pub nugget: f64,
    pub angle: f64,
    pub ratios: Vec<f64>,
    pub ar: f64,
    pub ma: f64,
    pub innov_x: Innovation,
    pub innov_y: Innovation,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        ProcessConfig {
            generator: Generator::Gaussian,
            model: ModelKind::WhiteNoise,
            variance: 1.0,
            phi: None,
            alpha: 1.0,
            nu: 1.0,
            sill: 1.0,
            range: 5.0,
            nugget: 0.0,
            angle: 0.0,
            ratios: vec![1.0],
            ar: 0.2,
            ma: -0.7,
            innov_x: Innovation::ExponentialCentered,
            innov_y: Innovation::ExponentialCentered,
        }
    }
}

impl ProcessConfig {
    /// Second-order model of the base Gaussian field at `ratio`.
    fn base_model(&self, ratio: f64) -> Result<CovarianceModel> {
        let model = match self.model {
            ModelKind::WhiteNoise => CovarianceModel::WhiteNoise { variance: self.variance },
            ModelKind::Matern => match self.phi {
                Some(phi) => CovarianceModel::MaternSpectral { phi, alpha: self.alpha, nu: self.nu },
                None => CovarianceModel::matern_normalized(self.alpha, self.nu)?,
            },
            ModelKind::Spherical => CovarianceModel::SphericalAniso {
                sill: self.sill,
                range: self.range,
                nugget: self.nugget,
                angle: self.angle,
                ratio,
            },
        };
        if self.model != ModelKind::Spherical && ratio != 1.0 {
            return Err(Error::config("model.ratio", "anisotropy ratios other than 1 need the spherical model"));
        }
        model.validate()?;
        Ok(model)
    }

    /// Covariance model of the simulated process, or `None` for the zero
    /// process.
    pub fn covariance_model(&self, ratio: f64) -> Result<Option<CovarianceModel>> {
        Ok(match self.generator {
            Generator::Gaussian | Generator::ExpCholesky => Some(self.base_model(ratio)?),
            Generator::Quartic => Some(CovarianceModel::TransformedGaussian {
                base: Box::new(self.base_model(ratio)?),
                transform: Transform::Quartic,
            }),
            Generator::Separable => {
                let m = CovarianceModel::SeparableArma {
                    ar: self.ar,
                    ma: self.ma,
                    innov_x: self.innov_x,
                    innov_y: self.innov_y,
                };
                m.validate()?;
                Some(m)
            }
            Generator::Zero => None,
        })
    }

    pub fn simulator(&self, ratio: f64, n1: usize, n2: usize) -> Result<Simulator> {
        Ok(match self.generator {
            Generator::Gaussian => Simulator::Gaussian(GaussianSampler::new(&self.base_model(ratio)?, n1, n2)?),
            Generator::Quartic => {
                let base = self.base_model(ratio)?;
                let gamma0 = base.autocovariance((0, 0))?;
                Simulator::Quartic { base: GaussianSampler::new(&base, n1, n2)?, gamma0 }
            }
            Generator::ExpCholesky => Simulator::ExpCholesky(ExpCholeskySampler::new(&self.base_model(ratio)?, n1, n2)?),
            Generator::Separable => {
                Simulator::Separable(SeparableSampler::new(self.ar, self.ma, self.innov_x, self.innov_y, n1, n2)?)
            }
            Generator::Zero => Simulator::Zero { n1, n2 },
        })
    }
}

/// How block sizes are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockChoice {
    /// The listed blocks, each its own experiment cell.
    Fixed(Vec<BlockSpec>),
    /// Every default candidate for the grid, each its own cell.
    Candidates,
    /// Minimum-volatility choice per replicate over the default candidates.
    MinVol { window: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::config("format", format!("expected csv or json, got `{s}`"))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub process: ProcessConfig,
    pub grid_sizes: Vec<(usize, usize)>,
    pub psi: PsiSpec,
    pub blocks: BlockChoice,
    pub methods: Vec<Method>,
    pub ci_level: f64,
    pub test_level: f64,
    pub h1: Lag,
    pub h2: Lag,
    pub replicates: usize,
    pub bootstrap_draws: usize,
    pub seed: u64,
    pub density: DensityOptions,
    pub plus_one: bool,
    #[serde(default)]
    pub test_form: TestForm,
    pub truth_fixture: Option<PathBuf>,
    pub oracle_grid: (usize, usize),
    pub oracle_replicates: usize,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    /// Worker threads; never part of the report.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            process: ProcessConfig::default(),
            grid_sizes: vec![(50, 50)],
            psi: PsiSpec::CosLag((1, 0)),
            blocks: BlockChoice::MinVol { window: 3 },
            methods: vec![Method::Hfdb],
            ci_level: 0.9,
            test_level: 0.1,
            h1: (1, 0),
            h2: (0, 1),
            replicates: 1000,
            bootstrap_draws: 500,
            seed: 0,
            density: DensityOptions::default(),
            plus_one: false,
            test_form: TestForm::Spectral,
            truth_fixture: None,
            oracle_grid: (200, 200),
            oracle_replicates: 200,
            output: None,
            format: OutputFormat::Csv,
            workers: None,
        }
    }
}

/// Top-level comma split that respects `()` and `{}` nesting.
fn split_list(value: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in value.char_indices() {
        match c {
            '(' | '{' => depth += 1,
            ')' | '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(value[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(value[start..].trim());
    out.retain(|s| !s.is_empty());
    out
}

fn parse_num<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.trim().parse().map_err(|_| format!("cannot parse `{value}` as a number"))
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{value}`")),
    }
}

/// `50x50` or `50`.
fn parse_size(value: &str) -> std::result::Result<(usize, usize), String> {
    match value.split_once(['x', 'X']) {
        Some((a, b)) => Ok((parse_num(a)?, parse_num(b)?)),
        None => {
            let n = parse_num(value)?;
            Ok((n, n))
        }
    }
}

/// `(1,0)`.
pub fn parse_lag(value: &str) -> std::result::Result<Lag, String> {
    let inner = value
        .trim()
        .strip_prefix('(')
        .and_then(|v| v.strip_suffix(')'))
        .ok_or_else(|| format!("expected a lag like (1,0), got `{value}`"))?;
    let (a, b) = inner.split_once(',').ok_or_else(|| format!("expected a lag like (1,0), got `{value}`"))?;
    Ok((parse_num(a)?, parse_num(b)?))
}

fn parse_innovation(value: &str) -> std::result::Result<Innovation, String> {
    match value {
        "gaussian" => Ok(Innovation::Gaussian),
        "exponential" | "exponential_centered" => Ok(Innovation::ExponentialCentered),
        _ => Err(format!("expected gaussian or exponential_centered, got `{value}`")),
    }
}

fn parse_methods(value: &str) -> std::result::Result<Vec<Method>, String> {
    let methods: Vec<Method> =
        split_list(value).into_iter().map(|m| m.parse::<Method>().map_err(|e| e.to_string())).collect::<std::result::Result<_, _>>()?;
    if methods.is_empty() {
        return Err("method list is empty".into());
    }
    Ok(methods)
}

/// One `key = value` assignment with where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub location: String,
    pub key: String,
    pub value: String,
}

/// Split config text into assignments, rejecting malformed lines.
pub fn parse_assignments(text: &str, source: &str) -> Result<Vec<Assignment>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let location = format!("{source}:{}", i + 1);
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(&location, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::config(&location, "empty key"));
        }
        out.push(Assignment { location, key: key.to_string(), value: value.trim().to_string() });
    }
    Ok(out)
}

/// `key=value` from the command line.
pub fn parse_override(text: &str) -> Result<Assignment> {
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| Error::config("--set", format!("expected key=value, got `{text}`")))?;
    Ok(Assignment { location: format!("--set {}", key.trim()), key: key.trim().to_string(), value: value.trim().to_string() })
}

impl ExperimentConfig {
    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(&parse_assignments(text, source)?)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        ExperimentConfig::from_text(&text, &path.display().to_string())
    }

    pub fn apply(&mut self, assignments: &[Assignment]) -> Result<()> {
        let mut b1 = None;
        let mut b2 = None;
        for a in assignments {
            let err = |msg: String| Error::config(&a.location, format!("key `{}`: {msg}", a.key));
            match a.key.as_str() {
                "block.b1" => b1 = Some(parse_num::<usize>(&a.value).map_err(err)?),
                "block.b2" => b2 = Some(parse_num::<usize>(&a.value).map_err(err)?),
                _ => self.set(&a.key, &a.value).map_err(err)?,
            }
        }
        match (b1, b2) {
            (None, None) => {}
            (Some(x), Some(y)) => self.blocks = BlockChoice::Fixed(vec![BlockSpec::new(x, y)]),
            (Some(x), None) | (None, Some(x)) => self.blocks = BlockChoice::Fixed(vec![BlockSpec::square(x)]),
        }
        Ok(())
    }

    /// Apply one assignment. Keys:
    ///
    /// | key | value |
    /// |---|---|
    /// | `process` | `gaussian`, `separable`, `quartic`, `exp_cholesky`, `zero` |
    /// | `model` | `white_noise`, `matern`, `spherical` |
    /// | `model.variance`, `model.phi`, `model.alpha`, `model.nu` | numbers |
    /// | `model.sill`, `model.range`, `model.nugget`, `model.angle` | numbers |
    /// | `model.ratio` | list of ratios `>= 1` |
    /// | `separable.ar`, `separable.ma` | numbers |
    /// | `separable.innov_x`, `separable.innov_y` | `gaussian`, `exponential_centered` |
    /// | `grid.sizes` | list like `50x50, 32x32` |
    /// | `psi` | psi descriptor, e.g. `cos_lag{h=(1,0)}` |
    /// | `block.b1`, `block.b2` | one fixed block |
    /// | `block.sizes` | list like `5x5, 9x9` |
    /// | `block.auto` | `minvol`, `candidates`, `off` |
    /// | `block.window` | odd integer `>= 3` |
    /// | `methods`, `test.method` | list of `fdwb`, `hfdb`, `hfdb_bias`, `subsample` |
    /// | `boot.kind` | a single bootstrap method |
    /// | `ci.level`, `test.level` | numbers in `(0, 1)` |
    /// | `test.h1`, `test.h2` | lags like `(1,0)` |
    /// | `replicates`, `boot.B` | positive integers |
    /// | `seed`, `boot.seed` | unsigned 64-bit |
    /// | `density.bandwidth1`, `density.bandwidth2` | radians |
    /// | `density.auto` | `true` resets to the default rule |
    /// | `density.scale`, `density.kernel` | number; `epanechnikov` or `uniform` |
    /// | `pvalue.plus_one` | boolean |
    /// | `test.form` | `variogram` or `spectral` |
    /// | `truth.fixture` | path of an oracle fixture |
    /// | `oracle.grid`, `oracle.replicates` | size; integer |
    /// | `output`, `format`, `workers` | path; `csv` or `json`; integer |
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let p = &mut self.process;
        match key {
            "process" => {
                p.generator = match value {
                    "gaussian" => Generator::Gaussian,
                    "separable" => Generator::Separable,
                    "quartic" => Generator::Quartic,
                    "exp_cholesky" => Generator::ExpCholesky,
                    "zero" => Generator::Zero,
                    _ => return Err(format!("unknown process `{value}`")),
                }
            }
            "model" => {
                p.model = match value {
                    "white_noise" => ModelKind::WhiteNoise,
                    "matern" => ModelKind::Matern,
                    "spherical" => ModelKind::Spherical,
                    _ => return Err(format!("unknown model `{value}`")),
                }
            }
            "model.variance" => p.variance = parse_num(value)?,
            "model.phi" => p.phi = Some(parse_num(value)?),
            "model.alpha" => p.alpha = parse_num(value)?,
            "model.nu" => p.nu = parse_num(value)?,
            "model.sill" => p.sill = parse_num(value)?,
            "model.range" => p.range = parse_num(value)?,
            "model.nugget" => p.nugget = parse_num(value)?,
            "model.angle" => p.angle = parse_num(value)?,
            "model.ratio" => {
                let ratios: Vec<f64> = split_list(value).into_iter().map(parse_num).collect::<std::result::Result<_, _>>()?;
                if ratios.is_empty() || ratios.iter().any(|r| !(*r >= 1.0)) {
                    return Err("ratios must be a non-empty list of values >= 1".into());
                }
                p.ratios = ratios;
            }
            "separable.ar" => p.ar = parse_num(value)?,
            "separable.ma" => p.ma = parse_num(value)?,
            "separable.innov_x" => p.innov_x = parse_innovation(value)?,
            "separable.innov_y" => p.innov_y = parse_innovation(value)?,
            "grid.sizes" => {
                let sizes: Vec<(usize, usize)> = split_list(value).into_iter().map(parse_size).collect::<std::result::Result<_, _>>()?;
                if sizes.is_empty() || sizes.iter().any(|&(a, b)| a < 2 || b < 2) {
                    return Err("grid sizes must be at least 2x2".into());
                }
                self.grid_sizes = sizes;
            }
            "psi" => self.psi = PsiSpec::parse(value).map_err(|e| e.to_string())?,
            "block.sizes" => {
                let blocks: Vec<BlockSpec> = split_list(value)
                    .into_iter()
                    .map(|v| parse_size(v).map(|(a, b)| BlockSpec::new(a, b)))
                    .collect::<std::result::Result<_, _>>()?;
                if blocks.is_empty() {
                    return Err("block list is empty".into());
                }
                self.blocks = BlockChoice::Fixed(blocks);
            }
            "block.auto" => {
                self.blocks = match value {
                    "minvol" => BlockChoice::MinVol { window: self.window() },
                    "candidates" => BlockChoice::Candidates,
                    "off" | "false" => match &self.blocks {
                        BlockChoice::Fixed(_) => self.blocks.clone(),
                        _ => return Err("block.auto=off needs block sizes set first".into()),
                    },
                    _ => return Err(format!("expected minvol, candidates or off, got `{value}`")),
                }
            }
            "block.window" => {
                let w: usize = parse_num(value)?;
                if w < 3 || w.is_multiple_of(2) {
                    return Err("window must be odd and at least 3".into());
                }
                if let BlockChoice::MinVol { window } = &mut self.blocks {
                    *window = w;
                } else {
                    self.blocks = BlockChoice::MinVol { window: w };
                }
            }
            "methods" | "test.method" => self.methods = parse_methods(value)?,
            "boot.kind" => {
                let kind: BootstrapKind = value.parse().map_err(|e: Error| e.to_string())?;
                self.methods = vec![kind.into()];
            }
            "ci.level" => self.ci_level = parse_num(value)?,
            "test.level" => self.test_level = parse_num(value)?,
            "test.h1" => self.h1 = parse_lag(value)?,
            "test.h2" => self.h2 = parse_lag(value)?,
            "replicates" => self.replicates = parse_num(value)?,
            "boot.B" => self.bootstrap_draws = parse_num(value)?,
            "seed" | "boot.seed" => self.seed = parse_num(value)?,
            "density.bandwidth1" => {
                let h: f64 = parse_num(value)?;
                let cur = self.density.bandwidth.unwrap_or((h, h));
                self.density.bandwidth = Some((h, cur.1));
            }
            "density.bandwidth2" => {
                let h: f64 = parse_num(value)?;
                let cur = self.density.bandwidth.unwrap_or((h, h));
                self.density.bandwidth = Some((cur.0, h));
            }
            "density.auto" => {
                if parse_bool(value)? {
                    self.density.bandwidth = None;
                }
            }
            "density.scale" => self.density.scale = parse_num(value)?,
            "density.kernel" => {
                self.density.kernel = match value {
                    "epanechnikov" => crate::density::Kernel::Epanechnikov,
                    "uniform" => crate::density::Kernel::Uniform,
                    _ => return Err(format!("unknown kernel `{value}`")),
                }
            }
            "pvalue.plus_one" => self.plus_one = parse_bool(value)?,
            "test.form" => self.test_form = value.parse::<TestForm>().map_err(|e| e.to_string())?,
            "truth.fixture" => self.truth_fixture = Some(PathBuf::from(value)),
            "oracle.grid" => self.oracle_grid = parse_size(value)?,
            "oracle.replicates" => self.oracle_replicates = parse_num(value)?,
            "output" => self.output = Some(PathBuf::from(value)),
            "format" => self.format = value.parse().map_err(|e: Error| e.to_string())?,
            "workers" => {
                let w: usize = parse_num(value)?;
                if w == 0 {
                    return Err("workers must be positive".into());
                }
                self.workers = Some(w);
            }
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn window(&self) -> usize {
        match self.blocks {
            BlockChoice::MinVol { window } => window,
            _ => 3,
        }
    }

    pub fn uses_bootstrap(&self) -> bool {
        self.methods.iter().any(|m| m.bootstrap_kind().is_some())
    }

    /// Cross-key checks; reported against the offending key.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(format!("key `{key}`"), msg));
        if self.replicates == 0 {
            return bad("replicates", "must be at least 1".into());
        }
        if self.uses_bootstrap() && self.bootstrap_draws < 100 {
            return bad("boot.B", format!("bootstrap methods need at least 100 draws, got {}", self.bootstrap_draws));
        }
        if !(self.ci_level > 0.5 && self.ci_level < 1.0) {
            return bad("ci.level", format!("must lie in (0.5, 1), got {}", self.ci_level));
        }
        if !(self.test_level > 0.0 && self.test_level < 1.0) {
            return bad("test.level", format!("must lie in (0, 1), got {}", self.test_level));
        }
        if self.h1 == self.h2 {
            return bad("test.h2", "the two lags must differ".into());
        }
        if let Some((h1, h2)) = self.density.bandwidth {
            if !(h1 > 0.0 && h1 <= std::f64::consts::PI && h2 > 0.0 && h2 <= std::f64::consts::PI) {
                return bad("density.bandwidth1", format!("bandwidths must lie in (0, pi], got ({h1}, {h2})"));
            }
        }
        if !(self.density.scale > 0.0) {
            return bad("density.scale", "must be positive".into());
        }
        if let BlockChoice::Fixed(blocks) = &self.blocks {
            for &(n1, n2) in &self.grid_sizes {
                for b in blocks {
                    if b.validate(n1, n2).is_err() {
                        return bad("block.sizes", format!("block {}x{} does not fit grid {n1}x{n2}", b.b1, b.b2));
                    }
                }
            }
        }
        for &r in &self.process.ratios {
            self.process.covariance_model(r).map_err(|e| Error::config("key `process`", e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_file() {
        let text = "\
# isotropy run
process = gaussian
model = spherical
model.range = 5
model.ratio = 1, 1.2, 1.4
grid.sizes = 50x50
block.b1 = 9
block.b2 = 9
methods = fdwb, hfdb, subsample   # three back-ends
test.level = 0.1
psi = iso_contrast{h1=(1,0),h2=(0,1)}
replicates = 500
boot.B = 500
seed = 7
";
        let cfg = ExperimentConfig::from_text(text, "cfg").unwrap();
        assert_eq!(cfg.process.model, ModelKind::Spherical);
        assert_eq!(cfg.process.ratios, vec![1.0, 1.2, 1.4]);
        assert_eq!(cfg.blocks, BlockChoice::Fixed(vec![BlockSpec::square(9)]));
        assert_eq!(cfg.methods, vec![Method::Fdwb, Method::Hfdb, Method::Subsample]);
        assert_eq!(cfg.psi, PsiSpec::IsoContrast((1, 0), (0, 1)));
        assert_eq!((cfg.replicates, cfg.bootstrap_draws, cfg.seed), (500, 500, 7));
        cfg.validate().unwrap();
    }

    #[test]
    fn diagnostics_name_line_and_key() {
        let err = ExperimentConfig::from_text("seed = 1\nreplicates = many\n", "run.cfg").unwrap_err();
        let msg = err.to_string();
        assert!(err.is_config());
        assert!(msg.contains("run.cfg:2") && msg.contains("replicates"), "{msg}");
        let err = ExperimentConfig::from_text("bogus.key = 1", "f").unwrap_err().to_string();
        assert!(err.contains("f:1") && err.contains("bogus.key"), "{err}");
        let err = ExperimentConfig::from_text("no equals sign", "f").unwrap_err().to_string();
        assert!(err.contains("f:1"), "{err}");
    }

    #[test]
    fn overrides_apply_after_file() {
        let mut cfg = ExperimentConfig::from_text("replicates = 10\n", "f").unwrap();
        cfg.apply(&[parse_override("replicates=20").unwrap(), parse_override("block.auto=candidates").unwrap()])
            .unwrap();
        assert_eq!(cfg.replicates, 20);
        assert_eq!(cfg.blocks, BlockChoice::Candidates);
        assert!(parse_override("nokey").is_err());
        let e = cfg.apply(&[parse_override("ci.level=x").unwrap()]).unwrap_err().to_string();
        assert!(e.contains("--set ci.level"), "{e}");
    }

    #[test]
    fn validation_rules() {
        let mut cfg = ExperimentConfig { replicates: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.replicates = 5;
        cfg.bootstrap_draws = 50;
        assert!(cfg.validate().is_err());
        cfg.methods = vec![Method::Subsample];
        cfg.validate().unwrap();
        cfg.ci_level = 1.2;
        assert!(cfg.validate().is_err());
        cfg.ci_level = 0.9;
        cfg.blocks = BlockChoice::Fixed(vec![BlockSpec::square(60)]);
        assert!(cfg.validate().is_err());
        cfg.blocks = BlockChoice::Candidates;
        cfg.process.ratios = vec![1.5];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn list_split_respects_nesting() {
        assert_eq!(split_list("a{h=(1,0)}, b, (2,3)"), vec!["a{h=(1,0)}", "b", "(2,3)"]);
        assert_eq!(parse_lag("(2,-1)").unwrap(), (2, -1));
        assert_eq!(parse_size("48").unwrap(), (48, 48));
        assert_eq!(parse_size("30x40").unwrap(), (30, 40));
    }

    #[test]
    fn bandwidth_keys() {
        let cfg = ExperimentConfig::from_text("density.bandwidth1 = 0.5\ndensity.bandwidth2 = 0.7\n", "f").unwrap();
        assert_eq!(cfg.density.bandwidth, Some((0.5, 0.7)));
        let cfg = ExperimentConfig::from_text("density.bandwidth1 = 0.5\ndensity.auto = true\n", "f").unwrap();
        assert_eq!(cfg.density.bandwidth, None);
    }

    #[test]
    fn test_form_key() {
        assert_eq!(ExperimentConfig::default().test_form, TestForm::Spectral);
        let cfg = ExperimentConfig::from_text("test.form = variogram\n", "f").unwrap();
        assert_eq!(cfg.test_form, TestForm::Variogram);
        let err = ExperimentConfig::from_text("test.form = wavelet\n", "f").unwrap_err().to_string();
        assert!(err.contains("test.form"), "{err}");
    }
}
