//! Monte Carlo drivers for coverage and isotropy experiments.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BlockChoice, ExperimentConfig, ProcessConfig};
use super::report::{summarize, ExperimentKind, ExperimentReport, ReplicateRecord, SCHEMA_VERSION};
use crate::bootstrap::{hybridize, BootstrapDraws, BootstrapKind};
use crate::error::{Error, Result};
use crate::infer::{
    confidence_interval, p_value_from, subsample_confidence_interval, variogram_hybrid_inputs, FieldAnalysis, Method,
    TestForm, VariogramContrast,
};
use crate::lattice::{periodogram, LatticeField};
use crate::rng::SeedSequence;
use crate::simulate::Simulator;
use crate::spectral::{spectral_mean, PsiFunction, PsiSpec};
use crate::stats::{mean, sample_variance};
use crate::subsample::{block_size_profile, default_block_candidates, min_volatility_index, BlockSpec};

/// Stream tags under a replicate's seed path.
const FIELD_STREAM: u64 = 0;
const BOOT_STREAM: u64 = 1;

/// A block cell: its label and either a fixed block or a per-replicate rule.
#[derive(Clone, Debug)]
enum BlockCell {
    Fixed(BlockSpec),
    MinVol { candidates: Vec<BlockSpec>, window: usize },
}

impl BlockCell {
    fn label(&self) -> String {
        match self {
            BlockCell::Fixed(b) => format!("{}x{}", b.b1, b.b2),
            BlockCell::MinVol { .. } => "minvol".into(),
        }
    }
}

fn block_cells(choice: &BlockChoice, n1: usize, n2: usize) -> Result<Vec<BlockCell>> {
    Ok(match choice {
        BlockChoice::Fixed(blocks) => blocks.iter().map(|&b| BlockCell::Fixed(b)).collect(),
        BlockChoice::Candidates => default_block_candidates(n1, n2).into_iter().map(BlockCell::Fixed).collect(),
        BlockChoice::MinVol { window } => {
            let candidates = default_block_candidates(n1, n2);
            if candidates.len() < *window {
                return Err(Error::config(
                    "key `block.window`",
                    format!("grid {n1}x{n2} has {} candidate blocks, fewer than the window {window}", candidates.len()),
                ));
            }
            vec![BlockCell::MinVol { candidates, window: *window }]
        }
    })
}

fn resolve_block(cell: &BlockCell, field: &LatticeField, psi: &PsiFunction) -> Result<BlockSpec> {
    match cell {
        BlockCell::Fixed(b) => Ok(*b),
        BlockCell::MinVol { candidates, window } => {
            let sigmas = block_size_profile(field, psi, candidates)?;
            Ok(candidates[min_volatility_index(&sigmas, *window)?])
        }
    }
}

/// What a replicate computes for one method and block.
enum Outcome {
    Interval { lower: f64, upper: f64 },
    Test { ts: f64, p_value: f64 },
}

/// Shared per-cell inputs.
struct Cell<'a> {
    cfg: &'a ExperimentConfig,
    kind: ExperimentKind,
    psi: PsiFunction,
    truth: Option<f64>,
    sim: Simulator,
    blocks: Vec<BlockCell>,
    n: (usize, usize),
    ratio: f64,
    seq: SeedSequence,
}

impl Cell<'_> {
    fn replicate(&self, r: usize) -> Result<Vec<ReplicateRecord>> {
        let cfg = self.cfg;
        let rep_seq = self.seq.child(r as u64);
        let field = self.sim.sample(&mut rep_seq.child(FIELD_STREAM).rng());
        let base = FieldAnalysis::new(&field, &self.psi, None, &cfg.density)?;
        let needs_blocks = cfg.methods.iter().any(|m| m.needs_blocks());
        let fdwb = if cfg.uses_bootstrap() {
            Some(base.draws(BootstrapKind::Fdwb, cfg.bootstrap_draws, &rep_seq.child(BOOT_STREAM))?)
        } else {
            None
        };
        let mut out = Vec::with_capacity(self.blocks.len() * cfg.methods.len());
        for cell in &self.blocks {
            let spec = resolve_block(cell, &field, &self.psi)?;
            let analysis = if needs_blocks { base.with_blocks(&field, spec)? } else { base.clone() };
            let contrast = if self.kind == ExperimentKind::Isotropy && cfg.test_form == TestForm::Variogram {
                Some(VariogramContrast::new(&field, cfg.h1, cfg.h2, needs_blocks.then_some(spec))?)
            } else {
                None
            };
            let contrast = contrast.as_ref();
            for &method in &cfg.methods {
                let draws = match method.bootstrap_kind() {
                    Some(kind) => {
                        Some(self.draws_for(fdwb.as_ref().expect("bootstrap draws"), kind, &analysis, contrast)?)
                    }
                    None => None,
                };
                let outcome = self.outcome(&analysis, contrast, draws.as_ref())?;
                out.push(self.record(method, cell, spec, r, &analysis, contrast, draws.as_ref(), outcome)?);
            }
        }
        Ok(out)
    }

    fn draws_for(
        &self,
        base: &BootstrapDraws,
        kind: BootstrapKind,
        analysis: &FieldAnalysis,
        contrast: Option<&VariogramContrast>,
    ) -> Result<BootstrapDraws> {
        if !kind.is_hybrid() {
            return Ok(base.clone());
        }
        let h = match contrast {
            Some(c) => variogram_hybrid_inputs(analysis, c)?,
            None => analysis.hybrid_inputs().expect("hybrid methods run with blocks"),
        };
        hybridize(base, kind, h)
    }

    fn outcome(
        &self,
        a: &FieldAnalysis,
        contrast: Option<&VariogramContrast>,
        draws: Option<&BootstrapDraws>,
    ) -> Result<Outcome> {
        Ok(match self.kind {
            ExperimentKind::Coverage => {
                let ci = match draws {
                    Some(d) => confidence_interval(&a.mhat, d, self.cfg.ci_level)?,
                    None => subsample_confidence_interval(&a.mhat, a.ensemble()?, self.cfg.ci_level)?,
                };
                Outcome::Interval { lower: ci.lower, upper: ci.upper }
            }
            ExperimentKind::Isotropy => {
                let ts = contrast.map_or_else(|| a.test_statistic(), |c| c.test_statistic());
                let roots = match (draws, contrast) {
                    (Some(_), _) => None,
                    (None, Some(c)) => Some(c.centered_roots()?),
                    (None, None) => Some(a.ensemble()?.centered_roots()),
                };
                let p_value = match (draws, roots) {
                    (Some(d), _) => p_value_from(&d.values, ts, self.cfg.plus_one),
                    (None, Some(roots)) => {
                        if roots.len() < 2 {
                            return Err(Error::TooFewValues { required: 2, got: roots.len() });
                        }
                        p_value_from(&roots, ts, self.cfg.plus_one)
                    }
                    (None, None) => unreachable!(),
                };
                Outcome::Test { ts, p_value }
            }
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        method: Method,
        cell: &BlockCell,
        spec: BlockSpec,
        r: usize,
        a: &FieldAnalysis,
        contrast: Option<&VariogramContrast>,
        draws: Option<&BootstrapDraws>,
        outcome: Outcome,
    ) -> Result<ReplicateRecord> {
        let mut v = a.variances;
        if let (Some(v), Some(c)) = (v.as_mut(), contrast) {
            v.sigma_sq_hat = c.sigma_sq()?;
            v.sigma2_sq_hat = v.sigma_sq_hat - v.sigma1_sq_hat;
            v.floored_sigma2 = v.sigma2_sq_hat.max(0.0);
        }
        let mut rec = ReplicateRecord {
            method,
            n1: self.n.0,
            n2: self.n.1,
            block: cell.label(),
            b1: spec.b1,
            b2: spec.b2,
            ratio: self.ratio,
            replicate: r,
            mhat: a.mhat.value,
            truth: self.truth,
            lower: None,
            upper: None,
            covered: None,
            ts: None,
            p_value: None,
            rejected: None,
            sigma_sq_hat: v.map(|v| v.sigma_sq_hat),
            sigma1_sq_hat: v.map(|v| v.sigma1_sq_hat),
            sigma2_sq_hat: v.map(|v| v.sigma2_sq_hat),
            var_star: draws.map(|d| d.var_star),
        };
        match outcome {
            Outcome::Interval { lower, upper } => {
                let truth = self.truth.unwrap_or(0.0);
                rec.lower = Some(lower);
                rec.upper = Some(upper);
                rec.covered = Some(lower <= truth && truth <= upper);
            }
            Outcome::Test { ts, p_value } => {
                rec.ts = Some(ts);
                rec.p_value = Some(p_value);
                rec.rejected = Some(p_value <= self.cfg.test_level);
            }
        }
        Ok(rec)
    }
}

/// Run `f` on a pool of `workers` threads (or the global pool).
fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::config("workers", e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn run(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<ExperimentReport> {
    cfg.validate()?;
    let psi_spec = match kind {
        ExperimentKind::Coverage => cfg.psi.clone(),
        ExperimentKind::Isotropy => PsiSpec::IsoContrast(cfg.h1, cfg.h2),
    };
    if kind == ExperimentKind::Isotropy && cfg.h1.0.pow(2) + cfg.h1.1.pow(2) != cfg.h2.0.pow(2) + cfg.h2.1.pow(2) {
        log::warn!("lags {:?} and {:?} differ in norm; the isotropy null is not meaningful", cfg.h1, cfg.h2);
    }
    let psi = psi_spec.build()?;
    let fixture = cfg.truth_fixture.as_deref().map(read_fixture).transpose()?;
    let root = SeedSequence::new(cfg.seed);
    let mut records = Vec::new();
    for (gi, &(n1, n2)) in cfg.grid_sizes.iter().enumerate() {
        for (ri, &ratio) in cfg.process.ratios.iter().enumerate() {
            let truth = match kind {
                ExperimentKind::Coverage => Some(coverage_truth(cfg, &psi_spec, ratio, fixture.as_ref())?),
                ExperimentKind::Isotropy => None,
            };
            let cell = Cell {
                cfg,
                kind,
                psi: psi.clone(),
                truth,
                sim: cfg.process.simulator(ratio, n1, n2)?,
                blocks: block_cells(&cfg.blocks, n1, n2)?,
                n: (n1, n2),
                ratio,
                seq: root.path(&[gi as u64, ri as u64]),
            };
            log::info!("{} cell {n1}x{n2} ratio {ratio}: {} replicates", kind.as_str(), cfg.replicates);
            let per_rep: Vec<Vec<ReplicateRecord>> = with_workers(cfg.workers, || {
                (0..cfg.replicates).into_par_iter().map(|r| cell.replicate(r)).collect::<Result<Vec<_>>>()
            })??;
            records.extend(per_rep.into_iter().flatten());
        }
    }
    // Order records by cell, then replicate, so the file reads cell by cell.
    records.sort_by_cached_key(|rec| (cell_order(cfg, rec), rec.replicate));
    let mut config = cfg.clone();
    config.workers = None;
    Ok(ExperimentReport { schema_version: SCHEMA_VERSION, kind, config, summary: summarize(&records), replicates: records })
}

/// Position of a record's (grid, ratio, block, method) cell in the
/// configured order; blocks keep their first-appearance order per grid.
fn cell_order(cfg: &ExperimentConfig, rec: &ReplicateRecord) -> (usize, usize, usize, usize) {
    let g = cfg.grid_sizes.iter().position(|&n| n == (rec.n1, rec.n2)).unwrap_or(usize::MAX);
    let r = cfg.process.ratios.iter().position(|&x| x == rec.ratio).unwrap_or(usize::MAX);
    let b = block_cells(&cfg.blocks, rec.n1, rec.n2)
        .ok()
        .and_then(|cells| cells.iter().position(|c| c.label() == rec.block))
        .unwrap_or(usize::MAX);
    let m = cfg.methods.iter().position(|&m| m == rec.method).unwrap_or(usize::MAX);
    (g, r, b, m)
}

/// Coverage of `ci.level` intervals for `M(psi)` per method, grid, block
/// and ratio.
pub fn run_coverage_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run(cfg, ExperimentKind::Coverage)
}

/// Rejection rates of the isotropy test at `test.level`.
pub fn run_isotropy_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run(cfg, ExperimentKind::Isotropy)
}

/// Simulated estimate of `M(psi)` written for later coverage runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleFixture {
    pub schema_version: u32,
    pub generated_by: String,
    pub process: ProcessConfig,
    pub ratio: f64,
    pub psi: String,
    pub value: f64,
    pub std_error: f64,
    pub n1: usize,
    pub n2: usize,
    pub replicates: usize,
    pub seed: u64,
}

/// `M(psi)` as the mean of `M_n(psi)` over `oracle.replicates` fields of
/// size `oracle.grid`, for the first configured ratio.
pub fn run_oracle(cfg: &ExperimentConfig) -> Result<OracleFixture> {
    if cfg.oracle_replicates < 2 {
        return Err(Error::config("key `oracle.replicates`", "need at least 2 replicates"));
    }
    let (n1, n2) = cfg.oracle_grid;
    let ratio = cfg.process.ratios[0];
    let sim = cfg.process.simulator(ratio, n1, n2)?;
    let psi = cfg.psi.build()?;
    let root = SeedSequence::new(cfg.seed).child(u64::MAX);
    let values: Vec<f64> = with_workers(cfg.workers, || {
        (0..cfg.oracle_replicates as u64)
            .into_par_iter()
            .map(|r| {
                let field = sim.sample(&mut root.child(r).rng());
                Ok(spectral_mean(&periodogram(&field)?, &psi).value)
            })
            .collect::<Result<Vec<f64>>>()
    })??;
    Ok(OracleFixture {
        schema_version: SCHEMA_VERSION,
        generated_by: format!("fdb oracle {}", env!("CARGO_PKG_VERSION")),
        process: cfg.process.clone(),
        ratio,
        psi: cfg.psi.to_string(),
        value: mean(&values),
        std_error: (sample_variance(&values) / values.len() as f64).sqrt(),
        n1,
        n2,
        replicates: values.len(),
        seed: cfg.seed,
    })
}

pub fn write_fixture(fixture: &OracleFixture, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(fixture)
        .map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })?;
    std::fs::write(path, text + "\n").map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_fixture(path: &Path) -> Result<OracleFixture> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })
}

/// Analytic `M(psi)` where available, else the oracle fixture, which must
/// describe the same process, ratio and psi.
fn coverage_truth(cfg: &ExperimentConfig, psi: &PsiSpec, ratio: f64, fixture: Option<&OracleFixture>) -> Result<f64> {
    if let Some(f) = fixture {
        if f.process != cfg.process || f.ratio != ratio || f.psi != psi.to_string() {
            return Err(Error::config(
                "key `truth.fixture`",
                "fixture was generated for a different process, ratio or psi",
            ));
        }
        return Ok(f.value);
    }
    match cfg.process.covariance_model(ratio)? {
        None => Ok(0.0),
        Some(model) => psi.spectral_mean_truth(&model).map_err(|e| {
            Error::config("key `truth.fixture`", format!("no analytic value of M(psi) ({e}); run `oracle` and set truth.fixture"))
        }),
    }
}
