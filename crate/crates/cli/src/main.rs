use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fdb_core::experiment::{
    emit_report, parse_override, run_coverage_experiment, run_isotropy_experiment, run_oracle, write_fixture,
    BlockChoice, ExperimentConfig, ExperimentReport,
};
use fdb_core::infer::{isotropy_test, FieldAnalysis, TestOptions};
use fdb_core::io::{read_field, write_field};
use fdb_core::subsample::{block_size_profile, default_block_candidates, min_volatility_index, BlockSpec};
use fdb_core::{Error, LatticeField, SeedSequence};

#[derive(Parser)]
#[command(name = "fdb", version, about = "Frequency-domain bootstrap inference for lattice data")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output path: a field file, a report stem or a fixture file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `csv` or `json`.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one field from the configured process.
    Simulate {
        /// Grid size such as `50x50`; defaults to the first `grid.sizes` entry.
        #[arg(long)]
        size: Option<String>,
    },
    /// Spectral mean and subsampling variance components of a field.
    Estimate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Confidence intervals for the spectral mean of a field.
    Ci {
        #[arg(long)]
        input: PathBuf,
    },
    /// Isotropy test of a field, or the Monte Carlo experiment without `--input`.
    Isotropy {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Monte Carlo coverage experiment.
    Coverage,
    /// Long-run estimate of the spectral mean, written as a truth fixture.
    Oracle,
    /// Minimum-volatility block size selection for a field.
    Blocksize {
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_config(g: &Global) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let overrides = g.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    cfg.apply(&overrides)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(w) = g.workers {
        if w == 0 {
            return Err(Error::Config { location: "--workers".into(), message: "must be positive".into() });
        }
        cfg.workers = Some(w);
    }
    if let Some(out) = &g.out {
        cfg.output = Some(out.clone());
    }
    if let Some(f) = &g.format {
        cfg.format = f.parse()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The single block to use for per-field commands.
fn single_block(cfg: &ExperimentConfig, field: &LatticeField) -> Result<BlockSpec, Error> {
    let psi = cfg.psi.build()?;
    match &cfg.blocks {
        BlockChoice::Fixed(blocks) => Ok(blocks[0]),
        BlockChoice::Candidates => Ok(BlockSpec::square(((field.len() as f64).powf(0.25).ceil() as usize).max(2))),
        BlockChoice::MinVol { window } => {
            let candidates = default_block_candidates(field.n1(), field.n2());
            let sigmas = block_size_profile(field, &psi, &candidates)?;
            Ok(candidates[min_volatility_index(&sigmas, *window)?])
        }
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serialisable"));
}

fn finish_report(cfg: &ExperimentConfig, report: &ExperimentReport) -> Result<(), Error> {
    match &cfg.output {
        Some(stem) => {
            let (s, r) = emit_report(report, stem, cfg.format)?;
            eprintln!("wrote {} and {}", s.display(), r.display());
        }
        None => {
            println!("method,n1,n2,block,ratio,replicates,proportion,std_error");
            for r in &report.summary {
                println!(
                    "{},{},{},{},{},{},{:.4},{:.4}",
                    r.method, r.n1, r.n2, r.block, r.ratio, r.replicates, r.proportion, r.std_error
                );
            }
        }
    }
    Ok(())
}

fn parse_size(text: &str) -> Result<(usize, usize), Error> {
    let bad = || Error::Config { location: "--size".into(), message: format!("expected NxM, got `{text}`") };
    let (a, b) = text.split_once('x').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Simulate { size } => {
            let (n1, n2) = match size {
                Some(s) => parse_size(&s)?,
                None => cfg.grid_sizes[0],
            };
            let sim = cfg.process.simulator(cfg.process.ratios[0], n1, n2)?;
            let field = sim.sample(&mut SeedSequence::new(cfg.seed).rng());
            let out = cfg.output.clone().ok_or_else(|| Error::Config {
                location: "--out".into(),
                message: "simulate needs an output file".into(),
            })?;
            write_field(&field, &out)?;
            eprintln!("wrote {n1}x{n2} field to {}", out.display());
        }
        Command::Estimate { input } => {
            let field = read_field(&input)?;
            let psi = cfg.psi.build()?;
            let spec = single_block(&cfg, &field)?;
            let a = FieldAnalysis::new(&field, &psi, Some(spec), &cfg.density)?;
            let v = a.variances.expect("blocks requested");
            let var_star = fdb_core::bootstrap::fdwb_variance(&a.fhat, &psi);
            print_json(&json!({
                "psi": cfg.psi.to_string(),
                "n1": field.n1(),
                "n2": field.n2(),
                "mhat": a.mhat.value,
                "block": [spec.b1, spec.b2],
                "sigma_sq_hat": v.sigma_sq_hat,
                "sigma1_sq_hat": v.sigma1_sq_hat,
                "sigma2_sq_hat": v.sigma2_sq_hat,
                "floored_sigma2": v.floored_sigma2,
                "bias": a.bias,
                "var_star": var_star,
                "bandwidth": a.fhat.bandwidth(),
            }));
        }
        Command::Ci { input } => {
            let field = read_field(&input)?;
            let psi = cfg.psi.build()?;
            let spec = single_block(&cfg, &field)?;
            let a = FieldAnalysis::new(&field, &psi, Some(spec), &cfg.density)?;
            let seq = SeedSequence::new(cfg.seed);
            let mut intervals = Vec::new();
            for &m in &cfg.methods {
                let ci = a.confidence_interval(m, cfg.bootstrap_draws, &seq, cfg.ci_level)?;
                intervals.push(json!({"method": m, "lower": ci.lower, "upper": ci.upper, "level": ci.level}));
            }
            print_json(&json!({
                "psi": cfg.psi.to_string(),
                "mhat": a.mhat.value,
                "block": [spec.b1, spec.b2],
                "intervals": intervals,
            }));
        }
        Command::Isotropy { input: Some(input) } => {
            let field = read_field(&input)?;
            let spec = single_block(&cfg, &field)?;
            let opts = TestOptions { density: cfg.density, plus_one: cfg.plus_one, form: cfg.test_form };
            let seq = SeedSequence::new(cfg.seed);
            let mut results = Vec::new();
            for &m in &cfg.methods {
                let r = isotropy_test(&field, cfg.h1, cfg.h2, m, spec, cfg.bootstrap_draws, &seq, &opts)?;
                results.push(json!({
                    "method": m,
                    "contrast": r.contrast,
                    "ts": r.ts,
                    "p_value": r.p_value,
                    "reject": r.rejects(cfg.test_level),
                }));
            }
            print_json(&json!({
                "h1": cfg.h1,
                "h2": cfg.h2,
                "level": cfg.test_level,
                "form": cfg.test_form.as_str(),
                "block": [spec.b1, spec.b2],
                "results": results,
            }));
        }
        Command::Isotropy { input: None } => finish_report(&cfg, &run_isotropy_experiment(&cfg)?)?,
        Command::Coverage => finish_report(&cfg, &run_coverage_experiment(&cfg)?)?,
        Command::Oracle => {
            let fixture = run_oracle(&cfg)?;
            match &cfg.output {
                Some(path) => {
                    write_fixture(&fixture, path)?;
                    eprintln!("wrote {}", path.display());
                }
                None => print_json(&serde_json::to_value(&fixture).expect("serialisable")),
            }
        }
        Command::Blocksize { input } => {
            let field = read_field(&input)?;
            let psi = cfg.psi.build()?;
            let window = match cfg.blocks {
                BlockChoice::MinVol { window } => window,
                _ => 3,
            };
            let candidates = default_block_candidates(field.n1(), field.n2());
            let sigmas = block_size_profile(&field, &psi, &candidates)?;
            let chosen = candidates[min_volatility_index(&sigmas, window)?];
            let profile: Vec<_> =
                candidates.iter().zip(&sigmas).map(|(b, s)| json!({"b1": b.b1, "b2": b.b2, "sigma_hat": s})).collect();
            print_json(&json!({"window": window, "profile": profile, "selected": [chosen.b1, chosen.b2]}));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let config_like = e.is_config() || matches!(e, Error::Io { .. } | Error::Format { .. });
            ExitCode::from(if config_like { 2 } else { 3 })
        }
    }
}
