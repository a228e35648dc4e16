use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seqdml::cli::{error_json, run, Command, DgpFamily, LearnerPreset, RunConfig};
use seqdml::pipeline::EstimatorKind;
use seqdml::trimming::TrimRule;
use seqdml::{Error, Result};

#[derive(Parser)]
#[command(
    name = "seqdml",
    version,
    about = "Two-period policy evaluation with double machine learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a synthetic panel and write it with its schema and true values.
    Simulate(Common),
    /// Estimate policy values and contrasts from a CSV panel.
    Estimate(Common),
    /// Propensity trimming and overlap diagnostics only.
    TrimReport(Common),
    /// Repeat simulation and estimation over many seeds.
    Benchmark(Common),
}

/// Scalar overrides applied on top of the run file.
#[derive(Args)]
struct Common {
    /// TOML run file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: $SEQDML_WORKERS or all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Input CSV, replacing `input.path`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// bhl22, bjz24, static_conf, ipw or gcomp.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    /// forest or parametric.
    #[arg(long)]
    learners: Option<String>,
    /// minmax or off.
    #[arg(long)]
    trim: Option<String>,
    #[arg(long)]
    refit_after_trim: Option<bool>,
    /// Group column for group-level estimands.
    #[arg(long)]
    group: Option<String>,
    /// Simulator family: continuous or enumerable.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    preset: Option<String>,
    /// Simulated sample size.
    #[arg(short, long)]
    n: Option<usize>,
    /// Benchmark replications.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    dump_nuisances: bool,
    #[arg(long)]
    dump_scores: bool,
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, v: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(v.to_string()))
        .map_err(|_| Error::Argument(format!("invalid {what} `{v}`")))
}

fn build_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.workers {
        cfg.workers = Some(v);
    }
    if let Some(v) = &c.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = &c.input {
        match &mut cfg.input {
            Some(inp) => inp.path = v.clone(),
            None => {
                return Err(Error::Config(
                    "--input needs an `input.schema` in the run file".into(),
                ))
            }
        }
    }
    if let Some(v) = &c.method {
        cfg.estimation.method = parse_enum::<EstimatorKind>("method", v)?;
    }
    if let Some(v) = c.folds {
        cfg.estimation.folds = v;
    }
    if let Some(v) = &c.learners {
        cfg.estimation.learners = parse_enum::<LearnerPreset>("learner preset", v)?;
        cfg.estimation.nuisance = None;
    }
    if let Some(v) = &c.trim {
        cfg.estimation.trim = match v.as_str() {
            "minmax" => TrimRule::Minmax,
            "off" => TrimRule::Off,
            _ => return Err(Error::Argument(format!("invalid trim rule `{v}`"))),
        };
    }
    if let Some(v) = c.refit_after_trim {
        cfg.estimation.refit_after_trim = v;
    }
    if let Some(v) = &c.group {
        cfg.group = Some(v.clone());
    }
    if let Some(v) = &c.family {
        cfg.simulate.family = parse_enum::<DgpFamily>("family", v)?;
    }
    if let Some(v) = &c.preset {
        cfg.simulate.preset = Some(v.clone());
    }
    if let Some(v) = c.n {
        cfg.simulate.n = Some(v);
        cfg.benchmark.n = Some(v);
    }
    if let Some(v) = c.seeds {
        cfg.benchmark.seeds = v;
    }
    cfg.output.dump_nuisances |= c.dump_nuisances;
    cfg.output.dump_scores |= c.dump_scores;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match &cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Estimate(c) => (Command::Estimate, c),
        Cmd::TrimReport(c) => (Command::TrimReport, c),
        Cmd::Benchmark(c) => (Command::Benchmark, c),
    };
    match build_config(common).and_then(|cfg| run(&cfg, cmd)) {
        Ok(out) => {
            print!("{}", out.summary);
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(match e {
                Error::Config(_) | Error::Argument(_) | Error::Toml(_) => 2,
                _ => 1,
            })
        }
    }
}
