//! Config-driven batch commands: simulate, estimate, trim-report, benchmark.

mod commands;
mod config;

pub use commands::{
    cmd_benchmark, cmd_estimate, cmd_simulate, cmd_trim_report, EstimateReport, Meta, RunOutcome,
    BALANCE_FILE, EFFECTS_FILE, REPORT_FILE, TRIM_FILE,
};
pub use config::{
    BenchmarkConfig, Command, Dgp, DgpFamily, EstimationConfig, InputConfig, LearnerPreset,
    OutputConfig, PolicyConfig, PolicyKindConfig, Precision, RunConfig, SimulateConfig,
    TreatmentRef, WORKERS_ENV,
};

use crate::error::{Error, Result};

/// Worker count: the config value, else the environment variable, else
/// rayon's default.
pub fn worker_count(cfg: &RunConfig) -> Result<Option<usize>> {
    if let Some(w) = cfg.workers {
        return Ok(Some(w));
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(Some(w)),
            _ => Err(Error::Config(format!(
                "{WORKERS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}

/// Validate, create the output directory and run one command on a
/// dedicated thread pool.
pub fn run(cfg: &RunConfig, cmd: Command) -> Result<RunOutcome> {
    cfg.validate(cmd)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = worker_count(cfg)? {
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cmd {
        Command::Simulate => cmd_simulate(cfg),
        Command::Estimate => cmd_estimate(cfg),
        Command::TrimReport => cmd_trim_report(cfg),
        Command::Benchmark => cmd_benchmark(cfg),
    })
}

/// Machine-readable error document.
pub fn error_json(err: &Error) -> String {
    serde_json::json!({
        "error": {
            "kind": err.kind(),
            "message": err.to_string(),
        }
    })
    .to_string()
}

/// A report with its `meta.timestamp` removed, for comparing runs.
pub fn strip_timestamp(report: &str) -> Result<serde_json::Value> {
    let mut v: serde_json::Value = serde_json::from_str(report)?;
    if let Some(m) = v.get_mut("meta").and_then(|m| m.as_object_mut()) {
        m.remove("timestamp");
    }
    Ok(v)
}
