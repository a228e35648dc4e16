use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{Command, Dgp, InputConfig, Precision, RunConfig};
use crate::data::{load_csv, save_csv, PanelDataset, Policy};
use crate::error::{Error, Result};
use crate::estimands::{effects_table, EffectReport};
use crate::learners::make_fold_plan;
use crate::nuisance::estimate_nuisances;
use crate::pipeline::{estimate_effects, PolicyDiagnostics};
use crate::scalar::Real;
use crate::simulator::{benchmark, BenchmarkSpec, BenchmarkTable, StructuralDgp};
use crate::trimming::{overlap_summary, union_trim, OverlapSummary, TrimReport};

pub const REPORT_FILE: &str = "report.json";
pub const EFFECTS_FILE: &str = "effects.txt";
pub const TRIM_FILE: &str = "trim.json";
pub const BALANCE_FILE: &str = "balance.csv";

/// Run metadata. `timestamp` is the only field that changes between
/// identical runs.
#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub timestamp: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_input: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_used: Option<usize>,
}

impl Meta {
    fn new(cmd: Command, cfg: &RunConfig) -> Self {
        Meta {
            tool: "seqdml",
            version: env!("CARGO_PKG_VERSION"),
            command: cmd.name(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            seed: cfg.seed,
            method: None,
            folds: None,
            input: None,
            n_input: None,
            n_used: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport<T> {
    pub meta: Meta,
    pub policies: Vec<Policy>,
    pub effects: Vec<EffectReport<T>>,
    pub trim: Option<TrimReport<T>>,
    pub diagnostics: Vec<PolicyDiagnostics>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PolicyOverlap {
    pub policy: String,
    pub p1: OverlapSummary,
    pub p2: OverlapSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrimReportFile<T> {
    pub meta: Meta,
    pub policies: Vec<Policy>,
    pub trim: TrimReport<T>,
    pub overlap: Vec<PolicyOverlap>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PolicyTruth {
    pub policy: String,
    pub group: Option<String>,
    pub value: f64,
    /// Monte-Carlo standard error; absent for exact values.
    pub mc_se: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateReport {
    pub meta: Meta,
    pub family: String,
    pub n: usize,
    pub file: String,
    pub truths: Vec<PolicyTruth>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkReport {
    pub meta: Meta,
    pub policies: Vec<Policy>,
    pub table: BenchmarkTable,
}

/// What a command produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// Human-readable summary for the terminal.
    pub summary: String,
}

pub(crate) fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn load<T: Real>(cfg: &RunConfig) -> Result<(PanelDataset<T>, Vec<Policy>, String)> {
    let schema = cfg.schema()?;
    let path = &cfg.input.as_ref().expect("validated").path;
    let ds = load_csv::<T>(path, &schema)?;
    let policies = cfg.resolve_policies(&ds)?;
    let name = path.file_name().map_or_else(
        || path.display().to_string(),
        |f| f.to_string_lossy().into_owned(),
    );
    Ok((ds, policies, name))
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<RunOutcome> {
    match cfg.estimation.precision {
        Precision::F64 => estimate_as::<f64>(cfg),
        Precision::F32 => estimate_as::<f32>(cfg),
    }
}

fn estimate_as<T: Real>(cfg: &RunConfig) -> Result<RunOutcome> {
    let (ds, policies, input) = load::<T>(cfg)?;
    let settings = cfg.estimation.settings(cfg.seed);
    let est = estimate_effects(&ds, &policies, &settings)?;
    let out = &cfg.output_dir;
    let mut files = Vec::new();

    let mut meta = Meta::new(Command::Estimate, cfg);
    meta.method = Some(
        serde_json::to_value(settings.method)?
            .as_str()
            .unwrap_or_default()
            .to_string(),
    );
    meta.folds = Some(settings.folds);
    meta.input = Some(input);
    meta.n_input = Some(ds.n());
    meta.n_used = Some(est.scores.first().map_or(ds.n(), |s| s.n()));

    let table = effects_table(&est.effects);
    let report = EstimateReport {
        meta,
        policies: policies.clone(),
        effects: est.effects.clone(),
        trim: est.trim.clone(),
        diagnostics: est.diagnostics.clone(),
    };
    let p = out.join(REPORT_FILE);
    write_json(&p, &report)?;
    files.push(p);
    let p = out.join(EFFECTS_FILE);
    write_text(&p, &table)?;
    files.push(p);
    if let Some(t) = &est.trim {
        let p = out.join(TRIM_FILE);
        write_json(&p, t)?;
        files.push(p);
        let p = out.join(BALANCE_FILE);
        t.save_balance_csv(&p)?;
        files.push(p);
    }
    if cfg.output.dump_nuisances {
        for n in &est.nuisances {
            let p = out.join(format!("nuisances_{}.csv", file_safe(&n.policy.name)));
            n.save_csv(&p)?;
            files.push(p);
        }
    }
    if cfg.output.dump_scores {
        for s in &est.scores {
            let p = out.join(format!("scores_{}.csv", file_safe(&s.policy.name)));
            s.save_csv(&p)?;
            files.push(p);
        }
    }
    Ok(RunOutcome {
        files,
        summary: table,
    })
}

pub fn cmd_trim_report(cfg: &RunConfig) -> Result<RunOutcome> {
    match cfg.estimation.precision {
        Precision::F64 => trim_as::<f64>(cfg),
        Precision::F32 => trim_as::<f32>(cfg),
    }
}

fn trim_as<T: Real>(cfg: &RunConfig) -> Result<RunOutcome> {
    let (ds, policies, input) = load::<T>(cfg)?;
    crate::pipeline::check_policies(&ds, &policies)?;
    let s = cfg.estimation.settings(cfg.seed);
    let plan = make_fold_plan(ds.n(), s.folds, s.seed)?;
    let method = s.method.nuisance_method();
    let nuis = policies
        .iter()
        .map(|p| estimate_nuisances(&ds, p, &plan, &s.nuisance, method))
        .collect::<Result<Vec<_>>>()?;
    let trim = union_trim(&ds, &nuis, s.trim)?;
    let overlap = nuis
        .iter()
        .map(|n| -> Result<PolicyOverlap> {
            let f = crate::data::follow_indicators(&ds, &n.policy)?;
            let first = if n.method == crate::nuisance::NuisanceMethod::StaticConf {
                &f.i12
            } else {
                &f.i1
            };
            Ok(PolicyOverlap {
                policy: n.policy.name.clone(),
                p1: overlap_summary(&n.p1_hat, first),
                p2: overlap_summary(&n.p2_hat, &f.i12),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = Meta::new(Command::TrimReport, cfg);
    meta.method = Some(
        serde_json::to_value(s.method)?
            .as_str()
            .unwrap_or_default()
            .to_string(),
    );
    meta.folds = Some(s.folds);
    meta.input = Some(input);
    meta.n_input = Some(ds.n());
    meta.n_used = Some(ds.n() - trim.drop_count);
    let summary = format!(
        "dropped {} of {} units ({:.2}%)\n",
        trim.drop_count,
        trim.n,
        100.0 * trim.drop_share
    );
    let file = TrimReportFile {
        meta,
        policies,
        trim,
        overlap,
    };
    let out = &cfg.output_dir;
    let p = out.join(TRIM_FILE);
    write_json(&p, &file)?;
    let b = out.join(BALANCE_FILE);
    file.trim.save_balance_csv(&b)?;
    Ok(RunOutcome {
        files: vec![p, b],
        summary,
    })
}

fn truths<D: StructuralDgp>(
    dgp: &D,
    policies: &[Policy],
    groups: &[String],
    draws: usize,
    seed: u64,
) -> Result<Vec<PolicyTruth>> {
    let mut out = Vec::new();
    for (k, p) in policies.iter().enumerate() {
        let (value, mc_se) = match dgp.oracle_apo_exact(p) {
            Some(v) => (v?, None),
            None => {
                let t = dgp.oracle_apo_mc(p, draws, seed.wrapping_add(k as u64))?;
                (t.value, Some(t.se))
            }
        };
        out.push(PolicyTruth {
            policy: p.name.clone(),
            group: None,
            value,
            mc_se,
        });
        for g in groups {
            if let Some(v) = dgp.group_truth(p, g) {
                out.push(PolicyTruth {
                    policy: p.name.clone(),
                    group: Some(g.clone()),
                    value: v?,
                    mc_se: None,
                });
            }
        }
    }
    Ok(out)
}

fn simulate_with<D: StructuralDgp>(dgp: &D, family: &str, cfg: &RunConfig) -> Result<RunOutcome> {
    let n = dgp.default_n();
    let s = dgp.sample(n, cfg.seed)?;
    let out = &cfg.output_dir;
    let file = cfg.simulate.file.clone();
    let csv = out.join(&file);
    save_csv(&s.data, &csv)?;
    let input = InputConfig {
        path: PathBuf::from(&file),
        schema: s.data.csv_schema(),
    };
    let schema_path = out.join("schema.toml");
    #[derive(Serialize)]
    struct SchemaFile {
        input: InputConfig,
    }
    let text = toml::to_string(&SchemaFile { input }).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&schema_path, &text)?;

    let policies = cfg.numeric_policies(s.data.n_treatments1(), s.data.n_treatments2())?;
    for p in &policies {
        p.validate(&s.data)?;
    }
    let groups: Vec<String> = s.data.z0().map(|z| z.labels().to_vec()).unwrap_or_default();
    let report = SimulateReport {
        meta: Meta::new(Command::Simulate, cfg),
        family: family.into(),
        n,
        file,
        truths: truths(dgp, &policies, &groups, cfg.simulate.oracle_draws, cfg.seed)?,
    };
    let rp = out.join("simulate.json");
    write_json(&rp, &report)?;
    let mut summary = format!("wrote {n} units to {}\n", csv.display());
    for t in &report.truths {
        summary.push_str(&format!(
            "truth {}{}: {:.6}\n",
            t.policy,
            t.group
                .as_ref()
                .map_or(String::new(), |g| format!(" [{g}]")),
            t.value
        ));
    }
    Ok(RunOutcome {
        files: vec![csv, schema_path, rp],
        summary,
    })
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<RunOutcome> {
    match cfg.simulate.build()? {
        Dgp::Continuous(c) => simulate_with(&c, "continuous", cfg),
        Dgp::Enumerable(c) => simulate_with(&c, "enumerable", cfg),
    }
}

fn benchmark_with<D: StructuralDgp>(dgp: &D, cfg: &RunConfig) -> Result<RunOutcome> {
    let probe = dgp.sample(2, 0)?;
    let policies = cfg.numeric_policies(probe.data.n_treatments1(), probe.data.n_treatments2())?;
    let spec = BenchmarkSpec {
        n: cfg.benchmark.n,
        seeds: cfg.benchmark.seeds,
        base_seed: cfg.seed,
        policies: policies.clone(),
        estimators: cfg.benchmark.estimators.clone(),
        settings: cfg.estimation.settings(cfg.seed),
        oracle_draws: cfg.benchmark.oracle_draws,
    };
    let table = benchmark(dgp, &spec)?;
    let out = &cfg.output_dir;
    let csv = out.join("benchmark.csv");
    table.save_csv(&csv)?;
    let mut summary = String::new();
    for r in table.rows.iter().filter(|r| r.group.is_none()) {
        summary.push_str(&format!(
            "{:<12} {:<8?} {:<16} bias {:>9.4} rmse {:>8.4} coverage {}\n",
            r.estimator.name(),
            r.estimand,
            match &r.versus {
                Some(v) => format!("{}-{}", r.policy, v),
                None => r.policy.clone(),
            },
            r.bias,
            r.rmse,
            r.coverage.map_or("-".to_string(), |c| format!("{c:.2}"))
        ));
    }
    let json = out.join("benchmark.json");
    write_json(
        &json,
        &BenchmarkReport {
            meta: Meta::new(Command::Benchmark, cfg),
            policies,
            table,
        },
    )?;
    Ok(RunOutcome {
        files: vec![json, csv],
        summary,
    })
}

pub fn cmd_benchmark(cfg: &RunConfig) -> Result<RunOutcome> {
    match cfg.simulate.build()? {
        Dgp::Continuous(c) => benchmark_with(&c, cfg),
        Dgp::Enumerable(c) => benchmark_with(&c, cfg),
    }
}
