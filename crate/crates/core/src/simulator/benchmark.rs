use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{StructuralDgp, DEFAULT_ORACLE_DRAWS};
use crate::data::Policy;
use crate::error::{Error, Result};
use crate::estimands::{EffectReport, EstimandKind, Z95};
use crate::pipeline::{estimate_effects, score_effects, EstimationSettings, EstimatorKind};
use crate::scores::dynamic_score;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchEstimator {
    Bhl22,
    Bjz24,
    StaticConf,
    Ipw,
    Gcomp,
    /// Dynamic score evaluated at the true nuisance functions.
    Oracle,
}

impl BenchEstimator {
    pub fn name(self) -> &'static str {
        match self {
            BenchEstimator::Bhl22 => "bhl22",
            BenchEstimator::Bjz24 => "bjz24",
            BenchEstimator::StaticConf => "static_conf",
            BenchEstimator::Ipw => "ipw",
            BenchEstimator::Gcomp => "gcomp",
            BenchEstimator::Oracle => "oracle",
        }
    }

    fn kind(self) -> Option<EstimatorKind> {
        match self {
            BenchEstimator::Bhl22 => Some(EstimatorKind::Bhl22),
            BenchEstimator::Bjz24 => Some(EstimatorKind::Bjz24),
            BenchEstimator::StaticConf => Some(EstimatorKind::StaticConf),
            BenchEstimator::Ipw => Some(EstimatorKind::Ipw),
            BenchEstimator::Gcomp => Some(EstimatorKind::Gcomp),
            BenchEstimator::Oracle => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    /// Sample size per replication; the DGP default when absent.
    pub n: Option<usize>,
    pub seeds: usize,
    pub base_seed: u64,
    pub policies: Vec<Policy>,
    pub estimators: Vec<BenchEstimator>,
    /// Shared estimation settings; `method` and `seed` are set per run.
    pub settings: EstimationSettings,
    pub oracle_draws: usize,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            n: None,
            seeds: 100,
            base_seed: 0,
            policies: Vec::new(),
            estimators: vec![BenchEstimator::Bhl22, BenchEstimator::Bjz24],
            settings: EstimationSettings::default(),
            oracle_draws: DEFAULT_ORACLE_DRAWS,
        }
    }
}

/// Effects from one estimator on one simulated sample.
#[derive(Clone, Debug)]
pub struct Replication {
    pub seed: u64,
    pub estimator: BenchEstimator,
    pub effects: Vec<EffectReport<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub estimator: BenchEstimator,
    pub estimand: EstimandKind,
    pub policy: String,
    pub versus: Option<String>,
    pub group: Option<String>,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Monte-Carlo standard error of `bias`.
    pub bias_mc_se: f64,
    pub rmse: f64,
    pub mean_se: Option<f64>,
    pub sd_estimate: f64,
    /// Mean reported SE over the spread of the estimates.
    pub se_calibration: Option<f64>,
    /// Share of 95% intervals covering the truth.
    pub coverage: Option<f64>,
    pub n_seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub n: usize,
    pub seeds: usize,
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkTable {
    pub fn row(
        &self,
        estimator: BenchEstimator,
        estimand: EstimandKind,
        policy: &str,
        versus: Option<&str>,
    ) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| {
            r.estimator == estimator
                && r.estimand == estimand
                && r.policy == policy
                && r.versus.as_deref() == versus
                && r.group.is_none()
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "estimator",
            "estimand",
            "policy",
            "versus",
            "group",
            "truth",
            "mean_estimate",
            "bias",
            "bias_mc_se",
            "rmse",
            "mean_se",
            "sd_estimate",
            "se_calibration",
            "coverage",
            "n_seeds",
        ])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.rows {
            w.write_record([
                r.estimator.name().to_string(),
                serde_json::to_value(r.estimand)?
                    .as_str()
                    .unwrap_or_default()
                    .to_string(),
                r.policy.clone(),
                r.versus.clone().unwrap_or_default(),
                r.group.clone().unwrap_or_default(),
                r.truth.to_string(),
                r.mean_estimate.to_string(),
                r.bias.to_string(),
                r.bias_mc_se.to_string(),
                r.rmse.to_string(),
                opt(r.mean_se),
                r.sd_estimate.to_string(),
                opt(r.se_calibration),
                opt(r.coverage),
                r.n_seeds.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<benchmark table>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.write_csv(std::fs::File::create(path).map_err(|e| Error::io(path, e))?)
    }
}

fn one_run<D: StructuralDgp>(
    dgp: &D,
    spec: &BenchmarkSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<Replication>> {
    let sample = dgp.sample(n, seed)?;
    let mut out = Vec::new();
    for &est in &spec.estimators {
        let policies: Vec<Policy> = if est == BenchEstimator::StaticConf {
            spec.policies
                .iter()
                .filter(|p| p.is_static())
                .cloned()
                .collect()
        } else {
            spec.policies.clone()
        };
        if policies.is_empty() {
            continue;
        }
        let effects = match est.kind() {
            Some(kind) => {
                let mut s = spec.settings.clone();
                s.method = kind;
                s.seed = seed;
                estimate_effects(&sample.data, &policies, &s)?.effects
            }
            None => {
                let scores = policies
                    .iter()
                    .map(|p| dynamic_score(&sample.data, p, &dgp.true_nuisances(&sample, p)?))
                    .collect::<Result<Vec<_>>>()?;
                score_effects(&sample.data, &scores)?
            }
        };
        out.push(Replication {
            seed,
            estimator: est,
            effects,
        });
    }
    Ok(out)
}

/// Simulate `spec.seeds` samples in parallel and run every estimator on each.
pub fn run_replications<D: StructuralDgp>(
    dgp: &D,
    spec: &BenchmarkSpec,
) -> Result<Vec<Replication>> {
    if spec.seeds == 0 {
        return Err(Error::Config("benchmark needs at least one seed".into()));
    }
    if spec.policies.is_empty() {
        return Err(Error::Config("policy list is empty".into()));
    }
    let n = spec.n.unwrap_or_else(|| dgp.default_n());
    let runs = (0..spec.seeds as u64)
        .into_par_iter()
        .map(|r| one_run(dgp, spec, n, spec.base_seed.wrapping_add(r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(runs.into_iter().flatten().collect())
}

type Key = (
    BenchEstimator,
    EstimandKind,
    String,
    Option<String>,
    Option<String>,
);

fn key(est: BenchEstimator, e: &EffectReport<f64>) -> Key {
    (
        est,
        e.kind,
        e.policy.clone(),
        e.versus.clone(),
        e.group.clone(),
    )
}

/// Aggregate replications against known truths. `truth` maps
/// `(policy, group)` to the policy value; effects whose truth is missing
/// are left out.
pub fn summarize(
    reps: &[Replication],
    truth: &HashMap<(String, Option<String>), f64>,
    n: usize,
) -> BenchmarkTable {
    let mut order: Vec<Key> = Vec::new();
    let mut cells: HashMap<Key, Vec<(f64, Option<f64>)>> = HashMap::new();
    for r in reps {
        for e in &r.effects {
            let k = key(r.estimator, e);
            let cell = cells.entry(k.clone()).or_insert_with(|| {
                order.push(k);
                Vec::new()
            });
            cell.push((e.estimate, e.se()));
        }
    }
    let value = |p: &str, g: &Option<String>| truth.get(&(p.to_string(), g.clone())).copied();
    let mut rows = Vec::new();
    for k in order {
        let (est, kind, policy, versus, group) = k.clone();
        let t = match kind {
            EstimandKind::Apo | EstimandKind::Gapo => value(&policy, &group),
            EstimandKind::Ate | EstimandKind::Gate => {
                let v = versus.as_deref().unwrap_or_default();
                value(&policy, &group)
                    .zip(value(v, &group))
                    .map(|(a, b)| a - b)
            }
            EstimandKind::GateMinusAte => {
                let v = versus.as_deref().unwrap_or_default();
                match (
                    value(&policy, &group),
                    value(v, &group),
                    value(&policy, &None),
                    value(v, &None),
                ) {
                    (Some(a), Some(b), Some(c), Some(d)) => Some((a - b) - (c - d)),
                    _ => None,
                }
            }
        };
        let Some(t) = t else { continue };
        let cell = &cells[&k];
        let m = cell.len() as f64;
        let ests: Vec<f64> = cell.iter().map(|c| c.0).collect();
        let mean = ests.iter().sum::<f64>() / m;
        let sd = (ests.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0)).sqrt();
        let rmse = (ests.iter().map(|x| (x - t).powi(2)).sum::<f64>() / m).sqrt();
        let ses: Option<Vec<f64>> = cell.iter().map(|c| c.1).collect();
        let mean_se = ses.as_ref().map(|s| s.iter().sum::<f64>() / m);
        let coverage = ses.as_ref().map(|s| {
            cell.iter()
                .zip(s)
                .filter(|((e, _), se)| (e - t).abs() <= Z95 * **se)
                .count() as f64
                / m
        });
        rows.push(BenchmarkRow {
            estimator: est,
            estimand: kind,
            policy,
            versus,
            group,
            truth: t,
            mean_estimate: mean,
            bias: mean - t,
            bias_mc_se: sd / m.sqrt(),
            rmse,
            mean_se,
            sd_estimate: sd,
            se_calibration: mean_se.filter(|_| sd > 0.0).map(|s| s / sd),
            coverage,
            n_seeds: cell.len(),
        });
    }
    BenchmarkTable {
        n,
        seeds: reps
            .iter()
            .map(|r| r.seed)
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        rows,
    }
}

/// Truths for every policy (and group, where the DGP knows them).
pub fn policy_truths<D: StructuralDgp>(
    dgp: &D,
    policies: &[Policy],
    groups: &[String],
    draws: usize,
    seed: u64,
) -> Result<HashMap<(String, Option<String>), f64>> {
    let mut out = HashMap::new();
    for (k, p) in policies.iter().enumerate() {
        out.insert(
            (p.name.clone(), None),
            dgp.truth(p, draws, seed.wrapping_add(k as u64))?,
        );
        for g in groups {
            if let Some(v) = dgp.group_truth(p, g) {
                out.insert((p.name.clone(), Some(g.clone())), v?);
            }
        }
    }
    Ok(out)
}

/// Replications plus truths plus summary.
pub fn benchmark<D: StructuralDgp>(dgp: &D, spec: &BenchmarkSpec) -> Result<BenchmarkTable> {
    let reps = run_replications(dgp, spec)?;
    let mut groups: Vec<String> = reps
        .iter()
        .flat_map(|r| r.effects.iter().filter_map(|e| e.group.clone()))
        .collect();
    groups.sort();
    groups.dedup();
    let truth = policy_truths(
        dgp,
        &spec.policies,
        &groups,
        spec.oracle_draws,
        spec.base_seed,
    )?;
    Ok(summarize(
        &reps,
        &truth,
        spec.n.unwrap_or_else(|| dgp.default_n()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::NuisanceSettings;
    use crate::simulator::EnumerableDgpConfig;
    use crate::trimming::TrimRule;

    fn spec(seeds: usize, estimators: Vec<BenchEstimator>) -> BenchmarkSpec {
        BenchmarkSpec {
            n: Some(3000),
            seeds,
            base_seed: 100,
            policies: EnumerableDgpConfig::calibrated_policies(),
            estimators,
            settings: EstimationSettings {
                nuisance: NuisanceSettings::parametric(),
                trim: TrimRule::Off,
                ..EstimationSettings::default()
            },
            oracle_draws: 10_000,
        }
    }

    #[test]
    fn oracle_scores_are_unbiased() {
        let dgp = EnumerableDgpConfig::calibrated(3000);
        let t = benchmark(&dgp, &spec(60, vec![BenchEstimator::Oracle])).unwrap();
        for r in t.rows.iter().filter(|r| r.estimand == EstimandKind::Apo) {
            assert!(r.bias.abs() < 2.0 * r.bias_mc_se.max(1e-12) * 1.5, "{r:?}");
            assert_eq!(r.n_seeds, 60);
        }
        // GAPO truths exist for the discrete model
        assert!(t.rows.iter().any(|r| r.estimand == EstimandKind::Gapo));
    }

    #[test]
    fn static_estimator_skips_dynamic_policies() {
        let dgp = EnumerableDgpConfig::calibrated(3000);
        let reps = run_replications(
            &dgp,
            &spec(2, vec![BenchEstimator::StaticConf, BenchEstimator::Gcomp]),
        )
        .unwrap();
        assert_eq!(reps.len(), 4);
        let st = reps
            .iter()
            .find(|r| r.estimator == BenchEstimator::StaticConf)
            .unwrap();
        assert!(st.effects.iter().all(|e| e.policy != "dyn"));
    }

    #[test]
    fn table_serializes() {
        let dgp = EnumerableDgpConfig::calibrated(3000);
        let t = benchmark(&dgp, &spec(3, vec![BenchEstimator::Bjz24])).unwrap();
        let back: BenchmarkTable = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), t.rows.len() + 1);
        assert!(text.starts_with("estimator,estimand"));
    }
}
