//! End-to-end estimation for a set of policies on one dataset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{PanelDataset, Policy};
use crate::error::{Error, Result};
use crate::estimands::{apo, ate, gapo, gate, gate_minus_ate, EffectReport, EstimandKind};
use crate::learners::make_fold_plan;
use crate::nuisance::{estimate_nuisances, NuisanceEstimates, NuisanceMethod, NuisanceSettings};
use crate::scalar::{mean, Real};
use crate::scores::{dynamic_score, ipw_score, static_score, ScoreVector};
use crate::trimming::{overlap_summary, union_trim, OverlapSummary, TrimReport, TrimRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Bhl22,
    Bjz24,
    StaticConf,
    /// Inverse probability weighting with cross-fitted propensities.
    Ipw,
    /// Plug-in g-formula from the nested regression; no standard errors.
    Gcomp,
}

impl EstimatorKind {
    /// Nuisance method feeding this estimator.
    pub fn nuisance_method(self) -> NuisanceMethod {
        match self {
            EstimatorKind::Bhl22 | EstimatorKind::Gcomp => NuisanceMethod::Bhl22,
            EstimatorKind::Bjz24 | EstimatorKind::Ipw => NuisanceMethod::Bjz24,
            EstimatorKind::StaticConf => NuisanceMethod::StaticConf,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationSettings {
    pub method: EstimatorKind,
    pub folds: usize,
    pub seed: u64,
    pub nuisance: NuisanceSettings,
    pub trim: TrimRule,
    /// Re-estimate nuisances on the retained sample after trimming.
    pub refit_after_trim: bool,
}

impl Default for EstimationSettings {
    fn default() -> Self {
        EstimationSettings {
            method: EstimatorKind::Bjz24,
            folds: 5,
            seed: 0,
            nuisance: NuisanceSettings::default(),
            trim: TrimRule::Minmax,
            refit_after_trim: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyDiagnostics {
    pub policy: String,
    pub followers_period1: usize,
    pub followers_sequence: usize,
    pub extreme_weights: usize,
    pub overlap_p1: OverlapSummary,
    pub overlap_p2: OverlapSummary,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Estimation<T> {
    pub settings: EstimationSettings,
    /// Nuisances on the sample the scores were built from.
    pub nuisances: Vec<NuisanceEstimates<T>>,
    pub trim: Option<TrimReport<T>>,
    /// Scores of retained units.
    pub scores: Vec<ScoreVector<T>>,
    pub effects: Vec<EffectReport<T>>,
    pub diagnostics: Vec<PolicyDiagnostics>,
}

impl<T: Real> Estimation<T> {
    pub fn effect(
        &self,
        kind: EstimandKind,
        policy: &str,
        versus: Option<&str>,
        group: Option<&str>,
    ) -> Option<&EffectReport<T>> {
        self.effects.iter().find(|e| {
            e.kind == kind
                && e.policy == policy
                && e.versus.as_deref() == versus
                && e.group.as_deref() == group
        })
    }
}

pub fn check_policies<T: Real>(ds: &PanelDataset<T>, policies: &[Policy]) -> Result<()> {
    if policies.is_empty() {
        return Err(Error::Config("policy list is empty".into()));
    }
    for (i, p) in policies.iter().enumerate() {
        p.validate(ds)?;
        if policies[..i].iter().any(|q| q.name == p.name) {
            return Err(Error::Config(format!("duplicate policy name `{}`", p.name)));
        }
    }
    Ok(())
}

fn all_nuisances<T: Real>(
    ds: &PanelDataset<T>,
    policies: &[Policy],
    s: &EstimationSettings,
) -> Result<Vec<NuisanceEstimates<T>>> {
    let plan = make_fold_plan(ds.n(), s.folds, s.seed)?;
    let method = s.method.nuisance_method();
    policies
        .par_iter()
        .map(|p| estimate_nuisances(ds, p, &plan, &s.nuisance, method))
        .collect()
}

fn score<T: Real>(
    ds: &PanelDataset<T>,
    n: &NuisanceEstimates<T>,
    method: EstimatorKind,
) -> Result<ScoreVector<T>> {
    match method {
        EstimatorKind::Bhl22 | EstimatorKind::Bjz24 | EstimatorKind::Gcomp => {
            dynamic_score(ds, &n.policy, n)
        }
        EstimatorKind::StaticConf => static_score(ds, &n.policy, n),
        EstimatorKind::Ipw => ipw_score(ds, &n.policy, n),
    }
}

/// Nuisances, union trimming, scores and every estimand for `policies`.
///
/// APOs are reported for each policy and contrasts for each ordered pair
/// `(i, j)` with `i < j`; with a group variable, group-level versions too.
pub fn estimate_effects<T: Real>(
    ds: &PanelDataset<T>,
    policies: &[Policy],
    s: &EstimationSettings,
) -> Result<Estimation<T>> {
    check_policies(ds, policies)?;
    s.nuisance.validate()?;
    if s.method == EstimatorKind::StaticConf {
        if let Some(p) = policies.iter().find(|p| !p.is_static()) {
            return Err(Error::Config(format!(
                "static-confounding estimator needs static policies, `{}` is dynamic",
                p.name
            )));
        }
    }
    let mut nuis = all_nuisances(ds, policies, s)?;
    let trim = match s.trim {
        TrimRule::Off => None,
        rule => Some(union_trim(ds, &nuis, rule)?),
    };
    let kept: Option<Vec<usize>> = trim
        .as_ref()
        .filter(|t| t.drop_count > 0)
        .map(|t| t.kept_rows());
    let (work, scores) = match &kept {
        Some(rows) if s.refit_after_trim => {
            let sub = ds.subset(rows)?;
            nuis = all_nuisances(&sub, policies, s)?;
            let sc = nuis
                .iter()
                .map(|n| score(&sub, n, s.method))
                .collect::<Result<Vec<_>>>()?;
            (sub, sc)
        }
        Some(rows) => {
            let mask = &trim.as_ref().unwrap().keep_mask;
            let sc = nuis
                .iter()
                .map(|n| score(ds, n, s.method)?.restrict(mask))
                .collect::<Result<Vec<_>>>()?;
            (ds.subset(rows)?, sc)
        }
        None => {
            let sc = nuis
                .iter()
                .map(|n| score(ds, n, s.method))
                .collect::<Result<Vec<_>>>()?;
            (ds.clone(), sc)
        }
    };
    let retained_nu: Vec<Vec<T>> = nuis
        .iter()
        .map(|n| match (&kept, s.refit_after_trim) {
            (Some(rows), false) => rows.iter().map(|&i| n.nu_hat[i]).collect(),
            _ => n.nu_hat.clone(),
        })
        .collect();

    let effects = if s.method == EstimatorKind::Gcomp {
        gcomp_effects(policies, &retained_nu)?
    } else {
        score_effects(&work, &scores)?
    };
    let nuis_ds = if kept.is_some() && s.refit_after_trim {
        &work
    } else {
        ds
    };
    let diagnostics = nuis
        .iter()
        .zip(&scores)
        .map(|(n, sc)| -> Result<_> {
            Ok(PolicyDiagnostics {
                policy: n.policy.name.clone(),
                followers_period1: sc.follow.count_i1(),
                followers_sequence: sc.follow.count_i12(),
                extreme_weights: sc.extreme_weights,
                overlap_p1: overlap_summary(&n.p1_hat, &follow_for(nuis_ds, n, true)?),
                overlap_p2: overlap_summary(&n.p2_hat, &follow_for(nuis_ds, n, false)?),
                warnings: n.warnings.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimation {
        settings: s.clone(),
        nuisances: nuis,
        trim,
        scores,
        effects,
        diagnostics,
    })
}

// Compliance indicator for an overlap plot: first-period followers for the
// first-period propensity, sequence followers otherwise.
fn follow_for<T: Real>(
    ds: &PanelDataset<T>,
    n: &NuisanceEstimates<T>,
    first: bool,
) -> Result<Vec<bool>> {
    let f = crate::data::follow_indicators(ds, &n.policy)?;
    Ok(if first && n.method != NuisanceMethod::StaticConf {
        f.i1
    } else {
        f.i12
    })
}

/// APOs, group APOs and pairwise contrasts from per-policy scores on `ds`.
pub fn score_effects<T: Real>(
    ds: &PanelDataset<T>,
    scores: &[ScoreVector<T>],
) -> Result<Vec<EffectReport<T>>> {
    let mut out = Vec::new();
    for s in scores {
        out.push(apo(s)?);
    }
    if let Some(z) = ds.z0() {
        for s in scores {
            for g in z.labels() {
                out.push(gapo(s, z, g)?);
            }
        }
    }
    for i in 0..scores.len() {
        for j in (i + 1)..scores.len() {
            out.push(ate(&scores[i], &scores[j])?);
            if let Some(z) = ds.z0() {
                for g in z.labels() {
                    out.push(gate(&scores[i], &scores[j], z, g)?);
                    out.push(gate_minus_ate(&scores[i], &scores[j], z, g)?);
                }
            }
        }
    }
    Ok(out)
}

fn gcomp_effects<T: Real>(policies: &[Policy], nu: &[Vec<T>]) -> Result<Vec<EffectReport<T>>> {
    let means: Vec<T> = nu
        .iter()
        .map(|v| mean(v).ok_or_else(|| Error::Argument("no retained units".into())))
        .collect::<Result<_>>()?;
    let n = nu[0].len();
    let mut out: Vec<EffectReport<T>> = policies
        .iter()
        .zip(&means)
        .map(|(p, &m)| EffectReport::point(EstimandKind::Apo, &p.name, m, n))
        .collect();
    for i in 0..policies.len() {
        for j in (i + 1)..policies.len() {
            let mut r =
                EffectReport::point(EstimandKind::Ate, &policies[i].name, means[i] - means[j], n);
            r.versus = Some(policies[j].name.clone());
            out.push(r);
        }
    }
    Ok(out)
}
