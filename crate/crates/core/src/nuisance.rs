//! Cross-fitted nuisance functions for one policy: period propensities, the
//! outcome regression `mu` and the nested regression `nu`.

use std::io::Write;
use std::path::Path;

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    indicators_from_targets, policy_targets, FollowIndicators, PanelDataset, Policy, PolicyTargets,
};
use crate::error::{Error, Result};
use crate::learners::{
    fit_classifier, fit_regressor, FoldPlan, ForestParams, LearnerSpec, ProbModel, RegressionModel,
    OWN_FOLD,
};
use crate::scalar::Real;

pub const DEFAULT_MIN_CELL: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceMethod {
    /// Nested regression of `mu` fitted on one half, `nu` on the other.
    Bhl22,
    /// Nested regression of a doubly robust pseudo-outcome, both halves.
    Bjz24,
    /// Sequence-level propensity and outcome model on `X0` only.
    StaticConf,
    /// Supplied from outside (true functions in simulations).
    Oracle,
}

/// Learners and guards for nuisance estimation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NuisanceSettings {
    pub p1: LearnerSpec,
    pub p2: LearnerSpec,
    pub mu: LearnerSpec,
    pub nu: LearnerSpec,
    /// Minimum training rows per treatment cell in every fold complement.
    pub min_cell: usize,
    /// Fit the `bhl22` nested regression in both half orders and average.
    pub bhl22_swap: bool,
}

impl Default for NuisanceSettings {
    fn default() -> Self {
        NuisanceSettings {
            p1: LearnerSpec::forest_prob(ForestParams::default()),
            p2: LearnerSpec::forest_prob(ForestParams::default()),
            mu: LearnerSpec::forest_reg(ForestParams::default()),
            nu: LearnerSpec::forest_reg(ForestParams::default()),
            min_cell: DEFAULT_MIN_CELL,
            bhl22_swap: false,
        }
    }
}

impl NuisanceSettings {
    /// Ridge outcome models and logistic propensities.
    pub fn parametric() -> Self {
        NuisanceSettings {
            p1: LearnerSpec::logistic(1e-3),
            p2: LearnerSpec::logistic(1e-3),
            mu: LearnerSpec::ridge(1e-6),
            nu: LearnerSpec::ridge(1e-6),
            ..NuisanceSettings::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        for s in [&mut self.p1, &mut self.p2, &mut self.mu, &mut self.nu] {
            s.seed = seed;
        }
        self
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        self.p1.clip = clip;
        self.p2.clip = clip;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s, reg) in [
            ("p1", &self.p1, false),
            ("p2", &self.p2, false),
            ("mu", &self.mu, true),
            ("nu", &self.nu, true),
        ] {
            s.validate()?;
            if s.family.is_regressor() != reg {
                return Err(Error::Config(format!(
                    "learner for `{name}` must be a {} family",
                    if reg { "regression" } else { "probability" }
                )));
            }
        }
        if self.min_cell == 0 {
            return Err(Error::Config("min_cell must be positive".into()));
        }
        Ok(())
    }
}

/// Per-unit nuisance predictions for one policy.
///
/// For [`NuisanceMethod::StaticConf`] the sequence propensity is stored in
/// `p1_hat` and `p2_hat` is identically one, with `nu_hat == mu_hat`, so the
/// dynamic score formula reduces to the static one.
#[derive(Clone, Debug, PartialEq)]
pub struct NuisanceEstimates<T> {
    pub p1_hat: Vec<T>,
    pub p2_hat: Vec<T>,
    pub mu_hat: Vec<T>,
    pub nu_hat: Vec<T>,
    pub method: NuisanceMethod,
    pub policy: Policy,
    pub fold_plan: Option<FoldPlan>,
    /// Non-fatal issues such as treatment classes absent from a training set.
    pub warnings: Vec<String>,
}

impl<T: Real> NuisanceEstimates<T> {
    /// Externally supplied nuisances, checked for length and finiteness.
    pub fn oracle(
        policy: Policy,
        p1_hat: Vec<T>,
        p2_hat: Vec<T>,
        mu_hat: Vec<T>,
        nu_hat: Vec<T>,
    ) -> Result<Self> {
        let est = NuisanceEstimates {
            p1_hat,
            p2_hat,
            mu_hat,
            nu_hat,
            method: NuisanceMethod::Oracle,
            policy,
            fold_plan: None,
            warnings: Vec::new(),
        };
        est.check()?;
        Ok(est)
    }

    pub fn n(&self) -> usize {
        self.p1_hat.len()
    }

    /// Lengths agree, values are finite, propensities are positive.
    pub fn check(&self) -> Result<()> {
        let n = self.p1_hat.len();
        for (name, v) in [
            ("p2_hat", &self.p2_hat),
            ("mu_hat", &self.mu_hat),
            ("nu_hat", &self.nu_hat),
        ] {
            if v.len() != n {
                return Err(Error::Validation(format!(
                    "{name} has {} entries, p1_hat has {n}",
                    v.len()
                )));
            }
        }
        for (name, v) in [
            ("p1_hat", &self.p1_hat),
            ("p2_hat", &self.p2_hat),
            ("mu_hat", &self.mu_hat),
            ("nu_hat", &self.nu_hat),
        ] {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!(
                    "{name} is not finite at unit {i}"
                )));
            }
        }
        for (name, v) in [("p1_hat", &self.p1_hat), ("p2_hat", &self.p2_hat)] {
            if let Some(i) = v.iter().position(|&x| !(x > T::zero() && x <= T::one())) {
                return Err(Error::Numerical(format!(
                    "{name} = {} at unit {i} is outside (0, 1]",
                    v[i]
                )));
            }
        }
        Ok(())
    }

    /// Write one row per unit: id, fold, halves, p1, p2, mu, nu.
    ///
    /// `halves` lists the unit's half in each fold complement, with `-` at
    /// its own fold.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["unit", "fold", "halves", "p1", "p2", "mu", "nu"])?;
        for i in 0..self.n() {
            let (fold, halves) = match &self.fold_plan {
                Some(plan) => (
                    plan.fold_id()[i].to_string(),
                    (0..plan.k())
                        .map(|k| match plan.half_id(k)[i] {
                            OWN_FOLD => '-',
                            h => char::from(b'0' + h),
                        })
                        .collect(),
                ),
                None => (String::new(), String::new()),
            };
            w.write_record([
                i.to_string(),
                fold,
                halves,
                self.p1_hat[i].to_string(),
                self.p2_hat[i].to_string(),
                self.mu_hat[i].to_string(),
                self.nu_hat[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<nuisance dump>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Per-unit values that replace fitted `mu` / `p2` inside the nested
/// regression (used to feed true functions in simulations).
#[derive(Clone, Copy, Debug, Default)]
pub struct NestedOverrides<'a, T> {
    pub mu: Option<&'a [T]>,
    pub p2: Option<&'a [T]>,
}

/// Shared per-policy state.
struct Ctx<'a, T> {
    ds: &'a PanelDataset<T>,
    pol: &'a Policy,
    plan: &'a FoldPlan,
    settings: &'a NuisanceSettings,
    targets: PolicyTargets,
    follow: FollowIndicators,
}

impl<'a, T: Real> Ctx<'a, T> {
    fn new(
        ds: &'a PanelDataset<T>,
        pol: &'a Policy,
        plan: &'a FoldPlan,
        settings: &'a NuisanceSettings,
    ) -> Result<Self> {
        settings.validate()?;
        if plan.n() != ds.n() {
            return Err(Error::Argument(format!(
                "fold plan covers {} units, dataset has {}",
                plan.n(),
                ds.n()
            )));
        }
        let targets = policy_targets(ds, pol)?;
        let follow = indicators_from_targets(ds, &targets);
        Ok(Ctx {
            ds,
            pol,
            plan,
            settings,
            targets,
            follow,
        })
    }

    fn i1_rows(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter()
            .copied()
            .filter(|&i| self.follow.i1[i])
            .collect()
    }

    fn i12_rows(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter()
            .copied()
            .filter(|&i| self.follow.i12[i])
            .collect()
    }

    fn follower_cell(&self, rows: &[usize], what: &str, fold: usize) -> Result<()> {
        let need = self.settings.min_cell;
        if rows.len() < need {
            let kind = if rows.is_empty() {
                "is empty"
            } else {
                "is too small"
            };
            return Err(Error::Cell(format!(
                "policy `{}`: {what} {kind} in the complement of fold {fold} ({} rows, need {need})",
                self.pol.name,
                rows.len()
            )));
        }
        Ok(())
    }

    fn p1_model(&self, rows: &[usize], fold: usize) -> Result<ProbModel<T>> {
        let d1 = self.ds.d1();
        check_class_cells(
            d1,
            rows,
            self.ds.n_treatments1(),
            self.settings.min_cell,
            "first-period",
            fold,
        )?;
        fit_probs(
            self.ds.x0(),
            rows,
            d1,
            self.ds.n_treatments1(),
            &seeded(&self.settings.p1, fold, 1),
        )
    }

    // Stratified on D1 = g1: only first-period followers enter the fit.
    fn p2_model(&self, rows: &[usize], fold: usize, tag: u64) -> Result<ProbModel<T>> {
        let strat = self.i1_rows(rows);
        if strat.is_empty() {
            return Err(Error::Cell(format!(
                "policy `{}`: no units with first-period treatment {} in the complement of fold {fold}",
                self.pol.name, self.pol.d1_target
            )));
        }
        let d2 = self.ds.d2();
        check_class_cells(
            d2,
            &strat,
            self.ds.n_treatments2(),
            self.settings.min_cell,
            "second-period",
            fold,
        )?;
        fit_probs(
            self.ds.x01(),
            &strat,
            d2,
            self.ds.n_treatments2(),
            &seeded(&self.settings.p2, fold, tag),
        )
    }

    fn mu_model(&self, rows: &[usize], fold: usize, tag: u64) -> Result<RegressionModel<T>> {
        let cell = self.i12_rows(rows);
        self.follower_cell(&cell, "the sequence-follower cell", fold)?;
        fit_rows(
            self.ds.x01(),
            &cell,
            self.ds.y(),
            &seeded(&self.settings.mu, fold, tag),
        )
    }
}

fn seeded(spec: &LearnerSpec, fold: usize, tag: u64) -> LearnerSpec {
    let mix = (fold as u64 + 1)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(tag.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    spec.clone().with_seed(spec.seed ^ mix)
}

fn check_class_cells(
    labels: &[usize],
    rows: &[usize],
    n_classes: usize,
    min_cell: usize,
    period: &str,
    fold: usize,
) -> Result<()> {
    let mut population = vec![false; n_classes];
    for &l in labels {
        population[l] = true;
    }
    let mut counts = vec![0usize; n_classes];
    for &i in rows {
        counts[labels[i]] += 1;
    }
    for c in 0..n_classes {
        if population[c] && counts[c] < min_cell {
            return Err(Error::Cell(format!(
                "{period} treatment {c} has {} training rows in the complement of fold {fold} (need {min_cell})",
                counts[c]
            )));
        }
    }
    Ok(())
}

fn fit_probs<T: Real>(
    x: ArrayView2<T>,
    rows: &[usize],
    labels: &[usize],
    n_classes: usize,
    spec: &LearnerSpec,
) -> Result<ProbModel<T>> {
    let y: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
    if y.iter().all(|&c| c == y[0]) {
        return Ok(ProbModel::constant(y[0], n_classes, spec.clip));
    }
    fit_classifier(x.select(Axis(0), rows).view(), &y, n_classes, spec)
}

fn fit_rows<T: Real>(
    x: ArrayView2<T>,
    rows: &[usize],
    target: &[T],
    spec: &LearnerSpec,
) -> Result<RegressionModel<T>> {
    let y: Vec<T> = rows.iter().map(|&i| target[i]).collect();
    fit_regressor(x.select(Axis(0), rows).view(), &y, spec)
}

fn predict_rows<T: Real>(m: &RegressionModel<T>, x: ArrayView2<T>, rows: &[usize]) -> Vec<T> {
    m.predict(x.select(Axis(0), rows).view())
}

fn proba_rows<T: Real>(
    m: &ProbModel<T>,
    x: ArrayView2<T>,
    rows: &[usize],
    class: &[usize],
) -> Vec<T> {
    let cls: Vec<usize> = rows.iter().map(|&i| class[i]).collect();
    m.predict_class_proba(x.select(Axis(0), rows).view(), &cls)
}

/// Run `f(fold, test_rows)` for every fold in parallel and scatter the
/// returned per-row values back to unit order.
fn cross_fit<O, F>(plan: &FoldPlan, f: F) -> Result<Vec<O>>
where
    O: Clone + Default + Send,
    F: Fn(usize, &[usize]) -> Result<Vec<O>> + Sync,
{
    let parts: Vec<(Vec<usize>, Vec<O>)> = (0..plan.k())
        .into_par_iter()
        .map(|k| {
            let test = plan.test_rows(k);
            let out = f(k, &test)?;
            debug_assert_eq!(out.len(), test.len());
            Ok((test, out))
        })
        .collect::<Result<_>>()?;
    let mut all = vec![O::default(); plan.n()];
    for (rows, vals) in parts {
        for (i, v) in rows.into_iter().zip(vals) {
            all[i] = v;
        }
    }
    Ok(all)
}

/// Cross-fitted `P(D1 = g1 | X0)`.
pub fn estimate_p1<T: Real>(
    ds: &PanelDataset<T>,
    pol: &Policy,
    plan: &FoldPlan,
    settings: &NuisanceSettings,
) -> Result<Vec<T>> {
    let cx = Ctx::new(ds, pol, plan, settings)?;
    let (p1, _) = p1_pass(&cx)?;
    Ok(p1)
}

fn p1_pass<T: Real>(cx: &Ctx<'_, T>) -> Result<(Vec<T>, Vec<String>)> {
    let out = cross_fit(cx.plan, |k, test| {
        let m = cx.p1_model(&cx.plan.train_rows(k), k)?;
        let warn = absent_warning(&m, "first-period", k);
        let p = proba_rows(&m, cx.ds.x0(), test, &cx.targets.g1);
        Ok(p.into_iter().map(|v| (v, warn.clone())).collect())
    })?;
    Ok(split_warnings(out))
}

/// Cross-fitted `P(D2 = g2 | X0, X1, D1 = g1)`, evaluated at each unit's
/// assigned second-period treatment.
pub fn estimate_p2<T: Real>(
    ds: &PanelDataset<T>,
    pol: &Policy,
    plan: &FoldPlan,
    settings: &NuisanceSettings,
) -> Result<Vec<T>> {
    let cx = Ctx::new(ds, pol, plan, settings)?;
    let (p2, _) = p2_pass(&cx)?;
    Ok(p2)
}

fn p2_pass<T: Real>(cx: &Ctx<'_, T>) -> Result<(Vec<T>, Vec<String>)> {
    let out = cross_fit(cx.plan, |k, test| {
        let m = cx.p2_model(&cx.plan.train_rows(k), k, 2)?;
        let warn = absent_warning(&m, "second-period", k);
        let p = proba_rows(&m, cx.ds.x01(), test, &cx.targets.g2);
        Ok(p.into_iter().map(|v| (v, warn.clone())).collect())
    })?;
    Ok(split_warnings(out))
}

fn absent_warning<T: Real>(m: &ProbModel<T>, period: &str, fold: usize) -> Option<String> {
    if m.absent_classes().is_empty() {
        None
    } else {
        Some(format!(
            "{period} classes {:?} absent from training rows of fold {fold} complement; probabilities clipped",
            m.absent_classes()
        ))
    }
}

fn split_warnings<T>(v: Vec<(T, Option<String>)>) -> (Vec<T>, Vec<String>) {
    let mut warnings: Vec<String> = Vec::new();
    let vals = v
        .into_iter()
        .map(|(x, w)| {
            if let Some(w) = w {
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
            x
        })
        .collect();
    warnings.sort();
    (vals, warnings)
}

/// Cross-fitted `E[Y | X0, X1, D1 = g1, D2 = g2]` from every fold complement.
pub fn estimate_mu<T: Real>(
    ds: &PanelDataset<T>,
    pol: &Policy,
    plan: &FoldPlan,
    settings: &NuisanceSettings,
) -> Result<Vec<T>> {
    let cx = Ctx::new(ds, pol, plan, settings)?;
    mu_pass(&cx)
}

fn mu_pass<T: Real>(cx: &Ctx<'_, T>) -> Result<Vec<T>> {
    cross_fit(cx.plan, |k, test| {
        let m = cx.mu_model(&cx.plan.train_rows(k), k, 3)?;
        Ok(predict_rows(&m, cx.ds.x01(), test))
    })
}

/// Outcome and nested regressions from the one-half/other-half scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct Bhl22Fit<T> {
    /// `mu` from the half-one model(s), as used in the score.
    pub mu_hat: Vec<T>,
    pub nu_hat: Vec<T>,
}

/// Nested regression where `mu` is fitted on half one of each fold
/// complement, predicted on half two, and regressed on `X0` over half-two
/// first-period followers. With `bhl22_swap` the roles are also reversed and
/// both orders averaged.
pub fn estimate_nu_bhl22<T: Real>(
    ds: &PanelDataset<T>,
    pol: &Policy,
    plan: &FoldPlan,
    settings: &NuisanceSettings,
    overrides: NestedOverrides<'_, T>,
) -> Result<Bhl22Fit<T>> {
    let cx = Ctx::new(ds, pol, plan, settings)?;
    check_override_len(overrides, ds.n())?;
    bhl22_pass(&cx, overrides)
}

fn bhl22_pass<T: Real>(cx: &Ctx<'_, T>, ov: NestedOverrides<'_, T>) -> Result<Bhl22Fit<T>> {
    let orders: &[(u8, u8)] = if cx.settings.bhl22_swap {
        &[(0, 1), (1, 0)]
    } else {
        &[(0, 1)]
    };
    let pairs = cross_fit(cx.plan, |k, test| {
        let mut mu = vec![T::zero(); test.len()];
        let mut nu = vec![T::zero(); test.len()];
        for &(a, b) in orders {
            let fit_half = cx.plan.half_rows(k, a);
            let reg_half = cx.i1_rows(&cx.plan.half_rows(k, b));
            cx.follower_cell(
                &reg_half,
                &format!("first-period follower set of half {b}"),
                k,
            )?;
            let (mu_test, pseudo) = match ov.mu {
                Some(truth) => (
                    test.iter().map(|&i| truth[i]).collect(),
                    reg_half.iter().map(|&i| truth[i]).collect::<Vec<T>>(),
                ),
                None => {
                    let m = cx.mu_model(&fit_half, k, 10 + a as u64)?;
                    (
                        predict_rows(&m, cx.ds.x01(), test),
                        predict_rows(&m, cx.ds.x01(), &reg_half),
                    )
                }
            };
            let xr = cx.ds.x0().select(Axis(0), &reg_half);
            let nm = fit_regressor(
                xr.view(),
                &pseudo,
                &seeded(&cx.settings.nu, k, 20 + a as u64),
            )?;
            let nu_test = predict_rows(&nm, cx.ds.x0(), test);
            for j in 0..test.len() {
                mu[j] += mu_test[j];
                nu[j] += nu_test[j];
            }
        }
        let w = T::of_usize(orders.len());
        Ok(mu
            .into_iter()
            .zip(nu)
            .map(|(m, v)| (m / w, v / w))
            .collect())
    })?;
    let (mu_hat, nu_hat) = pairs.into_iter().unzip();
    Ok(Bhl22Fit { mu_hat, nu_hat })
}

fn check_override_len<T>(ov: NestedOverrides<'_, T>, n: usize) -> Result<()> {
    for (name, v) in [("mu", ov.mu), ("p2", ov.p2)] {
        if let Some(v) = v {
            if v.len() != n {
                return Err(Error::Argument(format!(
                    "{name} override has {} entries, expected {n}",
                    v.len()
                )));
            }
        }
    }
    Ok(())
}

/// Nested regression of the pseudo-outcome
/// `mu + 1{D2 = g2} (Y - mu) / p2` over first-period followers.
///
/// For each half of a fold complement, `mu` and `p2` are fitted on that half
/// and the pseudo-outcome is built and regressed on `X0` over the other half.
/// The two resulting models are averaged on the held-out fold.
pub fn estimate_nu_bjz24<T: Real>(
    ds: &PanelDataset<T>,
    pol: &Policy,
    plan: &FoldPlan,
    settings: &NuisanceSettings,
    overrides: NestedOverrides<'_, T>,
) -> Result<Vec<T>> {
    let cx = Ctx::new(ds, pol, plan, settings)?;
    check_override_len(overrides, ds.n())?;
    bjz24_pass(&cx, overrides)
}

fn bjz24_pass<T: Real>(cx: &Ctx<'_, T>, ov: NestedOverrides<'_, T>) -> Result<Vec<T>> {
    let y = cx.ds.y();
    cross_fit(cx.plan, |k, test| {
        let mut nu = vec![T::zero(); test.len()];
        for (a, b) in [(0u8, 1u8), (1, 0)] {
            let fit_half = cx.plan.half_rows(k, a);
            let reg_half = cx.i1_rows(&cx.plan.half_rows(k, b));
            cx.follower_cell(
                &reg_half,
                &format!("first-period follower set of half {b}"),
                k,
            )?;
            let mu: Vec<T> = match ov.mu {
                Some(t) => reg_half.iter().map(|&i| t[i]).collect(),
                None => predict_rows(
                    &cx.mu_model(&fit_half, k, 30 + a as u64)?,
                    cx.ds.x01(),
                    &reg_half,
                ),
            };
            let p2: Vec<T> = match ov.p2 {
                Some(t) => reg_half.iter().map(|&i| t[i]).collect(),
                None => proba_rows(
                    &cx.p2_model(&fit_half, k, 40 + a as u64)?,
                    cx.ds.x01(),
                    &reg_half,
                    &cx.targets.g2,
                ),
            };
            let pseudo: Vec<T> = reg_half
                .iter()
                .zip(mu.iter().zip(&p2))
                .map(|(&i, (&m, &p))| {
                    if cx.follow.i12[i] {
                        m + (y[i] - m) / p
                    } else {
                        m
                    }
                })
                .collect();
            let xr = cx.ds.x0().select(Axis(0), &reg_half);
            let nm = fit_regressor(
                xr.view(),
                &pseudo,
                &seeded(&cx.settings.nu, k, 50 + a as u64),
            )?;
            for (acc, v) in nu.iter_mut().zip(predict_rows(&nm, cx.ds.x0(), test)) {
                *acc += v;
            }
        }
        let two = T::of(2.0);
        Ok(nu.into_iter().map(|v| v / two).collect())
    })
}

/// Sequence-level nuisances for a static policy: a multiclass propensity
/// over observed `(d1, d2)` pairs and an outcome regression on `X0` among
/// sequence followers.
pub fn estimate_static_conf<T: Real>(
    ds: &PanelDataset<T>,
    seq: &Policy,
    plan: &FoldPlan,
    settings: &NuisanceSettings,
) -> Result<NuisanceEstimates<T>> {
    if !seq.is_static() {
        return Err(Error::Config(format!(
            "static-confounding estimator needs a static policy, `{}` is dynamic",
            seq.name
        )));
    }
    let cx = Ctx::new(ds, seq, plan, settings)?;
    let n2 = ds.n_treatments2();
    let n_seq = ds.n_treatments1() * n2;
    let labels: Vec<usize> = ds
        .d1()
        .iter()
        .zip(ds.d2())
        .map(|(&a, &b)| a * n2 + b)
        .collect();
    let target = vec![seq.d1_target * n2 + seq.d2_if_v1_zero; ds.n()];
    let out = cross_fit(plan, |k, test| {
        let train = plan.train_rows(k);
        check_class_cells(
            &labels,
            &train,
            n_seq,
            settings.min_cell,
            "treatment sequence",
            k,
        )?;
        let pm = fit_probs(
            ds.x0(),
            &train,
            &labels,
            n_seq,
            &seeded(&settings.p1, k, 60),
        )?;
        let warn = absent_warning(&pm, "treatment sequence", k);
        let p = proba_rows(&pm, ds.x0(), test, &target);
        let cell = cx.i12_rows(&train);
        cx.follower_cell(&cell, "the sequence-follower cell", k)?;
        let mm = fit_rows(ds.x0(), &cell, ds.y(), &seeded(&settings.mu, k, 61))?;
        let mu = predict_rows(&mm, ds.x0(), test);
        Ok(p.into_iter()
            .zip(mu)
            .map(|(p, m)| ((p, m), warn.clone()))
            .collect())
    })?;
    let (pairs, warnings) = split_warnings(out);
    let (p1_hat, mu_hat): (Vec<T>, Vec<T>) = pairs.into_iter().unzip();
    Ok(NuisanceEstimates {
        p2_hat: vec![T::one(); ds.n()],
        nu_hat: mu_hat.clone(),
        p1_hat,
        mu_hat,
        method: NuisanceMethod::StaticConf,
        policy: seq.clone(),
        fold_plan: Some(plan.clone()),
        warnings,
    })
}

/// All nuisances for one policy under the given method.
pub fn estimate_nuisances<T: Real>(
    ds: &PanelDataset<T>,
    pol: &Policy,
    plan: &FoldPlan,
    settings: &NuisanceSettings,
    method: NuisanceMethod,
) -> Result<NuisanceEstimates<T>> {
    let cx = Ctx::new(ds, pol, plan, settings)?;
    let (mu_hat, nu_hat) = match method {
        NuisanceMethod::StaticConf => return estimate_static_conf(ds, pol, plan, settings),
        NuisanceMethod::Oracle => {
            return Err(Error::Argument(
                "oracle nuisances are supplied, not estimated".into(),
            ));
        }
        NuisanceMethod::Bhl22 => {
            let fit = bhl22_pass(&cx, NestedOverrides::default())?;
            (fit.mu_hat, fit.nu_hat)
        }
        NuisanceMethod::Bjz24 => (mu_pass(&cx)?, bjz24_pass(&cx, NestedOverrides::default())?),
    };
    let (p1_hat, mut warnings) = p1_pass(&cx)?;
    let (p2_hat, w2) = p2_pass(&cx)?;
    warnings.extend(w2);
    let est = NuisanceEstimates {
        p1_hat,
        p2_hat,
        mu_hat,
        nu_hat,
        method,
        policy: pol.clone(),
        fold_plan: Some(plan.clone()),
        warnings,
    };
    est.check()?;
    Ok(est)
}
