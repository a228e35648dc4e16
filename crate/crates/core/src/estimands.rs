//! Effects and their normal-theory inference from per-unit scores.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::Groups;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scores::ScoreVector;

/// Two-sided 95% normal critical value.
pub const Z95: f64 = 1.959964;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimandKind {
    Apo,
    Gapo,
    Ate,
    Gate,
    GateMinusAte,
}

impl EstimandKind {
    fn label(self) -> &'static str {
        match self {
            EstimandKind::Apo => "APO",
            EstimandKind::Gapo => "GAPO",
            EstimandKind::Ate => "ATE",
            EstimandKind::Gate => "GATE",
            EstimandKind::GateMinusAte => "GATE-ATE",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inference<T> {
    pub se: T,
    /// Absent when the standard error is zero.
    pub t_stat: Option<T>,
    pub p_value: T,
    pub ci_low: T,
    pub ci_high: T,
}

impl<T: Real> Inference<T> {
    pub fn normal(estimate: T, se: T) -> Self {
        let (t_stat, p) = if se > T::zero() {
            let t = estimate / se;
            (Some(t), erfc(t.as_f64().abs() / std::f64::consts::SQRT_2))
        } else if estimate == T::zero() {
            (None, 1.0)
        } else {
            (None, 0.0)
        };
        let half = T::of(Z95) * se;
        Inference {
            se,
            t_stat,
            p_value: T::of(p.clamp(0.0, 1.0)),
            ci_low: estimate - half,
            ci_high: estimate + half,
        }
    }

    pub fn stars(&self) -> &'static str {
        let p = self.p_value.as_f64();
        if p < 0.01 {
            "***"
        } else if p < 0.05 {
            "**"
        } else if p < 0.1 {
            "*"
        } else {
            ""
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectReport<T> {
    pub kind: EstimandKind,
    pub policy: String,
    /// Comparison policy for contrasts.
    pub versus: Option<String>,
    pub group: Option<String>,
    pub estimate: T,
    /// Absent for plug-in estimates without a variance claim.
    pub inference: Option<Inference<T>>,
    pub n_effective: usize,
    /// Set for scores without an orthogonality guarantee.
    pub baseline: bool,
}

impl<T: Real> EffectReport<T> {
    pub fn se(&self) -> Option<T> {
        self.inference.map(|i| i.se)
    }

    /// A point estimate reported without inference (plug-in g-formula).
    pub fn point(kind: EstimandKind, policy: &str, estimate: T, n: usize) -> Self {
        EffectReport {
            kind,
            policy: policy.to_string(),
            versus: None,
            group: None,
            estimate,
            inference: None,
            n_effective: n,
            baseline: true,
        }
    }
}

/// Mean and `sqrt(mean squared deviation / n)`.
fn mean_se<T: Real>(v: &[T]) -> (T, T) {
    let n = T::of_usize(v.len());
    let m = v.iter().copied().sum::<T>() / n;
    let ss: T = v.iter().map(|&x| (x - m) * (x - m)).sum();
    (m, (ss / n).sqrt() / n.sqrt())
}

fn report<T: Real>(
    kind: EstimandKind,
    values: &[T],
    a: &ScoreVector<T>,
    b: Option<&ScoreVector<T>>,
    group: Option<&str>,
) -> Result<EffectReport<T>> {
    if values.is_empty() {
        return Err(Error::EmptyGroup(format!("no units for {}", kind.label())));
    }
    let (est, se) = mean_se(values);
    Ok(EffectReport {
        kind,
        policy: a.policy.name.clone(),
        versus: b.map(|b| b.policy.name.clone()),
        group: group.map(str::to_string),
        estimate: est,
        inference: Some(Inference::normal(est, se)),
        n_effective: values.len(),
        baseline: a.kind.is_baseline() || b.is_some_and(|b| b.kind.is_baseline()),
    })
}

fn diffs<T: Real>(a: &ScoreVector<T>, b: &ScoreVector<T>) -> Result<Vec<T>> {
    if a.n() != b.n() {
        return Err(Error::Argument(format!(
            "score vectors have {} and {} units",
            a.n(),
            b.n()
        )));
    }
    Ok(a.theta.iter().zip(&b.theta).map(|(&x, &y)| x - y).collect())
}

fn group_rows(z0: &Groups, n: usize, group: &str) -> Result<Vec<usize>> {
    if z0.codes().len() != n {
        return Err(Error::Argument(format!(
            "group variable has {} entries for {n} units",
            z0.codes().len()
        )));
    }
    let code = z0
        .code_of(group)
        .ok_or_else(|| Error::EmptyGroup(format!("group `{group}` has no units")))?;
    Ok((0..n).filter(|&i| z0.codes()[i] == code).collect())
}

/// Average potential outcome of one policy.
pub fn apo<T: Real>(scores: &ScoreVector<T>) -> Result<EffectReport<T>> {
    report(EstimandKind::Apo, &scores.theta, scores, None, None)
}

/// Average potential outcome within a group.
pub fn gapo<T: Real>(scores: &ScoreVector<T>, z0: &Groups, group: &str) -> Result<EffectReport<T>> {
    let rows = group_rows(z0, scores.n(), group)?;
    let v: Vec<T> = rows.iter().map(|&i| scores.theta[i]).collect();
    report(EstimandKind::Gapo, &v, scores, None, Some(group))
}

/// Paired contrast `a - b`.
pub fn ate<T: Real>(a: &ScoreVector<T>, b: &ScoreVector<T>) -> Result<EffectReport<T>> {
    report(EstimandKind::Ate, &diffs(a, b)?, a, Some(b), None)
}

/// Paired contrast `a - b` within a group.
pub fn gate<T: Real>(
    a: &ScoreVector<T>,
    b: &ScoreVector<T>,
    z0: &Groups,
    group: &str,
) -> Result<EffectReport<T>> {
    let d = diffs(a, b)?;
    let rows = group_rows(z0, d.len(), group)?;
    let v: Vec<T> = rows.iter().map(|&i| d[i]).collect();
    report(EstimandKind::Gate, &v, a, Some(b), Some(group))
}

/// Difference between a group effect and the overall effect.
///
/// The two estimates share the group's units, so
/// `Var(GATE - ATE) = Var(GATE) + Var(ATE) - 2 (N_k / N) Var(GATE)`.
pub fn gate_minus_ate<T: Real>(
    a: &ScoreVector<T>,
    b: &ScoreVector<T>,
    z0: &Groups,
    group: &str,
) -> Result<EffectReport<T>> {
    let g = gate(a, b, z0, group)?;
    let t = ate(a, b)?;
    let (sg, st) = (g.se().unwrap(), t.se().unwrap());
    let share = T::of_usize(g.n_effective) / T::of_usize(t.n_effective);
    let var = (sg * sg + st * st - T::of(2.0) * share * sg * sg).max(T::zero());
    let est = g.estimate - t.estimate;
    Ok(EffectReport {
        kind: EstimandKind::GateMinusAte,
        estimate: est,
        inference: Some(Inference::normal(est, var.sqrt())),
        ..g
    })
}

/// Aligned text table: estimate with significance stars, standard error in
/// parentheses.
pub fn effects_table<T: Real>(rows: &[EffectReport<T>]) -> String {
    let header = ["Estimand", "Policy", "Group", "Estimate", "SE", "N"];
    let mut cells: Vec<[String; 6]> = Vec::with_capacity(rows.len());
    for r in rows {
        let policy = match &r.versus {
            Some(v) => format!("{} - {}", r.policy, v),
            None => r.policy.clone(),
        };
        let (est, se) = match &r.inference {
            Some(inf) => (
                format!("{:.3}{}", r.estimate.as_f64(), inf.stars()),
                format!("({:.3})", inf.se.as_f64()),
            ),
            None => (format!("{:.3}", r.estimate.as_f64()), String::from("-")),
        };
        let se = if r.baseline && r.inference.is_some() {
            format!("{se}+")
        } else {
            se
        };
        cells.push([
            r.kind.label().to_string(),
            policy,
            r.group.clone().unwrap_or_default(),
            est,
            se,
            r.n_effective.to_string(),
        ]);
    }
    let mut width = header.map(str::len);
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[String]| {
        for (j, c) in row.iter().enumerate() {
            let pad = width[j] - c.chars().count();
            if j >= 3 {
                let _ = write!(out, "{}{}", " ".repeat(pad), c);
            } else {
                let _ = write!(out, "{}{}", c, " ".repeat(pad));
            }
            out.push_str(if j + 1 < row.len() { "  " } else { "\n" });
        }
    };
    line(&mut out, &header.map(String::from));
    let rule: usize = width.iter().sum::<usize>() + 2 * (width.len() - 1);
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for row in &cells {
        line(&mut out, row);
    }
    out.push_str("*, **, *** : p-value below 10%, 5%, 1%.");
    if rows.iter().any(|r| r.baseline && r.inference.is_some()) {
        out.push_str(" + : baseline score, no orthogonality guarantee.");
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FollowIndicators, Policy};
    use crate::nuisance::NuisanceMethod;
    use crate::scores::ScoreKind;
    use proptest::prelude::*;

    fn sv(name: &str, theta: Vec<f64>) -> ScoreVector<f64> {
        let n = theta.len();
        ScoreVector {
            theta,
            policy: Policy::static_sequence(name, 0, 0),
            kind: ScoreKind::Dynamic,
            nuisance_method: NuisanceMethod::Oracle,
            follow: FollowIndicators {
                i1: vec![false; n],
                i12: vec![false; n],
            },
            extreme_weights: 0,
        }
    }

    #[test]
    fn constant_scores() {
        let r = apo(&sv("a", vec![1.0; 4])).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.se(), Some(0.0));
        assert_eq!(r.inference.unwrap().p_value, 0.0);
    }

    #[test]
    fn two_point_se() {
        let r = apo(&sv("a", vec![0.0, 2.0])).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert!((r.se().unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_scores_rejected() {
        assert!(apo(&sv("a", vec![])).is_err());
    }

    #[test]
    fn identical_policies_give_zero() {
        let a = sv("a", vec![1.0, 5.0, -2.0]);
        let r = ate(&a, &a).unwrap();
        assert_eq!((r.estimate, r.se()), (0.0, Some(0.0)));
        assert_eq!(r.inference.unwrap().p_value, 1.0);
    }

    #[test]
    fn p_value_reference_points() {
        let inf = Inference::normal(1.959964f64, 1.0);
        assert!((inf.p_value - 0.05).abs() < 1e-6);
        assert_eq!(Inference::normal(1.9, 1.0).stars(), "*");
        assert_eq!(Inference::normal(3.0, 1.0).stars(), "***");
        assert_eq!(Inference::normal(0.5, 1.0).stars(), "");
    }

    #[test]
    fn single_group_gate_is_ate_and_difference_vanishes() {
        let a = sv("a", vec![1.0, 4.0, 2.5, 7.0]);
        let b = sv("b", vec![0.0, 1.0, 3.0, 2.0]);
        let z = Groups::from_labels(&["all"; 4]);
        let g = gate(&a, &b, &z, "all").unwrap();
        let t = ate(&a, &b).unwrap();
        assert_eq!(g.estimate, t.estimate);
        assert_eq!(g.se(), t.se());
        let d = gate_minus_ate(&a, &b, &z, "all").unwrap();
        assert_eq!(d.estimate, 0.0);
        assert_eq!(d.se(), Some(0.0));
    }

    #[test]
    fn unknown_group_is_an_error() {
        let a = sv("a", vec![1.0, 2.0]);
        let z = Groups::from_labels(&["x", "y"]);
        assert!(matches!(gate(&a, &a, &z, "q"), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn table_layout() {
        let a = sv("a", vec![0.0, 2.0, 4.0, 6.0]);
        let b = sv("b", vec![0.0, 0.0, 0.0, 0.0]);
        let t = effects_table(&[apo(&a).unwrap(), ate(&a, &b).unwrap()]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("Estimand"));
        assert!(lines[2].contains("3.000***"), "{t}");
        assert!(lines[2].contains("(1.118)"));
        assert!(lines[3].contains("a - b"));
        assert_eq!(lines[0].len(), lines[2].len());
    }

    proptest! {
        #[test]
        fn antisymmetry_and_weighted_identity(
            pairs in proptest::collection::vec((-100f64..100.0, -100f64..100.0, 0usize..3), 3..60)
        ) {
            let a = sv("a", pairs.iter().map(|p| p.0).collect());
            let b = sv("b", pairs.iter().map(|p| p.1).collect());
            let ab = ate(&a, &b).unwrap();
            let ba = ate(&b, &a).unwrap();
            prop_assert!((ab.estimate + ba.estimate).abs() <= 1e-12 * (1.0 + ab.estimate.abs()));
            prop_assert!((ab.se().unwrap() - ba.se().unwrap()).abs() <= 1e-12 * (1.0 + ab.se().unwrap()));
            let inf = ab.inference.unwrap();
            prop_assert!(inf.ci_low <= ab.estimate && ab.estimate <= inf.ci_high);
            prop_assert!((inf.ci_high - inf.ci_low - 2.0 * Z95 * inf.se).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&inf.p_value));

            let labels: Vec<String> = pairs.iter().map(|p| format!("g{}", p.2)).collect();
            let z = Groups::from_labels(&labels);
            let n = pairs.len() as f64;
            let mut weighted = 0.0;
            for g in z.labels() {
                let r = gate(&a, &b, &z, g).unwrap();
                weighted += r.n_effective as f64 / n * r.estimate;
                let d = gate_minus_ate(&a, &b, &z, g).unwrap();
                prop_assert!(d.se().unwrap() >= 0.0);
            }
            prop_assert!((weighted - ab.estimate).abs() <= 1e-10 * ab.estimate.abs().max(1.0));
        }
    }
}
