//! Minmax propensity trimming, overlap histograms and balance tables.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{follow_indicators, policy_targets, PanelDataset};
use crate::error::{Error, Result};
use crate::nuisance::{NuisanceEstimates, NuisanceMethod};
use crate::scalar::{mean, sample_variance, Real};

/// Standardized differences at or above this are flagged as imbalanced.
pub const IMBALANCE_THRESHOLD: f64 = 20.0;
pub const OVERLAP_BINS: usize = 50;
pub const OVERLAP_PERCENTILES: [f64; 7] = [1.0, 5.0, 25.0, 50.0, 75.0, 95.0, 99.0];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TrimRule {
    /// Overlap of the follower and non-follower propensity ranges.
    #[default]
    Minmax,
    /// Keep units whose propensities lie in `[low, high]` in both periods.
    Fixed {
        low: f64,
        high: f64,
    },
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds<T> {
    pub low: T,
    pub high: T,
}

impl<T: Real> Thresholds<T> {
    pub fn contains(&self, p: T) -> bool {
        self.low <= p && p <= self.high
    }
}

/// Minmax bounds: the larger of the two group minima and the smaller of the
/// two group maxima.
pub fn minmax_thresholds<T: Real>(
    p: &[T],
    group: &[bool],
    within: Option<&[bool]>,
) -> Result<Thresholds<T>> {
    let mut lo = [T::infinity(); 2];
    let mut hi = [T::neg_infinity(); 2];
    for (i, (&v, &g)) in p.iter().zip(group).enumerate() {
        if within.is_some_and(|w| !w[i]) {
            continue;
        }
        let j = usize::from(g);
        lo[j] = lo[j].min(v);
        hi[j] = hi[j].max(v);
    }
    if lo[1] > hi[1] {
        return Err(Error::Overlap(
            "no followers to define trimming bounds".into(),
        ));
    }
    if lo[0] > hi[0] {
        return Err(Error::Overlap(
            "no non-followers to define trimming bounds".into(),
        ));
    }
    let t = Thresholds {
        low: lo[0].max(lo[1]),
        high: hi[0].min(hi[1]),
    };
    if t.low > t.high {
        return Err(Error::Overlap(format!(
            "follower and non-follower propensity ranges are disjoint ({} > {})",
            t.low, t.high
        )));
    }
    Ok(t)
}

/// First-period minmax rule; the mask keeps units inside the bounds.
pub fn minmax_trim_period1<T: Real>(
    p1_hat: &[T],
    i1: &[bool],
) -> Result<(Thresholds<T>, Vec<bool>)> {
    let t = minmax_thresholds(p1_hat, i1, None)?;
    Ok((t, p1_hat.iter().map(|&p| t.contains(p)).collect()))
}

/// Second-period minmax rule inside one branch of the policy (units with
/// `branch[i]`). Followers are compared with all other units of the branch;
/// units outside the branch are kept. Returns `None` when the branch has no
/// non-followers.
pub fn minmax_trim_period2<T: Real>(
    p2_hat: &[T],
    i12: &[bool],
    branch: &[bool],
) -> Result<Option<(Thresholds<T>, Vec<bool>)>> {
    let followers = branch.iter().zip(i12).filter(|(&b, &f)| b && f).count();
    let members = branch.iter().filter(|&&b| b).count();
    if followers == 0 {
        return Err(Error::Overlap("branch has no sequence followers".into()));
    }
    if followers == members {
        return Ok(None);
    }
    let t = minmax_thresholds(p2_hat, i12, Some(branch))?;
    let mask = p2_hat
        .iter()
        .zip(branch)
        .map(|(&p, &b)| !b || t.contains(p))
        .collect();
    Ok(Some((t, mask)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchTrim<T> {
    /// Second-period treatment assigned in this branch.
    pub d2: usize,
    pub units: usize,
    pub thresholds: Option<Thresholds<T>>,
    pub dropped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyTrim<T> {
    pub policy: String,
    pub period1: Option<Thresholds<T>>,
    pub period2: Vec<BranchTrim<T>>,
    /// Units this policy's rule drops.
    pub dropped: usize,
    /// Units dropped by this policy and no other.
    pub dropped_only_here: usize,
    #[serde(skip)]
    pub keep_mask: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow<T> {
    pub variable: String,
    pub mean_kept: T,
    pub mean_dropped: T,
    /// Standardized difference; `None` when infinite (zero pooled variance
    /// with unequal means).
    pub std_diff: Option<T>,
    pub imbalanced: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrimReport<T> {
    pub rule: TrimRule,
    /// How the second-period comparison group is formed.
    pub period2_complement: String,
    pub n: usize,
    pub drop_count: usize,
    pub drop_share: f64,
    pub policies: Vec<PolicyTrim<T>>,
    /// Kept vs dropped units; empty when nothing is dropped.
    pub balance: Vec<BalanceRow<T>>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub keep_mask: Vec<bool>,
}

impl<T: Real> TrimReport<T> {
    pub fn kept_rows(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.keep_mask[i]).collect()
    }

    /// Balance table as CSV: variable, mean kept, mean dropped, difference.
    pub fn write_balance_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "variable",
            "mean_kept",
            "mean_dropped",
            "std_diff",
            "imbalanced",
        ])?;
        for r in &self.balance {
            w.write_record([
                r.variable.clone(),
                r.mean_kept.to_string(),
                r.mean_dropped.to_string(),
                r.std_diff
                    .map_or_else(|| "inf".to_string(), |d| d.to_string()),
                r.imbalanced.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<balance table>", e))?;
        Ok(())
    }

    pub fn save_balance_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_balance_csv(std::io::BufWriter::new(f))
    }
}

fn trim_policy<T: Real>(
    ds: &PanelDataset<T>,
    nuis: &NuisanceEstimates<T>,
    rule: TrimRule,
    warnings: &mut Vec<String>,
) -> Result<PolicyTrim<T>> {
    let pol = &nuis.policy;
    let n = ds.n();
    if nuis.n() != n {
        return Err(Error::Argument(format!(
            "policy `{}`: {} nuisance rows for {n} units",
            pol.name,
            nuis.n()
        )));
    }
    let f = follow_indicators(ds, pol)?;
    let g2 = policy_targets(ds, pol)?.g2;
    let mut keep = vec![true; n];
    let mut period1 = None;
    let mut period2 = Vec::new();
    let mut branches: Vec<usize> = g2.clone();
    branches.sort_unstable();
    branches.dedup();
    match rule {
        TrimRule::Off => {}
        TrimRule::Fixed { low, high } => {
            let t = Thresholds {
                low: T::of(low),
                high: T::of(high),
            };
            for i in 0..n {
                keep[i] = t.contains(nuis.p1_hat[i]) && t.contains(nuis.p2_hat[i]);
            }
            period1 = Some(t);
            for d2 in branches {
                let rows: Vec<usize> = (0..n).filter(|&i| g2[i] == d2).collect();
                period2.push(BranchTrim {
                    d2,
                    units: rows.len(),
                    thresholds: Some(t),
                    dropped: rows
                        .iter()
                        .filter(|&&i| !t.contains(nuis.p2_hat[i]))
                        .count(),
                });
            }
        }
        // sequence-level propensity: one rule on the joint followers
        TrimRule::Minmax if nuis.method == NuisanceMethod::StaticConf => {
            let (t1, m1) = minmax_trim_period1(&nuis.p1_hat, &f.i12).map_err(|e| {
                Error::Overlap(format!("policy `{}`, sequence propensity: {e}", pol.name))
            })?;
            period1 = Some(t1);
            keep = m1;
        }
        TrimRule::Minmax => {
            let (t1, m1) = minmax_trim_period1(&nuis.p1_hat, &f.i1)
                .map_err(|e| Error::Overlap(format!("policy `{}`, first period: {e}", pol.name)))?;
            period1 = Some(t1);
            keep = m1;
            for d2 in branches {
                let branch: Vec<bool> = g2.iter().map(|&g| g == d2).collect();
                let units = branch.iter().filter(|&&b| b).count();
                let res = minmax_trim_period2(&nuis.p2_hat, &f.i12, &branch).map_err(|e| {
                    Error::Overlap(format!(
                        "policy `{}`, second-period branch {d2}: {e}",
                        pol.name
                    ))
                })?;
                match res {
                    Some((t2, m2)) => {
                        let dropped = m2.iter().filter(|&&k| !k).count();
                        for (k, m) in keep.iter_mut().zip(&m2) {
                            *k &= *m;
                        }
                        period2.push(BranchTrim {
                            d2,
                            units,
                            thresholds: Some(t2),
                            dropped,
                        });
                    }
                    None => {
                        warnings.push(format!(
                            "policy `{}`: every unit of second-period branch {d2} follows the policy; branch not trimmed",
                            pol.name
                        ));
                        period2.push(BranchTrim {
                            d2,
                            units,
                            thresholds: None,
                            dropped: 0,
                        });
                    }
                }
            }
        }
    }
    Ok(PolicyTrim {
        policy: pol.name.clone(),
        period1,
        period2,
        dropped: keep.iter().filter(|&&k| !k).count(),
        dropped_only_here: 0,
        keep_mask: keep,
    })
}

/// Trim every policy once and keep the units retained by all of them.
pub fn union_trim<T: Real>(
    ds: &PanelDataset<T>,
    nuisances: &[NuisanceEstimates<T>],
    rule: TrimRule,
) -> Result<TrimReport<T>> {
    if nuisances.is_empty() {
        return Err(Error::Argument("no policies to trim".into()));
    }
    let n = ds.n();
    let mut warnings = Vec::new();
    let mut policies = nuisances
        .iter()
        .map(|nu| trim_policy(ds, nu, rule, &mut warnings))
        .collect::<Result<Vec<_>>>()?;
    let keep: Vec<bool> = (0..n)
        .map(|i| policies.iter().all(|p| p.keep_mask[i]))
        .collect();
    for j in 0..policies.len() {
        policies[j].dropped_only_here = (0..n)
            .filter(|&i| {
                !policies[j].keep_mask[i]
                    && policies
                        .iter()
                        .enumerate()
                        .all(|(k, p)| k == j || p.keep_mask[i])
            })
            .count();
    }
    let drop_count = keep.iter().filter(|&&k| !k).count();
    if drop_count == n {
        return Err(Error::Overlap("trimming drops every unit".into()));
    }
    Ok(TrimReport {
        rule,
        period2_complement: "full_sample".into(),
        n,
        drop_count,
        drop_share: drop_count as f64 / n as f64,
        policies,
        balance: balance_table(ds, &keep)?,
        warnings,
        keep_mask: keep,
    })
}

/// Kept vs dropped means and standardized differences for every covariate.
pub fn balance_table<T: Real>(ds: &PanelDataset<T>, keep: &[bool]) -> Result<Vec<BalanceRow<T>>> {
    if keep.iter().all(|&k| k) {
        return Ok(Vec::new());
    }
    let mut rows = Vec::new();
    for (x, names) in [(ds.x0(), ds.x0_names()), (ds.x1(), ds.x1_names())] {
        for (j, name) in names.iter().enumerate() {
            let col = x.column(j);
            let kept: Vec<T> = col
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(&v, _)| v)
                .collect();
            let dropped: Vec<T> = col
                .iter()
                .zip(keep)
                .filter(|(_, &k)| !k)
                .map(|(&v, _)| v)
                .collect();
            let d = standardized_difference(&kept, &dropped)?;
            rows.push(BalanceRow {
                variable: name.clone(),
                mean_kept: mean(&kept).unwrap(),
                mean_dropped: mean(&dropped).unwrap(),
                std_diff: d.is_finite().then_some(d),
                imbalanced: is_imbalanced(d),
            });
        }
    }
    Ok(rows)
}

/// `100 |mean_a - mean_b| / sqrt((var_a + var_b) / 2)` with sample variances.
pub fn standardized_difference<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    let (Some(ma), Some(mb)) = (mean(a), mean(b)) else {
        return Err(Error::Argument(
            "standardized difference needs two nonempty samples".into(),
        ));
    };
    let gap = (ma - mb).abs();
    if gap == T::zero() {
        return Ok(T::zero());
    }
    let pooled = ((sample_variance(a).unwrap() + sample_variance(b).unwrap()) / T::of(2.0)).sqrt();
    if pooled == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::of(100.0) * gap / pooled)
}

pub fn is_imbalanced<T: Real>(delta: T) -> bool {
    delta >= T::of(IMBALANCE_THRESHOLD)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub percentile: f64,
    pub followers: Option<f64>,
    pub non_followers: Option<f64>,
}

/// Fixed-bin propensity histograms by compliance status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapSummary {
    pub bins: usize,
    /// Share of followers in each bin of `[0, 1]`; all zero without followers.
    pub followers: Vec<f64>,
    pub non_followers: Vec<f64>,
    pub quantiles: Vec<QuantileRow>,
}

pub fn overlap_summary<T: Real>(p_hat: &[T], follow: &[bool]) -> OverlapSummary {
    let mut groups: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (&p, &f) in p_hat.iter().zip(follow) {
        groups[usize::from(f)].push(p.as_f64());
    }
    let hist = |v: &[f64]| {
        let mut h = vec![0.0; OVERLAP_BINS];
        for &p in v {
            let b = ((p * OVERLAP_BINS as f64).floor().max(0.0) as usize).min(OVERLAP_BINS - 1);
            h[b] += 1.0;
        }
        if !v.is_empty() {
            h.iter_mut().for_each(|c| *c /= v.len() as f64);
        }
        h
    };
    for g in groups.iter_mut() {
        g.sort_by(f64::total_cmp);
    }
    OverlapSummary {
        bins: OVERLAP_BINS,
        followers: hist(&groups[1]),
        non_followers: hist(&groups[0]),
        quantiles: OVERLAP_PERCENTILES
            .iter()
            .map(|&q| QuantileRow {
                percentile: q,
                followers: percentile(&groups[1], q),
                non_followers: percentile(&groups[0], q),
            })
            .collect(),
    }
}

// Linear interpolation between order statistics of a sorted sample.
fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}
