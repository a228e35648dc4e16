//! Per-unit score vectors built from nuisance estimates.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{follow_indicators, FollowIndicators, PanelDataset, Policy};
use crate::error::{Error, Result};
use crate::nuisance::{NuisanceEstimates, NuisanceMethod};
use crate::scalar::Real;

/// Propensity products below this are counted as extreme weights.
pub const EXTREME_PROPENSITY: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// Sequential doubly robust score.
    Dynamic,
    /// Doubly robust score with a sequence-level propensity.
    Static,
    /// Inverse probability weighting; not orthogonal.
    Ipw,
}

impl ScoreKind {
    /// Whether standard errors from this score lack an orthogonality
    /// guarantee.
    pub fn is_baseline(self) -> bool {
        self == ScoreKind::Ipw
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector<T> {
    pub theta: Vec<T>,
    pub policy: Policy,
    pub kind: ScoreKind,
    pub nuisance_method: NuisanceMethod,
    pub follow: FollowIndicators,
    /// Units whose combined propensity is below [`EXTREME_PROPENSITY`].
    pub extreme_weights: usize,
}

impl<T: Real> ScoreVector<T> {
    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn mean(&self) -> T {
        crate::scalar::mean(&self.theta).unwrap_or_else(T::nan)
    }

    /// Scores of the units with `keep[i]`, in order.
    pub fn restrict(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.n() {
            return Err(Error::Argument(format!(
                "mask has {} entries for {} units",
                keep.len(),
                self.n()
            )));
        }
        let pick = |v: &[bool]| {
            v.iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(&x, _)| x)
                .collect()
        };
        Ok(ScoreVector {
            theta: self
                .theta
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(&t, _)| t)
                .collect(),
            follow: FollowIndicators {
                i1: pick(&self.follow.i1),
                i12: pick(&self.follow.i12),
            },
            ..self.clone()
        })
    }

    /// One row per unit: id, theta, i1, i12.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["unit", "theta", "i1", "i12"])?;
        for i in 0..self.n() {
            w.write_record([
                i.to_string(),
                self.theta[i].to_string(),
                u8::from(self.follow.i1[i]).to_string(),
                u8::from(self.follow.i12[i]).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<score dump>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn prepare<T: Real>(
    ds: &PanelDataset<T>,
    pol: &Policy,
    nuis: &NuisanceEstimates<T>,
) -> Result<FollowIndicators> {
    if nuis.policy != *pol {
        return Err(Error::Argument(format!(
            "nuisances were estimated for policy `{}`, not `{}`",
            nuis.policy.name, pol.name
        )));
    }
    if nuis.n() != ds.n() {
        return Err(Error::Argument(format!(
            "{} nuisance rows for {} units",
            nuis.n(),
            ds.n()
        )));
    }
    nuis.check()?;
    follow_indicators(ds, pol)
}

fn require<T>(nuis: &NuisanceEstimates<T>, allowed: &[NuisanceMethod], what: &str) -> Result<()> {
    if allowed.contains(&nuis.method) {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "{what} cannot use {:?} nuisances",
            nuis.method
        )))
    }
}

fn count_extreme<T: Real>(nuis: &NuisanceEstimates<T>) -> usize {
    let lim = T::of(EXTREME_PROPENSITY);
    nuis.p1_hat
        .iter()
        .zip(&nuis.p2_hat)
        .filter(|(&a, &b)| a * b < lim)
        .count()
}

fn build<T: Real>(
    theta: Vec<T>,
    pol: &Policy,
    kind: ScoreKind,
    nuis: &NuisanceEstimates<T>,
    follow: FollowIndicators,
) -> Result<ScoreVector<T>> {
    if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("score of unit {i} is not finite")));
    }
    Ok(ScoreVector {
        theta,
        policy: pol.clone(),
        kind,
        nuisance_method: nuis.method,
        follow,
        extreme_weights: count_extreme(nuis),
    })
}

/// `nu + i1 (mu - nu) / p1 + i12 (Y - mu) / (p1 p2)`.
pub fn dynamic_score<T: Real>(
    ds: &PanelDataset<T>,
    pol: &Policy,
    nuis: &NuisanceEstimates<T>,
) -> Result<ScoreVector<T>> {
    require(
        nuis,
        &[
            NuisanceMethod::Bhl22,
            NuisanceMethod::Bjz24,
            NuisanceMethod::StaticConf,
            NuisanceMethod::Oracle,
        ],
        "dynamic score",
    )?;
    let f = prepare(ds, pol, nuis)?;
    let y = ds.y();
    let theta = (0..ds.n())
        .map(|i| {
            let (p1, p2, mu, nu) = (
                nuis.p1_hat[i],
                nuis.p2_hat[i],
                nuis.mu_hat[i],
                nuis.nu_hat[i],
            );
            let mut t = nu;
            if f.i1[i] {
                t += (mu - nu) / p1;
            }
            if f.i12[i] {
                t += (y[i] - mu) / (p1 * p2);
            }
            t
        })
        .collect();
    build(theta, pol, ScoreKind::Dynamic, nuis, f)
}

/// `mu + 1{sequence followed} (Y - mu) / p`, with `p = p1 p2` the sequence
/// propensity.
pub fn static_score<T: Real>(
    ds: &PanelDataset<T>,
    seq: &Policy,
    nuis: &NuisanceEstimates<T>,
) -> Result<ScoreVector<T>> {
    require(
        nuis,
        &[NuisanceMethod::StaticConf, NuisanceMethod::Oracle],
        "static score",
    )?;
    if !seq.is_static() {
        return Err(Error::Argument(format!(
            "static score needs a static policy, `{}` is dynamic",
            seq.name
        )));
    }
    let f = prepare(ds, seq, nuis)?;
    let y = ds.y();
    let theta = (0..ds.n())
        .map(|i| {
            let mu = nuis.mu_hat[i];
            if f.i12[i] {
                mu + (y[i] - mu) / (nuis.p1_hat[i] * nuis.p2_hat[i])
            } else {
                mu
            }
        })
        .collect();
    build(theta, seq, ScoreKind::Static, nuis, f)
}

/// `i12 Y / (p1 p2)`. Baseline only: not orthogonal to propensity errors.
pub fn ipw_score<T: Real>(
    ds: &PanelDataset<T>,
    pol: &Policy,
    nuis: &NuisanceEstimates<T>,
) -> Result<ScoreVector<T>> {
    let f = prepare(ds, pol, nuis)?;
    let y = ds.y();
    let theta = (0..ds.n())
        .map(|i| {
            if f.i12[i] {
                y[i] / (nuis.p1_hat[i] * nuis.p2_hat[i])
            } else {
                T::zero()
            }
        })
        .collect();
    build(theta, pol, ScoreKind::Ipw, nuis, f)
}

/// Plug-in g-formula estimate `mean(nu)`; no standard error.
pub fn gcomp_estimate<T: Real>(nuis: &NuisanceEstimates<T>) -> Result<T> {
    crate::scalar::mean(&nuis.nu_hat).ok_or_else(|| Error::Argument("no units".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PanelParts, TreatmentLabels};
    use ndarray::Array2;
    use proptest::prelude::*;

    fn ds(d1: Vec<usize>, d2: Vec<usize>, v1: Vec<f64>, y: Vec<f64>) -> PanelDataset<f64> {
        let n = y.len();
        let mut x1 = Array2::zeros((n, 1));
        for (i, v) in v1.iter().enumerate() {
            x1[[i, 0]] = *v;
        }
        PanelDataset::new(PanelParts {
            x0: Array2::from_shape_fn((n, 1), |(i, _)| i as f64),
            x0_names: vec!["x".into()],
            d1,
            x1,
            x1_names: vec!["v1".into()],
            y1_col: Some(0),
            d2,
            y,
            z0: None,
            labels: TreatmentLabels::numeric(2, 2),
        })
        .unwrap()
    }

    fn oracle(
        pol: &Policy,
        p1: Vec<f64>,
        p2: Vec<f64>,
        mu: Vec<f64>,
        nu: Vec<f64>,
    ) -> NuisanceEstimates<f64> {
        NuisanceEstimates::oracle(pol.clone(), p1, p2, mu, nu).unwrap()
    }

    #[test]
    fn non_followers_score_nu() {
        let pol = Policy::static_sequence("s", 1, 1);
        let d = ds(vec![0, 0], vec![1, 0], vec![0.0, 1.0], vec![5.0, -3.0]);
        let n = oracle(
            &pol,
            vec![0.3, 0.4],
            vec![0.5, 0.6],
            vec![1.0, 2.0],
            vec![7.0, 8.0],
        );
        assert_eq!(dynamic_score(&d, &pol, &n).unwrap().theta, vec![7.0, 8.0]);
        assert_eq!(ipw_score(&d, &pol, &n).unwrap().theta, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_computed_dynamic_score() {
        // unit 0 follows both periods, unit 1 only the first
        let pol = Policy::dynamic("d", 1, 0, 1);
        let d = ds(vec![1, 1], vec![0, 0], vec![0.0, 1.0], vec![4.0, 9.0]);
        let n = oracle(
            &pol,
            vec![0.5, 0.25],
            vec![0.8, 0.5],
            vec![3.0, 2.0],
            vec![1.0, 6.0],
        );
        let s = dynamic_score(&d, &pol, &n).unwrap();
        assert_eq!(s.theta[0], 1.0 + 2.0 / 0.5 + 1.0 / 0.4);
        assert_eq!(s.theta[1], 6.0 + (2.0 - 6.0) / 0.25);
        assert_eq!(s.follow.i12, vec![true, false]);
    }

    #[test]
    fn static_score_identities() {
        let pol = Policy::static_sequence("s", 1, 0);
        let d = ds(vec![1, 0], vec![0, 0], vec![0.0, 0.0], vec![4.0, 9.0]);
        let n = oracle(
            &pol,
            vec![1.0, 0.5],
            vec![1.0, 1.0],
            vec![3.0, 2.0],
            vec![3.0, 2.0],
        );
        let s = static_score(&d, &pol, &n).unwrap();
        assert_eq!(s.theta, vec![4.0, 2.0]);
        // with nu = mu and p2 = 1 the dynamic formula is the static one
        assert_eq!(dynamic_score(&d, &pol, &n).unwrap().theta, s.theta);
        assert!(static_score(&d, &Policy::dynamic("d", 1, 0, 1), &n).is_err());
    }

    #[test]
    fn ipw_full_compliance_is_mean_y() {
        let pol = Policy::static_sequence("s", 1, 1);
        let y = vec![1.0, 2.0, 6.0];
        let d = ds(vec![1; 3], vec![1; 3], vec![0.0; 3], y.clone());
        let n = oracle(&pol, vec![1.0; 3], vec![1.0; 3], vec![0.0; 3], vec![0.0; 3]);
        assert_eq!(ipw_score(&d, &pol, &n).unwrap().mean(), 3.0);
        assert!(ipw_score(&d, &pol, &n).unwrap().kind.is_baseline());
    }

    #[test]
    fn clip_bound_units_are_flagged() {
        let pol = Policy::static_sequence("s", 1, 1);
        let d = ds(vec![1, 1], vec![1, 1], vec![0.0; 2], vec![2.0, 2.0]);
        let clip = 1e-6;
        let n = oracle(
            &pol,
            vec![clip, 0.5],
            vec![clip, 0.5],
            vec![0.0; 2],
            vec![0.0; 2],
        );
        let s = ipw_score(&d, &pol, &n).unwrap();
        assert_eq!(s.extreme_weights, 1);
        assert!(s.theta[0] <= 2.0 / (clip * clip) * (1.0 + 1e-12));
    }

    #[test]
    fn gcomp_is_mean_nu_and_matches_score_without_residuals() {
        let pol = Policy::static_sequence("s", 1, 1);
        let d = ds(
            vec![1, 0, 1],
            vec![1, 1, 0],
            vec![0.0; 3],
            vec![2.0, 5.0, 1.0],
        );
        // residual terms vanish: mu = nu on first-period followers, Y = mu on sequence followers
        let n = oracle(
            &pol,
            vec![0.3; 3],
            vec![0.6; 3],
            vec![2.0, 0.0, 4.0],
            vec![2.0, 3.0, 4.0],
        );
        let g = gcomp_estimate(&n).unwrap();
        assert_eq!(g, 3.0);
        assert!((dynamic_score(&d, &pol, &n).unwrap().mean() - g).abs() < 1e-12);
    }

    #[test]
    fn mismatched_policy_rejected() {
        let pol = Policy::static_sequence("s", 1, 1);
        let d = ds(vec![1], vec![1], vec![0.0], vec![1.0]);
        let n = oracle(
            &Policy::static_sequence("t", 0, 1),
            vec![0.5],
            vec![0.5],
            vec![0.0],
            vec![0.0],
        );
        assert!(dynamic_score(&d, &pol, &n).is_err());
    }

    #[test]
    fn dump_rows() {
        let pol = Policy::static_sequence("s", 1, 1);
        let d = ds(vec![1, 0], vec![1, 1], vec![0.0; 2], vec![1.0, 2.0]);
        let n = oracle(&pol, vec![0.5; 2], vec![0.5; 2], vec![0.0; 2], vec![0.0; 2]);
        let mut buf = Vec::new();
        dynamic_score(&d, &pol, &n)
            .unwrap()
            .write_csv(&mut buf)
            .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "unit,theta,i1,i12\n0,4,1,1\n1,0,0,0\n"
        );
    }

    proptest! {
        #[test]
        fn telescoping_full_compliance(y in proptest::collection::vec(-1e3f64..1e3, 1..40),
                                       mu_seed in -50f64..50.0, nu_seed in -50f64..50.0) {
            let n = y.len();
            let pol = Policy::dynamic("d", 1, 1, 1);
            let d = ds(vec![1; n], vec![1; n], vec![0.0; n], y.clone());
            let mu: Vec<f64> = (0..n).map(|i| mu_seed + i as f64).collect();
            let nu: Vec<f64> = (0..n).map(|i| nu_seed - i as f64).collect();
            let nz = oracle(&pol, vec![1.0; n], vec![1.0; n], mu, nu);
            let s = dynamic_score(&d, &pol, &nz).unwrap();
            for (t, y) in s.theta.iter().zip(&y) {
                prop_assert!((t - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }
}
