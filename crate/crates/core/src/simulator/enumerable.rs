use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{draw_class, mean_and_se, sigmoid, McTruth, SimSample, StructuralDgp, UnitTruth};
use crate::data::{Groups, PanelDataset, PanelParts, Policy, TreatmentLabels};
use crate::error::{Error, Result};
use crate::nuisance::NuisanceEstimates;

pub const MAX_ATOMS: usize = 8;
pub const MAX_TREATMENTS: usize = 3;
const MAX_SUPPORT: usize = 100_000;
/// Joint states of the two binary intermediate variables, `v1 + 2 w`.
const STATES: usize = 4;

/// Discrete two-period model with a small finite support.
///
/// `X0` takes one of at most eight atoms and is emitted as drop-first
/// dummies; the intermediate variables `(V1, W)` are binary, with `V1` the
/// decision column. Every conditional law is a table, so policy values can
/// be summed exactly. The outcome is a table mean plus uniform noise on
/// `[-noise, noise]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerableDgpConfig {
    pub n: usize,
    pub seed: u64,
    pub atom_probs: Vec<f64>,
    /// Group label of each atom.
    pub groups: Vec<String>,
    pub m1: usize,
    pub m2: usize,
    /// `[atom][d1]`.
    pub p_d1: Vec<Vec<f64>>,
    /// `[atom][d1][state]`.
    pub p_x1: Vec<Vec<Vec<f64>>>,
    /// `[atom][d1][state][d2]`.
    pub p_d2: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[atom][d1][state][d2]`.
    pub y_mean: Vec<Vec<Vec<Vec<f64>>>>,
    pub noise: f64,
}

fn state_of(v1: bool, w: bool) -> usize {
    v1 as usize + 2 * w as usize
}

fn bern_pair(pv: f64, pw: f64) -> Vec<f64> {
    (0..STATES)
        .map(|s| {
            let a = if s & 1 == 1 { pv } else { 1.0 - pv };
            let b = if s & 2 == 2 { pw } else { 1.0 - pw };
            a * b
        })
        .collect()
}

impl EnumerableDgpConfig {
    /// Four atoms in two groups, binary treatments in both periods (second
    /// period `1` = no program). The first-period treatment raises `V1`,
    /// `V1` pushes units into no program and raises the outcome, so
    /// conditioning on the observed sequence distorts the `V1` mix.
    pub fn calibrated(n: usize) -> Self {
        let atom_probs = vec![0.3, 0.2, 0.25, 0.25];
        let q = [0.35, 0.5, 0.6, 0.45];
        let base_r = [0.3, 0.4, 0.5, 0.35];
        let base_s = [0.5, 0.4, 0.6, 0.5];
        let np_icpt = [-0.3, 0.0, 0.2, -0.1];
        let atom_effect = [0.0, 0.5, -0.3, 0.2];
        let alpha = [[1.0, 0.0], [1.5, 0.3]];
        let (mut p_d1, mut p_x1, mut p_d2, mut y_mean) = (vec![], vec![], vec![], vec![]);
        for a in 0..4 {
            p_d1.push(vec![1.0 - q[a], q[a]]);
            let (mut px, mut pd, mut ym) = (vec![], vec![], vec![]);
            for d1 in 0..2 {
                let d = d1 as f64;
                px.push(bern_pair(base_r[a] + 0.2 * d, base_s[a] + 0.1 * d));
                let (mut pd_s, mut ym_s) = (vec![], vec![]);
                for s in 0..STATES {
                    let (v1, w) = ((s & 1) as f64, ((s >> 1) & 1) as f64);
                    let np = sigmoid(np_icpt[a] + 0.1 * d + 2.0 * v1 + 0.5 * w);
                    pd_s.push(vec![1.0 - np, np]);
                    let f = atom_effect[a] + if a == 2 { 0.3 * d } else { 0.0 };
                    ym_s.push(
                        (0..2)
                            .map(|d2| alpha[d1][d2] + f + 2.0 * v1 + 0.5 * w)
                            .collect(),
                    );
                }
                pd.push(pd_s);
                ym.push(ym_s);
            }
            p_x1.push(px);
            p_d2.push(pd);
            y_mean.push(ym);
        }
        EnumerableDgpConfig {
            n,
            seed: 0,
            atom_probs,
            groups: vec!["g0".into(), "g0".into(), "g1".into(), "g1".into()],
            m1: 2,
            m2: 2,
            p_d1,
            p_x1,
            p_d2,
            y_mean,
            noise: 1.0,
        }
    }

    /// Dynamic policy, the static sequence it starts with, and a baseline
    /// sequence for contrasts, valid for [`EnumerableDgpConfig::calibrated`].
    pub fn calibrated_policies() -> Vec<Policy> {
        vec![
            Policy::dynamic("dyn", 1, 0, 1),
            Policy::static_sequence("seq", 1, 0),
            Policy::static_sequence("base", 0, 1),
        ]
    }

    /// The calibrated outcome and intermediate laws with treatments
    /// assigned by fair coins in both periods.
    pub fn constant_propensity(n: usize) -> Self {
        let mut c = Self::calibrated(n);
        for a in 0..c.atom_probs.len() {
            c.p_d1[a] = vec![0.5, 0.5];
            for d1 in 0..2 {
                for s in 0..STATES {
                    c.p_d2[a][d1][s] = vec![0.5, 0.5];
                }
            }
        }
        c
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn atoms(&self) -> usize {
        self.atom_probs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let k = self.atoms();
        if k == 0 || k > MAX_ATOMS {
            return cfg(format!("{k} atoms, expected 1..={MAX_ATOMS}"));
        }
        if !(2..=MAX_TREATMENTS).contains(&self.m1) || !(2..=MAX_TREATMENTS).contains(&self.m2) {
            return cfg(format!("treatment counts must lie in 2..={MAX_TREATMENTS}"));
        }
        let support = k * self.m1 * STATES * self.m2;
        if support >= MAX_SUPPORT {
            return cfg(format!("joint support of {support} points is too large"));
        }
        if self.groups.len() != k {
            return cfg(format!("{} group labels for {k} atoms", self.groups.len()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return cfg("noise half-width must be finite and non-negative".into());
        }
        let dist = |what: &str, v: &[f64], len: usize| -> Result<()> {
            if v.len() != len {
                return cfg(format!(
                    "`{what}` row has length {}, expected {len}",
                    v.len()
                ));
            }
            if v.iter().any(|&p| !(0.0..=1.0).contains(&p))
                || (v.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return cfg(format!("`{what}` row is not a probability distribution"));
            }
            Ok(())
        };
        let shape = |what: &str, got: usize, want: usize| -> Result<()> {
            if got != want {
                return cfg(format!("`{what}` has {got} entries, expected {want}"));
            }
            Ok(())
        };
        dist("atom_probs", &self.atom_probs, k)?;
        for what in ["p_d1", "p_x1", "p_d2", "y_mean"] {
            let got = match what {
                "p_d1" => self.p_d1.len(),
                "p_x1" => self.p_x1.len(),
                "p_d2" => self.p_d2.len(),
                _ => self.y_mean.len(),
            };
            shape(what, got, k)?;
        }
        for a in 0..k {
            dist("p_d1", &self.p_d1[a], self.m1)?;
            shape("p_x1", self.p_x1[a].len(), self.m1)?;
            shape("p_d2", self.p_d2[a].len(), self.m1)?;
            shape("y_mean", self.y_mean[a].len(), self.m1)?;
            for d1 in 0..self.m1 {
                dist("p_x1", &self.p_x1[a][d1], STATES)?;
                shape("p_d2", self.p_d2[a][d1].len(), STATES)?;
                shape("y_mean", self.y_mean[a][d1].len(), STATES)?;
                for s in 0..STATES {
                    dist("p_d2", &self.p_d2[a][d1][s], self.m2)?;
                    shape("y_mean", self.y_mean[a][d1][s].len(), self.m2)?;
                    if self.y_mean[a][d1][s].iter().any(|v| !v.is_finite()) {
                        return cfg("`y_mean` has a non-finite entry".into());
                    }
                }
            }
        }
        Ok(())
    }

    fn check_policy(&self, pol: &Policy) -> Result<()> {
        if pol.d1_target >= self.m1 || pol.d2_if_v1_zero >= self.m2 || pol.d2_if_v1_one >= self.m2 {
            return Err(Error::Config(format!(
                "policy `{}` assigns a treatment outside the model",
                pol.name
            )));
        }
        if pol.is_static() && pol.d2_if_v1_zero != pol.d2_if_v1_one {
            return Err(Error::Config(format!(
                "static policy `{}` must assign one second-period treatment",
                pol.name
            )));
        }
        Ok(())
    }

    /// `E[ mu(X0, X1) | X0 = atom, D1 = g1 ]`.
    pub fn nu(&self, atom: usize, pol: &Policy) -> f64 {
        let g1 = pol.d1_target;
        (0..STATES)
            .map(|s| {
                self.p_x1[atom][g1][s] * self.y_mean[atom][g1][s][pol.second_period(s & 1 == 1)]
            })
            .sum()
    }

    /// Exact policy value among units whose atom is in `group`, or in the
    /// whole population when `group` is `None`.
    pub fn oracle_apo_exact_group(&self, pol: &Policy, group: Option<&str>) -> Result<f64> {
        self.validate()?;
        self.check_policy(pol)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for a in 0..self.atoms() {
            if group.is_some_and(|g| g != self.groups[a]) {
                continue;
            }
            num += self.atom_probs[a] * self.nu(a, pol);
            den += self.atom_probs[a];
        }
        if den <= 0.0 {
            return Err(Error::Argument(format!(
                "group `{}` has no mass",
                group.unwrap_or("")
            )));
        }
        Ok(num / den)
    }

    fn x0_columns(&self) -> usize {
        (self.atoms() - 1).max(1)
    }

    /// Atom index of each row of an emitted dataset, read from the dummies.
    pub fn decode_atoms(&self, ds: &PanelDataset<f64>) -> Result<Vec<usize>> {
        if ds.x0().ncols() != self.x0_columns() {
            return Err(Error::Argument(
                "dataset does not match this configuration".into(),
            ));
        }
        Ok((0..ds.n())
            .map(|i| {
                if self.atoms() == 1 {
                    0
                } else {
                    ds.x0()
                        .row(i)
                        .iter()
                        .position(|&v| v == 1.0)
                        .map_or(0, |j| j + 1)
                }
            })
            .collect())
    }
}

impl StructuralDgp for EnumerableDgpConfig {
    fn default_n(&self) -> usize {
        self.n
    }

    fn sample(&self, n: usize, seed: u64) -> Result<SimSample> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p0 = self.x0_columns();
        let mut x0 = Array2::zeros((n, p0));
        let mut x1 = Array2::zeros((n, 2));
        let (mut d1, mut d2, mut y, mut atom) = (vec![0; n], vec![0; n], vec![0.0; n], vec![0; n]);
        let mut truth = UnitTruth {
            p_d1: vec![0.0; n],
            p_d2: vec![0.0; n],
            mean_y: vec![0.0; n],
        };
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let a = draw_class(&mut rng, &self.atom_probs);
            let t1 = draw_class(&mut rng, &self.p_d1[a]);
            let s = draw_class(&mut rng, &self.p_x1[a][t1]);
            let t2 = draw_class(&mut rng, &self.p_d2[a][t1][s]);
            let m = self.y_mean[a][t1][s][t2];
            let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
            if a > 0 {
                x0[[i, a - 1]] = 1.0;
            }
            x1[[i, 0]] = (s & 1) as f64;
            x1[[i, 1]] = (s >> 1) as f64;
            d1[i] = t1;
            d2[i] = t2;
            y[i] = m + self.noise * u;
            atom[i] = a;
            labels.push(self.groups[a].clone());
            truth.p_d1[i] = self.p_d1[a][t1];
            truth.p_d2[i] = self.p_d2[a][t1][s][t2];
            truth.mean_y[i] = m;
        }
        let x0_names = if self.atoms() == 1 {
            vec!["atom_const".into()]
        } else {
            (1..self.atoms()).map(|a| format!("atom_{a}")).collect()
        };
        let data = PanelDataset::new(PanelParts {
            x0,
            x0_names,
            d1,
            x1,
            x1_names: vec!["v1".into(), "w".into()],
            y1_col: Some(0),
            d2,
            y,
            z0: Some(Groups::from_labels(&labels)),
            labels: TreatmentLabels::numeric(self.m1, self.m2),
        })?;
        Ok(SimSample {
            data,
            atom: Some(atom),
            truth,
        })
    }

    /// Counterfactual trajectories under the policy, recording the table
    /// mean of the outcome (its noise has mean zero).
    fn oracle_apo_mc(&self, pol: &Policy, draws: usize, seed: u64) -> Result<McTruth> {
        if draws < 1000 {
            return Err(Error::Argument(format!(
                "oracle needs at least 1000 draws, got {draws}"
            )));
        }
        self.validate()?;
        self.check_policy(pol)?;
        let chunks = 64usize;
        let per = draws.div_ceil(chunks);
        let g1 = pol.d1_target;
        let vals: Vec<f64> = (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (c as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                let take = per.min(draws.saturating_sub(c * per));
                (0..take)
                    .map(|_| {
                        let a = draw_class(&mut rng, &self.atom_probs);
                        let s = draw_class(&mut rng, &self.p_x1[a][g1]);
                        self.y_mean[a][g1][s][pol.second_period(s & 1 == 1)]
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let (value, se) = mean_and_se(&vals);
        Ok(McTruth { value, se, draws })
    }

    fn oracle_apo_exact(&self, pol: &Policy) -> Option<Result<f64>> {
        Some(self.oracle_apo_exact_group(pol, None))
    }

    fn group_truth(&self, pol: &Policy, group: &str) -> Option<Result<f64>> {
        Some(self.oracle_apo_exact_group(pol, Some(group)))
    }

    fn true_nuisances(&self, s: &SimSample, pol: &Policy) -> Result<NuisanceEstimates<f64>> {
        self.check_policy(pol)?;
        let ds = &s.data;
        let atoms = match &s.atom {
            Some(a) => a.clone(),
            None => self.decode_atoms(ds)?,
        };
        let g1 = pol.d1_target;
        let (mut p1, mut p2, mut mu, mut nu) = (vec![], vec![], vec![], vec![]);
        for (i, &a) in atoms.iter().enumerate() {
            let v1 = ds.x1()[[i, 0]] == 1.0;
            let st = state_of(v1, ds.x1()[[i, 1]] == 1.0);
            let g2 = pol.second_period(v1);
            p1.push(self.p_d1[a][g1]);
            p2.push(self.p_d2[a][g1][st][g2]);
            mu.push(self.y_mean[a][g1][st][g2]);
            nu.push(self.nu(a, pol));
        }
        NuisanceEstimates::oracle(pol.clone(), p1, p2, mu, nu)
    }
}
