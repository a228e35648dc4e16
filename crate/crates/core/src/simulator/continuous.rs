use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    draw_class, mean_and_se, sigmoid, softmax, McTruth, SimSample, StructuralDgp, UnitTruth,
};
use crate::data::{PanelDataset, PanelParts, Policy, TreatmentLabels};
use crate::error::{Error, Result};
use crate::nuisance::NuisanceEstimates;

/// Continuous two-period structural model.
///
/// `X0 ~ N(0, I)`; `D1 | X0` multinomial logit; `X1 = (V1, W)` with binary
/// `V1 | X0, D1` logit and `W | X0, D1` linear Gaussian; `D2 | X0, X1, D1`
/// multinomial logit; `Y` linear in everything plus `D1 x D2` and `D2 x V1`
/// interactions and Gaussian noise. The three switches zero the coefficient
/// blocks of the feedback arrows `D1 -> X1`, `X1 -> D2` and `X1 -> Y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub seed: u64,
    pub p0: usize,
    pub m1: usize,
    pub m2: usize,
    pub d1_intercept: Vec<f64>,
    /// `m1 x p0`.
    pub d1_x0: Vec<Vec<f64>>,
    pub v1_intercept: f64,
    pub v1_x0: Vec<f64>,
    pub v1_d1: Vec<f64>,
    pub w_intercept: f64,
    pub w_x0: Vec<f64>,
    pub w_d1: Vec<f64>,
    pub w_sigma: f64,
    /// `m1 x m2`: second-period logit intercepts by first-period treatment.
    pub d2_intercept: Vec<Vec<f64>>,
    /// `m2 x p0`.
    pub d2_x0: Vec<Vec<f64>>,
    pub d2_v1: Vec<f64>,
    pub d2_w: Vec<f64>,
    pub y_intercept: f64,
    pub y_x0: Vec<f64>,
    pub y_d1: Vec<f64>,
    pub y_d2: Vec<f64>,
    /// `m1 x m2`.
    pub y_d1d2: Vec<Vec<f64>>,
    pub y_v1: f64,
    pub y_w: f64,
    pub y_d2_v1: Vec<f64>,
    pub y_sigma: f64,
    pub d1_to_x1: bool,
    pub x1_to_d2: bool,
    pub x1_to_y: bool,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig::dynamic_confounding(5000)
    }
}

impl DgpConfig {
    /// Two first-period and three second-period treatments (the last one is
    /// "no program") with all feedback arrows on.
    pub fn dynamic_confounding(n: usize) -> Self {
        DgpConfig {
            n,
            seed: 0,
            p0: 2,
            m1: 2,
            m2: 3,
            d1_intercept: vec![0.0, 0.2],
            d1_x0: vec![vec![0.0, 0.0], vec![0.6, -0.4]],
            v1_intercept: -0.3,
            v1_x0: vec![0.5, 0.3],
            v1_d1: vec![0.0, 0.8],
            w_intercept: 0.0,
            w_x0: vec![0.4, -0.2],
            w_d1: vec![0.0, 0.5],
            w_sigma: 1.0,
            d2_intercept: vec![vec![0.0, -0.2, 0.3], vec![0.0, 0.1, 0.2]],
            d2_x0: vec![vec![0.0, 0.0], vec![0.3, 0.2], vec![-0.2, 0.4]],
            d2_v1: vec![0.0, 0.5, 2.0],
            d2_w: vec![0.0, -0.3, 0.4],
            y_intercept: 1.0,
            y_x0: vec![0.5, -0.5],
            y_d1: vec![0.0, 0.4],
            y_d2: vec![0.6, 0.3, 0.0],
            y_d1d2: vec![vec![0.0, 0.0, 0.0], vec![0.2, -0.1, 0.0]],
            y_v1: 1.5,
            y_w: 0.7,
            y_d2_v1: vec![0.3, 0.0, 0.0],
            y_sigma: 1.0,
            d1_to_x1: true,
            x1_to_d2: true,
            x1_to_y: true,
        }
    }

    /// Treatments independent of covariates, with the given first- and
    /// second-period logit intercepts.
    pub fn randomized(n: usize, d1_intercept: Vec<f64>, d2_intercept: Vec<f64>) -> Self {
        let base = DgpConfig::dynamic_confounding(n);
        let (m1, m2, p0) = (d1_intercept.len(), d2_intercept.len(), base.p0);
        DgpConfig {
            m1,
            m2,
            d1_x0: vec![vec![0.0; p0]; m1],
            d1_intercept,
            v1_d1: vec![0.0; m1],
            w_d1: vec![0.0; m1],
            d2_intercept: vec![d2_intercept; m1],
            d2_x0: vec![vec![0.0; p0]; m2],
            d2_v1: vec![0.0; m2],
            d2_w: vec![0.0; m2],
            y_d1: vec![0.0; m1],
            y_d2: vec![0.0; m2],
            y_d1d2: vec![vec![0.0; m2]; m1],
            y_d2_v1: vec![0.0; m2],
            d1_to_x1: false,
            x1_to_d2: false,
            x1_to_y: false,
            ..base
        }
    }

    /// The dynamic-confounding model with first-period selection on `X0`
    /// scaled by `strength`; larger values thin the overlap.
    pub fn thin_overlap(n: usize, strength: f64) -> Self {
        let mut c = DgpConfig::dynamic_confounding(n);
        c.d1_x0 = vec![vec![0.0, 0.0], vec![strength, -strength]];
        c
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, got: usize, want: usize| {
            Err(Error::Config(format!(
                "dgp block `{what}` has length {got}, expected {want}"
            )))
        };
        if self.m1 < 2 || self.m2 < 2 {
            return Err(Error::Config(
                "each period needs at least two treatments".into(),
            ));
        }
        let (p0, m1, m2) = (self.p0, self.m1, self.m2);
        for (what, v, want) in [
            ("d1_intercept", &self.d1_intercept, m1),
            ("v1_x0", &self.v1_x0, p0),
            ("v1_d1", &self.v1_d1, m1),
            ("w_x0", &self.w_x0, p0),
            ("w_d1", &self.w_d1, m1),
            ("d2_v1", &self.d2_v1, m2),
            ("d2_w", &self.d2_w, m2),
            ("y_x0", &self.y_x0, p0),
            ("y_d1", &self.y_d1, m1),
            ("y_d2", &self.y_d2, m2),
            ("y_d2_v1", &self.y_d2_v1, m2),
        ] {
            if v.len() != want {
                return bad(what, v.len(), want);
            }
        }
        for (what, rows, nrow, ncol) in [
            ("d1_x0", &self.d1_x0, m1, p0),
            ("d2_intercept", &self.d2_intercept, m1, m2),
            ("d2_x0", &self.d2_x0, m2, p0),
            ("y_d1d2", &self.y_d1d2, m1, m2),
        ] {
            if rows.len() != nrow {
                return bad(what, rows.len(), nrow);
            }
            if let Some(r) = rows.iter().find(|r| r.len() != ncol) {
                return bad(what, r.len(), ncol);
            }
        }
        if !(self.w_sigma >= 0.0 && self.y_sigma >= 0.0) {
            return Err(Error::Config("noise scales must be non-negative".into()));
        }
        Ok(())
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    pub fn p_d1(&self, x0: &[f64]) -> Vec<f64> {
        let l: Vec<f64> = (0..self.m1)
            .map(|c| self.d1_intercept[c] + Self::dot(&self.d1_x0[c], x0))
            .collect();
        softmax(&l)
    }

    pub fn p_v1(&self, x0: &[f64], d1: usize) -> f64 {
        let fb = if self.d1_to_x1 { self.v1_d1[d1] } else { 0.0 };
        sigmoid(self.v1_intercept + Self::dot(&self.v1_x0, x0) + fb)
    }

    pub fn mean_w(&self, x0: &[f64], d1: usize) -> f64 {
        let fb = if self.d1_to_x1 { self.w_d1[d1] } else { 0.0 };
        self.w_intercept + Self::dot(&self.w_x0, x0) + fb
    }

    pub fn p_d2(&self, x0: &[f64], v1: f64, w: f64, d1: usize) -> Vec<f64> {
        let on = if self.x1_to_d2 { 1.0 } else { 0.0 };
        let l: Vec<f64> = (0..self.m2)
            .map(|c| {
                self.d2_intercept[d1][c]
                    + Self::dot(&self.d2_x0[c], x0)
                    + on * (self.d2_v1[c] * v1 + self.d2_w[c] * w)
            })
            .collect();
        softmax(&l)
    }

    pub fn mean_y(&self, x0: &[f64], v1: f64, w: f64, d1: usize, d2: usize) -> f64 {
        let on = if self.x1_to_y { 1.0 } else { 0.0 };
        self.y_intercept
            + Self::dot(&self.y_x0, x0)
            + self.y_d1[d1]
            + self.y_d2[d2]
            + self.y_d1d2[d1][d2]
            + on * (self.y_v1 * v1 + self.y_w * w + self.y_d2_v1[d2] * v1)
    }

    /// `E[ E[Y | X0, X1, g1, g2(V1)] | X0, D1 = g1 ]`; exact because the
    /// outcome is linear in `W` and `V1` is binary.
    pub fn nu(&self, x0: &[f64], pol: &Policy) -> f64 {
        let g1 = pol.d1_target;
        let pv = self.p_v1(x0, g1);
        let w = self.mean_w(x0, g1);
        (1.0 - pv) * self.mean_y(x0, 0.0, w, g1, pol.second_period(false))
            + pv * self.mean_y(x0, 1.0, w, g1, pol.second_period(true))
    }

    fn draw_x0<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.p0).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn draw_x1<R: Rng>(&self, rng: &mut R, x0: &[f64], d1: usize) -> (f64, f64) {
        let v1 = if rng.random::<f64>() < self.p_v1(x0, d1) {
            1.0
        } else {
            0.0
        };
        let e: f64 = rng.sample(StandardNormal);
        (v1, self.mean_w(x0, d1) + self.w_sigma * e)
    }

    /// Sample `self.n` units with `self.seed`.
    pub fn generate(&self) -> Result<SimSample> {
        self.sample(self.n, self.seed)
    }

    /// Structural truth of one policy by Monte Carlo over `X0`, using the
    /// closed-form nested mean per draw.
    pub fn oracle_apo_nested(&self, pol: &Policy, draws: usize, seed: u64) -> Result<McTruth> {
        self.validate()?;
        pol.validate(&self.shape_probe()?)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..draws)
            .map(|_| self.nu(&self.draw_x0(&mut rng), pol))
            .collect();
        let (value, se) = mean_and_se(&v);
        Ok(McTruth { value, se, draws })
    }

    // Tiny dataset with this configuration's shape, for policy validation.
    fn shape_probe(&self) -> Result<PanelDataset<f64>> {
        Ok(self.sample(2, 0)?.data)
    }
}

impl StructuralDgp for DgpConfig {
    fn default_n(&self) -> usize {
        self.n
    }

    fn sample(&self, n: usize, seed: u64) -> Result<SimSample> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x0 = Array2::zeros((n, self.p0));
        let mut x1 = Array2::zeros((n, 2));
        let (mut d1, mut d2, mut y) = (vec![0; n], vec![0; n], vec![0.0; n]);
        let mut truth = UnitTruth {
            p_d1: vec![0.0; n],
            p_d2: vec![0.0; n],
            mean_y: vec![0.0; n],
        };
        for i in 0..n {
            let xi = self.draw_x0(&mut rng);
            let pd1 = self.p_d1(&xi);
            let a = draw_class(&mut rng, &pd1);
            let (v1, w) = self.draw_x1(&mut rng, &xi, a);
            let pd2 = self.p_d2(&xi, v1, w, a);
            let b = draw_class(&mut rng, &pd2);
            let m = self.mean_y(&xi, v1, w, a, b);
            let e: f64 = rng.sample(StandardNormal);
            for (j, v) in xi.iter().enumerate() {
                x0[[i, j]] = *v;
            }
            x1[[i, 0]] = v1;
            x1[[i, 1]] = w;
            d1[i] = a;
            d2[i] = b;
            y[i] = m + self.y_sigma * e;
            truth.p_d1[i] = pd1[a];
            truth.p_d2[i] = pd2[b];
            truth.mean_y[i] = m;
        }
        let data = PanelDataset::new(PanelParts {
            x0,
            x0_names: (1..=self.p0).map(|j| format!("x0_{j}")).collect(),
            d1,
            x1,
            x1_names: vec!["v1".into(), "w".into()],
            y1_col: Some(0),
            d2,
            y,
            z0: None,
            labels: TreatmentLabels::numeric(self.m1, self.m2),
        })?;
        Ok(SimSample {
            data,
            atom: None,
            truth,
        })
    }

    /// Counterfactual trajectories: draw `X0`, force `D1 = g1`, draw `X1`
    /// from its structural equation, force `D2 = g2(V1)` and record the
    /// conditional mean of `Y` (its noise has mean zero).
    fn oracle_apo_mc(&self, pol: &Policy, draws: usize, seed: u64) -> Result<McTruth> {
        if draws < 1000 {
            return Err(Error::Argument(format!(
                "oracle needs at least 1000 draws, got {draws}"
            )));
        }
        self.validate()?;
        pol.validate(&self.shape_probe()?)?;
        let chunks = 64usize;
        let per = draws.div_ceil(chunks);
        let vals: Vec<f64> = (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (c as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                let take = per.min(draws.saturating_sub(c * per));
                (0..take)
                    .map(|_| {
                        let x0 = self.draw_x0(&mut rng);
                        let (v1, w) = self.draw_x1(&mut rng, &x0, pol.d1_target);
                        self.mean_y(&x0, v1, w, pol.d1_target, pol.second_period(v1 == 1.0))
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let (value, se) = mean_and_se(&vals);
        Ok(McTruth { value, se, draws })
    }

    fn true_nuisances(&self, s: &SimSample, pol: &Policy) -> Result<NuisanceEstimates<f64>> {
        let ds = &s.data;
        pol.validate(ds)?;
        let g1 = pol.d1_target;
        let (mut p1, mut p2, mut mu, mut nu) = (vec![], vec![], vec![], vec![]);
        for i in 0..ds.n() {
            let x0: Vec<f64> = ds.x0().row(i).to_vec();
            let (v1, w) = (ds.x1()[[i, 0]], ds.x1()[[i, 1]]);
            let g2 = pol.second_period(v1 == 1.0);
            p1.push(self.p_d1(&x0)[g1]);
            p2.push(self.p_d2(&x0, v1, w, g1)[g2]);
            mu.push(self.mean_y(&x0, v1, w, g1, g2));
            nu.push(self.nu(&x0, pol));
        }
        NuisanceEstimates::oracle(pol.clone(), p1, p2, mu, nu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{LogitOptions, MultinomialLogit};

    #[test]
    fn shape_errors_are_config_errors() {
        let mut c = DgpConfig::dynamic_confounding(10);
        c.y_d2.pop();
        assert!(matches!(c.generate(), Err(Error::Config(_))));
    }

    #[test]
    fn null_design_matches_intercept_softmax() {
        let c = DgpConfig::randomized(20_000, vec![0.0, 0.5, -0.5], vec![0.0, 1.0]).with_seed(3);
        let s = c.generate().unwrap();
        let want = softmax(&[0.0, 0.5, -0.5]);
        for (k, w) in want.iter().enumerate() {
            let share = s.data.d1().iter().filter(|&&d| d == k).count() as f64 / 20_000.0;
            assert!((share - w).abs() < 0.02, "class {k}: {share} vs {w}");
        }
    }

    #[test]
    fn unit_feedback_shifts_w() {
        let mut c = DgpConfig::randomized(20_000, vec![0.0, 0.0], vec![0.0, 0.0]);
        c.d1_to_x1 = true;
        c.w_d1 = vec![0.0, 1.0];
        c.w_x0 = vec![0.0, 0.0];
        let s = c.with_seed(4).generate().unwrap();
        let mean_by = |k: usize| {
            let v: Vec<f64> = (0..s.data.n())
                .filter(|&i| s.data.d1()[i] == k)
                .map(|i| s.data.x1()[[i, 1]])
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((mean_by(1) - mean_by(0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn same_seed_same_data() {
        let c = DgpConfig::dynamic_confounding(500).with_seed(7);
        assert_eq!(c.generate().unwrap().data, c.generate().unwrap().data);
        assert_ne!(
            c.generate().unwrap().data,
            c.clone().with_seed(8).generate().unwrap().data
        );
    }

    #[test]
    fn switch_off_removes_x1_from_d2() {
        let mut c = DgpConfig::dynamic_confounding(50_000).with_seed(5);
        c.x1_to_d2 = false;
        let s = c.generate().unwrap();
        // refit D2 on (X0, X1) among D1 = 1
        let rows: Vec<usize> = (0..s.data.n()).filter(|&i| s.data.d1()[i] == 1).collect();
        let x = s.data.x01().select(ndarray::Axis(0), &rows);
        let y: Vec<usize> = rows.iter().map(|&i| s.data.d2()[i]).collect();
        let opts = LogitOptions {
            lambda: 0.0,
            ..LogitOptions::default()
        };
        let m = MultinomialLogit::fit(x.view(), &y, 3, opts).unwrap();
        for (class, row) in m.coefficients().iter().enumerate() {
            // intercept, X0 (2), then V1 and W
            for j in [3, 4] {
                assert!(row[j].abs() < 0.05, "class {class} col {j}: {}", row[j]);
            }
        }
    }

    #[test]
    fn constant_outcome_truth() {
        let mut c = DgpConfig::randomized(100, vec![0.0, 0.0], vec![0.0, 0.0]);
        c.y_intercept = 2.5;
        c.y_x0 = vec![0.0, 0.0];
        let t = c
            .oracle_apo_mc(&Policy::dynamic("d", 1, 0, 1), 5000, 1)
            .unwrap();
        assert_eq!((t.value, t.se), (2.5, 0.0));
        assert!(c
            .oracle_apo_mc(&Policy::dynamic("d", 1, 0, 1), 10, 1)
            .is_err());
    }

    #[test]
    fn dynamic_equals_static_when_v1_never_fires() {
        let mut c = DgpConfig::dynamic_confounding(100);
        c.v1_intercept = -60.0;
        let dy = c
            .oracle_apo_mc(&Policy::dynamic("d", 1, 0, 2), 20_000, 2)
            .unwrap();
        let st = c
            .oracle_apo_mc(&Policy::static_sequence("s", 1, 0), 20_000, 2)
            .unwrap();
        assert_eq!(dy.value, st.value);
    }

    #[test]
    fn nested_and_trajectory_oracles_agree() {
        let c = DgpConfig::dynamic_confounding(100);
        let pol = Policy::dynamic("d", 1, 0, 2);
        let a = c.oracle_apo_mc(&pol, 200_000, 11).unwrap();
        let b = c.oracle_apo_nested(&pol, 200_000, 12).unwrap();
        let se = (a.se.powi(2) + b.se.powi(2)).sqrt();
        assert!((a.value - b.value).abs() < 3.0 * se, "{a:?} {b:?}");
    }
}
