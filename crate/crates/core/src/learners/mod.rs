//! Regression and class-probability learners behind one configuration type,
//! plus the fold machinery used for cross-fitting.

mod folds;
mod forest;
mod linalg;
mod logistic;
mod ridge;

pub use folds::{make_fold_plan, FoldPlan, OWN_FOLD};
pub use forest::{ForestClassifier, ForestParams, ForestRegressor};
pub use logistic::{LogitOptions, MultinomialLogit};
pub use ridge::RidgeModel;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_CLIP: f64 = 1e-6;

fn default_clip() -> f64 {
    DEFAULT_CLIP
}

fn default_ridge_lambda() -> f64 {
    1e-6
}

fn default_logit_lambda() -> f64 {
    1e-3
}

fn default_max_iter() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LearnerFamily {
    RidgeLinear {
        #[serde(default = "default_ridge_lambda")]
        lambda: f64,
    },
    Logistic {
        #[serde(default = "default_logit_lambda")]
        lambda: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    RandomForestReg(ForestParams),
    RandomForestProb(ForestParams),
}

impl LearnerFamily {
    pub fn is_regressor(&self) -> bool {
        matches!(
            self,
            LearnerFamily::RidgeLinear { .. } | LearnerFamily::RandomForestReg(_)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    #[serde(flatten)]
    pub family: LearnerFamily,
    #[serde(default)]
    pub seed: u64,
    /// Probability clipping bound applied to classifier outputs.
    #[serde(default = "default_clip")]
    pub clip: f64,
}

impl LearnerSpec {
    pub fn ridge(lambda: f64) -> Self {
        LearnerSpec {
            family: LearnerFamily::RidgeLinear { lambda },
            seed: 0,
            clip: DEFAULT_CLIP,
        }
    }

    pub fn logistic(lambda: f64) -> Self {
        LearnerSpec {
            family: LearnerFamily::Logistic {
                lambda,
                max_iter: default_max_iter(),
            },
            seed: 0,
            clip: DEFAULT_CLIP,
        }
    }

    pub fn forest_reg(params: ForestParams) -> Self {
        LearnerSpec {
            family: LearnerFamily::RandomForestReg(params),
            seed: 0,
            clip: DEFAULT_CLIP,
        }
    }

    pub fn forest_prob(params: ForestParams) -> Self {
        LearnerSpec {
            family: LearnerFamily::RandomForestProb(params),
            seed: 0,
            clip: DEFAULT_CLIP,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        self.clip = clip;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip >= 0.0 && self.clip < 0.5) {
            return Err(Error::Argument(format!(
                "clip must lie in [0, 0.5), got {}",
                self.clip
            )));
        }
        match &self.family {
            LearnerFamily::RidgeLinear { lambda } | LearnerFamily::Logistic { lambda, .. }
                if !(*lambda >= 0.0) =>
            {
                Err(Error::Argument(format!(
                    "penalty must be non-negative, got {lambda}"
                )))
            }
            LearnerFamily::RandomForestReg(p) | LearnerFamily::RandomForestProb(p) => p.validate(),
            _ => Ok(()),
        }
    }

    fn min_rows(&self) -> usize {
        match &self.family {
            LearnerFamily::RandomForestReg(p) | LearnerFamily::RandomForestProb(p) => {
                p.min_leaf.max(2)
            }
            _ => 2,
        }
    }
}

/// A fitted conditional-mean model.
#[derive(Clone, Debug)]
pub enum RegressionModel<T> {
    Ridge(RidgeModel<T>),
    Forest(ForestRegressor<T>),
    /// Constant prediction, used when a target is known to be degenerate.
    Constant(T),
}

impl<T: Real> RegressionModel<T> {
    pub fn predict(&self, x: ArrayView2<T>) -> Vec<T> {
        match self {
            RegressionModel::Ridge(m) => m.predict(x),
            RegressionModel::Forest(m) => m.predict(x),
            RegressionModel::Constant(c) => vec![*c; x.nrows()],
        }
    }
}

#[derive(Clone, Debug)]
enum ProbInner<T> {
    Logistic(MultinomialLogit<T>),
    Forest(ForestClassifier<T>),
    Constant(usize),
}

/// A fitted class-probability model over a fixed set of `n_classes` ids.
#[derive(Clone, Debug)]
pub struct ProbModel<T> {
    inner: ProbInner<T>,
    n_classes: usize,
    clip: T,
    absent: Vec<usize>,
}

impl<T: Real> ProbModel<T> {
    /// Model that puts all mass on one class; used for degenerate strata.
    pub fn constant(class: usize, n_classes: usize, clip: f64) -> Self {
        ProbModel {
            inner: ProbInner::Constant(class),
            n_classes,
            clip: T::of(clip),
            absent: (0..n_classes).filter(|&c| c != class).collect(),
        }
    }

    /// Class probabilities before clipping; rows sum to one.
    pub fn predict_proba_raw(&self, x: ArrayView2<T>) -> Array2<T> {
        match &self.inner {
            ProbInner::Logistic(m) => m.predict_proba_raw(x),
            ProbInner::Forest(m) => m.predict_proba_raw(x),
            ProbInner::Constant(c) => {
                let mut out = Array2::zeros((x.nrows(), self.n_classes));
                out.column_mut(*c).fill(T::one());
                out
            }
        }
    }

    /// Class probabilities clipped to `[clip, 1 - clip]`.
    pub fn predict_proba(&self, x: ArrayView2<T>) -> Array2<T> {
        let hi = T::one() - self.clip;
        self.predict_proba_raw(x).mapv(|p| p.max(self.clip).min(hi))
    }

    /// Clipped probability of a per-row class.
    pub fn predict_class_proba(&self, x: ArrayView2<T>, classes: &[usize]) -> Vec<T> {
        let p = self.predict_proba(x);
        p.axis_iter(Axis(0))
            .zip(classes)
            .map(|(row, &c)| row[c])
            .collect()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Class ids that had no training rows.
    pub fn absent_classes(&self) -> &[usize] {
        &self.absent
    }

    pub fn clip(&self) -> T {
        self.clip
    }
}

pub fn fit_regressor<T: Real>(
    features: ArrayView2<T>,
    targets: &[T],
    spec: &LearnerSpec,
) -> Result<RegressionModel<T>> {
    spec.validate()?;
    if features.nrows() != targets.len() {
        return Err(Error::Argument(format!(
            "{} feature rows vs {} targets",
            features.nrows(),
            targets.len()
        )));
    }
    if targets.len() < spec.min_rows() {
        return Err(Error::Argument(format!(
            "regressor needs at least {} rows, got {}",
            spec.min_rows(),
            targets.len()
        )));
    }
    match &spec.family {
        LearnerFamily::RidgeLinear { lambda } => Ok(RegressionModel::Ridge(RidgeModel::fit(
            features,
            targets,
            T::of(*lambda),
        )?)),
        LearnerFamily::RandomForestReg(p) => Ok(RegressionModel::Forest(ForestRegressor::fit(
            features, targets, p, spec.seed,
        )?)),
        other => Err(Error::Config(format!(
            "{other:?} is not a regression learner"
        ))),
    }
}

pub fn fit_classifier<T: Real>(
    features: ArrayView2<T>,
    labels: &[usize],
    n_classes: usize,
    spec: &LearnerSpec,
) -> Result<ProbModel<T>> {
    spec.validate()?;
    if labels.len() < spec.min_rows() {
        return Err(Error::Argument(format!(
            "classifier needs at least {} rows, got {}",
            spec.min_rows(),
            labels.len()
        )));
    }
    let (inner, present) = match &spec.family {
        LearnerFamily::Logistic { lambda, max_iter } => {
            let opts = LogitOptions {
                lambda: T::of(*lambda),
                max_iter: *max_iter,
                ..LogitOptions::default()
            };
            let m = MultinomialLogit::fit(features, labels, n_classes, opts)?;
            let present = m.observed_classes().to_vec();
            (ProbInner::Logistic(m), present)
        }
        LearnerFamily::RandomForestProb(p) => {
            let m = ForestClassifier::fit(features, labels, n_classes, p, spec.seed)?;
            let present = m.observed_classes().to_vec();
            (ProbInner::Forest(m), present)
        }
        other => {
            return Err(Error::Config(format!(
                "{other:?} is not a probability learner"
            )))
        }
    };
    Ok(ProbModel {
        inner,
        n_classes,
        clip: T::of(spec.clip),
        absent: (0..n_classes).filter(|c| !present.contains(c)).collect(),
    })
}

/// Target of a tuning run.
#[derive(Clone, Copy, Debug)]
pub enum TuneTarget<'a, T> {
    Regression(&'a [T]),
    Classes(&'a [usize], usize),
}

/// Pick the grid entry with the lowest cross-validated loss (squared error
/// for regression, log-loss for classes). Returns the winner and the loss of
/// every candidate in grid order.
pub fn select_learner<T: Real>(
    features: ArrayView2<T>,
    target: TuneTarget<'_, T>,
    grid: &[LearnerSpec],
    k: usize,
    seed: u64,
) -> Result<(LearnerSpec, Vec<f64>)> {
    if grid.is_empty() {
        return Err(Error::Argument("tuning grid is empty".into()));
    }
    let n = features.nrows();
    let plan = make_fold_plan(n, k, seed)?;
    let mut losses = Vec::with_capacity(grid.len());
    for spec in grid {
        let mut total = 0.0;
        for f in 0..k {
            let train = plan.train_rows(f);
            let test = plan.test_rows(f);
            let xtr = features.select(Axis(0), &train);
            let xte = features.select(Axis(0), &test);
            match target {
                TuneTarget::Regression(y) => {
                    let ytr: Vec<T> = train.iter().map(|&i| y[i]).collect();
                    let m = fit_regressor(xtr.view(), &ytr, spec)?;
                    let pred = m.predict(xte.view());
                    total += test
                        .iter()
                        .zip(pred)
                        .map(|(&i, p)| (y[i] - p).as_f64().powi(2))
                        .sum::<f64>();
                }
                TuneTarget::Classes(y, nc) => {
                    let ytr: Vec<usize> = train.iter().map(|&i| y[i]).collect();
                    let m = fit_classifier(xtr.view(), &ytr, nc, spec)?;
                    let labels: Vec<usize> = test.iter().map(|&i| y[i]).collect();
                    total -= m
                        .predict_class_proba(xte.view(), &labels)
                        .iter()
                        .map(|p| p.as_f64().ln())
                        .sum::<f64>();
                }
            }
        }
        losses.push(total / n as f64);
    }
    let best = losses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .unwrap();
    Ok((grid[best].clone(), losses))
}
