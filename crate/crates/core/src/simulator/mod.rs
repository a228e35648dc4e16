//! Synthetic two-period data with known ground truth.
//!
//! Two structural families are provided: a continuous one driven by logits
//! and linear equations ([`DgpConfig`]) and a discrete one whose joint
//! support is small enough to sum over ([`EnumerableDgpConfig`]). Both
//! expose Monte-Carlo truths and the true nuisance functions for a policy;
//! the discrete family also gives exact truths.

mod benchmark;
mod continuous;
mod enumerable;

pub use benchmark::{
    benchmark, policy_truths, run_replications, summarize, BenchEstimator, BenchmarkRow,
    BenchmarkSpec, BenchmarkTable, Replication,
};
pub use continuous::DgpConfig;
pub use enumerable::EnumerableDgpConfig;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{PanelDataset, Policy};
use crate::error::Result;
use crate::nuisance::NuisanceEstimates;

/// Default number of counterfactual draws for Monte-Carlo truths.
pub const DEFAULT_ORACLE_DRAWS: usize = 200_000;

/// Per-unit structural quantities at the observed history.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitTruth {
    /// `P(D1 = d1_i | X0_i)`.
    pub p_d1: Vec<f64>,
    /// `P(D2 = d2_i | X0_i, X1_i, d1_i)`.
    pub p_d2: Vec<f64>,
    /// `E[Y | X0_i, X1_i, d1_i, d2_i]`.
    pub mean_y: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SimSample {
    pub data: PanelDataset<f64>,
    /// Index of each unit's `X0` support point (discrete family only).
    pub atom: Option<Vec<usize>>,
    pub truth: UnitTruth,
}

/// Monte-Carlo estimate of a policy value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McTruth {
    pub value: f64,
    pub se: f64,
    pub draws: usize,
}

/// A data-generating process usable by the benchmark harness.
pub trait StructuralDgp: Sync {
    /// Sample size used when none is given.
    fn default_n(&self) -> usize;

    fn sample(&self, n: usize, seed: u64) -> Result<SimSample>;

    /// Mean outcome under the policy over `draws` counterfactual
    /// trajectories.
    fn oracle_apo_mc(&self, pol: &Policy, draws: usize, seed: u64) -> Result<McTruth>;

    /// Closed-form policy value where the support is finite.
    fn oracle_apo_exact(&self, _pol: &Policy) -> Option<Result<f64>> {
        None
    }

    /// Exact policy value within a group, where the model has groups.
    fn group_truth(&self, _pol: &Policy, _group: &str) -> Option<Result<f64>> {
        None
    }

    /// True propensities and outcome regressions for the sampled units.
    fn true_nuisances(&self, s: &SimSample, pol: &Policy) -> Result<NuisanceEstimates<f64>>;

    /// Best available truth: exact if possible, otherwise Monte Carlo.
    fn truth(&self, pol: &Policy, draws: usize, seed: u64) -> Result<f64> {
        match self.oracle_apo_exact(pol) {
            Some(v) => v,
            None => Ok(self.oracle_apo_mc(pol, draws, seed)?.value),
        }
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn draw_class<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return c;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub(crate) fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}
