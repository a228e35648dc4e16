//! Random forests of CART trees for regression (variance reduction) and
//! class probabilities (Gini impurity, averaged leaf frequencies).

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves reach `min_leaf`.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Candidate features per split; `None` uses all features for regression
    /// and `ceil(sqrt(p))` for classification.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 500,
            max_depth: None,
            min_leaf: 5,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Argument("forest needs at least one tree".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Argument("min_leaf must be at least 1".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::Argument(
                "features_per_split must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Node<T> {
    Leaf(Vec<T>),
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug)]
struct Tree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tree<T> {
    fn leaf(&self, row: ndarray::ArrayView1<T>) -> &[T] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Target<'a, T> {
    Values(&'a [T]),
    Classes(&'a [usize], usize),
}

struct Builder<'a, T> {
    x: ArrayView2<'a, T>,
    target: Target<'a, T>,
    params: &'a ForestParams,
    mtry: usize,
    nodes: Vec<Node<T>>,
}

struct Best<T> {
    feature: usize,
    threshold: T,
    gain: T,
}

impl<'a, T: Real> Builder<'a, T> {
    fn leaf_value(&self, rows: &[usize]) -> Vec<T> {
        let n = T::of_usize(rows.len());
        match self.target {
            Target::Values(y) => vec![rows.iter().map(|&i| y[i]).sum::<T>() / n],
            Target::Classes(y, k) => {
                let mut v = vec![T::zero(); k];
                for &i in rows {
                    v[y[i]] += T::one();
                }
                v.iter_mut().for_each(|c| *c /= n);
                v
            }
        }
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        match self.target {
            Target::Values(y) => rows.iter().all(|&i| y[i] == y[rows[0]]),
            Target::Classes(y, _) => rows.iter().all(|&i| y[i] == y[rows[0]]),
        }
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(Vec::new()));
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        let split = if depth_ok && rows.len() >= 2 * self.params.min_leaf && !self.is_pure(rows) {
            self.best_split(rows, rng)
        } else {
            None
        };
        match split {
            None => self.nodes[id] = Node::Leaf(self.leaf_value(rows)),
            Some(b) => {
                let mut cut = 0;
                for j in 0..rows.len() {
                    if self.x[[rows[j], b.feature]] <= b.threshold {
                        rows.swap(cut, j);
                        cut += 1;
                    }
                }
                let (l, r) = rows.split_at_mut(cut);
                let left = self.grow(l, depth + 1, rng);
                let right = self.grow(r, depth + 1, rng);
                self.nodes[id] = Node::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }

    fn best_split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<Best<T>> {
        let p = self.x.ncols();
        let features = sample(rng, p, self.mtry.min(p));
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Best<T>> = None;
        let mut keyed: Vec<(T, usize)> = Vec::with_capacity(rows.len());
        let mut order: Vec<usize> = Vec::with_capacity(rows.len());
        for f in features.iter() {
            keyed.clear();
            keyed.extend(rows.iter().map(|&i| (self.x[[i, f]], i)));
            keyed.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            order.clear();
            order.extend(keyed.iter().map(|&(_, i)| i));
            let candidate = match self.target {
                Target::Values(y) => scan_variance(self.x, f, &order, y, min_leaf),
                Target::Classes(y, k) => scan_gini(self.x, f, &order, y, k, min_leaf),
            };
            if let Some(c) = candidate {
                if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        best.filter(|b| b.gain > T::zero())
    }
}

fn midpoint<T: Real>(a: T, b: T) -> T {
    let m = a + (b - a) / T::of(2.0);
    // guard against rounding up to the right value
    if m < b {
        m
    } else {
        a
    }
}

fn scan_variance<T: Real>(
    x: ArrayView2<T>,
    f: usize,
    order: &[usize],
    y: &[T],
    min_leaf: usize,
) -> Option<Best<T>> {
    let n = order.len();
    let total: T = order.iter().map(|&i| y[i]).sum();
    let nf = T::of_usize(n);
    let base = total * total / nf;
    let mut left = T::zero();
    let mut best: Option<Best<T>> = None;
    for j in 0..n - 1 {
        left += y[order[j]];
        let nl = j + 1;
        if nl < min_leaf || n - nl < min_leaf {
            continue;
        }
        let (a, b) = (x[[order[j], f]], x[[order[j + 1], f]]);
        if a == b {
            continue;
        }
        let right = total - left;
        let gain = left * left / T::of_usize(nl) + right * right / T::of_usize(n - nl) - base;
        if best.as_ref().is_none_or(|bb| gain > bb.gain) {
            best = Some(Best {
                feature: f,
                threshold: midpoint(a, b),
                gain,
            });
        }
    }
    best
}

fn scan_gini<T: Real>(
    x: ArrayView2<T>,
    f: usize,
    order: &[usize],
    y: &[usize],
    k: usize,
    min_leaf: usize,
) -> Option<Best<T>> {
    let n = order.len();
    let mut total = vec![0usize; k];
    for &i in order {
        total[y[i]] += 1;
    }
    // weighted impurity n * gini = n - sum(c^2) / n
    let weighted = |counts: &[usize], m: usize| -> T {
        let m_f = T::of_usize(m);
        let sq: T = counts.iter().map(|&c| T::of_usize(c * c)).sum();
        m_f - sq / m_f
    };
    let base = weighted(&total, n);
    let mut left = vec![0usize; k];
    let mut best: Option<Best<T>> = None;
    for j in 0..n - 1 {
        left[y[order[j]]] += 1;
        let nl = j + 1;
        if nl < min_leaf || n - nl < min_leaf {
            continue;
        }
        let (a, b) = (x[[order[j], f]], x[[order[j + 1], f]]);
        if a == b {
            continue;
        }
        let sq_right: T = total
            .iter()
            .zip(&left)
            .map(|(t, l)| T::of_usize((t - l) * (t - l)))
            .sum();
        let right_f = T::of_usize(n - nl);
        let gain = base - weighted(&left, nl) - (right_f - sq_right / right_f);
        if best.as_ref().is_none_or(|bb| gain > bb.gain) {
            best = Some(Best {
                feature: f,
                threshold: midpoint(a, b),
                gain,
            });
        }
    }
    best
}

fn tree_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(t as u64)
}

fn grow_forest<T: Real>(
    x: ArrayView2<T>,
    target: Target<'_, T>,
    params: &ForestParams,
    mtry: usize,
    seed: u64,
) -> Vec<Tree<T>> {
    let n = x.nrows();
    (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, t));
            let mut rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder {
                x,
                target,
                params,
                mtry,
                nodes: Vec::new(),
            };
            b.grow(&mut rows, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect()
}

fn average_leaves<T: Real>(trees: &[Tree<T>], x: ArrayView2<T>, width: usize) -> Array2<T> {
    let n = x.nrows();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = x.row(i);
            let mut acc = vec![T::zero(); width];
            for t in trees {
                for (a, v) in acc.iter_mut().zip(t.leaf(row)) {
                    *a += *v;
                }
            }
            let nt = T::of_usize(trees.len());
            acc.iter_mut().for_each(|a| *a /= nt);
            acc
        })
        .collect();
    Array2::from_shape_fn((n, width), |(i, j)| rows[i][j])
}

#[derive(Clone, Debug)]
pub struct ForestRegressor<T> {
    trees: Vec<Tree<T>>,
}

impl<T: Real> ForestRegressor<T> {
    pub fn fit(x: ArrayView2<T>, y: &[T], params: &ForestParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if x.nrows() != y.len() {
            return Err(Error::Argument(format!(
                "{} feature rows vs {} targets",
                x.nrows(),
                y.len()
            )));
        }
        if y.len() < 2.max(params.min_leaf) {
            return Err(Error::Argument(format!(
                "forest needs at least max(2, min_leaf) = {} rows, got {}",
                2.max(params.min_leaf),
                y.len()
            )));
        }
        let mtry = params.features_per_split.unwrap_or(x.ncols()).max(1);
        Ok(ForestRegressor {
            trees: grow_forest(x, Target::Values(y), params, mtry, seed),
        })
    }

    /// Mean over trees of the leaf means.
    pub fn predict(&self, x: ArrayView2<T>) -> Vec<T> {
        average_leaves(&self.trees, x, 1).column(0).to_vec()
    }
}

#[derive(Clone, Debug)]
pub struct ForestClassifier<T> {
    trees: Vec<Tree<T>>,
    n_classes: usize,
    classes: Vec<usize>,
}

impl<T: Real> ForestClassifier<T> {
    pub fn fit(
        x: ArrayView2<T>,
        labels: &[usize],
        n_classes: usize,
        params: &ForestParams,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if x.nrows() != labels.len() {
            return Err(Error::Argument(format!(
                "{} feature rows vs {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Argument(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::Argument(format!(
                "classifier needs at least 2 distinct classes, found {}",
                classes.len()
            )));
        }
        let p = x.ncols();
        let mtry = params
            .features_per_split
            .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
            .max(1);
        Ok(ForestClassifier {
            trees: grow_forest(x, Target::Classes(labels, n_classes), params, mtry, seed),
            n_classes,
            classes,
        })
    }

    /// Mean over trees of the leaf class frequencies; rows sum to one.
    pub fn predict_proba_raw(&self, x: ArrayView2<T>) -> Array2<T> {
        average_leaves(&self.trees, x, self.n_classes)
    }

    pub fn observed_classes(&self) -> &[usize] {
        &self.classes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn small() -> ForestParams {
        ForestParams {
            n_trees: 50,
            ..Default::default()
        }
    }

    #[test]
    fn step_function_is_learned() {
        // y = 1{x > 0} + N(0, 0.01^2); the forest should match the step closely
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let n = 200;
        let x = Array2::from_shape_fn((n, 1), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y: Vec<f64> = (0..n)
            .map(|i| f64::from(u8::from(x[[i, 0]] > 0.0)) + noise.sample(&mut rng))
            .collect();
        let f = ForestRegressor::fit(x.view(), &y, &small(), 1).unwrap();
        let xt = Array2::from_shape_fn((500, 1), |(i, _)| -1.0 + 2.0 * (i as f64 + 0.5) / 500.0);
        let pred = f.predict(xt.view());
        let mse: f64 = (0..500)
            .map(|i| (pred[i] - f64::from(u8::from(xt[[i, 0]] > 0.0))).powi(2))
            .sum::<f64>()
            / 500.0;
        assert!(mse < 0.05, "mse {mse}");
    }

    #[test]
    fn constant_target_gives_constant_leaves() {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| (i * (j + 1)) as f64);
        let y = vec![3.25; 40];
        let f = ForestRegressor::fit(x.view(), &y, &small(), 0).unwrap();
        assert!(f.predict(x.view()).iter().all(|&v| v == 3.25));
    }

    #[test]
    fn separable_classes_are_fit_exactly() {
        let n = 100;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= 50)).collect();
        let params = ForestParams {
            n_trees: 25,
            min_leaf: 1,
            ..Default::default()
        };
        let f = ForestClassifier::fit(x.view(), &labels, 2, &params, 5).unwrap();
        let p = f.predict_proba_raw(x.view());
        let acc = (0..n)
            .filter(|&i| usize::from(p[[i, 1]] > p[[i, 0]]) == labels[i])
            .count();
        assert_eq!(acc, n);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let x = Array2::from_shape_fn((80, 3), |(i, j)| ((i * 7 + j * 13) % 17) as f64);
        let y: Vec<f64> = (0..80).map(|i| (i % 9) as f64).collect();
        let a = ForestRegressor::fit(x.view(), &y, &small(), 9)
            .unwrap()
            .predict(x.view());
        let b = ForestRegressor::fit(x.view(), &y, &small(), 9)
            .unwrap()
            .predict(x.view());
        assert_eq!(a, b);
    }
}
