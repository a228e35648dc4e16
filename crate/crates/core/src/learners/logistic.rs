//! Multinomial logistic regression fitted by damped Newton iterations.
//!
//! Features are standardized internally. The first observed class is the
//! reference category; every other observed class gets an intercept and a
//! slope vector, and slopes carry an L2 penalty `lambda / 2 * |w|^2` on the
//! standardized scale. Classes never seen in training get probability zero
//! before clipping.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::linalg::cholesky_solve;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct MultinomialLogit<T> {
    n_classes: usize,
    classes: Vec<usize>,
    center: Array1<T>,
    scale: Array1<T>,
    // (classes.len() - 1) x (p + 1), intercept in column 0
    weights: Array2<T>,
    iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LogitOptions<T> {
    pub lambda: T,
    pub max_iter: usize,
    pub tol: T,
}

impl<T: Real> Default for LogitOptions<T> {
    fn default() -> Self {
        LogitOptions {
            lambda: T::of(1e-3),
            max_iter: 100,
            tol: T::epsilon().sqrt(),
        }
    }
}

fn softmax_rows<T: Real>(eta: &Array2<T>) -> Array2<T> {
    // eta holds the non-reference logits; the reference logit is zero
    let (n, m) = eta.dim();
    let mut out = Array2::<T>::zeros((n, m + 1));
    for i in 0..n {
        let row = eta.row(i);
        let mx = row.iter().copied().fold(T::zero(), T::max);
        let mut total = (-mx).exp();
        out[[i, 0]] = total;
        for c in 0..m {
            let e = (row[c] - mx).exp();
            out[[i, c + 1]] = e;
            total += e;
        }
        for c in 0..=m {
            out[[i, c]] /= total;
        }
    }
    out
}

impl<T: Real> MultinomialLogit<T> {
    pub fn fit(
        x: ArrayView2<T>,
        labels: &[usize],
        n_classes: usize,
        opts: LogitOptions<T>,
    ) -> Result<Self> {
        let (n, p) = x.dim();
        if n != labels.len() {
            return Err(Error::Argument(format!(
                "{n} feature rows vs {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Argument(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        let mut classes: Vec<usize> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::Argument(format!(
                "classifier needs at least 2 distinct classes, found {}",
                classes.len()
            )));
        }
        if opts.lambda < T::zero() {
            return Err(Error::Argument(
                "logistic penalty must be non-negative".into(),
            ));
        }
        let nf = T::of_usize(n);
        let center = x.sum_axis(Axis(0)) / nf;
        let mut scale = Array1::<T>::ones(p);
        for j in 0..p {
            let v = x
                .column(j)
                .iter()
                .map(|&a| (a - center[j]) * (a - center[j]))
                .sum::<T>()
                / nf;
            if v > T::zero() {
                scale[j] = v.sqrt();
            }
        }
        let mut design = Array2::<T>::ones((n, p + 1));
        for j in 0..p {
            for i in 0..n {
                design[[i, j + 1]] = (x[[i, j]] - center[j]) / scale[j];
            }
        }
        let m = classes.len() - 1;
        let q = p + 1;
        let pos: Vec<usize> = labels
            .iter()
            .map(|l| classes.binary_search(l).unwrap())
            .collect();

        let objective = |w: &Array2<T>| -> T {
            let probs = softmax_rows(&design.dot(&w.t()));
            let mut f = T::zero();
            for i in 0..n {
                f -= probs[[i, pos[i]]].max(T::min_positive_value()).ln();
            }
            let pen: T = w.slice(s![.., 1..]).iter().map(|&v| v * v).sum();
            f + opts.lambda * pen / T::of(2.0)
        };

        let mut w = Array2::<T>::zeros((m, q));
        // start from the marginal class frequencies
        let mut counts = vec![0usize; classes.len()];
        for &c in &pos {
            counts[c] += 1;
        }
        for c in 0..m {
            w[[c, 0]] = (T::of_usize(counts[c + 1]) / T::of_usize(counts[0])).ln();
        }
        let mut f = objective(&w);
        let mut iterations = 0;
        for it in 0..opts.max_iter {
            iterations = it + 1;
            let probs = softmax_rows(&design.dot(&w.t()));
            let mut grad = Array1::<T>::zeros(m * q);
            for c in 0..m {
                let resid: Array1<T> = (0..n)
                    .map(|i| probs[[i, c + 1]] - if pos[i] == c + 1 { T::one() } else { T::zero() })
                    .collect();
                let g = design.t().dot(&resid);
                for j in 0..q {
                    grad[c * q + j] = g[j]
                        + if j > 0 {
                            opts.lambda * w[[c, j]]
                        } else {
                            T::zero()
                        };
                }
            }
            let gmax = grad.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
            if gmax <= opts.tol * nf.max(T::one()) {
                break;
            }
            let mut hess = Array2::<T>::zeros((m * q, m * q));
            for a in 0..m {
                for b in a..m {
                    let wts: Array1<T> = (0..n)
                        .map(|i| {
                            let pa = probs[[i, a + 1]];
                            let pb = probs[[i, b + 1]];
                            if a == b {
                                pa * (T::one() - pa)
                            } else {
                                -pa * pb
                            }
                        })
                        .collect();
                    let weighted = &design * &wts.view().insert_axis(Axis(1));
                    let block = design.t().dot(&weighted);
                    for r in 0..q {
                        for c in 0..q {
                            hess[[a * q + r, b * q + c]] = block[[r, c]];
                            hess[[b * q + c, a * q + r]] = block[[r, c]];
                        }
                    }
                }
                for j in 1..q {
                    hess[[a * q + j, a * q + j]] += opts.lambda;
                }
            }
            // tiny ridge on the intercepts keeps near-separable cells solvable
            for a in 0..m {
                hess[[a * q, a * q]] += T::epsilon() * nf;
            }
            let step = cholesky_solve(&hess, &grad, T::epsilon() * T::of(16.0))
                .map_err(|e| Error::Numerical(format!("logistic Newton step: {e}")))?;
            let mut t = T::one();
            let mut accepted = false;
            for _ in 0..40 {
                let mut cand = w.clone();
                for c in 0..m {
                    for j in 0..q {
                        cand[[c, j]] -= t * step[c * q + j];
                    }
                }
                let fc = objective(&cand);
                if fc <= f {
                    let improvement = f - fc;
                    w = cand;
                    f = fc;
                    accepted = true;
                    if improvement <= T::epsilon() * f.abs().max(T::one()) {
                        // converged to working precision
                        return Ok(MultinomialLogit {
                            n_classes,
                            classes,
                            center,
                            scale,
                            weights: w,
                            iterations,
                        });
                    }
                    break;
                }
                t /= T::of(2.0);
            }
            if !accepted {
                break;
            }
        }
        Ok(MultinomialLogit {
            n_classes,
            classes,
            center,
            scale,
            weights: w,
            iterations,
        })
    }

    /// Unclipped class probabilities; rows sum to one.
    pub fn predict_proba_raw(&self, x: ArrayView2<T>) -> Array2<T> {
        let (n, p) = x.dim();
        let mut design = Array2::<T>::ones((n, p + 1));
        for j in 0..p {
            for i in 0..n {
                design[[i, j + 1]] = (x[[i, j]] - self.center[j]) / self.scale[j];
            }
        }
        let probs = softmax_rows(&design.dot(&self.weights.t()));
        let mut out = Array2::<T>::zeros((n, self.n_classes));
        for (k, &c) in self.classes.iter().enumerate() {
            out.column_mut(c).assign(&probs.column(k));
        }
        out
    }

    pub fn observed_classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Logit coefficients on the original feature scale, one row per
    /// non-reference observed class: intercept first, then slopes.
    pub fn coefficients(&self) -> Vec<Vec<T>> {
        self.weights
            .outer_iter()
            .map(|w| {
                let mut row = vec![w[0]];
                let mut icpt = w[0];
                for j in 0..self.center.len() {
                    let b = w[j + 1] / self.scale[j];
                    icpt -= b * self.center[j];
                    row.push(b);
                }
                row[0] = icpt;
                row
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_binary_logit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20000;
        let x = Array2::from_shape_fn((n, 1), |_| rng.random::<f64>() * 4.0 - 2.0);
        let labels: Vec<usize> = (0..n)
            .map(|i| {
                let p = 1.0 / (1.0 + (-(0.5 + 1.5 * x[[i, 0]])).exp());
                usize::from(rng.random::<f64>() < p)
            })
            .collect();
        let opts = LogitOptions {
            lambda: 0.0,
            ..Default::default()
        };
        let m = MultinomialLogit::fit(x.view(), &labels, 2, opts).unwrap();
        let probe = ndarray::array![[0.0], [1.0]];
        let p = m.predict_proba_raw(probe.view());
        let truth = |z: f64| 1.0 / (1.0 + (-z).exp());
        assert!((p[[0, 1]] - truth(0.5)).abs() < 0.03, "{}", p[[0, 1]]);
        assert!((p[[1, 1]] - truth(2.0)).abs() < 0.03, "{}", p[[1, 1]]);
    }

    #[test]
    fn multiclass_rows_sum_to_one_and_absent_class_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 600;
        let x = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
        let labels: Vec<usize> = (0..n)
            .map(|i| if x[[i, 0]] > 0.6 { 3 } else { (i % 2) * 1 })
            .collect();
        let m = MultinomialLogit::fit(x.view(), &labels, 4, LogitOptions::default()).unwrap();
        let p = m.predict_proba_raw(x.view());
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert_eq!(row[2], 0.0);
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = Array2::<f64>::zeros((5, 1));
        let err = MultinomialLogit::fit(x.view(), &[1; 5], 3, LogitOptions::default()).unwrap_err();
        assert!(err.to_string().contains("found 1"), "{err}");
    }
}
