//! Ridge regression with an unpenalized intercept.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::linalg::cholesky_solve;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct RidgeModel<T> {
    intercept: T,
    coef: Array1<T>,
}

impl<T: Real> RidgeModel<T> {
    /// Exact minimizer of `sum (y - a - x b)^2 + lambda |b|^2`.
    ///
    /// Columns are centered so the intercept stays unpenalized.
    pub fn fit(x: ArrayView2<T>, y: &[T], lambda: T) -> Result<Self> {
        let (n, p) = x.dim();
        if n != y.len() {
            return Err(Error::Argument(format!(
                "{n} feature rows vs {} targets",
                y.len()
            )));
        }
        if n < 2 {
            return Err(Error::Argument("ridge needs at least two rows".into()));
        }
        if lambda < T::zero() {
            return Err(Error::Argument("ridge penalty must be non-negative".into()));
        }
        let nf = T::of_usize(n);
        let x_mean = x.sum_axis(Axis(0)) / nf;
        let y_mean = y.iter().copied().sum::<T>() / nf;
        if p == 0 {
            return Ok(RidgeModel {
                intercept: y_mean,
                coef: Array1::zeros(0),
            });
        }
        let xc = &x - &x_mean;
        let yc = Array1::from_iter(y.iter().map(|&v| v - y_mean));
        let mut gram: Array2<T> = xc.t().dot(&xc);
        for j in 0..p {
            gram[[j, j]] += lambda;
        }
        let rhs = xc.t().dot(&yc);
        let tol = T::epsilon() * T::of(64.0) * T::of_usize(p);
        let coef = cholesky_solve(&gram, &rhs, tol).map_err(|e| match e {
            Error::Numerical(m) => {
                Error::Numerical(format!("ridge design (lambda = {lambda}): {m}"))
            }
            other => other,
        })?;
        let intercept = y_mean - x_mean.dot(&coef);
        Ok(RidgeModel { intercept, coef })
    }

    pub fn predict(&self, x: ArrayView2<T>) -> Vec<T> {
        if self.coef.is_empty() {
            return vec![self.intercept; x.nrows()];
        }
        x.dot(&self.coef)
            .iter()
            .map(|&v| v + self.intercept)
            .collect()
    }

    pub fn intercept(&self) -> T {
        self.intercept
    }

    pub fn coefficients(&self) -> &Array1<T> {
        &self.coef
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn ols_recovers_exact_line() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64 * 0.37 - 2.0);
        let y: Vec<f64> = x.column(0).iter().map(|v| 2.0 * v).collect();
        let m = RidgeModel::fit(x.view(), &y, 0.0).unwrap();
        assert!((m.coefficients()[0] - 2.0).abs() < 1e-8);
        assert!(m.intercept().abs() < 1e-8);
    }

    #[test]
    fn huge_penalty_shrinks_to_mean() {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| ((i * (j + 3)) % 7) as f64);
        let y: Vec<f64> = (0..30).map(|i| (i % 5) as f64 + x[[i, 0]]).collect();
        let mean = y.iter().sum::<f64>() / 30.0;
        let m = RidgeModel::fit(x.view(), &y, 1e14).unwrap();
        for p in m.predict(x.view()) {
            assert!((p - mean).abs() < 1e-6);
        }
    }

    #[test]
    fn collinear_without_penalty_fails_loudly() {
        let x = Array2::from_shape_fn((10, 2), |(i, _)| i as f64);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            RidgeModel::fit(x.view(), &y, 0.0),
            Err(Error::Numerical(_))
        ));
        assert!(RidgeModel::fit(x.view(), &y, 1e-3).is_ok());
    }

    #[test]
    fn works_in_single_precision() {
        let x = Array2::from_shape_fn((50, 1), |(i, _)| i as f32 / 10.0);
        let y: Vec<f32> = x.column(0).iter().map(|v| 1.0 + 3.0 * v).collect();
        let m = RidgeModel::fit(x.view(), &y, 0.0f32).unwrap();
        assert!((m.coefficients()[0] - 3.0).abs() < 1e-3);
        assert!((m.intercept() - 1.0).abs() < 1e-3);
    }
}
