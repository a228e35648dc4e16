use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Solve `a x = b` for symmetric positive definite `a` by Cholesky.
///
/// A pivot at or below `rel_tol * max(diag(a))` is reported as singular.
pub(crate) fn cholesky_solve<T: Real>(
    a: &Array2<T>,
    b: &Array1<T>,
    rel_tol: T,
) -> Result<Array1<T>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    debug_assert_eq!(n, b.len());
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(T::zero(), T::max);
    let floor = rel_tol * scale.max(T::min_positive_value());
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > floor) {
            return Err(Error::Numerical(format!(
                "matrix is singular or not positive definite (pivot {j} = {d})"
            )));
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    let mut z = Array1::<T>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let x_true = array![1.0, -2.0, 0.5];
        let b = a.dot(&x_true);
        let x = cholesky_solve(&a, &b, 1e-12).unwrap();
        for (u, &v) in x.iter().zip(x_true.iter()) {
            assert!((u - v as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_is_an_error() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(cholesky_solve(&a, &array![1.0, 1.0], 1e-12).is_err());
    }
}
