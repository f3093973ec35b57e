//! Small dense linear-algebra kernels: Cholesky factorization/solves and a
//! cyclic Jacobi eigensolver for symmetric matrices.

use crate::error::{Error, Result};
use crate::scalar::Real;
use ndarray::{Array1, Array2};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Fails with [`Error::Singular`] when a pivot is not strictly positive.
pub fn cholesky<T: Real>(a: &Array2<T>) -> Result<Array2<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("cholesky needs square input, got {n}x{}", a.ncols())));
    }
    let mut l = Array2::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= T::zero() || !d.is_finite() {
            return Err(Error::Singular(format!("non-positive pivot at column {j}")));
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor `L`.
pub fn chol_solve_vec<T: Real>(l: &Array2<T>, b: &Array1<T>) -> Array1<T> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in nondecreasing order with matching eigenvector
/// columns. Intended for the dense spectral path and other modest sizes;
/// cost is O(n³) per sweep.
pub fn jacobi_eigh<T: Real>(a: &Array2<T>) -> Result<(Vec<T>, Array2<T>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("jacobi_eigh needs square input, got {n}x{}", a.ncols())));
    }
    let mut m = a.clone();
    let mut v: Array2<T> = Array2::eye(n);
    if n <= 1 {
        let vals = (0..n).map(|i| m[(i, i)]).collect();
        return Ok((vals, v));
    }

    let frob = m.iter().map(|x| *x * *x).sum::<T>().sqrt();
    let tol = T::epsilon() * T::of(64.0) * frob.max(T::min_positive_value());
    let max_sweeps = 64;

    for _ in 0..max_sweeps {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol * T::of(1e-2) {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::of(2.0) * apq);
                // stable tangent of the rotation angle
                let t = {
                    let s = if theta >= T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).expect("finite eigenvalues"));
    let vals: Vec<T> = idx.iter().map(|&i| m[(i, i)]).collect();
    let mut vecs = Array2::zeros((n, n));
    for (new_col, &old_col) in idx.iter().enumerate() {
        for r in 0..n {
            vecs[(r, new_col)] = v[(r, old_col)];
        }
    }
    Ok((vals, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0, 0.0], [2.0, 5.0, 1.0], [0.0, 1.0, 3.0]];
        let l = cholesky(&a).unwrap();
        let b = Array1::from(vec![1.0, 2.0, 3.0]);
        let x = chol_solve_vec(&l, &b);
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v: &f64| v.abs() < 1e-12));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(cholesky(&a), Err(Error::Singular(_))));
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = jacobi_eigh(&a).unwrap();
        assert_abs_diff_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 3.0, epsilon = 1e-12);
        // residual A v = λ v
        for j in 0..2 {
            let v = vecs.column(j);
            let av = a.dot(&v);
            for i in 0..2 {
                assert_abs_diff_eq!(av[i], vals[j] * v[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_orthonormal_eigenvectors() {
        let a = array![
            [3.0, 1.0, 0.5, 0.0],
            [1.0, 2.5, 0.2, 0.1],
            [0.5, 0.2, 4.0, 0.3],
            [0.0, 0.1, 0.3, 1.0]
        ];
        let (_, v) = jacobi_eigh(&a).unwrap();
        let g = v.t().dot(&v);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(g[(i, j)], want, epsilon = 1e-12);
            }
        }
    }
}
