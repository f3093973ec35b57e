//! Shift-invert Lanczos for the generalized symmetric eigenproblem
//! L φ = λ M φ with diagonal mass M.
//!
//! The operator (L + εM)⁻¹ M is self-adjoint in the M inner product; its
//! dominant eigenvalues 1/(λ+ε) correspond to the smallest λ. Full
//! reorthogonalization keeps the basis clean, and the Krylov dimension grows
//! until every requested pair passes its residual check.

use super::sparse::{EnvelopeChol, SymSparse};
use crate::error::{Error, Result};
use crate::linalg::jacobi_eigh;
use crate::scalar::Real;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic seed for Lanczos start vectors; results must not vary
/// between runs.
const LANCZOS_SEED: u64 = 0x51ac_e5ee_d000_0001;

pub struct LanczosOutcome<T> {
    pub eigenvalues: Vec<T>,
    /// n×k, M-orthonormal columns.
    pub eigenvectors: Array2<T>,
}

pub fn shift_invert_lanczos<T: Real>(
    l: &SymSparse<T>,
    mass: &[T],
    k: usize,
    residual_tol: T,
) -> Result<LanczosOutcome<T>> {
    let n = l.n;
    if k == 0 || k > n {
        return Err(Error::Dimension(format!("requested k={k} of n={n} eigenpairs")));
    }

    let trace_m: T = mass.iter().copied().sum();
    let scale = l.trace() / trace_m;
    if !(scale > T::zero()) {
        return Err(Error::Degenerate("stiffness matrix has non-positive trace".into()));
    }
    let eps = scale * T::of(1e-2);

    let mut shifted = l.clone();
    for i in 0..n {
        shifted.add_sym(i, i, eps * mass[i]);
    }
    let factor = EnvelopeChol::new(&shifted)
        .map_err(|e| Error::Convergence(format!("shifted matrix not SPD: {e}")))?;

    let m_dot = |a: &[T], b: &[T]| -> T {
        let mut s = T::zero();
        for i in 0..n {
            s += a[i] * mass[i] * b[i];
        }
        s
    };

    let mut m_dims = n.min((2 * k + 16).max(k + 8));
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(LANCZOS_SEED);
        let mut q: Vec<Vec<T>> = Vec::with_capacity(m_dims);
        let mut alphas: Vec<T> = Vec::with_capacity(m_dims);
        let mut betas: Vec<T> = Vec::with_capacity(m_dims);

        let fresh_vector = |rng: &mut ChaCha8Rng, q: &[Vec<T>]| -> Option<Vec<T>> {
            // random start, M-orthogonalized against the existing basis
            for _ in 0..8 {
                let mut v: Vec<T> = (0..n).map(|_| T::of(rng.random::<f64>() - 0.5)).collect();
                for existing in q {
                    let c = m_dot(&v, existing);
                    for i in 0..n {
                        v[i] -= c * existing[i];
                    }
                }
                let nrm = m_dot(&v, &v).sqrt();
                if nrm > T::of(1e-12) {
                    for x in &mut v {
                        *x /= nrm;
                    }
                    return Some(v);
                }
            }
            None
        };

        let mut current = fresh_vector(&mut rng, &q)
            .ok_or_else(|| Error::Convergence("could not build a start vector".into()))?;

        while q.len() < m_dims {
            q.push(current.clone());
            let j = q.len() - 1;
            // w = (L + eps M)^{-1} (M q_j)
            let mq: Vec<T> = (0..n).map(|i| mass[i] * q[j][i]).collect();
            let mut w = factor.solve(&mq);
            let alpha = m_dot(&w, &q[j]);
            alphas.push(alpha);
            // full reorthogonalization, two passes
            for _ in 0..2 {
                for existing in &q {
                    let c = m_dot(&w, existing);
                    for i in 0..n {
                        w[i] -= c * existing[i];
                    }
                }
            }
            let beta = m_dot(&w, &w).sqrt();
            if q.len() == m_dims {
                break;
            }
            // operator norm of (L+epsM)^{-1}M is 1/eps; scale the breakdown
            // threshold to it
            if beta <= eps.recip() * T::of(1e-13) {
                // invariant subspace: continue with a fresh direction
                betas.push(T::zero());
                current = match fresh_vector(&mut rng, &q) {
                    Some(v) => v,
                    None => break, // whole space exhausted
                };
            } else {
                betas.push(beta);
                for x in &mut w {
                    *x /= beta;
                }
                current = w;
            }
        }

        let m_used = q.len();
        let mut tri: Array2<T> = Array2::zeros((m_used, m_used));
        for i in 0..m_used {
            tri[(i, i)] = alphas[i];
            if i + 1 < m_used {
                tri[(i, i + 1)] = betas[i];
                tri[(i + 1, i)] = betas[i];
            }
        }
        let (theta, z) = jacobi_eigh(&tri)?;

        // largest theta -> smallest lambda
        let mut order: Vec<usize> = (0..m_used).collect();
        order.sort_by(|&a, &b| theta[b].partial_cmp(&theta[a]).expect("finite ritz values"));

        let take = k.min(m_used);
        let mut eigenvalues = Vec::with_capacity(take);
        let mut eigenvectors = Array2::zeros((n, take));
        for (col, &ri) in order.iter().take(take).enumerate() {
            let th = theta[ri];
            if !(th > T::zero()) {
                // shift-inverted spectrum of an SPD pencil is positive;
                // a non-positive Ritz value means the space is polluted
                eigenvalues.push(T::nan());
                continue;
            }
            let lam = th.recip() - eps;
            eigenvalues.push(lam);
            for i in 0..n {
                let mut s = T::zero();
                for (jj, qv) in q.iter().enumerate() {
                    s += qv[i] * z[(jj, ri)];
                }
                eigenvectors[(i, col)] = s;
            }
        }

        // residual check per requested pair
        let all_ok = take == k
            && eigenvalues.iter().all(|l| l.is_finite())
            && (0..take).all(|col| {
                let phi: Vec<T> = (0..n).map(|i| eigenvectors[(i, col)]).collect();
                let lphi = l.matvec(&phi);
                let mut r2 = T::zero();
                let mut l2 = T::zero();
                let mut m2 = T::zero();
                for i in 0..n {
                    let r = lphi[i] - eigenvalues[col] * mass[i] * phi[i];
                    r2 += r * r;
                    l2 += lphi[i] * lphi[i];
                    m2 += mass[i] * phi[i] * mass[i] * phi[i];
                }
                // the (|lambda| + scale) * ||M phi|| term keeps the threshold
                // meaningful on the kernel column where ||L phi|| vanishes
                let denom = l2.sqrt() + (eigenvalues[col].abs() + scale) * m2.sqrt();
                r2.sqrt() <= residual_tol * denom
            });

        if all_ok {
            let mut clean_vals = eigenvalues;
            // clamp tiny negative round-off on the kernel eigenvalue
            for v in &mut clean_vals {
                if v.abs() < scale * T::of(1e-12) {
                    *v = v.max(T::zero());
                }
            }
            return Ok(LanczosOutcome { eigenvalues: clean_vals, eigenvectors });
        }

        if m_dims >= n {
            return Err(Error::Convergence(format!(
                "Lanczos residual target {residual_tol} not reached with full Krylov space (n={n}, k={k})"
            )));
        }
        m_dims = n.min(m_dims + m_dims / 2 + 8);
    }
}
