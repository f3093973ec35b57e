//! Sparse symmetric matrices and an envelope (profile) Cholesky factorization
//! with reverse Cuthill-McKee reordering, used by the shift-invert eigensolver.

use crate::error::{Error, Result};
use crate::scalar::Real;
use std::collections::VecDeque;

/// Symmetric sparse matrix stored as full adjacency rows (including the
/// diagonal), each row sorted by column.
#[derive(Debug, Clone)]
pub struct SymSparse<T> {
    pub n: usize,
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> SymSparse<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, rows: vec![Vec::new(); n] }
    }

    /// Adds `v` to entries (i, j) and (j, i) (once to the diagonal if i == j).
    pub fn add_sym(&mut self, i: usize, j: usize, v: T) {
        self.add_entry(i, j, v);
        if i != j {
            self.add_entry(j, i, v);
        }
    }

    fn add_entry(&mut self, i: usize, j: usize, v: T) {
        match self.rows[i].binary_search_by(|e| e.0.cmp(&j)) {
            Ok(pos) => self.rows[i][pos].1 += v,
            Err(pos) => self.rows[i].insert(pos, (j, v)),
        }
    }

    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        match self.rows[i].binary_search_by(|e| e.0.cmp(&j)) {
            Ok(pos) => self.rows[i][pos].1,
            Err(_) => T::zero(),
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let mut s = T::zero();
            for &(j, v) in &self.rows[i] {
                s += v * x[j];
            }
            y[i] = s;
        }
        y
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn to_dense(&self) -> ndarray::Array2<T> {
        let mut a = ndarray::Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for &(j, v) in &self.rows[i] {
                a[(i, j)] = v;
            }
        }
        a
    }

    /// Reverse Cuthill-McKee ordering (new-index -> old-index) to shrink the
    /// factorization envelope. Components are processed one after another.
    pub fn rcm_order(&self) -> Vec<usize> {
        let n = self.n;
        let degree: Vec<usize> = (0..n).map(|i| self.rows[i].len()).collect();
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);

        let bfs_farthest = |start: usize, visited_mask: &[bool]| -> usize {
            let mut seen = visited_mask.to_vec();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            let mut last = start;
            while let Some(u) = queue.pop_front() {
                last = u;
                for &(v, _) in &self.rows[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            last
        };

        for seed in 0..n {
            if visited[seed] {
                continue;
            }
            // two BFS sweeps approximate a peripheral vertex
            let root = bfs_farthest(bfs_farthest(seed, &visited), &visited);
            let mut queue = VecDeque::from([root]);
            visited[root] = true;
            while let Some(u) = queue.pop_front() {
                order.push(u);
                let mut nbrs: Vec<usize> = self.rows[u]
                    .iter()
                    .map(|&(v, _)| v)
                    .filter(|&v| !visited[v])
                    .collect();
                nbrs.sort_unstable_by_key(|&v| (degree[v], v));
                for v in nbrs {
                    visited[v] = true;
                    queue.push_back(v);
                }
            }
        }
        order.reverse();
        order
    }
}

/// Envelope Cholesky factorization of a permuted SPD matrix.
///
/// Stores, for each row, the entries from its first structurally nonzero
/// column through the diagonal; fill-in stays inside that profile.
pub struct EnvelopeChol<T> {
    n: usize,
    /// new-index -> old-index
    perm: Vec<usize>,
    /// old-index -> new-index
    inv_perm: Vec<usize>,
    first: Vec<usize>,
    row_ptr: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> EnvelopeChol<T> {
    pub fn new(a: &SymSparse<T>) -> Result<Self> {
        let n = a.n;
        let perm = a.rcm_order();
        let mut inv_perm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }

        let mut first = vec![0usize; n];
        for new_i in 0..n {
            let old_i = perm[new_i];
            let mut f = new_i;
            for &(old_j, _) in a.row(old_i) {
                f = f.min(inv_perm[old_j]);
            }
            first[new_i] = f;
        }

        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + (i - first[i] + 1);
        }
        let mut vals = vec![T::zero(); row_ptr[n]];
        for new_i in 0..n {
            let old_i = perm[new_i];
            for &(old_j, v) in a.row(old_i) {
                let new_j = inv_perm[old_j];
                if new_j <= new_i {
                    vals[row_ptr[new_i] + (new_j - first[new_i])] = v;
                }
            }
        }

        // in-place profile Cholesky
        for i in 0..n {
            for j in first[i]..=i {
                let lo = first[i].max(first[j]);
                let mut s = vals[row_ptr[i] + (j - first[i])];
                for k in lo..j {
                    s -= vals[row_ptr[i] + (k - first[i])] * vals[row_ptr[j] + (k - first[j])];
                }
                if j < i {
                    let d = vals[row_ptr[j] + (j - first[j])];
                    vals[row_ptr[i] + (j - first[i])] = s / d;
                } else {
                    if s <= T::zero() || !s.is_finite() {
                        return Err(Error::Singular(format!(
                            "envelope Cholesky: non-positive pivot at row {i}"
                        )));
                    }
                    vals[row_ptr[i] + (j - first[i])] = s.sqrt();
                }
            }
        }

        Ok(Self { n, perm, inv_perm, first, row_ptr, vals })
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            y[i] = b[self.perm[i]];
        }
        // forward: L y' = y
        for i in 0..n {
            let mut s = y[i];
            for k in self.first[i]..i {
                s -= self.vals[self.row_ptr[i] + (k - self.first[i])] * y[k];
            }
            y[i] = s / self.vals[self.row_ptr[i] + (i - self.first[i])];
        }
        // backward: L^T x' = y'
        for i in (0..n).rev() {
            let xi = y[i] / self.vals[self.row_ptr[i] + (i - self.first[i])];
            y[i] = xi;
            for k in self.first[i]..i {
                y[k] -= self.vals[self.row_ptr[i] + (k - self.first[i])] * xi;
            }
        }
        let mut x = vec![T::zero(); n];
        for old in 0..n {
            x[old] = y[self.inv_perm[old]];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_plus_eps(n: usize, eps: f64) -> SymSparse<f64> {
        // path-graph Laplacian + eps I, SPD
        let mut a = SymSparse::zeros(n);
        for i in 0..n {
            let mut d = eps;
            if i > 0 {
                a.add_sym(i, i - 1, -1.0);
                d += 1.0;
            }
            if i + 1 < n {
                d += 1.0;
            }
            a.add_sym(i, i, d);
        }
        a
    }

    #[test]
    fn envelope_solve_matches_direct() {
        let a = laplacian_plus_eps(25, 0.7);
        let chol = EnvelopeChol::new(&a).unwrap();
        let b: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = chol.solve(&b);
        let r = a.matvec(&x);
        for i in 0..25 {
            assert!((r[i] - b[i]).abs() < 1e-12, "residual at {i}");
        }
    }

    #[test]
    fn indefinite_rejected() {
        let mut a = SymSparse::zeros(2);
        a.add_sym(0, 0, 1.0);
        a.add_sym(1, 1, -1.0);
        assert!(EnvelopeChol::new(&a).is_err());
    }

    #[test]
    fn rcm_is_permutation() {
        let a = laplacian_plus_eps(30, 0.1);
        let mut p = a.rcm_order();
        p.sort_unstable();
        assert_eq!(p, (0..30).collect::<Vec<_>>());
    }
}
