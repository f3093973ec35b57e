//! Exact rectangular assignment by shortest augmenting paths (Jonker-Volgenant
//! style), used as the optimality oracle for greedy hardening. O(n²d); keep to
//! n ≤ 512.

use super::{HardAssignment, SoftAssignment};
use crate::scalar::Real;

/// Maximum-total-probability injective assignment of vertices to classes.
pub fn harden_hungarian<T: Real>(soft: &SoftAssignment<T>) -> HardAssignment {
    let (n, d) = soft.p.dim();
    assert!(d >= n, "universe must be at least as large as the shape");
    // minimize cost = -p
    let inf = f64::INFINITY;
    let cost = |i: usize, j: usize| -> f64 { -soft.p[(i, j)].as_f64() };

    // potentials u (rows, 1-based over assigned prefix) and v (columns)
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; d + 1];
    // way[j): column matched to column j's augmenting predecessor
    let mut match_col = vec![usize::MAX; d + 1]; // column -> row (usize::MAX free)

    for i in 0..n {
        // augment row i
        let mut links = vec![usize::MAX; d + 1];
        let mut mins = vec![inf; d + 1];
        let mut used = vec![false; d + 1];
        let mut j0 = d; // virtual start column holding row i
        match_col[j0] = i;
        loop {
            used[j0] = true;
            let i0 = match_col[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 0..d {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0 + 1] - v[j];
                if cur < mins[j] {
                    mins[j] = cur;
                    links[j] = j0;
                }
                if mins[j] < delta {
                    delta = mins[j];
                    j1 = j;
                }
            }
            for j in 0..=d {
                if used[j] {
                    if match_col[j] != usize::MAX {
                        u[match_col[j] + 1] += delta;
                    }
                    v[j] -= delta;
                } else {
                    mins[j] -= delta;
                }
            }
            j0 = j1;
            if match_col[j0] == usize::MAX {
                break;
            }
        }
        // unwind augmenting path
        while j0 != d {
            let j1 = links[j0];
            match_col[j0] = match_col[j1];
            j0 = j1;
        }
    }

    let mut classes = vec![usize::MAX; n];
    for j in 0..d {
        if match_col[j] != usize::MAX {
            classes[match_col[j]] = j;
        }
    }
    HardAssignment { classes, d }
}
