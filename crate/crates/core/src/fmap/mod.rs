//! Regularized functional-map solver and conversions between functional maps
//! and point maps, including partial-matching rank estimation.

use crate::error::{Error, Result};
use crate::linalg::{chol_solve_vec, cholesky};
use crate::scalar::Real;
use crate::spectral::SpectralBasis;
use ndarray::{Array1, Array2};
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};

/// Counts every `FunctionalMap` constructed in this process. Inference must
/// never touch the functional-map machinery; tests reset and read this.
static FMAP_CONSTRUCTED: AtomicU64 = AtomicU64::new(0);

pub fn fmap_construction_count() -> u64 {
    FMAP_CONSTRUCTED.load(Ordering::Relaxed)
}

pub fn reset_fmap_construction_count() {
    FMAP_CONSTRUCTED.store(0, Ordering::Relaxed);
}

/// A functional map C (k_y × k_x): maps reduced coefficients of the source
/// shape to the target shape, `C A_x ≈ A_y`.
#[derive(Debug, Clone)]
pub struct FunctionalMap<T> {
    pub c: Array2<T>,
    pub source: String,
    pub target: String,
    pub lambda: T,
    pub gamma: T,
}

impl<T: Real> FunctionalMap<T> {
    pub fn new(c: Array2<T>, source: &str, target: &str, lambda: T, gamma: T) -> Self {
        FMAP_CONSTRUCTED.fetch_add(1, Ordering::Relaxed);
        Self { c, source: source.into(), target: target.into(), lambda, gamma }
    }

    pub fn k_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn k_x(&self) -> usize {
        self.c.ncols()
    }
}

/// Entrywise penalty generalizing Laplacian commutativity: a resolvent-based
/// mask over eigenvalue pairs, zero exactly where the spectra agree.
#[derive(Debug, Clone)]
pub struct ResolventMask<T> {
    /// k_y × k_x, nonnegative.
    pub m: Array2<T>,
    pub gamma: T,
}

/// Evaluates the resolvent mask
/// `M_ij = (g(Λ_y(i)) - g(Λ_x(j)))² + (h(Λ_y(i)) - h(Λ_x(j)))²` with
/// `g(λ) = λ^γ/(λ^{2γ}+1)` and `h(λ) = 1/(λ^{2γ}+1)`.
pub fn resolvent_mask<T: Real>(lambda_x: &[T], lambda_y: &[T], gamma: T) -> ResolventMask<T> {
    let g = |l: T| -> (T, T) {
        let lg = l.max(T::zero()).powf(gamma);
        let denom = lg * lg + T::one();
        (lg / denom, denom.recip())
    };
    let mut m = Array2::zeros((lambda_y.len(), lambda_x.len()));
    for (i, &ly) in lambda_y.iter().enumerate() {
        let (gy, hy) = g(ly);
        for (j, &lx) in lambda_x.iter().enumerate() {
            let (gx, hx) = g(lx);
            let a = gy - gx;
            let b = hy - hx;
            m[(i, j)] = a * a + b * b;
        }
    }
    ResolventMask { m, gamma }
}

/// Per-row Cholesky factors of `A_x A_xᵀ + λ diag(M_i,:)`, kept for the
/// implicit-differentiation backward pass.
pub struct FmapFactors<T> {
    pub factors: Vec<Array2<T>>,
}

/// Minimizes `‖C A_x − A_y‖_F² + λ Σ_ij C_ij² M_ij`.
///
/// The penalty is diagonal per row of C, so the problem decouples into k_y
/// independent k_x × k_x SPD solves sharing the Gram matrix `A_x A_xᵀ`.
pub fn solve_fmap<T: Real>(
    a_x: &Array2<T>,
    a_y: &Array2<T>,
    mask: &ResolventMask<T>,
    lambda: T,
) -> Result<FunctionalMap<T>> {
    let (map, _) = solve_fmap_with_factors(a_x, a_y, mask, lambda)?;
    Ok(map)
}

pub fn solve_fmap_with_factors<T: Real>(
    a_x: &Array2<T>,
    a_y: &Array2<T>,
    mask: &ResolventMask<T>,
    lambda: T,
) -> Result<(FunctionalMap<T>, FmapFactors<T>)> {
    let k_x = a_x.nrows();
    let k_y = a_y.nrows();
    if a_x.ncols() != a_y.ncols() {
        return Err(Error::Dimension(format!(
            "coefficient column counts differ: {} vs {}",
            a_x.ncols(),
            a_y.ncols()
        )));
    }
    if mask.m.nrows() != k_y || mask.m.ncols() != k_x {
        return Err(Error::Dimension(format!(
            "mask is {}x{}, expected {}x{}",
            mask.m.nrows(),
            mask.m.ncols(),
            k_y,
            k_x
        )));
    }
    if lambda < T::zero() {
        return Err(Error::Dimension("lambda must be nonnegative".into()));
    }

    let gram = a_x.dot(&a_x.t()); // k_x × k_x
    let rhs = a_x.dot(&a_y.t()); // k_x × k_y, column i is A_x A_y(i,:)^T

    let mut c = Array2::zeros((k_y, k_x));
    let mut factors = Vec::with_capacity(k_y);
    for i in 0..k_y {
        let mut k_i = gram.clone();
        for j in 0..k_x {
            k_i[(j, j)] += lambda * mask.m[(i, j)];
        }
        let l = cholesky(&k_i).map_err(|_| {
            Error::Singular(format!(
                "row system {i} is singular (lambda = {lambda}); feature coefficients may be rank-deficient"
            ))
        })?;
        let b = Array1::from_iter(rhs.column(i).iter().copied());
        let row = chol_solve_vec(&l, &b);
        for j in 0..k_x {
            c[(i, j)] = row[j];
        }
        factors.push(l);
    }
    Ok((
        FunctionalMap::new(c, "", "", lambda, mask.gamma),
        FmapFactors { factors },
    ))
}

/// Hard point map: per source-row target index, NONE for unmatched rows.
/// Row sums of the implied 0/1 matrix are ≤ 1 by construction; column sums
/// are not enforced here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointMap {
    pub pairs: Vec<Option<usize>>,
    pub n_target: usize,
}

impl PointMap {
    pub fn n_source(&self) -> usize {
        self.pairs.len()
    }

    pub fn matched(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_some()).count()
    }

    /// True when no target vertex is used twice (the column constraint of a
    /// partial permutation).
    pub fn column_injective(&self) -> bool {
        let mut used = vec![false; self.n_target];
        for p in self.pairs.iter().flatten() {
            if used[*p] {
                return false;
            }
            used[*p] = true;
        }
        true
    }
}

/// Converts a functional map to the point map `Π_yx` by matching each row of
/// `Φ_y C_xy` to its nearest row of `Φ_x` (Euclidean; ties resolved to the
/// lowest index).
pub fn fmap_to_pointmap<T: Real>(
    c_xy: &Array2<T>,
    basis_x: &SpectralBasis<T>,
    basis_y: &SpectralBasis<T>,
) -> Result<PointMap> {
    if c_xy.nrows() != basis_y.k || c_xy.ncols() != basis_x.k {
        return Err(Error::Dimension(format!(
            "map is {}x{}, bases have k_y={} k_x={}",
            c_xy.nrows(),
            c_xy.ncols(),
            basis_y.k,
            basis_x.k
        )));
    }
    let embedded = basis_y.phi.dot(c_xy); // n_y × k_x
    let n_x = basis_x.n();
    let mut pairs = Vec::with_capacity(embedded.nrows());
    for row in embedded.rows() {
        let mut best = 0usize;
        let mut best_d = T::infinity();
        for i in 0..n_x {
            let mut d = T::zero();
            for j in 0..basis_x.k {
                let diff = row[j] - basis_x.phi[(i, j)];
                d += diff * diff;
            }
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        pairs.push(Some(best));
    }
    Ok(PointMap { pairs, n_target: n_x })
}

/// Expected rank of a complete-to-partial functional map from the spectra:
/// the number of partial-shape eigenvalues strictly below the largest
/// complete-shape eigenvalue.
pub fn partial_rank<T: Real>(lambda_complete: &[T], lambda_partial: &[T]) -> usize {
    let max_x = lambda_complete
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    lambda_partial.iter().filter(|&&l| l < max_x).count()
}

/// Plain-text export: one header line `k_y k_x lambda gamma`, then the rows.
pub fn export_fmap<T: Real>(map: &FunctionalMap<T>, w: &mut impl Write) -> Result<()> {
    writeln!(w, "{} {} {} {}", map.k_y(), map.k_x(), map.lambda.as_f64(), map.gamma.as_f64())?;
    for row in map.c.rows() {
        let cells: Vec<String> = row.iter().map(|x| format!("{:.17e}", x.as_f64())).collect();
        writeln!(w, "{}", cells.join(" "))?;
    }
    Ok(())
}

pub fn import_fmap<T: Real>(r: &mut impl BufRead) -> Result<FunctionalMap<T>> {
    let bad = |msg: &str| Error::Parse { path: "<fmap>".into(), msg: msg.into() };
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| bad("empty input"))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(bad("header must be `k_y k_x lambda gamma`"));
    }
    let k_y: usize = parts[0].parse().map_err(|_| bad("bad k_y"))?;
    let k_x: usize = parts[1].parse().map_err(|_| bad("bad k_x"))?;
    let lambda: f64 = parts[2].parse().map_err(|_| bad("bad lambda"))?;
    let gamma: f64 = parts[3].parse().map_err(|_| bad("bad gamma"))?;
    let mut c = Array2::zeros((k_y, k_x));
    for i in 0..k_y {
        let line = lines.next().ok_or_else(|| bad("missing matrix row"))??;
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != k_x {
            return Err(bad("row width mismatch"));
        }
        for (j, v) in vals.iter().enumerate() {
            let x: f64 = v.parse().map_err(|_| bad("bad matrix entry"))?;
            c[(i, j)] = T::of(x);
        }
    }
    Ok(FunctionalMap::new(c, "", "", T::of(lambda), T::of(gamma)))
}
