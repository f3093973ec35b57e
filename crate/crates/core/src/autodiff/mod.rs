//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records eagerly-evaluated matrix operations; [`Tape::backward`]
//! replays them in reverse, accumulating adjoints. Scalars are 1×1 matrices.
//! The regularized functional-map solve gets a custom adjoint via implicit
//! differentiation of its per-row linear systems, reusing their Cholesky
//! factors.

use crate::error::{Error, Result};
use crate::fmap::{FmapFactors, ResolventMask};
use crate::linalg::chol_solve_vec;
use crate::scalar::Real;
use ndarray::{Array1, Array2};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type BackFn<T> = Box<dyn Fn(&Array2<T>, &[Array2<T>], &mut Grads<T>)>;

pub struct Tape<T: Real> {
    values: Vec<Array2<T>>,
    backs: Vec<Option<BackFn<T>>>,
}

/// Adjoint accumulator, indexed like the tape.
pub struct Grads<T> {
    slots: Vec<Option<Array2<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn add(&mut self, v: Var, delta: Array2<T>) {
        match &mut self.slots[v.0] {
            Some(g) => *g += &delta,
            slot => *slot = Some(delta),
        }
    }

    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.slots[v.0].as_ref()
    }

    /// Gradient of a leaf, zeros when the node was never reached.
    pub fn of(&self, v: Var, shape: (usize, usize)) -> Array2<T> {
        self.slots[v.0].clone().unwrap_or_else(|| Array2::zeros(shape))
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { values: Vec::new(), backs: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.values[v.0]
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> T {
        debug_assert_eq!(self.values[v.0].dim(), (1, 1));
        self.values[v.0][(0, 0)]
    }

    fn push(&mut self, value: Array2<T>, back: Option<BackFn<T>>) -> Var {
        self.values.push(value);
        self.backs.push(back);
        Var(self.values.len() - 1)
    }

    /// Leaf without gradient interest.
    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.push(value, None)
    }

    /// Leaf whose gradient will be read after backward.
    pub fn param(&mut self, value: Array2<T>) -> Var {
        self.push(value, None)
    }

    /// Value passes, gradient stops.
    pub fn detach(&mut self, a: Var) -> Var {
        let v = self.values[a.0].clone();
        self.push(v, None)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = &self.values[a.0] + &self.values[b.0];
        self.push(
            v,
            Some(Box::new(move |g, _vals, grads| {
                grads.add(a, g.clone());
                grads.add(b, g.clone());
            })),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = &self.values[a.0] - &self.values[b.0];
        self.push(
            v,
            Some(Box::new(move |g, _vals, grads| {
                grads.add(a, g.clone());
                grads.add(b, g.mapv(|x| -x));
            })),
        )
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.values[a.0].mapv(|x| x * s);
        self.push(
            v,
            Some(Box::new(move |g, _vals, grads| {
                grads.add(a, g.mapv(|x| x * s));
            })),
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0].dot(&self.values[b.0]);
        self.push(
            v,
            Some(Box::new(move |g, vals, grads| {
                grads.add(a, g.dot(&vals[b.0].t()));
                grads.add(b, vals[a.0].t().dot(g));
            })),
        )
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.values[a.0].t().to_owned();
        self.push(
            v,
            Some(Box::new(move |g, _vals, grads| {
                grads.add(a, g.t().to_owned());
            })),
        )
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Var {
        let v = &self.values[a.0] * &self.values[b.0];
        self.push(
            v,
            Some(Box::new(move |g, vals, grads| {
                grads.add(a, g * &vals[b.0]);
                grads.add(b, g * &vals[a.0]);
            })),
        )
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.values[a.0].mapv(|x| x.tanh());
        let out = self.push(v, None);
        self.backs[out.0] = Some(Box::new(move |g, vals, grads| {
            let y = &vals[out.0];
            grads.add(a, g * &y.mapv(|t| T::one() - t * t));
        }));
        out
    }

    /// `a (n×m) + bias (1×m)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let mut v = self.values[a.0].clone();
        let b = &self.values[bias.0];
        for mut row in v.rows_mut() {
            for (x, bv) in row.iter_mut().zip(b.row(0)) {
                *x += *bv;
            }
        }
        self.push(
            v,
            Some(Box::new(move |g, _vals, grads| {
                grads.add(a, g.clone());
                let mut gb = Array2::zeros((1, g.ncols()));
                for row in g.rows() {
                    for (j, x) in row.iter().enumerate() {
                        gb[(0, j)] += *x;
                    }
                }
                grads.add(bias, gb);
            })),
        )
    }

    /// Row-wise stable softmax.
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let mut v = self.values[a.0].clone();
        for mut row in v.rows_mut() {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.iter().copied().sum::<T>();
            row.mapv_inplace(|x| x / s);
        }
        let out = self.push(v, None);
        self.backs[out.0] = Some(Box::new(move |g, vals, grads| {
            let y = &vals[out.0];
            let mut gx = Array2::zeros(g.dim());
            for i in 0..g.nrows() {
                let mut dot = T::zero();
                for j in 0..g.ncols() {
                    dot += g[(i, j)] * y[(i, j)];
                }
                for j in 0..g.ncols() {
                    gx[(i, j)] = y[(i, j)] * (g[(i, j)] - dot);
                }
            }
            grads.add(a, gx);
        }));
        out
    }

    /// Divides each row by its sum.
    pub fn row_normalize(&mut self, a: Var) -> Var {
        let mut v = self.values[a.0].clone();
        let mut sums = Vec::with_capacity(v.nrows());
        for mut row in v.rows_mut() {
            let s = row.iter().copied().sum::<T>();
            sums.push(s);
            if s > T::zero() {
                row.mapv_inplace(|x| x / s);
            }
        }
        let out = self.push(v, None);
        self.backs[out.0] = Some(Box::new(move |g, vals, grads| {
            let y = &vals[out.0];
            let mut gx = Array2::zeros(g.dim());
            for i in 0..g.nrows() {
                let s = sums[i];
                if !(s > T::zero()) {
                    continue;
                }
                let mut dot = T::zero();
                for j in 0..g.ncols() {
                    dot += g[(i, j)] * y[(i, j)];
                }
                for j in 0..g.ncols() {
                    gx[(i, j)] = (g[(i, j)] - dot) / s;
                }
            }
            grads.add(a, gx);
        }));
        out
    }

    /// Divides each column whose sum exceeds 1 by that sum (projection toward
    /// the sub-stochastic polytope); other columns pass through.
    pub fn col_project(&mut self, a: Var) -> Var {
        let x = &self.values[a.0];
        let (n, d) = x.dim();
        // column-major accumulation, matching the plain Sinkhorn path bitwise
        let mut sums = vec![T::zero(); d];
        for j in 0..d {
            for i in 0..n {
                sums[j] += x[(i, j)];
            }
        }
        let mut v = x.clone();
        for j in 0..d {
            if sums[j] > T::one() {
                for i in 0..n {
                    v[(i, j)] /= sums[j];
                }
            }
        }
        let out = self.push(v, None);
        self.backs[out.0] = Some(Box::new(move |g, vals, grads| {
            let y = &vals[out.0];
            let (n, d) = g.dim();
            let mut gx = g.clone();
            for j in 0..d {
                if sums[j] > T::one() {
                    let mut dot = T::zero();
                    for i in 0..n {
                        dot += g[(i, j)] * y[(i, j)];
                    }
                    for i in 0..n {
                        gx[(i, j)] = (g[(i, j)] - dot) / sums[j];
                    }
                }
            }
            grads.add(a, gx);
        }));
        out
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.values[a.0].iter().copied().sum::<T>();
        let shape = self.values[a.0].dim();
        self.push(
            Array2::from_elem((1, 1), s),
            Some(Box::new(move |g, _vals, grads| {
                grads.add(a, Array2::from_elem(shape, g[(0, 0)]));
            })),
        )
    }

    /// Squared Frobenius norm, a 1×1 node.
    pub fn frob_sq(&mut self, a: Var) -> Var {
        let s = self.values[a.0].iter().map(|x| *x * *x).sum::<T>();
        self.push(
            Array2::from_elem((1, 1), s),
            Some(Box::new(move |g, vals, grads| {
                let two_g = g[(0, 0)] * T::of(2.0);
                grads.add(a, vals[a.0].mapv(|x| x * two_g));
            })),
        )
    }

    /// All-pairs squared Euclidean distances between the rows of `a` (n×c)
    /// and the rows of `b` (m×c): output (n×m), computed as
    /// `|a|² ⊕ |b|² − 2 a bᵀ` so both passes run on matmul kernels. Values
    /// are clamped at zero against cancellation.
    pub fn pairwise_sqdist(&mut self, a: Var, b: Var) -> Var {
        let av = &self.values[a.0];
        let bv = &self.values[b.0];
        let (n, _c) = av.dim();
        let m = bv.nrows();
        let a_sq: Vec<T> = av.rows().into_iter().map(|r| r.iter().map(|x| *x * *x).sum()).collect();
        let b_sq: Vec<T> = bv.rows().into_iter().map(|r| r.iter().map(|x| *x * *x).sum()).collect();
        let mut out = av.dot(&bv.t());
        for i in 0..n {
            for j in 0..m {
                out[(i, j)] = (a_sq[i] + b_sq[j] - T::of(2.0) * out[(i, j)]).max(T::zero());
            }
        }
        self.push(
            out,
            Some(Box::new(move |g, vals, grads| {
                let av = &vals[a.0];
                let bv = &vals[b.0];
                // dD/da_i = 2 (sum_j g_ij) a_i - 2 (g b)_i, and symmetrically
                let row_g: Vec<T> = g.rows().into_iter().map(|r| r.iter().copied().sum()).collect();
                let col_g: Vec<T> = g
                    .columns()
                    .into_iter()
                    .map(|c| c.iter().copied().sum())
                    .collect();
                let mut ga = g.dot(bv);
                for (i, mut row) in ga.rows_mut().into_iter().enumerate() {
                    for (q, x) in row.iter_mut().enumerate() {
                        *x = T::of(2.0) * (row_g[i] * av[(i, q)] - *x);
                    }
                }
                let mut gb = g.t().dot(av);
                for (j, mut row) in gb.rows_mut().into_iter().enumerate() {
                    for (q, x) in row.iter_mut().enumerate() {
                        *x = T::of(2.0) * (col_g[j] * bv[(j, q)] - *x);
                    }
                }
                grads.add(a, ga);
                grads.add(b, gb);
            })),
        )
    }

    /// Label-smoothed cross entropy, averaged over rows: targets `t_i` get
    /// probability mass `1 - smoothing`, the remainder spreads uniformly.
    pub fn ce_smooth(&mut self, p: Var, targets: &[usize], smoothing: T) -> Result<Var> {
        let (n, d) = self.values[p.0].dim();
        if targets.len() != n {
            return Err(Error::Dimension(format!(
                "{} targets for {} rows",
                targets.len(),
                n
            )));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= d) {
            return Err(Error::Dimension(format!("target class {t} out of {d}")));
        }
        let targets = targets.to_vec();
        let floor = T::of(1e-300).max(T::min_positive_value());
        let uniform = smoothing / T::of(d as f64);
        let hit = T::one() - smoothing + uniform;
        let inv_n = T::of(1.0 / n as f64);

        let pv = &self.values[p.0];
        let mut total = T::zero();
        for i in 0..n {
            for j in 0..d {
                let q = if j == targets[i] { hit } else { uniform };
                if q > T::zero() {
                    total -= q * pv[(i, j)].max(floor).ln();
                }
            }
        }
        total *= inv_n;

        Ok(self.push(
            Array2::from_elem((1, 1), total),
            Some(Box::new(move |g, vals, grads| {
                let pv = &vals[p.0];
                let (n, d) = pv.dim();
                let scale = g[(0, 0)] * inv_n;
                let mut gp = Array2::zeros((n, d));
                for i in 0..n {
                    for j in 0..d {
                        let q = if j == targets[i] { hit } else { uniform };
                        let pij = pv[(i, j)];
                        if q > T::zero() && pij > floor {
                            gp[(i, j)] = -scale * q / pij;
                        }
                    }
                }
                grads.add(p, gp);
            })),
        ))
    }

    /// The regularized functional-map solve as a differentiable node.
    /// Backward solves the same factorized systems with adjoint right-hand
    /// sides (implicit differentiation), never unrolling the solver.
    pub fn solve_fmap(
        &mut self,
        a_x: Var,
        a_y: Var,
        mask: &ResolventMask<T>,
        lambda: T,
    ) -> Result<Var> {
        let (map, factors) = crate::fmap::solve_fmap_with_factors(
            &self.values[a_x.0],
            &self.values[a_y.0],
            mask,
            lambda,
        )?;
        let FmapFactors { factors } = factors;
        let c_val = map.c;
        let out = self.push(c_val, None);
        self.backs[out.0] = Some(Box::new(move |g, vals, grads| {
            let ax = &vals[a_x.0]; // k_x × c
            let ay = &vals[a_y.0]; // k_y × c
            let c = &vals[out.0]; // k_y × k_x
            let (k_y, k_x) = c.dim();
            let cols = ax.ncols();
            let mut g_ax = Array2::zeros((k_x, cols));
            let mut g_ay = Array2::zeros((k_y, cols));
            for i in 0..k_y {
                let gi = Array1::from_iter(g.row(i).iter().copied());
                let s = chol_solve_vec(&factors[i], &gi);
                // v = A_x^T s, u = A_x^T c_i
                let mut v = vec![T::zero(); cols];
                let mut u = vec![T::zero(); cols];
                for q in 0..cols {
                    let mut sv = T::zero();
                    let mut su = T::zero();
                    for r in 0..k_x {
                        sv += ax[(r, q)] * s[r];
                        su += ax[(r, q)] * c[(i, r)];
                    }
                    v[q] = sv;
                    u[q] = su;
                }
                for q in 0..cols {
                    g_ay[(i, q)] += v[q];
                    let resid = ay[(i, q)] - u[q];
                    for r in 0..k_x {
                        g_ax[(r, q)] += s[r] * resid - c[(i, r)] * v[q];
                    }
                }
            }
            grads.add(a_x, g_ax);
            grads.add(a_y, g_ay);
        }));
        Ok(out)
    }

    /// Reverse pass from a 1×1 root. Leaf gradients are read from the
    /// returned [`Grads`].
    pub fn backward(&self, root: Var) -> Result<Grads<T>> {
        if self.values[root.0].dim() != (1, 1) {
            return Err(Error::Dimension("backward root must be a scalar node".into()));
        }
        let mut grads = Grads { slots: vec![None; self.values.len()] };
        grads.slots[root.0] = Some(Array2::from_elem((1, 1), T::one()));
        for i in (0..=root.0).rev() {
            let Some(g) = grads.slots[i].take() else { continue };
            if let Some(back) = &self.backs[i] {
                back(&g, &self.values, &mut grads);
            } else {
                // leaf: keep its accumulated gradient readable
                grads.slots[i] = Some(g);
            }
        }
        Ok(grads)
    }
}
