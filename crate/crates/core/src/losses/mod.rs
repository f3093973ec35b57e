//! Training losses: structural functional-map regularizers, their partial
//! variants, the classifier losses, and the weighted totals.
//!
//! Each loss exists twice: a plain function over arrays (the reference
//! implementation used by tests and metrics) and a tape builder in [`graph`]
//! used by the training path. Equality of the two is pinned by tests.

use crate::error::{Error, Result};
use crate::scalar::Real;
use ndarray::Array2;

/// Weights of the total loss, plus the label-smoothing factor of the partial
/// classifier loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights<T> {
    pub w_bij: T,
    pub w_orth: T,
    pub w_lap: T,
    pub lambda_cls: T,
    pub smoothing: T,
}

impl<T: Real> LossWeights<T> {
    /// Complete-matching defaults: (1.0, 1.0, 1e-3, 0.01).
    pub fn complete() -> Self {
        Self {
            w_bij: T::one(),
            w_orth: T::one(),
            w_lap: T::of(1e-3),
            lambda_cls: T::of(0.01),
            smoothing: T::of(0.1),
        }
    }

    /// Partial-matching defaults: Laplacian term off (the solver already
    /// regularizes spectrally), classifier weight 1.0.
    pub fn partial() -> Self {
        Self {
            w_bij: T::one(),
            w_orth: T::one(),
            w_lap: T::zero(),
            lambda_cls: T::one(),
            smoothing: T::of(0.1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_bij, self.w_orth, self.w_lap, self.lambda_cls, self.smoothing];
        if all.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::Dimension("loss weights must be finite and nonnegative".into()));
        }
        if self.smoothing >= T::one() {
            return Err(Error::Dimension("label smoothing must be < 1".into()));
        }
        Ok(())
    }
}

/// Matching mode: complete shapes or partial-to-complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchMode {
    #[default]
    Complete,
    Partial,
}

/// The scalar loss components of one pair.
#[derive(Debug, Clone, Copy)]
pub struct LossParts<T> {
    pub bij: T,
    pub orth: T,
    pub lap: T,
    pub cls: T,
}

impl<T: Real> Default for LossParts<T> {
    fn default() -> Self {
        Self { bij: T::zero(), orth: T::zero(), lap: T::zero(), cls: T::zero() }
    }
}

fn square_same<T: Real>(c_xy: &Array2<T>, c_yx: &Array2<T>) -> Result<usize> {
    let k = c_xy.nrows();
    if c_xy.ncols() != k || c_yx.nrows() != k || c_yx.ncols() != k {
        return Err(Error::Dimension(format!(
            "expected square maps of matching size, got {}x{} and {}x{}",
            c_xy.nrows(),
            c_xy.ncols(),
            c_yx.nrows(),
            c_yx.ncols()
        )));
    }
    Ok(k)
}

fn frob_sq_minus_eye<T: Real>(m: &Array2<T>, r: usize) -> T {
    let mut s = T::zero();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let target = if i == j && i < r { T::one() } else { T::zero() };
            let d = m[(i, j)] - target;
            s += d * d;
        }
    }
    s
}

/// Bidirectional bijectivity: ‖C_xy C_yx − I‖² + ‖C_yx C_xy − I‖².
pub fn loss_bijectivity<T: Real>(c_xy: &Array2<T>, c_yx: &Array2<T>) -> Result<T> {
    let k = square_same(c_xy, c_yx)?;
    Ok(frob_sq_minus_eye(&c_xy.dot(c_yx), k) + frob_sq_minus_eye(&c_yx.dot(c_xy), k))
}

/// Bidirectional orthogonality: ‖C_xyᵀ C_xy − I‖² + ‖C_yxᵀ C_yx − I‖².
pub fn loss_orthogonality<T: Real>(c_xy: &Array2<T>, c_yx: &Array2<T>) -> Result<T> {
    let k = square_same(c_xy, c_yx)?;
    Ok(frob_sq_minus_eye(&c_xy.t().dot(c_xy), k) + frob_sq_minus_eye(&c_yx.t().dot(c_yx), k))
}

/// Bidirectional Laplacian commutativity:
/// ‖C_xy Λ_x − Λ_y C_xy‖² + ‖C_yx Λ_y − Λ_x C_yx‖².
pub fn loss_laplacian<T: Real>(
    c_xy: &Array2<T>,
    c_yx: &Array2<T>,
    lambda_x: &[T],
    lambda_y: &[T],
) -> Result<T> {
    let k = square_same(c_xy, c_yx)?;
    if lambda_x.len() != k || lambda_y.len() != k {
        return Err(Error::Dimension("eigenvalue lists must match the map size".into()));
    }
    let one_dir = |c: &Array2<T>, lx: &[T], ly: &[T]| -> T {
        let mut s = T::zero();
        for i in 0..k {
            for j in 0..k {
                let d = c[(i, j)] * (lx[j] - ly[i]);
                s += d * d;
            }
        }
        s
    };
    Ok(one_dir(c_xy, lambda_x, lambda_y) + one_dir(c_yx, lambda_y, lambda_x))
}

/// Partial-matching structural losses with the rank-r identity target:
/// L_bij = ‖C_xy C_yx − I_r‖², L_orth = ‖C_xy C_xyᵀ − I_r‖² (X complete,
/// Y partial).
pub fn loss_partial_structural<T: Real>(
    c_xy: &Array2<T>,
    c_yx: &Array2<T>,
    r: usize,
) -> Result<(T, T)> {
    let k = square_same(c_xy, c_yx)?;
    if r > k {
        return Err(Error::Dimension(format!("rank r={r} exceeds k={k}")));
    }
    let bij = frob_sq_minus_eye(&c_xy.dot(c_yx), r);
    let orth = frob_sq_minus_eye(&c_xy.dot(&c_xy.t()), r);
    Ok((bij, orth))
}

/// Classifier regularization, one direction: ‖Φ_x C_yx − Π_xy Φ_y‖² with the
/// soft pairwise map Π_xy (n_x×n_y).
pub fn loss_classifier<T: Real>(
    phi_x: &Array2<T>,
    phi_y: &Array2<T>,
    c_yx: &Array2<T>,
    pi_xy: &Array2<T>,
) -> Result<T> {
    if c_yx.nrows() != phi_x.ncols() || c_yx.ncols() != phi_y.ncols() {
        return Err(Error::Dimension(format!(
            "map {}x{} incompatible with bases k_x={} k_y={}",
            c_yx.nrows(),
            c_yx.ncols(),
            phi_x.ncols(),
            phi_y.ncols()
        )));
    }
    if pi_xy.nrows() != phi_x.nrows() || pi_xy.ncols() != phi_y.nrows() {
        return Err(Error::Dimension(format!(
            "point map {}x{} incompatible with shapes n_x={} n_y={}",
            pi_xy.nrows(),
            pi_xy.ncols(),
            phi_x.nrows(),
            phi_y.nrows()
        )));
    }
    let diff = phi_x.dot(c_yx) - pi_xy.dot(phi_y);
    Ok(diff.iter().map(|x| *x * *x).sum())
}

/// Label-smoothed cross entropy, mean over rows.
pub fn ce_smooth<T: Real>(p: &Array2<T>, targets: &[usize], smoothing: T) -> Result<T> {
    let (n, d) = p.dim();
    if targets.len() != n {
        return Err(Error::Dimension(format!("{} targets for {n} rows", targets.len())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= d) {
        return Err(Error::Dimension(format!("target class {t} out of {d}")));
    }
    let floor = T::min_positive_value();
    let uniform = smoothing / T::of(d as f64);
    let hit = T::one() - smoothing + uniform;
    let mut total = T::zero();
    for i in 0..n {
        for j in 0..d {
            let q = if j == targets[i] { hit } else { uniform };
            if q > T::zero() {
                total -= q * p[(i, j)].max(floor).ln();
            }
        }
    }
    Ok(total / T::of(n as f64))
}

/// Partial classifier loss: smoothed CE of the complete shape against the
/// identity classes plus smoothed CE of the partial shape against its
/// pseudo-labels.
pub fn loss_classifier_partial<T: Real>(
    p_x: &Array2<T>,
    p_y: &Array2<T>,
    pseudo_y: &[usize],
    smoothing: T,
) -> Result<T> {
    let (n_x, d) = p_x.dim();
    if n_x != d {
        return Err(Error::Dimension(format!(
            "the complete shape plays the universe: expected n_x = d, got {n_x} and {d}"
        )));
    }
    let identity: Vec<usize> = (0..n_x).collect();
    Ok(ce_smooth(p_x, &identity, smoothing)? + ce_smooth(p_y, pseudo_y, smoothing)?)
}

/// Weighted total. In partial mode the Laplacian term is excluded.
pub fn loss_total<T: Real>(parts: &LossParts<T>, weights: &LossWeights<T>, mode: MatchMode) -> T {
    let lap = match mode {
        MatchMode::Complete => weights.w_lap * parts.lap,
        MatchMode::Partial => T::zero(),
    };
    weights.w_bij * parts.bij + weights.w_orth * parts.orth + lap + weights.lambda_cls * parts.cls
}

pub mod graph {
    //! Tape builders mirroring the plain losses, used by the training path.

    use super::LossWeights;
    use super::MatchMode;
    use crate::autodiff::{Tape, Var};
    use crate::error::Result;
    use crate::scalar::Real;
    use ndarray::Array2;

    fn eye_r<T: Real>(k: usize, r: usize) -> Array2<T> {
        let mut m = Array2::zeros((k, k));
        for i in 0..r.min(k) {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn bijectivity<T: Real>(tape: &mut Tape<T>, c_xy: Var, c_yx: Var) -> Var {
        let k = tape.value(c_xy).nrows();
        let eye = tape.constant(eye_r(k, k));
        let ab = tape.matmul(c_xy, c_yx);
        let ba = tape.matmul(c_yx, c_xy);
        let d1 = tape.sub(ab, eye);
        let d2 = tape.sub(ba, eye);
        let f1 = tape.frob_sq(d1);
        let f2 = tape.frob_sq(d2);
        tape.add(f1, f2)
    }

    pub fn orthogonality<T: Real>(tape: &mut Tape<T>, c_xy: Var, c_yx: Var) -> Var {
        let k = tape.value(c_xy).nrows();
        let eye = tape.constant(eye_r(k, k));
        let xt = tape.transpose(c_xy);
        let yt = tape.transpose(c_yx);
        let g1 = tape.matmul(xt, c_xy);
        let g2 = tape.matmul(yt, c_yx);
        let d1 = tape.sub(g1, eye);
        let d2 = tape.sub(g2, eye);
        let f1 = tape.frob_sq(d1);
        let f2 = tape.frob_sq(d2);
        tape.add(f1, f2)
    }

    pub fn laplacian<T: Real>(
        tape: &mut Tape<T>,
        c_xy: Var,
        c_yx: Var,
        lambda_x: &[T],
        lambda_y: &[T],
    ) -> Var {
        let k = lambda_x.len();
        let diag = |vals: &[T]| -> Array2<T> {
            let mut m = Array2::zeros((k, k));
            for (i, &v) in vals.iter().enumerate() {
                m[(i, i)] = v;
            }
            m
        };
        let dx = tape.constant(diag(lambda_x));
        let dy = tape.constant(diag(lambda_y));
        // || C_xy Dx - Dy C_xy ||^2 + || C_yx Dy - Dx C_yx ||^2
        let a1 = tape.matmul(c_xy, dx);
        let a2 = tape.matmul(dy, c_xy);
        let d1 = tape.sub(a1, a2);
        let f1 = tape.frob_sq(d1);
        let b1 = tape.matmul(c_yx, dy);
        let b2 = tape.matmul(dx, c_yx);
        let d2 = tape.sub(b1, b2);
        let f2 = tape.frob_sq(d2);
        tape.add(f1, f2)
    }

    pub fn partial_structural<T: Real>(
        tape: &mut Tape<T>,
        c_xy: Var,
        c_yx: Var,
        r: usize,
    ) -> (Var, Var) {
        let k = tape.value(c_xy).nrows();
        let eye = tape.constant(eye_r(k, r));
        let ab = tape.matmul(c_xy, c_yx);
        let d1 = tape.sub(ab, eye);
        let bij = tape.frob_sq(d1);
        let xt = tape.transpose(c_xy);
        let g = tape.matmul(c_xy, xt);
        let eye2 = tape.constant(eye_r(k, r));
        let d2 = tape.sub(g, eye2);
        let orth = tape.frob_sq(d2);
        (bij, orth)
    }

    /// ‖Φ_x C_yx − P_x (P_yᵀ Φ_y)‖², associating the soft composition with
    /// the basis first so the n×n pairwise map is never materialized.
    pub fn classifier<T: Real>(
        tape: &mut Tape<T>,
        phi_x: Var,
        phi_y: Var,
        c_yx: Var,
        p_x: Var,
        p_y: Var,
    ) -> Var {
        let pyt = tape.transpose(p_y);
        let uni = tape.matmul(pyt, phi_y); // d × k
        let mapped = tape.matmul(p_x, uni); // n_x × k
        let lhs = tape.matmul(phi_x, c_yx);
        let d = tape.sub(lhs, mapped);
        tape.frob_sq(d)
    }

    pub fn classifier_partial<T: Real>(
        tape: &mut Tape<T>,
        p_x: Var,
        p_y: Var,
        pseudo_y: &[usize],
        smoothing: T,
    ) -> Result<Var> {
        let n_x = tape.value(p_x).nrows();
        let identity: Vec<usize> = (0..n_x).collect();
        let ce1 = tape.ce_smooth(p_x, &identity, smoothing)?;
        let ce2 = tape.ce_smooth(p_y, pseudo_y, smoothing)?;
        Ok(tape.add(ce1, ce2))
    }

    pub fn total<T: Real>(
        tape: &mut Tape<T>,
        bij: Var,
        orth: Var,
        lap: Option<Var>,
        cls: Var,
        weights: &LossWeights<T>,
        mode: MatchMode,
    ) -> Var {
        let mut acc = tape.scale(bij, weights.w_bij);
        let o = tape.scale(orth, weights.w_orth);
        acc = tape.add(acc, o);
        if let (MatchMode::Complete, Some(lap)) = (mode, lap) {
            let l = tape.scale(lap, weights.w_lap);
            acc = tape.add(acc, l);
        }
        let c = tape.scale(cls, weights.lambda_cls);
        tape.add(acc, c)
    }
}

#[cfg(test)]
mod tests;
