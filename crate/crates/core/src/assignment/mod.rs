//! Universe-assignment machinery: Sinkhorn normalization of classifier
//! logits, hard assignment extraction, pairwise composition, and
//! cycle-consistency verification.

mod hungarian;

pub use hungarian::harden_hungarian;

use crate::error::{Error, Result};
use crate::fmap::PointMap;
use crate::scalar::Real;
use ndarray::Array2;
use std::collections::HashMap;
use std::io::{BufRead, Write};

/// Soft shape-to-universe assignment: n×d nonnegative, rows summing to 1.
#[derive(Debug, Clone)]
pub struct SoftAssignment<T> {
    pub p: Array2<T>,
    pub tau: T,
    pub iters: usize,
}

/// Hard shape-to-universe assignment: an injective map vertex -> class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardAssignment {
    pub classes: Vec<usize>,
    pub d: usize,
}

/// Sinkhorn normalization toward the sub-stochastic polytope: rows sum to 1,
/// column sums stay at most 1.
///
/// `iters` counts row steps. The first row step is a softmax of
/// `logits / tau`; each following round projects columns whose sum exceeds 1
/// back to 1 and renormalizes rows, so the sequence strictly alternates and
/// ends on a row step (row sums exactly 1).
///
/// Column sums approach the cap as the alternation converges. At the default
/// 10 iterations the excess stays below 1e-2 for shape-scale inputs
/// (n ≳ 300, any d ≥ n); heavily contested tiny instances (n below a few
/// dozen with d close to n) can overshoot by several percent because the
/// capped column step only ever scales columns down.
pub fn sinkhorn<T: Real>(logits: &Array2<T>, tau: T, iters: usize) -> Result<SoftAssignment<T>> {
    let (n, d) = logits.dim();
    if d < n {
        return Err(Error::Dimension(format!(
            "universe too small: d={d} < n={n}"
        )));
    }
    if !(tau > T::zero()) {
        return Err(Error::Dimension("sinkhorn temperature must be positive".into()));
    }
    if iters == 0 {
        return Err(Error::Dimension("sinkhorn needs at least one iteration".into()));
    }

    let mut p = row_softmax_scaled(logits, tau);
    for _ in 1..iters {
        col_project(&mut p);
        row_normalize(&mut p);
    }
    Ok(SoftAssignment { p, tau, iters })
}

pub(crate) fn row_softmax_scaled<T: Real>(logits: &Array2<T>, tau: T) -> Array2<T> {
    // multiply by the reciprocal so the plain and taped paths share bitwise
    // identical arithmetic
    let inv = tau.recip();
    let mut p = logits.mapv(|x| x * inv);
    for mut row in p.rows_mut() {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|x| (x - m).exp());
        let s = row.iter().copied().sum::<T>();
        row.mapv_inplace(|x| x / s);
    }
    p
}

/// Tape-graph Sinkhorn with the same step sequence as [`sinkhorn`], for the
/// differentiable training path.
pub fn sinkhorn_graph<T: Real>(
    tape: &mut crate::autodiff::Tape<T>,
    logits: crate::autodiff::Var,
    tau: T,
    iters: usize,
) -> Result<crate::autodiff::Var> {
    let (n, d) = tape.value(logits).dim();
    if d < n {
        return Err(Error::Dimension(format!("universe too small: d={d} < n={n}")));
    }
    if !(tau > T::zero()) {
        return Err(Error::Dimension("sinkhorn temperature must be positive".into()));
    }
    if iters == 0 {
        return Err(Error::Dimension("sinkhorn needs at least one iteration".into()));
    }
    let scaled = tape.scale(logits, tau.recip());
    let mut p = tape.row_softmax(scaled);
    for _ in 1..iters {
        p = tape.col_project(p);
        p = tape.row_normalize(p);
    }
    Ok(p)
}

pub(crate) fn col_project<T: Real>(p: &mut Array2<T>) {
    for mut col in p.columns_mut() {
        let s = col.iter().copied().sum::<T>();
        if s > T::one() {
            col.mapv_inplace(|x| x / s);
        }
    }
}

pub(crate) fn row_normalize<T: Real>(p: &mut Array2<T>) {
    for mut row in p.rows_mut() {
        let s = row.iter().copied().sum::<T>();
        if s > T::zero() {
            row.mapv_inplace(|x| x / s);
        }
    }
}

/// Greedy hardening: vertices in descending order of peak probability each
/// take their best still-free class. Injectivity follows from d ≥ n.
pub fn harden<T: Real>(soft: &SoftAssignment<T>) -> HardAssignment {
    let (n, d) = soft.p.dim();
    let mut order: Vec<usize> = (0..n).collect();
    let peak: Vec<T> = (0..n)
        .map(|i| soft.p.row(i).iter().copied().fold(T::neg_infinity(), T::max))
        .collect();
    // ties: lower vertex index first
    order.sort_by(|&a, &b| peak[b].partial_cmp(&peak[a]).expect("finite probabilities").then(a.cmp(&b)));

    let mut taken = vec![false; d];
    let mut classes = vec![usize::MAX; n];
    for &v in &order {
        let row = soft.p.row(v);
        let mut ranked: Vec<usize> = (0..d).collect();
        // ties: lower class index first
        ranked.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).expect("finite probabilities").then(a.cmp(&b)));
        let class = ranked
            .into_iter()
            .find(|&c| !taken[c])
            .expect("d >= n guarantees a free class");
        taken[class] = true;
        classes[v] = class;
    }
    HardAssignment { classes, d }
}

impl HardAssignment {
    pub fn n(&self) -> usize {
        self.classes.len()
    }

    pub fn is_injective(&self) -> bool {
        let mut used = vec![false; self.d];
        for &c in &self.classes {
            if used[c] {
                return false;
            }
            used[c] = true;
        }
        true
    }

    /// class -> vertex lookup (None for unused classes).
    pub fn class_to_vertex(&self) -> Vec<Option<usize>> {
        let mut inv = vec![None; self.d];
        for (v, &c) in self.classes.iter().enumerate() {
            inv[c] = Some(v);
        }
        inv
    }
}

/// Pairwise point map by composition through the universe: vertex i of X maps
/// to vertex j of Y exactly when they share a universe class.
pub fn compose_pairwise(pi_x: &HardAssignment, pi_y: &HardAssignment) -> Result<PointMap> {
    if pi_x.d != pi_y.d {
        return Err(Error::Dimension(format!(
            "universe sizes differ: {} vs {}",
            pi_x.d, pi_y.d
        )));
    }
    let inv_y = pi_y.class_to_vertex();
    let pairs = pi_x.classes.iter().map(|&c| inv_y[c]).collect();
    Ok(PointMap { pairs, n_target: pi_y.n() })
}

/// One disagreement found while checking `Π_xz = Π_xy Π_yz`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleViolation {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub vertex: usize,
    pub via: Option<usize>,
    pub direct: Option<usize>,
}

/// Report over all ordered shape triplets.
///
/// A violation is a vertex where the composite map asserts a different match
/// than the direct map, or asserts a match the direct map denies. A direct
/// match that is merely lost through the intermediate shape (its class unused
/// there) is information loss inherent to partial maps; those are tallied in
/// `dropped_through_mid`, not as violations.
#[derive(Debug, Clone, Default)]
pub struct CycleReport {
    pub violations: Vec<CycleViolation>,
    pub dropped_through_mid: usize,
    pub triplets_checked: usize,
}

impl CycleReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every ordered triplet (x, y, z) of distinct shapes for which all
/// three maps are present.
pub fn check_cycle_consistency(maps: &HashMap<(usize, usize), PointMap>) -> CycleReport {
    let mut shapes: Vec<usize> = maps
        .keys()
        .flat_map(|&(a, b)| [a, b])
        .collect();
    shapes.sort_unstable();
    shapes.dedup();

    let mut report = CycleReport::default();
    for &x in &shapes {
        for &y in &shapes {
            for &z in &shapes {
                if x == y || y == z || x == z {
                    continue;
                }
                let (Some(xy), Some(yz), Some(xz)) =
                    (maps.get(&(x, y)), maps.get(&(y, z)), maps.get(&(x, z)))
                else {
                    continue;
                };
                report.triplets_checked += 1;
                for (i, &via_y) in xy.pairs.iter().enumerate() {
                    let composite = via_y.and_then(|j| yz.pairs[j]);
                    let direct = xz.pairs[i];
                    match (composite, direct) {
                        (Some(m), Some(m2)) if m != m2 => report.violations.push(CycleViolation {
                            x,
                            y,
                            z,
                            vertex: i,
                            via: Some(m),
                            direct: Some(m2),
                        }),
                        (Some(m), None) => report.violations.push(CycleViolation {
                            x,
                            y,
                            z,
                            vertex: i,
                            via: Some(m),
                            direct: None,
                        }),
                        (None, Some(_)) => report.dropped_through_mid += 1,
                        _ => {}
                    }
                }
            }
        }
    }
    report
}

/// Writes a correspondence file: a header recording shape IDs and the
/// universe size, then one matched target index (or -1) per source vertex.
pub fn write_point_map(
    map: &PointMap,
    source_id: &str,
    target_id: &str,
    d: usize,
    w: &mut impl Write,
) -> Result<()> {
    writeln!(w, "# unimatch correspondence source={source_id} target={target_id} d={d}")?;
    for p in &map.pairs {
        match p {
            Some(j) => writeln!(w, "{j}")?,
            None => writeln!(w, "-1")?,
        }
    }
    Ok(())
}

pub fn read_point_map(r: &mut impl BufRead, n_target: usize) -> Result<PointMap> {
    let mut pairs = Vec::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: i64 = t.parse().map_err(|_| Error::Parse {
            path: "<correspondence>".into(),
            msg: format!("bad index `{t}`"),
        })?;
        if v < 0 {
            pairs.push(None);
        } else if (v as usize) < n_target {
            pairs.push(Some(v as usize));
        } else {
            return Err(Error::Parse {
                path: "<correspondence>".into(),
                msg: format!("index {v} out of range (target has {n_target} vertices)"),
            });
        }
    }
    Ok(PointMap { pairs, n_target })
}

/// Writes a universe-assignment file: one class index per vertex.
pub fn write_assignment(a: &HardAssignment, shape_id: &str, w: &mut impl Write) -> Result<()> {
    writeln!(w, "# unimatch assignment shape={shape_id} d={}", a.d)?;
    for &c in &a.classes {
        writeln!(w, "{c}")?;
    }
    Ok(())
}
