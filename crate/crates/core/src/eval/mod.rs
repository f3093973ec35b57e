//! Evaluation: Princeton-protocol geodesic error, PCK curves, the synthetic
//! near-isometric benchmark generator, partial-shape generation, and the
//! ablation runners.

mod ablation;
mod partial;
mod synth;

pub use ablation::{run_ablation, AblationOutcome, AblationSetup, AblationVariant};
pub use partial::{make_partial, PartialKind};
pub use synth::{make_synthetic_collection, SynthBase, SynthCollection, SynthParams};

use crate::error::{Error, Result};
use crate::fmap::PointMap;
use crate::mesh::TriangleMesh;
use crate::scalar::Real;
use std::collections::HashMap;
use std::io::{BufRead, Write};

/// Template-based ground truth: per shape, a map vertex -> reference vertex
/// (None where undefined, e.g. on partial shapes).
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub to_reference: Vec<Vec<Option<usize>>>,
    pub reference_size: usize,
}

impl GroundTruth {
    /// Pairwise targets: for each vertex of shape `x`, the vertex of shape
    /// `y` with the same reference label.
    pub fn pairwise(&self, x: usize, y: usize) -> Vec<Option<usize>> {
        let mut ref_to_y = vec![None; self.reference_size];
        for (j, r) in self.to_reference[y].iter().enumerate() {
            if let Some(r) = r {
                ref_to_y[*r] = Some(j);
            }
        }
        self.to_reference[x]
            .iter()
            .map(|r| r.and_then(|r| ref_to_y[r]))
            .collect()
    }
}

/// Reads a ground-truth file: one reference index per line, -1 for
/// undefined. `index_base` handles datasets shipped 1-based.
pub fn read_ground_truth_file(
    r: &mut impl BufRead,
    index_base: usize,
    reference_size: usize,
) -> Result<Vec<Option<usize>>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: i64 = t.parse().map_err(|_| Error::Parse {
            path: "<ground truth>".into(),
            msg: format!("bad index `{t}`"),
        })?;
        if v < 0 {
            out.push(None);
        } else {
            let idx = (v as usize).checked_sub(index_base).ok_or_else(|| Error::Parse {
                path: "<ground truth>".into(),
                msg: format!("index {v} below base {index_base}"),
            })?;
            if idx >= reference_size {
                return Err(Error::Parse {
                    path: "<ground truth>".into(),
                    msg: format!("index {v} out of range for reference size {reference_size}"),
                });
            }
            out.push(Some(idx));
        }
    }
    Ok(out)
}

pub fn write_ground_truth_file(gt: &[Option<usize>], w: &mut impl Write) -> Result<()> {
    for g in gt {
        match g {
            Some(i) => writeln!(w, "{i}")?,
            None => writeln!(w, "-1")?,
        }
    }
    Ok(())
}

/// Per-mesh cache of geodesic distance fields keyed by source vertex.
pub struct GeodesicCache<'a, T> {
    mesh: &'a TriangleMesh<T>,
    adjacency: Vec<Vec<(usize, T)>>,
    fields: HashMap<usize, Vec<T>>,
}

impl<'a, T: Real> GeodesicCache<'a, T> {
    pub fn new(mesh: &'a TriangleMesh<T>) -> Self {
        Self { mesh, adjacency: mesh.adjacency(), fields: HashMap::new() }
    }

    pub fn distances(&mut self, source: usize) -> Result<&[T]> {
        if !self.fields.contains_key(&source) {
            let f = self.mesh.geodesic_distances_with(source, &self.adjacency)?;
            self.fields.insert(source, f.distances);
        }
        Ok(self.fields.get(&source).expect("just inserted"))
    }
}

/// Geodesic-error report for one predicted map against pairwise ground truth.
#[derive(Debug, Clone)]
pub struct GeodesicErrorReport<T> {
    /// One entry per source vertex with defined ground truth and a matched
    /// prediction.
    pub errors: Vec<T>,
    pub mean: T,
    /// Predictions the map left unmatched (reported separately, never folded
    /// into the mean).
    pub unmatched: usize,
    /// Vertices without ground truth.
    pub undefined: usize,
}

/// Normalized geodesic distance on the target mesh between each prediction
/// and its ground-truth match.
pub fn geodesic_error<T: Real>(
    pred: &PointMap,
    gt_pairwise: &[Option<usize>],
    mesh_y: &TriangleMesh<T>,
) -> Result<GeodesicErrorReport<T>> {
    if pred.pairs.len() != gt_pairwise.len() {
        return Err(Error::Dimension(format!(
            "prediction covers {} vertices, ground truth {}",
            pred.pairs.len(),
            gt_pairwise.len()
        )));
    }
    let mut cache = GeodesicCache::new(mesh_y);
    let mut errors = Vec::new();
    let mut unmatched = 0usize;
    let mut undefined = 0usize;
    for (p, g) in pred.pairs.iter().zip(gt_pairwise) {
        match (p, g) {
            (_, None) => undefined += 1,
            (None, Some(_)) => unmatched += 1,
            (Some(p), Some(g)) => {
                let field = cache.distances(*g)?;
                errors.push(field[*p]);
            }
        }
    }
    let mean = if errors.is_empty() {
        T::zero()
    } else {
        errors.iter().copied().sum::<T>() / T::of(errors.len() as f64)
    };
    Ok(GeodesicErrorReport { errors, mean, unmatched, undefined })
}

/// Percentage-of-correct-keypoints curve: the empirical CDF of the error
/// list at the given thresholds.
#[derive(Debug, Clone)]
pub struct PckCurve<T> {
    pub thresholds: Vec<T>,
    pub fractions: Vec<T>,
}

pub fn pck<T: Real>(errors: &[T], thresholds: &[T]) -> Result<PckCurve<T>> {
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Dimension("PCK thresholds must be strictly increasing".into()));
    }
    let n = errors.len();
    let fractions = thresholds
        .iter()
        .map(|&t| {
            if n == 0 {
                T::zero()
            } else {
                let hits = errors.iter().filter(|&&e| e <= t).count();
                T::of(hits as f64 / n as f64)
            }
        })
        .collect();
    Ok(PckCurve { thresholds: thresholds.to_vec(), fractions })
}

#[cfg(test)]
mod tests;
