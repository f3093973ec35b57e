//! SHOT: a rotation-invariant local histogram descriptor.
//!
//! Per vertex: a local reference frame from the distance-weighted covariance
//! of neighbors inside a support radius, then a histogram over 32 spatial
//! bins (8 azimuth × 2 elevation × 2 radial) × 11 cosine bins of the angle
//! between neighbor normals and the frame's z axis — 352 dimensions,
//! L2-normalized per vertex.

use super::{FeatureField, FeatureKind};
use crate::error::Result;
use crate::linalg::jacobi_eigh;
use crate::mesh::TriangleMesh;
use crate::scalar::Real;
use ndarray::Array2;
use std::collections::HashMap;

pub const SHOT_AZIMUTH_BINS: usize = 8;
pub const SHOT_ELEVATION_BINS: usize = 2;
pub const SHOT_RADIAL_BINS: usize = 2;
pub const SHOT_COSINE_BINS: usize = 11;
pub const SHOT_DIMS: usize =
    SHOT_AZIMUTH_BINS * SHOT_ELEVATION_BINS * SHOT_RADIAL_BINS * SHOT_COSINE_BINS;

/// Computes the 352-dimensional SHOT descriptor for every vertex. The support
/// radius is `radius_frac` times the bounding-box diagonal. Vertices with a
/// rank-deficient neighborhood get a zero row and are listed in `degenerate`.
pub fn shot<T: Real>(mesh: &TriangleMesh<T>, radius_frac: T) -> Result<FeatureField<T>> {
    let n = mesh.n();
    let radius = radius_frac * mesh.bbox_diagonal();
    let normals = mesh.vertex_normals();
    let grid = Grid::build(mesh, radius);

    let mut values = Array2::zeros((n, SHOT_DIMS));
    let mut degenerate = Vec::new();

    for v in 0..n {
        let p = mesh.vertex(v);
        let mut neighbors: Vec<(usize, [T; 3], T)> = Vec::new();
        for j in grid.candidates(p) {
            if j == v {
                continue;
            }
            let o = crate::mesh::sub(mesh.vertex(j), p);
            let d = crate::mesh::norm(o);
            if d > T::zero() && d <= radius {
                neighbors.push((j, o, d));
            }
        }
        neighbors.sort_unstable_by_key(|e| e.0);

        match local_frame(&neighbors, radius, normals[v]) {
            Some(frame) => {
                let row = bin_neighbors(&neighbors, &normals, &frame, radius);
                for (c, x) in row.into_iter().enumerate() {
                    values[(v, c)] = x;
                }
            }
            None => degenerate.push(v),
        }
    }

    Ok(FeatureField {
        values,
        kind: FeatureKind::Shot { radius_frac: radius_frac.as_f64() },
        degenerate,
    })
}

pub(crate) struct Frame<T> {
    pub x: [T; 3],
    pub y: [T; 3],
    pub z: [T; 3],
}

/// Weighted-covariance local reference frame. Weights are (radius - d), the
/// x axis takes the largest eigenvalue, z the smallest. Signs: x by the
/// majority of neighbor offsets (ties keep the canonical eigenvector sign),
/// z aligned with the vertex normal; y completes the right-handed frame.
pub(crate) fn local_frame<T: Real>(
    neighbors: &[(usize, [T; 3], T)],
    radius: T,
    normal: [T; 3],
) -> Option<Frame<T>> {
    if neighbors.len() < 2 {
        return None;
    }
    let mut cov = Array2::<T>::zeros((3, 3));
    let mut wsum = T::zero();
    for &(_, o, d) in neighbors {
        let w = radius - d;
        wsum += w;
        for a in 0..3 {
            for b in 0..3 {
                cov[(a, b)] += w * o[a] * o[b];
            }
        }
    }
    if wsum <= T::zero() {
        return None;
    }
    cov.mapv_inplace(|x| x / wsum);
    let (vals, vecs) = jacobi_eigh(&cov).ok()?;
    // ascending eigenvalues: column 2 is x, column 0 is z
    let lmax = vals[2];
    if !(lmax > T::zero()) || vals[1] <= lmax * T::of(1e-12) {
        return None; // rank-deficient spread, frame undefined
    }
    let col = |c: usize| -> [T; 3] { [vecs[(0, c)], vecs[(1, c)], vecs[(2, c)]] };
    let mut x = canonical_sign(col(2));
    let mut z = canonical_sign(col(0));

    // majority disambiguation for x
    let mut pos = 0usize;
    let mut neg = 0usize;
    for &(_, o, _) in neighbors {
        let d = crate::mesh::dot3(o, x);
        if d > T::zero() {
            pos += 1;
        } else if d < T::zero() {
            neg += 1;
        }
    }
    if neg > pos {
        x = [-x[0], -x[1], -x[2]];
    }
    // z follows the vertex normal
    if crate::mesh::dot3(z, normal) < T::zero() {
        z = [-z[0], -z[1], -z[2]];
    }
    let y = crate::mesh::cross(z, x);
    Some(Frame { x, y, z })
}

fn canonical_sign<T: Real>(v: [T; 3]) -> [T; 3] {
    let mut best = 0;
    for i in 1..3 {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < T::zero() {
        [-v[0], -v[1], -v[2]]
    } else {
        v
    }
}

/// Hard binning of neighbors into the 352 SHOT cells, then L2 normalization.
pub(crate) fn bin_neighbors<T: Real>(
    neighbors: &[(usize, [T; 3], T)],
    normals: &[[T; 3]],
    frame: &Frame<T>,
    radius: T,
) -> Vec<T> {
    let mut hist = vec![T::zero(); SHOT_DIMS];
    let two_pi = T::of(std::f64::consts::TAU);
    let pi = T::of(std::f64::consts::PI);
    for &(j, o, d) in neighbors {
        let lx = crate::mesh::dot3(o, frame.x);
        let ly = crate::mesh::dot3(o, frame.y);
        let lz = crate::mesh::dot3(o, frame.z);
        let az = ly.atan2(lx); // (-pi, pi]
        let az_bin = (((az + pi) / two_pi).as_f64() * SHOT_AZIMUTH_BINS as f64).floor() as isize;
        let az_bin = az_bin.clamp(0, SHOT_AZIMUTH_BINS as isize - 1) as usize;
        let elev_bin = usize::from(lz >= T::zero());
        let rad_bin = usize::from(d >= radius * T::of(0.5));
        let spatial = az_bin * (SHOT_ELEVATION_BINS * SHOT_RADIAL_BINS)
            + elev_bin * SHOT_RADIAL_BINS
            + rad_bin;

        let c = crate::mesh::dot3(normals[j], frame.z).max(-T::one()).min(T::one());
        let cos_bin = (((c + T::one()) * T::of(0.5)).as_f64() * SHOT_COSINE_BINS as f64).floor()
            as isize;
        let cos_bin = cos_bin.clamp(0, SHOT_COSINE_BINS as isize - 1) as usize;

        hist[spatial * SHOT_COSINE_BINS + cos_bin] += T::one();
    }
    let norm = hist.iter().map(|x| *x * *x).sum::<T>().sqrt();
    if norm > T::zero() {
        for h in &mut hist {
            *h /= norm;
        }
    }
    hist
}

/// Uniform grid over vertex positions with cell size = radius, so neighbor
/// candidates come from the 27 surrounding cells.
struct Grid<T> {
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
    inv_cell: T,
}

impl<T: Real> Grid<T> {
    fn build(mesh: &TriangleMesh<T>, radius: T) -> Self {
        let inv_cell = if radius > T::zero() { radius.recip() } else { T::one() };
        let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, v) in mesh.vertices().iter().enumerate() {
            cells.entry(Self::key(v, inv_cell)).or_default().push(i);
        }
        Self { cells, inv_cell }
    }

    fn key(p: &[T; 3], inv_cell: T) -> (i64, i64, i64) {
        (
            (p[0] * inv_cell).floor().as_f64() as i64,
            (p[1] * inv_cell).floor().as_f64() as i64,
            (p[2] * inv_cell).floor().as_f64() as i64,
        )
    }

    fn candidates(&self, p: [T; 3]) -> impl Iterator<Item = usize> + '_ {
        let (cx, cy, cz) = Self::key(&p, self.inv_cell);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(v) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
        out.into_iter()
    }
}
