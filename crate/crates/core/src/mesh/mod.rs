//! Triangle meshes: representation, validation, intrinsic queries
//! (areas, edge graph, graph geodesics).

mod geodesic;
pub mod io;
pub mod primitives;

pub use geodesic::GeodesicField;

use crate::error::{Error, Result};
use crate::scalar::Real;
use sha2::{Digest, Sha256};
use std::collections::HashMap;

/// Immutable triangle mesh. Vertex order is preserved from the input file;
/// face indices are 0-based.
///
/// Non-manifold edges (more than two incident faces) are detected at
/// construction and reported through [`TriangleMesh::non_manifold_edges`]
/// rather than rejected.
#[derive(Debug, Clone)]
pub struct TriangleMesh<T> {
    vertices: Vec<[T; 3]>,
    faces: Vec<[usize; 3]>,
    non_manifold_edges: Vec<(usize, usize)>,
}

impl<T: Real> TriangleMesh<T> {
    /// Builds and validates a mesh.
    ///
    /// Rejects out-of-range indices, faces repeating a vertex, and vertices
    /// referenced by no face.
    pub fn new(vertices: Vec<[T; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        let mut referenced = vec![false; n];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(Error::Topology(format!(
                        "face {fi} references vertex {v}, mesh has {n} vertices"
                    )));
                }
                referenced[v] = true;
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Topology(format!("face {fi} repeats a vertex: {f:?}")));
            }
        }
        if let Some(v) = referenced.iter().position(|r| !r) {
            return Err(Error::Topology(format!("vertex {v} is not referenced by any face")));
        }

        let mut edge_faces: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = (a.min(b), a.max(b));
                *edge_faces.entry(key).or_insert(0) += 1;
            }
        }
        let mut non_manifold_edges: Vec<(usize, usize)> =
            edge_faces.iter().filter(|(_, &c)| c > 2).map(|(&e, _)| e).collect();
        non_manifold_edges.sort_unstable();

        Ok(Self { vertices, faces, non_manifold_edges })
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[[T; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex(&self, i: usize) -> [T; 3] {
        self.vertices[i]
    }

    /// Edges with more than two incident faces, sorted.
    pub fn non_manifold_edges(&self) -> &[(usize, usize)] {
        &self.non_manifold_edges
    }

    pub fn is_manifold(&self) -> bool {
        self.non_manifold_edges.is_empty()
    }

    /// Area of face `fi` by the cross-product formula.
    pub fn face_area(&self, fi: usize) -> T {
        let [a, b, c] = self.faces[fi];
        let u = sub(self.vertices[b], self.vertices[a]);
        let v = sub(self.vertices[c], self.vertices[a]);
        norm(cross(u, v)) * T::of(0.5)
    }

    /// Sum of all face areas. Errors when every face is degenerate.
    pub fn total_area(&self) -> Result<T> {
        let mut total = T::zero();
        for fi in 0..self.faces.len() {
            total += self.face_area(fi);
        }
        if total <= T::zero() {
            return Err(Error::Degenerate("all faces have zero area".into()));
        }
        Ok(total)
    }

    /// Barycentric lumped vertex areas: one third of the incident face areas.
    pub fn vertex_areas(&self) -> Vec<T> {
        let third = T::of(1.0 / 3.0);
        let mut areas = vec![T::zero(); self.n()];
        for fi in 0..self.faces.len() {
            let a = self.face_area(fi) * third;
            for &v in &self.faces[fi] {
                areas[v] += a;
            }
        }
        areas
    }

    /// Area-weighted average of incident face normals, normalized per vertex.
    pub fn vertex_normals(&self) -> Vec<[T; 3]> {
        let mut normals = vec![[T::zero(); 3]; self.n()];
        for f in &self.faces {
            let u = sub(self.vertices[f[1]], self.vertices[f[0]]);
            let v = sub(self.vertices[f[2]], self.vertices[f[0]]);
            let fnorm = cross(u, v); // length = 2 * area, weighting by area
            for &vi in f {
                for d in 0..3 {
                    normals[vi][d] += fnorm[d];
                }
            }
        }
        for nv in &mut normals {
            let len = norm(*nv);
            if len > T::zero() {
                for d in 0..3 {
                    nv[d] /= len;
                }
            }
        }
        normals
    }

    /// Undirected unique edges with Euclidean lengths.
    pub fn edges(&self) -> Vec<(usize, usize, T)> {
        let mut seen: HashMap<(usize, usize), ()> = HashMap::new();
        let mut edges = Vec::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = (a.min(b), a.max(b));
                if seen.insert(key, ()).is_none() {
                    edges.push((key.0, key.1, dist(self.vertices[key.0], self.vertices[key.1])));
                }
            }
        }
        edges.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        edges
    }

    /// Adjacency lists of the edge graph with Euclidean edge lengths.
    pub fn adjacency(&self) -> Vec<Vec<(usize, T)>> {
        let mut adj = vec![Vec::new(); self.n()];
        for (a, b, len) in self.edges() {
            adj[a].push((b, len));
            adj[b].push((a, len));
        }
        for list in &mut adj {
            list.sort_unstable_by(|x, y| x.0.cmp(&y.0));
        }
        adj
    }

    /// Diagonal of the axis-aligned bounding box.
    pub fn bbox_diagonal(&self) -> T {
        let mut lo = [T::infinity(); 3];
        let mut hi = [T::neg_infinity(); 3];
        for v in &self.vertices {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let mut s = T::zero();
        for d in 0..3 {
            let e = hi[d] - lo[d];
            s += e * e;
        }
        s.sqrt()
    }

    /// SHA-256 over the vertex and face data; keys cache files.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.faces.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for d in 0..3 {
                h.update(v[d].as_f64().to_le_bytes());
            }
        }
        for f in &self.faces {
            for &i in f {
                h.update((i as u64).to_le_bytes());
            }
        }
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Returns a copy with vertex `i` moved to position `perm[i]`.
    /// Face indices are relabeled accordingly.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n() {
            return Err(Error::Dimension(format!(
                "permutation length {} does not match vertex count {}",
                perm.len(),
                self.n()
            )));
        }
        let mut vertices = vec![[T::zero(); 3]; self.n()];
        for (i, &p) in perm.iter().enumerate() {
            vertices[p] = self.vertices[i];
        }
        let faces = self
            .faces
            .iter()
            .map(|f| [perm[f[0]], perm[f[1]], perm[f[2]]])
            .collect();
        Self::new(vertices, faces)
    }
}

pub(crate) fn sub<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot3<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm<T: Real>(a: [T; 3]) -> T {
    dot3(a, a).sqrt()
}

pub(crate) fn dist<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    norm(sub(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_right_triangle() -> TriangleMesh<f64> {
        TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_area() {
        assert_abs_diff_eq!(unit_right_triangle().total_area().unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn disjoint_triangles_add() {
        let m = TriangleMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [5.0, 0.0, 0.0],
                [6.0, 0.0, 0.0],
                [5.0, 1.0, 0.0],
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        assert_abs_diff_eq!(m.total_area().unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn total_area_bounds_max_face() {
        let m = primitives::icosphere::<f64>(1);
        let total = m.total_area().unwrap();
        let max_face = (0..m.faces().len())
            .map(|fi| m.face_area(fi))
            .fold(0.0f64, f64::max);
        assert!(total >= max_face);
    }

    #[test]
    fn rejects_out_of_range_face() {
        let r = TriangleMesh::new(vec![[0.0f64; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 3]]);
        assert!(matches!(r, Err(Error::Topology(_))));
    }

    #[test]
    fn rejects_repeated_vertex_in_face() {
        let r = TriangleMesh::new(vec![[0.0f64; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 1]]);
        assert!(matches!(r, Err(Error::Topology(_))));
    }

    #[test]
    fn rejects_unreferenced_vertex() {
        let r = TriangleMesh::new(
            vec![[0.0f64; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [9.0, 9.0, 9.0]],
            vec![[0, 1, 2]],
        );
        assert!(matches!(r, Err(Error::Topology(_))));
    }

    #[test]
    fn flags_non_manifold_edge() {
        // three faces sharing edge (0,1)
        let m = TriangleMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.5, 1.0, 0.0],
                [0.5, -1.0, 0.0],
                [0.5, 0.0, 1.0],
            ],
            vec![[0, 1, 2], [0, 1, 3], [0, 1, 4]],
        )
        .unwrap();
        assert_eq!(m.non_manifold_edges(), &[(0, 1)]);
        assert!(!m.is_manifold());
    }

    #[test]
    fn degenerate_only_mesh_errors_on_area() {
        let m = TriangleMesh::new(
            vec![[0.0f64; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(m.total_area(), Err(Error::Degenerate(_))));
    }

    #[test]
    fn content_hash_changes_with_geometry() {
        let a = unit_right_triangle();
        let mut verts = a.vertices().to_vec();
        verts[2][2] = 0.25;
        let b = TriangleMesh::new(verts, a.faces().to_vec()).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash(), unit_right_triangle().content_hash());
    }

    #[test]
    fn works_at_f32() {
        let m = TriangleMesh::<f32>::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!((m.total_area().unwrap() - 0.5).abs() < 1e-6);
    }
}
