//! Procedural test meshes: icospheres and UV spheres.

use super::TriangleMesh;
use crate::scalar::Real;
use std::collections::HashMap;

/// Unit icosphere: an icosahedron subdivided `subdivisions` times with all
/// vertices projected to the unit sphere. Vertex/face counts are
/// 10·4^s + 2 and 20·4^s.
pub fn icosphere<T: Real>(subdivisions: usize) -> TriangleMesh<T> {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut vertices: Vec<[f64; 3]> = raw.into_iter().map(normalize).collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for (e, (a, b)) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])].into_iter().enumerate() {
                let key = (a.min(b), a.max(b));
                mid[e] = *midpoint.entry(key).or_insert_with(|| {
                    let va = vertices[a];
                    let vb = vertices[b];
                    vertices.push(normalize([
                        (va[0] + vb[0]) / 2.0,
                        (va[1] + vb[1]) / 2.0,
                        (va[2] + vb[2]) / 2.0,
                    ]));
                    vertices.len() - 1
                });
            }
            new_faces.push([f[0], mid[0], mid[2]]);
            new_faces.push([f[1], mid[1], mid[0]]);
            new_faces.push([f[2], mid[2], mid[1]]);
            new_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = new_faces;
    }

    let vertices = vertices
        .into_iter()
        .map(|v| [T::of(v[0]), T::of(v[1]), T::of(v[2])])
        .collect();
    TriangleMesh::new(vertices, faces).expect("icosphere construction is valid")
}

/// Unit UV sphere with `rings` latitude rings of `segments` vertices plus two
/// poles: `rings * segments + 2` vertices total.
pub fn uv_sphere<T: Real>(rings: usize, segments: usize) -> TriangleMesh<T> {
    assert!(rings >= 1 && segments >= 3);
    let mut vertices: Vec<[f64; 3]> = Vec::with_capacity(rings * segments + 2);
    vertices.push([0.0, 0.0, 1.0]); // north pole
    for r in 1..=rings {
        let theta = std::f64::consts::PI * r as f64 / (rings + 1) as f64;
        for s in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            vertices.push([theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]);
        }
    }
    vertices.push([0.0, 0.0, -1.0]); // south pole
    let south = vertices.len() - 1;
    let ring_start = |r: usize| 1 + (r - 1) * segments;

    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring_start(1) + s, ring_start(1) + (s + 1) % segments]);
    }
    for r in 1..rings {
        for s in 0..segments {
            let a = ring_start(r) + s;
            let b = ring_start(r) + (s + 1) % segments;
            let c = ring_start(r + 1) + s;
            let d = ring_start(r + 1) + (s + 1) % segments;
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    for s in 0..segments {
        faces.push([south, ring_start(rings) + (s + 1) % segments, ring_start(rings) + s]);
    }

    let vertices = vertices
        .into_iter()
        .map(|v| [T::of(v[0]), T::of(v[1]), T::of(v[2])])
        .collect();
    TriangleMesh::new(vertices, faces).expect("uv sphere construction is valid")
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / len, v[1] / len, v[2] / len]
}
