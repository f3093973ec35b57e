//! Partial-shape generation: CUT (one large geodesic region removed) and
//! HOLES (several small disks removed), with ground-truth labels restricted
//! to the surviving vertices.

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::scalar::Real;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartialKind {
    /// Remove one geodesic ball of roughly `fraction` of the surface area.
    Cut,
    /// Remove several small disks totaling roughly `fraction` of the area.
    Holes,
}

/// Removes ~`fraction` of the surface. Returns the partial mesh and, per new
/// vertex, its index in the original mesh. HOLES errors when the removal
/// disconnects the surface; CUT keeps the largest component.
pub fn make_partial<T: Real>(
    mesh: &TriangleMesh<T>,
    kind: PartialKind,
    fraction: f64,
    seed: u64,
) -> Result<(TriangleMesh<T>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Dimension(format!("fraction {fraction} must be in [0, 1)")));
    }
    if fraction == 0.0 {
        return Ok((mesh.clone(), (0..mesh.n()).collect()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = mesh.total_area()?.as_f64();

    let removed_mask = match kind {
        PartialKind::Cut => {
            let source = rng.random_range(0..mesh.n());
            let field = mesh.geodesic_distances(source)?;
            let dist: Vec<f64> = field.distances.iter().map(|d| d.as_f64()).collect();
            threshold_mask(mesh, &dist, fraction, total)
        }
        PartialKind::Holes => {
            let holes = 6;
            // distance to the nearest of several seed vertices
            let mut dist = vec![f64::INFINITY; mesh.n()];
            for _ in 0..holes {
                let s = rng.random_range(0..mesh.n());
                let field = mesh.geodesic_distances(s)?;
                for (i, d) in field.distances.iter().enumerate() {
                    dist[i] = dist[i].min(d.as_f64());
                }
            }
            threshold_mask(mesh, &dist, fraction, total)
        }
    };

    let (sub, kept) = submesh(mesh, &removed_mask)?;
    match kind {
        PartialKind::Holes => {
            let comps = components(&sub);
            if comps > 1 {
                return Err(Error::Topology(format!(
                    "hole removal disconnected the mesh into {comps} components"
                )));
            }
            Ok((sub, kept))
        }
        PartialKind::Cut => {
            // keep the largest component if the cut split the surface
            largest_component(sub, kept)
        }
    }
}

/// Finds a removal radius such that the faces that survive (all three
/// vertices outside `{dist < t}`) carry approximately `1 - fraction` of the
/// total area, by bisection. Mixed faces on the boundary are dropped with
/// the removed region, so the target is the kept area, not the ball area.
fn threshold_mask<T: Real>(
    mesh: &TriangleMesh<T>,
    dist: &[f64],
    fraction: f64,
    total: f64,
) -> Vec<bool> {
    let kept_area = |t: f64| -> f64 {
        let mut a = 0.0;
        for (fi, f) in mesh.faces().iter().enumerate() {
            if f.iter().all(|&v| dist[v] >= t) {
                a += mesh.face_area(fi).as_f64();
            }
        }
        a
    };
    let mut lo = 0.0;
    let mut hi = dist.iter().copied().fold(0.0, f64::max);
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if kept_area(mid) > (1.0 - fraction) * total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    dist.iter().map(|&d| d < t).collect()
}

/// Drops removed vertices and every face touching them; reindexes the rest.
fn submesh<T: Real>(mesh: &TriangleMesh<T>, removed: &[bool]) -> Result<(TriangleMesh<T>, Vec<usize>)> {
    let faces: Vec<[usize; 3]> = mesh
        .faces()
        .iter()
        .filter(|f| f.iter().all(|&v| !removed[v]))
        .copied()
        .collect();
    if faces.is_empty() {
        return Err(Error::Degenerate("partial cut removed every face".into()));
    }
    let mut used = vec![false; mesh.n()];
    for f in &faces {
        for &v in f {
            used[v] = true;
        }
    }
    let mut old_to_new = vec![usize::MAX; mesh.n()];
    let mut kept = Vec::new();
    for (old, &u) in used.iter().enumerate() {
        if u {
            old_to_new[old] = kept.len();
            kept.push(old);
        }
    }
    let vertices: Vec<[T; 3]> = kept.iter().map(|&old| mesh.vertex(old)).collect();
    let faces: Vec<[usize; 3]> = faces
        .iter()
        .map(|f| [old_to_new[f[0]], old_to_new[f[1]], old_to_new[f[2]]])
        .collect();
    Ok((TriangleMesh::new(vertices, faces)?, kept))
}

fn component_labels<T: Real>(mesh: &TriangleMesh<T>) -> Vec<usize> {
    let adj = mesh.adjacency();
    let mut label = vec![usize::MAX; mesh.n()];
    let mut next = 0;
    for start in 0..mesh.n() {
        if label[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        label[start] = next;
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if label[v] == usize::MAX {
                    label[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    label
}

fn components<T: Real>(mesh: &TriangleMesh<T>) -> usize {
    component_labels(mesh).iter().copied().max().map_or(0, |m| m + 1)
}

fn largest_component<T: Real>(
    mesh: TriangleMesh<T>,
    kept: Vec<usize>,
) -> Result<(TriangleMesh<T>, Vec<usize>)> {
    let labels = component_labels(&mesh);
    let count = labels.iter().copied().max().map_or(0, |m| m + 1);
    if count <= 1 {
        return Ok((mesh, kept));
    }
    let mut areas = vec![0.0f64; count];
    for (fi, f) in mesh.faces().iter().enumerate() {
        areas[labels[f[0]]] += mesh.face_area(fi).as_f64();
    }
    let best = areas
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite areas"))
        .map(|(i, _)| i)
        .expect("at least one component");
    let removed: Vec<bool> = labels.iter().map(|&l| l != best).collect();
    let (sub, kept2) = submesh(&mesh, &removed)?;
    let kept_final = kept2.iter().map(|&i| kept[i]).collect();
    Ok((sub, kept_final))
}
