//! Graph geodesics: Dijkstra on the mesh edge graph with Euclidean edge
//! lengths, normalized by the square root of total surface area so that
//! downstream error metrics are scale-free.

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::scalar::Real;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Per-vertex distances from one source, divided by sqrt(total area).
#[derive(Debug, Clone)]
pub struct GeodesicField<T> {
    pub source: usize,
    pub distances: Vec<T>,
}

struct HeapEntry<T> {
    dist: T,
    vertex: usize,
}

impl<T: Real> PartialEq for HeapEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.vertex == other.vertex
    }
}
impl<T: Real> Eq for HeapEntry<T> {}
impl<T: Real> PartialOrd for HeapEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for HeapEntry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance; distances are finite by construction
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl<T: Real> TriangleMesh<T> {
    /// Shortest-path distances on the edge graph from `source`, normalized by
    /// sqrt(total area). Errors when any vertex is unreachable.
    pub fn geodesic_distances(&self, source: usize) -> Result<GeodesicField<T>> {
        let adj = self.adjacency();
        self.geodesic_distances_with(source, &adj)
    }

    /// As [`Self::geodesic_distances`] with a precomputed adjacency, for
    /// callers running many sources on one mesh.
    pub fn geodesic_distances_with(
        &self,
        source: usize,
        adj: &[Vec<(usize, T)>],
    ) -> Result<GeodesicField<T>> {
        if source >= self.n() {
            return Err(Error::Dimension(format!(
                "source {source} out of range for {} vertices",
                self.n()
            )));
        }
        let area_norm = self.total_area()?.sqrt();
        let mut dist = vec![T::infinity(); self.n()];
        let mut done = vec![false; self.n()];
        dist[source] = T::zero();
        let mut heap = BinaryHeap::new();
        heap.push(HeapEntry { dist: T::zero(), vertex: source });
        while let Some(HeapEntry { dist: d, vertex: u }) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            for &(v, len) in &adj[u] {
                let nd = d + len;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapEntry { dist: nd, vertex: v });
                }
            }
        }
        if let Some(v) = dist.iter().position(|d| !d.is_finite()) {
            return Err(Error::Disconnected { source_vertex: source, unreachable: v });
        }
        for d in &mut dist {
            *d /= area_norm;
        }
        Ok(GeodesicField { source, distances: dist })
    }
}
