//! Graphs, shift operators and their spectral decompositions.

pub mod generators;
mod shift;
mod spectral;
mod support;

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Scalar;

pub use generators::{
    complete, grid, knn_geometric_graph, path, random_community_graph, random_knn_graph, ring,
    star, uniform_points, CommunityParams, RETRY_BUDGET,
};
pub use shift::{build_shift, normalize_spectral, ShiftKind, ShiftOperator};
pub use spectral::{eigendecompose, eigendecompose_matrix, gft, igft, SpectralDecomposition};
pub use support::{support_pattern, SupportPattern};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// A weighted graph on vertices `0..n`.
///
/// For directed graphs an edge `(i, j)` carries signal from `i` to `j`, so it
/// populates adjacency entry `W[j, i]`. Undirected graphs store every edge
/// once and expose a symmetric adjacency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    directed: bool,
    coordinates: Option<Vec<[f64; 2]>>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<Edge>, directed: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph must have at least one vertex".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.i >= n || e.j >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({}, {}) out of range for n = {n}",
                    e.i, e.j
                )));
            }
            if e.i == e.j {
                return Err(Error::InvalidParameter(format!("self-loop at vertex {}", e.i)));
            }
            if !e.weight.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "non-finite weight on edge ({}, {})",
                    e.i, e.j
                )));
            }
            let key = if directed { (e.i, e.j) } else { (e.i.min(e.j), e.i.max(e.j)) };
            if !seen.insert(key) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate edge ({}, {})",
                    e.i, e.j
                )));
            }
        }
        Ok(Graph {
            n,
            edges,
            directed,
            coordinates: None,
        })
    }

    /// Builds an undirected, unit-weight graph from vertex pairs.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let edges = pairs
            .iter()
            .map(|&(i, j)| Edge { i, j, weight: 1.0 })
            .collect();
        Graph::new(n, edges, false)
    }

    pub fn with_coordinates(mut self, coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.len() != self.n {
            return Err(Error::dim(self.n, coords.len()));
        }
        self.coordinates = Some(coords);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge count `M`.
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn coordinates(&self) -> Option<&[[f64; 2]]> {
        self.coordinates.as_deref()
    }

    /// Weighted adjacency `W` with `W[j, i] = w` for an edge from `i` to `j`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            w[(e.j, e.i)] += e.weight;
            if !self.directed {
                w[(e.i, e.j)] += e.weight;
            }
        }
        w
    }

    /// Vertices whose values vertex `i` receives, ascending.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|e| {
                if e.j == i {
                    Some(e.i)
                } else if !self.directed && e.i == i {
                    Some(e.j)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// In-neighbor lists for every vertex.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.n];
        for e in &self.edges {
            lists[e.j].push(e.i);
            if !self.directed {
                lists[e.i].push(e.j);
            }
        }
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
        }
        lists
    }

    /// Number of directed links a value travels per synchronous exchange
    /// (`2M` for undirected graphs).
    pub fn directed_link_count(&self) -> usize {
        if self.directed {
            self.edges.len()
        } else {
            2 * self.edges.len()
        }
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbor_lists().iter().map(Vec::len).collect()
    }

    /// Weak connectivity.
    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == self.n
    }
}

/// A signal with one value per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSignal<T: Scalar> {
    values: DVector<T>,
}

impl<T: Scalar> GraphSignal<T> {
    pub fn new(values: DVector<T>) -> Self {
        GraphSignal { values }
    }

    pub fn from_vec(values: Vec<T>) -> Self {
        GraphSignal {
            values: DVector::from_vec(values),
        }
    }

    pub fn zeros(n: usize) -> Self {
        GraphSignal {
            values: DVector::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &DVector<T> {
        &self.values
    }

    pub fn into_values(self) -> DVector<T> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::vec_norm(&self.values)
    }

    /// Errors unless the signal has `n` entries.
    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.values.len() == n {
            Ok(())
        } else {
            Err(Error::dim(n, self.values.len()))
        }
    }
}

impl<T: Scalar> From<DVector<T>> for GraphSignal<T> {
    fn from(values: DVector<T>) -> Self {
        GraphSignal { values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_self_loops_and_out_of_range() {
        assert!(Graph::from_pairs(3, &[(1, 1)]).is_err());
        assert!(Graph::from_pairs(3, &[(0, 3)]).is_err());
        assert!(Graph::from_pairs(3, &[(0, 1), (1, 0)]).is_err());
        assert!(Graph::from_pairs(0, &[]).is_err());
    }

    #[test]
    fn undirected_adjacency_is_symmetric() {
        let g = Graph::from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        let w = g.adjacency();
        assert_eq!(w, w.transpose());
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.directed_link_count(), 4);
        assert_eq!(g.in_neighbors(1), vec![0, 2]);
    }

    #[test]
    fn directed_adjacency_orientation() {
        let g = Graph::new(2, vec![Edge { i: 0, j: 1, weight: 2.0 }], true).unwrap();
        let w = g.adjacency();
        assert_eq!(w[(1, 0)], 2.0);
        assert_eq!(w[(0, 1)], 0.0);
        assert_eq!(g.in_neighbors(1), vec![0]);
        assert!(g.in_neighbors(0).is_empty());
    }

    #[test]
    fn connectivity() {
        assert!(Graph::from_pairs(3, &[(0, 1), (1, 2)]).unwrap().is_connected());
        assert!(!Graph::from_pairs(3, &[(0, 1)]).unwrap().is_connected());
    }
}
