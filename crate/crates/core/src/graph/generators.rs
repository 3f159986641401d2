use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

/// Number of draws a random generator makes before giving up on connectivity.
pub const RETRY_BUDGET: usize = 100;

pub fn path(n: usize) -> Result<Graph> {
    let pairs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    Graph::from_pairs(n, &pairs)
}

pub fn ring(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("ring needs n >= 3, got {n}")));
    }
    let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Graph::from_pairs(n, &pairs)
}

pub fn complete(n: usize) -> Result<Graph> {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j));
        }
    }
    Graph::from_pairs(n, &pairs)
}

/// Star with vertex 0 at the center.
pub fn star(n: usize) -> Result<Graph> {
    let pairs: Vec<_> = (1..n).map(|i| (0, i)).collect();
    Graph::from_pairs(n, &pairs)
}

/// 4-connected `rows × cols` lattice, vertices numbered row-major.
pub fn grid(rows: usize, cols: usize) -> Result<Graph> {
    let mut pairs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                pairs.push((v, v + 1));
            }
            if r + 1 < rows {
                pairs.push((v, v + cols));
            }
        }
    }
    Graph::from_pairs(rows * cols, &pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunityParams {
    pub clusters: usize,
    pub p_in: f64,
    pub p_out: f64,
}

impl Default for CommunityParams {
    fn default() -> Self {
        CommunityParams {
            clusters: 4,
            p_in: 0.4,
            p_out: 0.03,
        }
    }
}

/// Stochastic block model with equal-size contiguous clusters.
///
/// Draws are repeated (from the same seeded stream) until the graph is
/// connected or [`RETRY_BUDGET`] is exhausted.
pub fn random_community_graph(n: usize, params: CommunityParams, seed: u64) -> Result<Graph> {
    let CommunityParams {
        clusters,
        p_in,
        p_out,
    } = params;
    if n == 0 || clusters == 0 || clusters > n {
        return Err(Error::InvalidParameter(format!(
            "community graph needs 0 < clusters <= n, got n = {n}, clusters = {clusters}"
        )));
    }
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=p_in).contains(&p_out) {
        return Err(Error::InvalidParameter(format!(
            "community graph needs 0 <= p_out <= p_in <= 1, got p_in = {p_in}, p_out = {p_out}"
        )));
    }
    let cluster_of = |i: usize| i * clusters / n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RETRY_BUDGET {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if cluster_of(i) == cluster_of(j) { p_in } else { p_out };
                if rng.random::<f64>() < p {
                    pairs.push((i, j));
                }
            }
        }
        let g = Graph::from_pairs(n, &pairs)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::RetryBudgetExhausted {
        attempts: RETRY_BUDGET,
        what: "connected community graph".into(),
    })
}

pub fn uniform_points<R: Rng + ?Sized>(n: usize, side: f64, rng: &mut R) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| [side * rng.random::<f64>(), side * rng.random::<f64>()])
        .collect()
}

/// Symmetrized k-nearest-neighbor graph: an edge is kept if either endpoint
/// selects the other. Distance ties break toward the lower index.
pub fn knn_geometric_graph(points: &[[f64; 2]], k: usize) -> Result<Graph> {
    let n = points.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "knn graph needs 0 < k < n, got k = {k}, n = {n}"
        )));
    }
    let mut pairs = std::collections::BTreeSet::new();
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dx = points[i][0] - points[j][0];
                let dy = points[i][1] - points[j][1];
                (dx * dx + dy * dy, j)
            })
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    let pairs: Vec<_> = pairs.into_iter().collect();
    Graph::from_pairs(n, &pairs)?.with_coordinates(points.to_vec())
}

/// Random points in a `side × side` square joined by a k-NN graph, redrawn
/// until connected.
pub fn random_knn_graph(n: usize, k: usize, side: f64, seed: u64) -> Result<Graph> {
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "knn graph needs 0 < k < n, got k = {k}, n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RETRY_BUDGET {
        let pts = uniform_points(n, side, &mut rng);
        let g = knn_geometric_graph(&pts, k)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::RetryBudgetExhausted {
        attempts: RETRY_BUDGET,
        what: "connected knn graph".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_edges(g: &Graph) -> Vec<(usize, usize)> {
        g.edges().iter().map(|e| (e.i, e.j)).collect()
    }

    #[test]
    fn ring_has_degree_two() {
        let g = ring(4).unwrap();
        assert_eq!(g.num_edges(), 4);
        assert!(g.degrees().iter().all(|&d| d == 2));
    }

    #[test]
    fn knn_collinear_points_form_a_path() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        let g = knn_geometric_graph(&pts, 1).unwrap();
        assert_eq!(unit_edges(&g), vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn knn_rejects_bad_k() {
        let pts = [[0.0, 0.0], [1.0, 0.0]];
        assert!(knn_geometric_graph(&pts, 0).is_err());
        assert!(knn_geometric_graph(&pts, 2).is_err());
    }

    #[test]
    fn community_is_deterministic() {
        let p = CommunityParams {
            clusters: 4,
            p_in: 0.8,
            p_out: 0.02,
        };
        let a = random_community_graph(64, p, 7).unwrap();
        let b = random_community_graph(64, p, 7).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert!(a.is_connected());
        let c = random_community_graph(64, p, 8).unwrap();
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn community_rejects_bad_probabilities() {
        let p = CommunityParams {
            clusters: 2,
            p_in: 0.1,
            p_out: 0.5,
        };
        assert!(random_community_graph(10, p, 1).is_err());
    }

    #[test]
    fn disconnected_community_exhausts_budget() {
        let p = CommunityParams {
            clusters: 2,
            p_in: 1.0,
            p_out: 0.0,
        };
        assert!(matches!(
            random_community_graph(10, p, 1),
            Err(Error::RetryBudgetExhausted { .. })
        ));
    }

    #[test]
    fn grid_and_star_counts() {
        assert_eq!(grid(3, 4).unwrap().num_edges(), 3 * 3 + 2 * 4);
        assert_eq!(star(5).unwrap().num_edges(), 4);
        assert_eq!(complete(5).unwrap().num_edges(), 10);
    }
}
