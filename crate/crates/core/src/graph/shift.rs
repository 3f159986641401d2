use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::field::{FieldKind, Scalar};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftKind {
    Adjacency,
    Laplacian,
    NormalizedLaplacian,
    Custom,
}

impl fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShiftKind::Adjacency => "adjacency",
            ShiftKind::Laplacian => "laplacian",
            ShiftKind::NormalizedLaplacian => "normalized-laplacian",
            ShiftKind::Custom => "custom",
        })
    }
}

impl std::str::FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjacency" => Ok(ShiftKind::Adjacency),
            "laplacian" => Ok(ShiftKind::Laplacian),
            "normalized-laplacian" => Ok(ShiftKind::NormalizedLaplacian),
            "custom" => Ok(ShiftKind::Custom),
            other => Err(Error::Parse(format!("unknown shift kind '{other}'"))),
        }
    }
}

/// Graph shift operator `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftOperator<T: Scalar> {
    matrix: DMatrix<T>,
    kind: ShiftKind,
}

impl<T: Scalar> ShiftOperator<T> {
    /// Wraps an arbitrary square matrix.
    pub fn custom(matrix: DMatrix<T>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidParameter(format!(
                "shift operator must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(ShiftOperator {
            matrix,
            kind: ShiftKind::Custom,
        })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn kind(&self) -> ShiftKind {
        self.kind
    }

    pub fn field(&self) -> FieldKind {
        T::FIELD
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Checks that every off-diagonal nonzero of `S` corresponds to a graph
    /// edge, i.e. `S` is local to `graph`.
    pub fn check_local_to(&self, graph: &Graph) -> Result<()> {
        if graph.n() != self.n() {
            return Err(Error::dim(graph.n(), self.n()));
        }
        let w = graph.adjacency();
        for i in 0..self.n() {
            for j in 0..self.n() {
                if i != j && self.matrix[(i, j)] != T::zero() && w[(i, j)] == 0.0 {
                    return Err(Error::LocalityViolation {
                        node: i,
                        source_node: j,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Assembles the requested shift operator of `graph`.
///
/// Laplacian kinds need an undirected graph with nonnegative weights.
/// The normalized Laplacian keeps identity rows at zero-degree vertices.
pub fn build_shift<T: Scalar>(graph: &Graph, kind: ShiftKind) -> Result<ShiftOperator<T>> {
    let w = graph.adjacency();
    let n = graph.n();
    let laplacian_guard = |kind: ShiftKind| -> Result<()> {
        if graph.is_directed() {
            return Err(Error::UnsupportedKind {
                kind: kind.to_string(),
                reason: "laplacian requires an undirected graph".into(),
            });
        }
        if graph.edges().iter().any(|e| e.weight < 0.0) {
            return Err(Error::UnsupportedKind {
                kind: kind.to_string(),
                reason: "laplacian requires nonnegative weights".into(),
            });
        }
        Ok(())
    };
    let real = match kind {
        ShiftKind::Adjacency => w,
        ShiftKind::Laplacian => {
            laplacian_guard(kind)?;
            laplacian(&w)
        }
        ShiftKind::NormalizedLaplacian => {
            laplacian_guard(kind)?;
            let l = laplacian(&w);
            let mut out = DMatrix::zeros(n, n);
            for i in 0..n {
                if l[(i, i)] == 0.0 {
                    out[(i, i)] = 1.0;
                    continue;
                }
                for j in 0..n {
                    if l[(j, j)] > 0.0 {
                        out[(i, j)] = l[(i, j)] / (l[(i, i)] * l[(j, j)]).sqrt();
                    }
                }
            }
            out
        }
        ShiftKind::Custom => {
            return Err(Error::UnsupportedKind {
                kind: kind.to_string(),
                reason: "custom operators are built with ShiftOperator::custom".into(),
            })
        }
    };
    Ok(ShiftOperator {
        matrix: real.map(T::of),
        kind,
    })
}

fn laplacian(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let mut l = -w.clone();
    for i in 0..n {
        l[(i, i)] = w.row(i).sum();
    }
    l
}

/// Scales `S` to unit spectral norm.
pub fn normalize_spectral<T: Scalar>(s: &ShiftOperator<T>) -> Result<ShiftOperator<T>> {
    let norm = linalg::spectral_norm(&s.matrix);
    if norm == 0.0 {
        return Err(Error::Degenerate("cannot normalize the zero operator".into()));
    }
    Ok(ShiftOperator {
        matrix: s.matrix.map(|v| v / T::of(norm)),
        kind: s.kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generators, Edge};

    #[test]
    fn two_node_laplacian() {
        let g = generators::path(2).unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::Laplacian).unwrap();
        assert_eq!(s.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn edgeless_adjacency_is_zero() {
        let g = Graph::from_pairs(3, &[]).unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::Adjacency).unwrap();
        assert_eq!(s.matrix(), &DMatrix::zeros(3, 3));
    }

    #[test]
    fn laplacian_on_directed_graph_is_rejected() {
        let g = Graph::new(2, vec![Edge { i: 0, j: 1, weight: 1.0 }], true).unwrap();
        assert!(matches!(
            build_shift::<f64>(&g, ShiftKind::Laplacian),
            Err(Error::UnsupportedKind { .. })
        ));
        assert!(build_shift::<f64>(&g, ShiftKind::Adjacency).is_ok());
    }

    #[test]
    fn normalized_laplacian_isolated_vertex() {
        let g = Graph::from_pairs(3, &[(0, 1)]).unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::NormalizedLaplacian).unwrap();
        let m = s.matrix();
        assert_eq!(m[(2, 2)], 1.0);
        assert!((m[(0, 1)] + 1.0).abs() < 1e-15);
        assert!((m[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_two_identity() {
        let s = ShiftOperator::custom(DMatrix::<f64>::identity(3, 3) * 2.0).unwrap();
        let n = normalize_spectral(&s).unwrap();
        assert!((n.matrix() - DMatrix::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn normalize_path_laplacian() {
        let g = generators::path(2).unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::Laplacian).unwrap();
        let n = normalize_spectral(&s).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!((n.matrix() - expect).amax() < 1e-14);
    }

    #[test]
    fn normalize_zero_is_degenerate() {
        let s = ShiftOperator::custom(DMatrix::<f64>::zeros(2, 2)).unwrap();
        assert!(matches!(normalize_spectral(&s), Err(Error::Degenerate(_))));
    }
}
