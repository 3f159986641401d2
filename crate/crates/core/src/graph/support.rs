use super::ShiftOperator;
use crate::field::Scalar;

/// Zero pattern `𝒜` of `S + I` and its complement.
///
/// Indices are `(row, col)` pairs in row-major order. The complement is the
/// support every edge-weighting matrix must live on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportPattern {
    n: usize,
    mask: Vec<bool>,
    zero_indices: Vec<(usize, usize)>,
    allowed_indices: Vec<(usize, usize)>,
    row_allowed: Vec<Vec<usize>>,
    col_allowed: Vec<Vec<usize>>,
}

impl SupportPattern {
    /// Builds a pattern from a row-major mask of allowed entries. Diagonal
    /// entries are always allowed.
    pub fn from_mask(n: usize, mut mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), n * n, "support mask must have n² entries");
        for i in 0..n {
            mask[i * n + i] = true;
        }
        let mut zero_indices = Vec::new();
        let mut allowed_indices = Vec::new();
        let mut row_allowed = vec![Vec::new(); n];
        let mut col_allowed = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if mask[i * n + j] {
                    allowed_indices.push((i, j));
                    row_allowed[i].push(j);
                    col_allowed[j].push(i);
                } else {
                    zero_indices.push((i, j));
                }
            }
        }
        SupportPattern {
            n,
            mask,
            zero_indices,
            allowed_indices,
            row_allowed,
            col_allowed,
        }
    }

    /// Only the diagonal is allowed (node-variant weighting).
    pub fn diagonal(n: usize) -> Self {
        SupportPattern::from_mask(n, vec![false; n * n])
    }

    pub fn full(n: usize) -> Self {
        SupportPattern::from_mask(n, vec![true; n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_allowed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }

    /// `𝒜`: entries forced to zero.
    pub fn zero_indices(&self) -> &[(usize, usize)] {
        &self.zero_indices
    }

    pub fn allowed_indices(&self) -> &[(usize, usize)] {
        &self.allowed_indices
    }

    /// Allowed columns of row `i`, ascending.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.row_allowed[i]
    }

    /// Allowed rows of column `j`, ascending.
    pub fn col(&self, j: usize) -> &[usize] {
        &self.col_allowed[j]
    }

    /// `nnz(S + I)`.
    pub fn nnz(&self) -> usize {
        self.allowed_indices.len()
    }
}

/// Zero pattern of `S + I`: entries of `S + I` that are exactly zero.
pub fn support_pattern<T: Scalar>(s: &ShiftOperator<T>) -> SupportPattern {
    let n = s.n();
    let m = s.matrix();
    let mask = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            i == j || m[(i, j)] != T::zero()
        })
        .collect();
    SupportPattern::from_mask(n, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_shift, generators, ShiftKind};

    fn adjacency_pattern(g: &crate::graph::Graph) -> SupportPattern {
        support_pattern(&build_shift::<f64>(g, ShiftKind::Adjacency).unwrap())
    }

    #[test]
    fn two_node_path_has_no_zeros() {
        let p = adjacency_pattern(&generators::path(2).unwrap());
        assert!(p.zero_indices().is_empty());
        assert_eq!(p.nnz(), 4);
    }

    #[test]
    fn three_node_path_zeros() {
        let p = adjacency_pattern(&generators::path(3).unwrap());
        assert_eq!(p.zero_indices(), &[(0, 2), (2, 0)]);
    }

    #[test]
    fn ring_zero_count() {
        let n = 20;
        let p = adjacency_pattern(&generators::ring(n).unwrap());
        assert_eq!(p.zero_indices().len(), n * n - 3 * n);
        assert_eq!(p.zero_indices().len() + p.allowed_indices().len(), n * n);
        assert!(p.zero_indices().iter().all(|&(i, j)| i != j));
    }
}
