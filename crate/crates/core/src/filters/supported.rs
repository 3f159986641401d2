use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::graph::SupportPattern;
use crate::io::VectorDoc;

/// Square matrix whose nonzeros lie on an allowed support.
///
/// Construction rejects entries outside the support, so every value of this
/// type is local to the pattern it was checked against.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportedMatrix<T: Scalar> {
    matrix: DMatrix<T>,
}

impl<T: Scalar> SupportedMatrix<T> {
    /// Fails with a support violation on the first off-support nonzero.
    pub fn new(matrix: DMatrix<T>, support: &SupportPattern) -> Result<Self> {
        check_shape(&matrix, support)?;
        for &(i, j) in support.zero_indices() {
            if matrix[(i, j)] != T::zero() {
                return Err(Error::SupportViolation { row: i, col: j });
            }
        }
        Ok(SupportedMatrix { matrix })
    }

    /// Drops whatever `matrix` holds outside the support. Meant for
    /// matrices that are supported up to rounding, such as synthesized ones.
    pub fn masked(mut matrix: DMatrix<T>, support: &SupportPattern) -> Self {
        assert_eq!(matrix.shape(), (support.n(), support.n()), "shape must match support");
        for &(i, j) in support.zero_indices() {
            matrix[(i, j)] = T::zero();
        }
        SupportedMatrix { matrix }
    }

    pub fn zeros(n: usize) -> Self {
        SupportedMatrix {
            matrix: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        SupportedMatrix {
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn from_diagonal(d: &DVector<T>) -> Self {
        SupportedMatrix {
            matrix: DMatrix::from_diagonal(d),
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }

    /// Re-validates against another pattern (e.g. after deserialization).
    pub fn check(&self, support: &SupportPattern) -> Result<()> {
        check_shape(&self.matrix, support)?;
        for &(i, j) in support.zero_indices() {
            if self.matrix[(i, j)] != T::zero() {
                return Err(Error::SupportViolation { row: i, col: j });
            }
        }
        Ok(())
    }

    /// Nonzero entries as `(row, col, value)`, row-major.
    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = self.matrix[(i, j)];
                if v != T::zero() {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    pub(crate) fn to_doc(&self) -> TripletDoc {
        let t = self.triplets();
        TripletDoc {
            n: self.n(),
            rows: t.iter().map(|e| e.0).collect(),
            cols: t.iter().map(|e| e.1).collect(),
            values: VectorDoc::from_slice(&t.iter().map(|e| e.2).collect::<Vec<_>>()),
        }
    }

    pub(crate) fn from_doc(doc: &TripletDoc, support: &SupportPattern) -> Result<Self> {
        let vals: Vec<T> = doc.values.to_vec()?;
        if doc.rows.len() != vals.len() || doc.cols.len() != vals.len() {
            return Err(Error::Parse("triplet lists differ in length".into()));
        }
        let mut m = DMatrix::zeros(doc.n, doc.n);
        for ((&i, &j), v) in doc.rows.iter().zip(&doc.cols).zip(vals) {
            if i >= doc.n || j >= doc.n {
                return Err(Error::Parse(format!("triplet ({i}, {j}) out of range")));
            }
            m[(i, j)] += v;
        }
        SupportedMatrix::new(m, support)
    }
}

fn check_shape<T: Scalar>(m: &DMatrix<T>, support: &SupportPattern) -> Result<()> {
    if m.nrows() != support.n() || m.ncols() != support.n() {
        return Err(Error::DimensionMismatch {
            expected: support.n(),
            got: if m.nrows() != support.n() { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct TripletDoc {
    pub n: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: VectorDoc,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> SupportPattern {
        let mut mask = vec![true; 9];
        mask[2] = false;
        mask[6] = false;
        SupportPattern::from_mask(3, mask)
    }

    #[test]
    fn rejects_off_support_entries() {
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(0, 1)] = 2.0;
        assert!(SupportedMatrix::new(m.clone(), &path3()).is_ok());
        m[(2, 0)] = 1e-300;
        assert!(matches!(
            SupportedMatrix::new(m.clone(), &path3()),
            Err(Error::SupportViolation { row: 2, col: 0 })
        ));
        let masked = SupportedMatrix::masked(m, &path3());
        assert_eq!(masked.matrix()[(2, 0)], 0.0);
        assert_eq!(masked.matrix()[(0, 1)], 2.0);
    }

    #[test]
    fn triplet_doc_round_trip() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 0.5, 0.0, 0.0, -1.0, 3.0]);
        let s = SupportedMatrix::new(m, &path3()).unwrap();
        let doc = s.to_doc();
        assert_eq!(doc.rows, vec![0, 0, 1, 2, 2]);
        assert_eq!(SupportedMatrix::<f64>::from_doc(&doc, &path3()).unwrap(), s);
        assert!(SupportedMatrix::<f64>::from_doc(&doc, &SupportPattern::diagonal(3)).is_err());
    }
}
