//! Fixed-support matrices that share the eigenbasis of the shift.
//!
//! A matrix `A = U diag(ω) U⁻¹` vanishes on the zero pattern `𝒜` of `S + I`
//! exactly when `T ω = 0`, where row `r` of `T` belongs to the zero entry
//! `(i, j)` and holds `T[r, m] = U[i, m] · U⁻¹[m, j]`. An orthonormal basis
//! `B` of `null(T)` therefore parametrizes every admissible eigenvalue vector
//! as `ω = B α`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldKind, Scalar};
use crate::filters::SupportedMatrix;
use crate::graph::{
    eigendecompose, support_pattern, ShiftOperator, SpectralDecomposition, SupportPattern,
};
use crate::io::MatrixDoc;
use crate::linalg;

/// Default relative rank cutoff on the singular values of `T`.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Orthonormal basis of the admissible eigenvalue vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct NullspaceBasis<T: Scalar> {
    basis: DMatrix<T>,
    singular_values: Vec<f64>,
    rank_tol: f64,
    tolerance: f64,
}

impl<T: Scalar> NullspaceBasis<T> {
    /// `B`, `n × d`.
    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Full singular spectrum of `T` (descending, zero-padded to `n`).
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// Absolute cutoff `rank_tol · σ_max` used to decide the dimension.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Row `i` of `B`.
    pub fn row(&self, i: usize) -> DVector<T> {
        self.basis.row(i).transpose()
    }

    /// `B α`.
    pub fn eigenvalues_of(&self, alpha: &DVector<T>) -> Result<DVector<T>> {
        if alpha.len() != self.dim() {
            return Err(Error::dim(self.dim(), alpha.len()));
        }
        Ok(&self.basis * alpha)
    }

    /// Orthogonal projection coefficients `Bᴴ ω`.
    pub fn coefficients_of(&self, omega: &DVector<T>) -> Result<DVector<T>> {
        if omega.len() != self.n() {
            return Err(Error::dim(self.n(), omega.len()));
        }
        Ok(self.basis.adjoint() * omega)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = NullspaceDoc {
            field: T::FIELD,
            n: self.n(),
            dim: self.dim(),
            rank_tol: self.rank_tol,
            tolerance: self.tolerance,
            singular_values: self.singular_values.clone(),
            basis: MatrixDoc::from_matrix(&self.basis),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: NullspaceDoc = serde_json::from_str(s)?;
        if doc.field != T::FIELD {
            return Err(Error::Parse(format!(
                "basis stored over the {} field, expected {}",
                doc.field,
                T::FIELD
            )));
        }
        let basis = doc.basis.to_matrix::<T>()?;
        if basis.shape() != (doc.n, doc.dim) {
            return Err(Error::Parse("basis shape disagrees with header".into()));
        }
        Ok(NullspaceBasis {
            basis,
            singular_values: doc.singular_values,
            rank_tol: doc.rank_tol,
            tolerance: doc.tolerance,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NullspaceDoc {
    field: FieldKind,
    n: usize,
    dim: usize,
    rank_tol: f64,
    tolerance: f64,
    singular_values: Vec<f64>,
    basis: MatrixDoc,
}

/// Constraint matrix `T` (`|𝒜| × n`), one row per zero entry of `S + I`.
pub fn constraint_matrix<T: Scalar>(
    dec: &SpectralDecomposition<T>,
    supp: &SupportPattern,
) -> Result<DMatrix<T>> {
    let n = dec.n();
    if supp.n() != n {
        return Err(Error::dim(n, supp.n()));
    }
    let u = dec.eigvecs();
    let uinv = dec.inv_eigvecs();
    let zeros = supp.zero_indices();
    let mut t = DMatrix::<T>::zeros(zeros.len(), n);
    for (r, &(i, j)) in zeros.iter().enumerate() {
        for m in 0..n {
            t[(r, m)] = u[(i, m)] * uinv[(m, j)];
        }
    }
    Ok(t)
}

/// Kernel of `T` via a full SVD, counting singular values above
/// `rank_tol · σ_max` toward the rank.
pub fn nullspace_basis<T: Scalar>(t: &DMatrix<T>, rank_tol: f64) -> NullspaceBasis<T> {
    let (basis, singular_values, tolerance) = linalg::null_space(t, rank_tol);
    NullspaceBasis {
        basis,
        singular_values,
        rank_tol,
        tolerance,
    }
}

/// `A = U diag(B α) U⁻¹`.
pub fn synthesize<T: Scalar>(
    dec: &SpectralDecomposition<T>,
    basis: &NullspaceBasis<T>,
    alpha: &DVector<T>,
) -> Result<DMatrix<T>> {
    if basis.n() != dec.n() {
        return Err(Error::dim(dec.n(), basis.n()));
    }
    let omega = basis.eigenvalues_of(alpha)?;
    Ok(dec.synthesize_diagonal(&omega))
}

/// Everything needed to turn expansion coefficients into supported
/// edge-weighting matrices: the spectral decomposition of `S`, the support
/// of `S + I`, and the nullspace basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftInvariantBasis<T: Scalar> {
    dec: SpectralDecomposition<T>,
    support: SupportPattern,
    basis: NullspaceBasis<T>,
}

impl<T: Scalar> ShiftInvariantBasis<T> {
    pub fn new(s: &ShiftOperator<T>, rank_tol: f64) -> Result<Arc<Self>> {
        let dec = eigendecompose(s)?;
        let support = support_pattern(s);
        Self::from_parts(dec, support, rank_tol)
    }

    pub fn from_parts(
        dec: SpectralDecomposition<T>,
        support: SupportPattern,
        rank_tol: f64,
    ) -> Result<Arc<Self>> {
        let t = constraint_matrix(&dec, &support)?;
        let basis = nullspace_basis(&t, rank_tol);
        Ok(Arc::new(ShiftInvariantBasis {
            dec,
            support,
            basis,
        }))
    }

    /// Reuses a stored basis; its row count must match the decomposition.
    pub fn with_basis(
        dec: SpectralDecomposition<T>,
        support: SupportPattern,
        basis: NullspaceBasis<T>,
    ) -> Result<Arc<Self>> {
        if basis.n() != dec.n() || support.n() != dec.n() {
            return Err(Error::dim(dec.n(), basis.n()));
        }
        Ok(Arc::new(ShiftInvariantBasis {
            dec,
            support,
            basis,
        }))
    }

    /// Recomputes the constraint spectrum but keeps a previously stored basis
    /// matrix, which must have the recomputed dimension.
    pub fn with_stored_basis(
        dec: SpectralDecomposition<T>,
        support: SupportPattern,
        stored: DMatrix<T>,
        rank_tol: f64,
    ) -> Result<Arc<Self>> {
        let t = constraint_matrix(&dec, &support)?;
        let mut basis = nullspace_basis(&t, rank_tol);
        if stored.shape() != basis.basis.shape() {
            return Err(Error::Parse(format!(
                "stored basis is {}x{}, the shift operator gives {}x{}",
                stored.nrows(),
                stored.ncols(),
                basis.n(),
                basis.dim()
            )));
        }
        basis.basis = stored;
        Self::with_basis(dec, support, basis)
    }

    pub fn decomposition(&self) -> &SpectralDecomposition<T> {
        &self.dec
    }

    pub fn support(&self) -> &SupportPattern {
        &self.support
    }

    pub fn nullspace(&self) -> &NullspaceBasis<T> {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.dec.n()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn synthesize(&self, alpha: &DVector<T>) -> Result<DMatrix<T>> {
        synthesize(&self.dec, &self.basis, alpha)
    }

    /// Synthesized matrix with the numerically-zero entries on `𝒜` dropped.
    pub fn synthesize_supported(&self, alpha: &DVector<T>) -> Result<SupportedMatrix<T>> {
        Ok(SupportedMatrix::masked(self.synthesize(alpha)?, &self.support))
    }

    /// Coefficients whose eigenvalue vector is the projection of `ω`.
    pub fn coefficients_of(&self, omega: &DVector<T>) -> Result<DVector<T>> {
        self.basis.coefficients_of(omega)
    }
}

/// Basis of `{A : supp(A) ⊆ supp, A S = S A}` obtained directly from the
/// commutator equations, without the eigendecomposition. Intended as an
/// independent check on small instances (`n²` equations in `nnz` unknowns).
pub fn supported_commutant<T: Scalar>(
    s: &ShiftOperator<T>,
    supp: &SupportPattern,
    rel_tol: f64,
) -> Result<Vec<DMatrix<T>>> {
    let n = s.n();
    if supp.n() != n {
        return Err(Error::dim(n, supp.n()));
    }
    let sm = s.matrix();
    let allowed = supp.allowed_indices();
    // Column c holds the commutator (E_ij S − S E_ij) of the unit matrix at
    // allowed entry c = (i, j), flattened row-major.
    let mut c = DMatrix::<T>::zeros(n * n, allowed.len());
    for (col, &(i, j)) in allowed.iter().enumerate() {
        for q in 0..n {
            c[(i * n + q, col)] += sm[(j, q)];
        }
        for p in 0..n {
            c[(p * n + j, col)] -= sm[(p, i)];
        }
    }
    let (kernel, _, _) = linalg::null_space(&c, rel_tol);
    Ok((0..kernel.ncols())
        .map(|k| {
            let mut a = DMatrix::<T>::zeros(n, n);
            for (col, &(i, j)) in allowed.iter().enumerate() {
                a[(i, j)] = kernel[(col, k)];
            }
            a
        })
        .collect())
}
