use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{GraphSignal, ShiftOperator};
use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::linalg;

/// Relative reconstruction residual above which an operator is declared defective.
pub const DEFECTIVE_TOL: f64 = 1e-6;

const HERMITIAN_TOL: f64 = 1e-14;

/// `S = U diag(λ) U⁻¹` with eigenvalues ascending by real part, then by
/// imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition<T: Scalar> {
    eigvecs: DMatrix<T>,
    eigvals: DVector<T>,
    inv_eigvecs: DMatrix<T>,
}

impl<T: Scalar> SpectralDecomposition<T> {
    /// Assembles a decomposition from explicit factors. `eigvecs` must be invertible.
    pub fn from_parts(eigvecs: DMatrix<T>, eigvals: DVector<T>) -> Result<Self> {
        let n = eigvecs.nrows();
        if !eigvecs.is_square() || eigvals.len() != n {
            return Err(Error::dim(n, eigvals.len()));
        }
        let inv = linalg::inverse(&eigvecs)
            .ok_or_else(|| Error::Degenerate("eigenvector matrix is singular".into()))?;
        Ok(SpectralDecomposition {
            eigvecs,
            eigvals,
            inv_eigvecs: inv,
        })
    }

    pub fn n(&self) -> usize {
        self.eigvals.len()
    }

    /// `U`, one eigenvector per column.
    pub fn eigvecs(&self) -> &DMatrix<T> {
        &self.eigvecs
    }

    pub fn eigvals(&self) -> &DVector<T> {
        &self.eigvals
    }

    /// `U⁻¹`.
    pub fn inv_eigvecs(&self) -> &DMatrix<T> {
        &self.inv_eigvecs
    }

    /// `U diag(ω) U⁻¹`.
    pub fn synthesize_diagonal(&self, omega: &DVector<T>) -> DMatrix<T> {
        let mut scaled = self.eigvecs.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= omega[j];
        }
        scaled * &self.inv_eigvecs
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        self.synthesize_diagonal(&self.eigvals)
    }

    /// `diag(U⁻¹ H U)`: the modal projection of an operator.
    pub fn modal_projection(&self, h: &DMatrix<T>) -> DVector<T> {
        let d = &self.inv_eigvecs * h * &self.eigvecs;
        d.diagonal()
    }

    /// Number of distinct eigenvalues, clustering those within `tol`.
    pub fn distinct_eigenvalues(&self, tol: f64) -> usize {
        let mut reps: Vec<T> = Vec::new();
        for &l in self.eigvals.iter() {
            if !reps.iter().any(|&r| (r - l).modulus() <= tol) {
                reps.push(l);
            }
        }
        reps.len()
    }
}

pub fn eigendecompose<T: Scalar>(s: &ShiftOperator<T>) -> Result<SpectralDecomposition<T>> {
    eigendecompose_matrix(s.matrix())
}

/// Eigendecomposition of a square matrix.
///
/// Hermitian inputs use the symmetric solver and get a unitary `U` with
/// `U⁻¹ = Uᴴ`. Everything else goes through a complex Schur form followed by
/// triangular back-substitution; the result is narrowed back to `T`, which
/// fails with [`Error::ComplexSpectrum`] for real operators with complex modes.
pub fn eigendecompose_matrix<T: Scalar>(m: &DMatrix<T>) -> Result<SpectralDecomposition<T>> {
    if !m.is_square() {
        return Err(Error::dim(m.nrows(), m.ncols()));
    }
    let n = m.nrows();
    if n == 0 {
        return Err(Error::Degenerate("empty operator".into()));
    }
    if linalg::is_hermitian(m, HERMITIAN_TOL) {
        return Ok(hermitian(m));
    }
    let mc = m.map(|v| v.to_c64());
    let (vals, vecs) = general_eigen(&mc);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        vals[a]
            .re
            .total_cmp(&vals[b].re)
            .then(vals[a].im.total_cmp(&vals[b].im))
    });
    let vals_sorted = DVector::from_iterator(n, order.iter().map(|&k| vals[k]));
    let mut vecs_sorted = DMatrix::<Complex64>::zeros(n, n);
    for (c, &k) in order.iter().enumerate() {
        vecs_sorted.set_column(c, &vecs.column(k));
    }
    let scale = linalg::max_abs(&mc).max(f64::MIN_POSITIVE);
    let defective = |residual: f64| Error::DefectiveOperator {
        residual,
        limit: DEFECTIVE_TOL,
    };
    let inv = linalg::inverse(&vecs_sorted).ok_or_else(|| defective(f64::INFINITY))?;
    let mut scaled = vecs_sorted.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= vals_sorted[j];
    }
    let recon = scaled * &inv;
    let residual = linalg::max_abs(&(recon - &mc)) / scale;
    let ident_residual = linalg::max_abs(&(&vecs_sorted * &inv - DMatrix::identity(n, n)));
    if !residual.is_finite() || residual > DEFECTIVE_TOL || ident_residual > DEFECTIVE_TOL {
        return Err(defective(residual.max(ident_residual)));
    }
    let narrow = |z: Complex64| T::from_c64(z, 1e-9).ok_or(Error::ComplexSpectrum);
    let eigvals = DVector::from_iterator(
        n,
        vals_sorted.iter().map(|&z| narrow(z)).collect::<Result<Vec<_>>>()?,
    );
    let eigvecs = DMatrix::from_iterator(
        n,
        n,
        vecs_sorted.iter().map(|&z| narrow(z)).collect::<Result<Vec<_>>>()?,
    );
    // Recompute the inverse in the target field so U·U⁻¹ = I to working precision.
    let inv_eigvecs = linalg::inverse(&eigvecs).ok_or_else(|| defective(f64::INFINITY))?;
    Ok(SpectralDecomposition {
        eigvecs,
        eigvals,
        inv_eigvecs,
    })
}

fn hermitian<T: Scalar>(m: &DMatrix<T>) -> SpectralDecomposition<T> {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigvals = DVector::from_iterator(n, order.iter().map(|&k| T::of(eig.eigenvalues[k])));
    let mut eigvecs = DMatrix::<T>::zeros(n, n);
    for (c, &k) in order.iter().enumerate() {
        eigvecs.set_column(c, &eig.eigenvectors.column(k));
    }
    let inv_eigvecs = eigvecs.adjoint();
    SpectralDecomposition {
        eigvecs,
        eigvals,
        inv_eigvecs,
    }
}

/// Eigenpairs from the complex Schur form `M = Q R Qᴴ`.
fn general_eigen(m: &DMatrix<Complex64>) -> (Vec<Complex64>, DMatrix<Complex64>) {
    let n = m.nrows();
    let (q, r) = m.clone().schur().unpack();
    let vals: Vec<Complex64> = (0..n).map(|i| r[(i, i)]).collect();
    let smin = (f64::EPSILON * r.norm()).max(f64::MIN_POSITIVE);
    let mut tri = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        tri[(k, k)] = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in j + 1..=k {
                acc += r[(j, l)] * tri[(l, k)];
            }
            let mut denom = r[(j, j)] - r[(k, k)];
            if denom.norm() < smin {
                denom = Complex64::new(smin, 0.0);
            }
            tri[(j, k)] = -acc / denom;
        }
    }
    let mut vecs = q * tri;
    for mut col in vecs.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= Complex64::new(norm, 0.0);
        }
        // Rotate so the largest entry is real and positive.
        let (mut best, mut best_abs) = (Complex64::new(1.0, 0.0), -1.0);
        for z in col.iter() {
            if z.norm() > best_abs + 1e-12 {
                best_abs = z.norm();
                best = *z;
            }
        }
        if best_abs > 0.0 {
            let phase = best.conj() / best.norm();
            col *= phase;
        }
    }
    (vals, vecs)
}

/// Graph Fourier transform `x̂ = U⁻¹ x`.
pub fn gft<T: Scalar>(dec: &SpectralDecomposition<T>, x: &GraphSignal<T>) -> Result<GraphSignal<T>> {
    x.check_len(dec.n())?;
    Ok(GraphSignal::new(dec.inv_eigvecs() * x.values()))
}

/// Inverse graph Fourier transform `x = U x̂`.
pub fn igft<T: Scalar>(dec: &SpectralDecomposition<T>, xh: &GraphSignal<T>) -> Result<GraphSignal<T>> {
    xh.check_len(dec.n())?;
    Ok(GraphSignal::new(dec.eigvecs() * xh.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_shift, generators, ShiftKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_decomposes_trivially() {
        let dec = eigendecompose_matrix(&DMatrix::<f64>::identity(4, 4)).unwrap();
        assert!(dec.eigvals().iter().all(|&l| (l - 1.0).abs() < 1e-15));
        assert!((dec.eigvecs().abs() - DMatrix::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn two_node_path_laplacian() {
        let g = generators::path(2).unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::Laplacian).unwrap();
        let dec = eigendecompose(&s).unwrap();
        assert!(dec.eigvals()[0].abs() < 1e-14);
        assert!((dec.eigvals()[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn jordan_block_is_defective() {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            eigendecompose_matrix(&j),
            Err(Error::DefectiveOperator { .. })
        ));
    }

    #[test]
    fn directed_cycle_needs_complex_field() {
        let c = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(eigendecompose_matrix(&c), Err(Error::ComplexSpectrum)));
        let cc = c.map(|v| Complex64::new(v, 0.0));
        let dec = eigendecompose_matrix(&cc).unwrap();
        assert!(linalg::max_abs(&(dec.reconstruct() - &cc)) < 1e-12);
        // Ascending by real part: the two complex roots of unity come first.
        assert!(dec.eigvals()[0].re < dec.eigvals()[2].re);
        assert!(dec.eigvals()[0].im < dec.eigvals()[1].im);
    }

    #[test]
    fn real_nonsymmetric_with_real_spectrum() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 3.0, 1.0, 0.0, 0.0, 5.0]);
        let dec = eigendecompose_matrix(&m).unwrap();
        assert!(linalg::max_abs(&(dec.reconstruct() - &m)) < 1e-12);
        let expect = [2.0, 3.0, 5.0];
        for (l, e) in dec.eigvals().iter().zip(expect) {
            assert!((l - e).abs() < 1e-12);
        }
    }

    #[test]
    fn gft_of_eigenvector_is_unit_vector() {
        let g = generators::ring(6).unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::Laplacian).unwrap();
        let dec = eigendecompose(&s).unwrap();
        for i in 0..6 {
            let u = GraphSignal::new(dec.eigvecs().column(i).into_owned());
            let xh = gft(&dec, &u).unwrap();
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((xh.values()[j] - want).abs() < 1e-9);
            }
        }
        let zero = gft(&dec, &GraphSignal::zeros(6)).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        assert!(gft(&dec, &GraphSignal::zeros(5)).is_err());
    }

    #[test]
    fn gft_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = generators::random_community_graph(16, Default::default(), 3).unwrap();
        let s = build_shift::<f64>(&g, ShiftKind::Laplacian).unwrap();
        let dec = eigendecompose(&s).unwrap();
        let x = GraphSignal::from_vec((0..16).map(|_| f64::sample(&mut rng)).collect());
        let back = igft(&dec, &gft(&dec, &x).unwrap()).unwrap();
        assert!((back.values() - x.values()).norm() <= 1e-10 * x.norm());
    }
}
