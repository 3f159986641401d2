//! Dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector};

use crate::field::Scalar;

/// Relative singular-value threshold under which a regression matrix is
/// treated as numerically rank deficient.
pub const RANK_DEFICIENCY_TOL: f64 = 1e-12;

/// Ridge weight, relative to `trace(AᴴA) / ncols` of the equilibrated system.
pub const RIDGE_SCALE: f64 = 1e-10;

pub fn max_abs<T: Scalar>(m: &DMatrix<T>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.modulus()))
}

pub fn frobenius_sq<T: Scalar>(m: &DMatrix<T>) -> f64 {
    m.iter().map(|v| v.modulus_squared()).sum()
}

pub fn frobenius<T: Scalar>(m: &DMatrix<T>) -> f64 {
    frobenius_sq(m).sqrt()
}

pub fn vec_norm<T: Scalar>(v: &DVector<T>) -> f64 {
    v.iter().map(|x| x.modulus_squared()).sum::<f64>().sqrt()
}

pub fn vec_inf_norm<T: Scalar>(v: &DVector<T>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.modulus()))
}

/// Largest singular value. Empty matrices have norm 0.
pub fn spectral_norm<T: Scalar>(m: &DMatrix<T>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0f64, |acc, &s| acc.max(s))
}

pub fn is_hermitian<T: Scalar>(m: &DMatrix<T>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in i..n {
            if (m[(i, j)] - m[(j, i)].conjugate()).modulus() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// `[I, S, S², …, S^max_power]`.
pub fn matrix_powers<T: Scalar>(s: &DMatrix<T>, max_power: usize) -> Vec<DMatrix<T>> {
    let n = s.nrows();
    let mut out = Vec::with_capacity(max_power + 1);
    out.push(DMatrix::identity(n, n));
    for k in 1..=max_power {
        let next = s * &out[k - 1];
        out.push(next);
    }
    out
}

pub fn diag<T: Scalar>(v: &DVector<T>) -> DMatrix<T> {
    DMatrix::from_diagonal(v)
}

/// Result of a dense least-squares solve.
#[derive(Debug, Clone)]
pub struct LsSolution<T: Scalar> {
    pub x: DVector<T>,
    /// Whether the regression matrix was numerically rank deficient (this
    /// includes every underdetermined system).
    pub rank_deficient: bool,
    /// Whether the ridge fallback was applied.
    pub ridge_applied: bool,
}

#[derive(Debug, Clone, Copy)]
pub enum Regularization {
    /// Plain Moore–Penrose solution.
    None,
    /// Tikhonov fallback with the given weight relative to the mean squared
    /// singular value, active only when the system is rank deficient.
    RidgeFallback(f64),
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::RidgeFallback(RIDGE_SCALE)
    }
}

/// Solves `min ‖b − A x‖₂` after unit-norm column equilibration.
pub fn least_squares<T: Scalar>(
    a: &DMatrix<T>,
    b: &DVector<T>,
    reg: Regularization,
) -> LsSolution<T> {
    let (rows, cols) = a.shape();
    assert_eq!(rows, b.len(), "least_squares: rhs length mismatch");
    if cols == 0 {
        return LsSolution {
            x: DVector::zeros(0),
            rank_deficient: false,
            ridge_applied: false,
        };
    }
    let scales: Vec<f64> = (0..cols)
        .map(|j| {
            let n = a.column(j).iter().map(|v| v.modulus_squared()).sum::<f64>().sqrt();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let mut eq = a.clone();
    for (j, &s) in scales.iter().enumerate() {
        eq.column_mut(j).scale_mut(1.0 / s);
    }
    if rows == 0 {
        return LsSolution {
            x: DVector::zeros(cols),
            rank_deficient: true,
            ridge_applied: false,
        };
    }
    let svd = eq.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0f64, |acc, &s| acc.max(s));
    let smin = sv.iter().fold(f64::INFINITY, |acc, &s| acc.min(s));
    let rank_deficient = cols > rows || smin <= RANK_DEFICIENCY_TOL * smax;
    let ub = u.adjoint() * b;
    let mut y = DVector::<T>::zeros(sv.len());
    let mut ridge_applied = false;
    match reg {
        Regularization::RidgeFallback(scale) if rank_deficient => {
            ridge_applied = true;
            let rho = scale * sv.iter().map(|s| s * s).sum::<f64>() / cols as f64;
            for k in 0..sv.len() {
                let s = sv[k];
                y[k] = ub[k] * T::of(s / (s * s + rho));
            }
        }
        _ => {
            let cutoff = f64::EPSILON * smax * rows.max(cols) as f64;
            for k in 0..sv.len() {
                if sv[k] > cutoff {
                    y[k] = ub[k] / T::of(sv[k]);
                }
            }
        }
    }
    let mut x = v_t.adjoint() * y;
    for (j, &s) in scales.iter().enumerate() {
        x[j] /= T::of(s);
    }
    LsSolution {
        x,
        rank_deficient,
        ridge_applied,
    }
}

/// Orthonormal basis of `null(A)` from a full SVD.
///
/// Returns `(basis, singular_values, cutoff)`; singular values at or below
/// `cutoff = rel_tol · σ_max` count as zero. The returned spectrum is sorted
/// descending and has `cols` entries (zero-padded when `rows < cols`).
pub fn null_space<T: Scalar>(a: &DMatrix<T>, rel_tol: f64) -> (DMatrix<T>, Vec<f64>, f64) {
    let (rows, cols) = a.shape();
    if cols == 0 {
        return (DMatrix::zeros(0, 0), Vec::new(), 0.0);
    }
    // Pad with zero rows so that the SVD exposes the full right basis.
    let padded_rows = rows.max(cols);
    let mut padded = DMatrix::<T>::zeros(padded_rows, cols);
    padded.view_mut((0, 0), (rows, cols)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().fold(0.0f64, |acc, &s| acc.max(s));
    let cutoff = rel_tol * smax;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));
    let null_idx: Vec<usize> = order.iter().copied().filter(|&k| sv[k] <= cutoff).collect();
    let mut basis = DMatrix::<T>::zeros(cols, null_idx.len());
    for (c, &k) in null_idx.iter().enumerate() {
        for r in 0..cols {
            basis[(r, c)] = v_t[(k, r)].conjugate();
        }
    }
    let sorted: Vec<f64> = order.iter().map(|&k| sv[k]).collect();
    (basis, sorted, cutoff)
}

/// Least-squares solution that, among all minimizers of `‖b − A x‖₂`,
/// has the smallest norm on the `penalized` coordinates (and is
/// minimum-norm otherwise).
pub fn least_squares_prefer_zero<T: Scalar>(
    a: &DMatrix<T>,
    b: &DVector<T>,
    penalized: &[usize],
) -> LsSolution<T> {
    let base = least_squares(a, b, Regularization::None);
    let (kernel, _, _) = null_space(a, 1e-10);
    if kernel.ncols() == 0 || penalized.is_empty() {
        return base;
    }
    let mut np = DMatrix::<T>::zeros(penalized.len(), kernel.ncols());
    let mut target = DVector::<T>::zeros(penalized.len());
    for (r, &p) in penalized.iter().enumerate() {
        np.row_mut(r).copy_from(&kernel.row(p));
        target[r] = -base.x[p];
    }
    let z = least_squares(&np, &target, Regularization::None).x;
    LsSolution {
        x: &base.x + kernel * z,
        rank_deficient: true,
        ridge_applied: false,
    }
}

pub fn inverse<T: Scalar>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    m.clone().try_inverse()
}

/// Solves `A X = B` for square `A` via LU.
pub fn solve<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Option<DMatrix<T>> {
    a.clone().lu().solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -4.0]));
        assert!((spectral_norm(&m) - 4.0).abs() < 1e-14);
        assert!((spectral_norm(&DMatrix::<f64>::identity(5, 5)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn least_squares_overdetermined_matches_normal_equations() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 2.0, 4.0]);
        let sol = least_squares(&a, &b, Regularization::default());
        let ata = a.transpose() * &a;
        let expect = ata.try_inverse().unwrap() * a.transpose() * &b;
        assert!((sol.x - expect).amax() < 1e-12);
        assert!(!sol.rank_deficient);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let (basis, _, _) = null_space(&a, 1e-9);
        assert_eq!(basis.ncols(), 2);
        assert!((&a * &basis).amax() < 1e-12);
        let gram = basis.transpose() * &basis;
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn null_space_complex() {
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let a = DMatrix::from_row_slice(1, 2, &[one, i]);
        let (basis, _, _) = null_space(&a, 1e-9);
        assert_eq!(basis.ncols(), 1);
        assert!((&a * &basis).iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn prefer_zero_moves_mass_off_penalized_columns() {
        // Two identical columns: the minimizer set is x0 + x1 = 1.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let sol = least_squares_prefer_zero(&a, &b, &[1]);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!(sol.x[1].abs() < 1e-12);
    }
}
