use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{modal_nse, nse, DesignReport};
use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::filters::{FilterSpec, SupportedMatrix};
use crate::graph::{support_pattern, ShiftOperator, SupportPattern};
use crate::linalg::{self, least_squares, LsSolution, Regularization, RIDGE_SCALE};
use crate::nullspace::ShiftInvariantBasis;

/// Iterations of the soft-thresholding loop for the ℓ1-penalized fit.
pub const ISTA_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CevOptions {
    /// Ridge weight (relative to the mean squared singular value) used only
    /// when a regression matrix is rank deficient; 0 disables it.
    pub ridge: f64,
    /// Optional ℓ1 weight promoting sparse coefficient matrices.
    pub l1: Option<f64>,
}

impl Default for CevOptions {
    fn default() -> Self {
        CevOptions {
            ridge: RIDGE_SCALE,
            l1: None,
        }
    }
}

fn regularization(ridge: f64) -> Regularization {
    if ridge > 0.0 {
        Regularization::RidgeFallback(ridge)
    } else {
        Regularization::None
    }
}

fn check_target<T: Scalar>(s: &ShiftOperator<T>, target: &DMatrix<T>) -> Result<()> {
    if target.shape() != (s.n(), s.n()) {
        return Err(Error::dim(s.n(), target.nrows()));
    }
    Ok(())
}

/// Vandermonde fit of `h̃ᵢ ≈ Σₖ φₖ λᵢᵏ`, `k = 0 … K`.
pub fn design_classical_ls<T: Scalar>(
    lambda: &DVector<T>,
    target: &DVector<T>,
    order: usize,
) -> Result<DesignReport<T>> {
    if lambda.len() != target.len() {
        return Err(Error::dim(lambda.len(), target.len()));
    }
    let n = lambda.len();
    let mut v = DMatrix::<T>::zeros(n, order + 1);
    for i in 0..n {
        let mut p = T::one();
        for k in 0..=order {
            v[(i, k)] = p;
            p *= lambda[i];
        }
    }
    let sol = least_squares(&v, target, Regularization::default());
    let fitted = FilterSpec::ClassicalFir {
        taps: sol.x.iter().copied().collect(),
    };
    let nse = modal_nse(target, &(&v * &sol.x))?;
    Ok(with_flags(DesignReport::new(fitted, nse), &sol))
}

/// Frobenius fit of `H̃ ≈ Σₖ φₖ Sᵏ` over `vec(Sᵏ)`.
pub fn design_classical_matrix_ls<T: Scalar>(
    s: &ShiftOperator<T>,
    target: &DMatrix<T>,
    order: usize,
) -> Result<DesignReport<T>> {
    check_target(s, target)?;
    let n = s.n();
    let powers = linalg::matrix_powers(s.matrix(), order);
    let mut a = DMatrix::<T>::zeros(n * n, order + 1);
    for (k, p) in powers.iter().enumerate() {
        a.column_mut(k).copy_from_slice(p.as_slice());
    }
    let b = DVector::from_column_slice(target.as_slice());
    let sol = least_squares(&a, &b, Regularization::default());
    let fitted = FilterSpec::ClassicalFir {
        taps: sol.x.iter().copied().collect(),
    };
    let h = fitted.dense_matrix(s)?;
    let nse = nse(target, &h)?;
    Ok(with_flags(DesignReport::new(fitted, nse), &sol))
}

fn with_flags<T: Scalar>(mut r: DesignReport<T>, sol: &LsSolution<T>) -> DesignReport<T> {
    r.rank_deficient |= sol.rank_deficient;
    r.ridge_applied |= sol.ridge_applied;
    r
}

struct RowFit<T: Scalar> {
    /// `coeffs[k]` holds the fitted entries of block `k`.
    coeffs: Vec<DMatrix<T>>,
    rank_deficient: bool,
    ridge_applied: bool,
}

/// Fits every row of `H̃ ≈ Σₖ Cₖ Pₖ` independently, where `Cₖ` may only be
/// nonzero at `(i, j)` for `j ∈ allowed(i)`. Row `i` regresses `h̃ᵢᵀ` on the
/// rows `Pₖ[j, :]`.
fn fit_rows<T: Scalar>(
    powers: &[DMatrix<T>],
    target: &DMatrix<T>,
    allowed: &dyn Fn(usize) -> Vec<usize>,
    opts: CevOptions,
) -> RowFit<T> {
    let n = target.nrows();
    let blocks = powers.len();
    let mut coeffs = vec![DMatrix::<T>::zeros(n, n); blocks];
    let mut rank_deficient = false;
    let mut ridge_applied = false;
    for i in 0..n {
        let cols = allowed(i);
        let mut a = DMatrix::<T>::zeros(n, blocks * cols.len());
        for (k, p) in powers.iter().enumerate() {
            for (c, &j) in cols.iter().enumerate() {
                a.column_mut(k * cols.len() + c).copy_from(&p.row(j).transpose());
            }
        }
        let b: DVector<T> = target.row(i).transpose();
        let theta = match opts.l1 {
            Some(w) if w > 0.0 => ista(&a, &b, w),
            _ => {
                let sol = least_squares(&a, &b, regularization(opts.ridge));
                rank_deficient |= sol.rank_deficient;
                ridge_applied |= sol.ridge_applied;
                sol.x
            }
        };
        for k in 0..blocks {
            for (c, &j) in cols.iter().enumerate() {
                coeffs[k][(i, j)] = theta[k * cols.len() + c];
            }
        }
    }
    RowFit {
        coeffs,
        rank_deficient,
        ridge_applied,
    }
}

/// `min ½‖b − A θ‖² + w ‖θ‖₁` by iterative soft thresholding with step
/// `1 / ‖A‖₂²`.
fn ista<T: Scalar>(a: &DMatrix<T>, b: &DVector<T>, w: f64) -> DVector<T> {
    let l = linalg::spectral_norm(a).powi(2);
    let mut theta = DVector::<T>::zeros(a.ncols());
    if l == 0.0 {
        return theta;
    }
    let ah = a.adjoint();
    for _ in 0..ISTA_ITERATIONS {
        let grad = &ah * (a * &theta - b);
        theta -= grad * T::of(1.0 / l);
        for v in theta.iter_mut() {
            let m = v.modulus();
            *v = if m > w / l { *v * T::of(1.0 - w / (l * m)) } else { T::zero() };
        }
    }
    theta
}

/// Least-squares constrained edge-variant design of order `K ≥ 1`
/// (`K` coefficient matrices on the support of `S + I`).
pub fn design_cev_ls<T: Scalar>(
    s: &ShiftOperator<T>,
    target: &DMatrix<T>,
    order: usize,
    opts: CevOptions,
) -> Result<DesignReport<T>> {
    check_target(s, target)?;
    if order == 0 {
        return Err(Error::InvalidParameter("CEV order must be at least 1".into()));
    }
    let supp = support_pattern(s);
    let powers = linalg::matrix_powers(s.matrix(), order - 1);
    let fit = fit_rows(&powers, target, &|i| supp.row(i).to_vec(), opts);
    let mats = fit
        .coeffs
        .into_iter()
        .map(|m| SupportedMatrix::new(m, &supp))
        .collect::<Result<Vec<_>>>()?;
    let fitted = FilterSpec::ConstrainedEv { mats };
    let h = fitted.dense_matrix(s)?;
    let mut r = DesignReport::new(fitted, nse(target, &h)?);
    r.rank_deficient = fit.rank_deficient;
    r.ridge_applied = fit.ridge_applied;
    Ok(r)
}

/// Least-squares node-variant design of order `K` (taps `φ₀ … φ_K`): the
/// constrained edge-variant machinery restricted to diagonal coefficients.
pub fn design_nv_ls<T: Scalar>(
    s: &ShiftOperator<T>,
    target: &DMatrix<T>,
    order: usize,
    opts: CevOptions,
) -> Result<DesignReport<T>> {
    check_target(s, target)?;
    let powers = linalg::matrix_powers(s.matrix(), order);
    let fit = fit_rows(&powers, target, &|i| vec![i], opts);
    let taps = fit.coeffs.iter().map(|m| m.diagonal()).collect();
    let fitted = FilterSpec::NodeVariantFir { taps };
    let h = fitted.dense_matrix(s)?;
    let mut r = DesignReport::new(fitted, nse(target, &h)?);
    r.rank_deficient = fit.rank_deficient;
    r.ridge_applied = fit.ridge_applied;
    Ok(r)
}

/// The full regression `vec(H̃) ≈ Ψ θ` of the constrained edge-variant
/// design (column-major `vec`). Only practical for small `n`; the designs
/// solve the equivalent row-separable problems instead.
#[derive(Debug, Clone)]
pub struct DesignSystem<T: Scalar> {
    pub regression_matrix: DMatrix<T>,
    pub rhs: DVector<T>,
    /// Column `c` is entry `(i, j)` of `Φ_k`, stored as `(k, i, j)` with
    /// `k` starting at 1.
    pub column_map: Vec<(usize, usize, usize)>,
}

pub fn cev_design_system<T: Scalar>(
    s: &ShiftOperator<T>,
    target: &DMatrix<T>,
    order: usize,
) -> Result<DesignSystem<T>> {
    check_target(s, target)?;
    let n = s.n();
    let supp: SupportPattern = support_pattern(s);
    let powers = linalg::matrix_powers(s.matrix(), order.saturating_sub(1));
    let mut column_map = Vec::new();
    for k in 1..=order {
        for &(i, j) in supp.allowed_indices() {
            column_map.push((k, i, j));
        }
    }
    let mut psi = DMatrix::<T>::zeros(n * n, column_map.len());
    for (c, &(k, i, j)) in column_map.iter().enumerate() {
        // vec(E_ij P) has P[j, q] at row q·n + i.
        let p = &powers[k - 1];
        for q in 0..n {
            psi[(q * n + i, c)] = p[(j, q)];
        }
    }
    Ok(DesignSystem {
        regression_matrix: psi,
        rhs: DVector::from_column_slice(target.as_slice()),
        column_map,
    })
}

/// Coefficients of a constrained edge-variant spec in `column_map` order.
pub fn cev_theta<T: Scalar>(spec: &FilterSpec<T>, sys: &DesignSystem<T>) -> Result<DVector<T>> {
    let FilterSpec::ConstrainedEv { mats } = spec else {
        return Err(Error::UnsupportedKind {
            kind: spec.family().to_string(),
            reason: "expected a constrained edge-variant filter".into(),
        });
    };
    let mut theta = DVector::zeros(sys.column_map.len());
    for (c, &(k, i, j)) in sys.column_map.iter().enumerate() {
        let m = mats.get(k - 1).ok_or_else(|| Error::dim(k, mats.len()))?;
        theta[c] = m.matrix()[(i, j)];
    }
    Ok(theta)
}

/// `M = [M₁ ⋯ M_K]` with `Mₖ = diag(λ^{k−1}) B`.
pub fn sicev_regression_matrix<T: Scalar>(ctx: &ShiftInvariantBasis<T>, order: usize) -> DMatrix<T> {
    let b = ctx.nullspace().basis();
    let lam = ctx.decomposition().eigvals();
    let (n, d) = b.shape();
    let mut m = DMatrix::<T>::zeros(n, d * order);
    let mut pow = DVector::from_element(n, T::one());
    for k in 0..order {
        if k > 0 {
            pow.component_mul_assign(lam);
        }
        for i in 0..n {
            for c in 0..d {
                m[(i, k * d + c)] = pow[i] * b[(i, c)];
            }
        }
    }
    m
}

/// Least-squares shift-invariant constrained edge-variant design on a modal
/// target: `min ‖h̃ − M α‖₂` with `d K` unknowns.
pub fn design_sicev_ls<T: Scalar>(
    ctx: &Arc<ShiftInvariantBasis<T>>,
    target: &DVector<T>,
    order: usize,
) -> Result<DesignReport<T>> {
    if order == 0 {
        return Err(Error::InvalidParameter("SICEV order must be at least 1".into()));
    }
    if target.len() != ctx.n() {
        return Err(Error::dim(ctx.n(), target.len()));
    }
    let m = sicev_regression_matrix(ctx, order);
    let sol = least_squares(&m, target, Regularization::default());
    let d = ctx.dim();
    let alphas = (0..order).map(|k| sol.x.rows(k * d, d).into_owned()).collect();
    let fitted = FilterSpec::Sicev {
        alphas,
        ctx: ctx.clone(),
    };
    let nse = modal_nse(target, &(&m * &sol.x))?;
    Ok(with_flags(DesignReport::new(fitted, nse), &sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_shift, generators, ShiftKind};
    use crate::nullspace::DEFAULT_RANK_TOL;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn laplacian(g: &crate::graph::Graph) -> ShiftOperator<f64> {
        build_shift(g, ShiftKind::Laplacian).unwrap()
    }

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| f64::sample(rng))
    }

    fn exp_kernel(s: &ShiftOperator<f64>) -> DMatrix<f64> {
        let dec = crate::graph::eigendecompose(s).unwrap();
        let h = dec.eigvals().map(|l| (-3.0 * (l - 0.75).powi(2)).exp());
        dec.synthesize_diagonal(&h)
    }

    #[test]
    fn classical_trivial_fits() {
        let lam = DVector::from_vec(vec![0.0, 1.0, 2.5, 4.0]);
        let r = design_classical_ls(&lam, &DVector::from_element(4, 1.0), 0).unwrap();
        let FilterSpec::ClassicalFir { taps } = &r.fitted else { unreachable!() };
        assert!((taps[0] - 1.0).abs() < 1e-12);

        let r = design_classical_ls(&lam, &lam, 1).unwrap();
        let FilterSpec::ClassicalFir { taps } = &r.fitted else { unreachable!() };
        assert!(taps[0].abs() < 1e-10 && (taps[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn classical_interpolates_indicator() {
        let s = laplacian(&generators::star(6).unwrap());
        let dec = crate::graph::eigendecompose(&s).unwrap();
        let lam = dec.eigvals();
        let distinct = dec.distinct_eigenvalues(1e-8);
        let h = lam.map(|l| if l.abs() < 1e-9 { 1.0 } else { 0.0 });
        let r = design_classical_ls(lam, &h, distinct - 1).unwrap();
        assert!(r.nse <= 1e-8);
    }

    #[test]
    fn cev_and_nv_fit_identity() {
        let s = laplacian(&generators::ring(10).unwrap());
        let eye = DMatrix::identity(10, 10);
        for k in 1..4 {
            assert!(design_cev_ls(&s, &eye, k, CevOptions::default()).unwrap().nse <= 1e-12);
            assert!(design_nv_ls(&s, &eye, k, CevOptions::default()).unwrap().nse <= 1e-12);
        }
    }

    #[test]
    fn cev_contains_classical_of_lower_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = laplacian(&generators::grid(3, 4).unwrap());
        let taps: Vec<f64> = (0..3).map(|_| f64::sample(&mut rng)).collect();
        let target = FilterSpec::ClassicalFir { taps }.dense_matrix(&s).unwrap();
        let r = design_cev_ls(&s, &target, 3, CevOptions::default()).unwrap();
        assert!(r.nse <= 1e-10, "{}", r.nse);
    }

    #[test]
    fn nv_represents_scaled_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = laplacian(&generators::ring(9).unwrap());
        let v = DVector::from_fn(9, |_, _| f64::sample(&mut rng));
        let target = linalg::diag(&v) * s.matrix();
        assert!(design_nv_ls(&s, &target, 2, CevOptions::default()).unwrap().nse <= 1e-10);
    }

    #[test]
    fn nested_dominance_on_ring() {
        let s = laplacian(&generators::ring(12).unwrap());
        let target = exp_kernel(&s);
        let cev = design_cev_ls(&s, &target, 4, CevOptions::default()).unwrap().nse;
        let nv = design_nv_ls(&s, &target, 4, CevOptions::default()).unwrap().nse;
        let cl = design_classical_matrix_ls(&s, &target, 4).unwrap().nse;
        assert!(cev <= nv + 1e-12 && nv <= cl + 1e-12, "{cev} {nv} {cl}");
    }

    #[test]
    fn nested_dominance_random_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = generators::random_community_graph(
            10,
            generators::CommunityParams {
                clusters: 2,
                p_in: 0.6,
                p_out: 0.2,
            },
            3,
        )
        .unwrap();
        let s = laplacian(&g);
        let target = random_matrix(10, &mut rng);
        let cev = design_cev_ls(&s, &target, 3, CevOptions::default()).unwrap().nse;
        let nv = design_nv_ls(&s, &target, 3, CevOptions::default()).unwrap().nse;
        assert!(nv >= cev - 1e-12);
    }

    #[test]
    fn cev_residual_is_orthogonal_to_regressors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = laplacian(&generators::path(7).unwrap());
        let target = random_matrix(7, &mut rng);
        let r = design_cev_ls(&s, &target, 2, CevOptions::default()).unwrap();
        let sys = cev_design_system(&s, &target, 2).unwrap();
        let theta = cev_theta(&r.fitted, &sys).unwrap();
        let psi = &sys.regression_matrix;
        let resid = &sys.rhs - psi * &theta;
        // Ψθ is vec(H).
        let h = r.fitted.dense_matrix(&s).unwrap();
        assert!((psi * &theta - DVector::from_column_slice(h.as_slice())).amax() < 1e-12);
        let grad = psi.transpose() * &resid;
        assert!(grad.amax() <= 1e-8 * linalg::spectral_norm(psi) * resid.norm());
    }

    #[test]
    fn l1_penalty_sparsifies() {
        let s = laplacian(&generators::ring(8).unwrap());
        let target = exp_kernel(&s);
        let dense = design_cev_ls(&s, &target, 3, CevOptions::default()).unwrap();
        let sparse = design_cev_ls(
            &s,
            &target,
            3,
            CevOptions {
                l1: Some(0.05),
                ..CevOptions::default()
            },
        )
        .unwrap();
        let count = |f: &FilterSpec<f64>| match f {
            FilterSpec::ConstrainedEv { mats } => mats.iter().map(|m| m.triplets().len()).sum::<usize>(),
            _ => unreachable!(),
        };
        assert!(count(&sparse.fitted) < count(&dense.fitted));
        assert!(sparse.nse >= dense.nse);
    }

    #[test]
    fn sicev_identity_and_realizable_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = laplacian(&generators::random_community_graph(
            16,
            generators::CommunityParams {
                clusters: 2,
                p_in: 0.6,
                p_out: 0.1,
            },
            5,
        )
        .unwrap());
        let ctx = ShiftInvariantBasis::new(&s, DEFAULT_RANK_TOL).unwrap();
        let ones = DVector::from_element(16, 1.0);
        let r = design_sicev_ls(&ctx, &ones, 1).unwrap();
        assert!(r.nse <= 1e-20);

        let f = crate::filters::random_filter(crate::filters::FilterFamily::Sicev, &s, Some(&ctx), 2, &mut rng)
            .unwrap();
        let h = f.modal_response(ctx.decomposition()).unwrap();
        let r = design_sicev_ls(&ctx, &h, 2).unwrap();
        let fitted = r.fitted.modal_response(ctx.decomposition()).unwrap();
        assert!((fitted - &h).norm() <= 1e-9 * h.norm());
    }

    #[test]
    fn sicev_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = laplacian(&generators::path(6).unwrap());
        let ctx = ShiftInvariantBasis::new(&s, DEFAULT_RANK_TOL).unwrap();
        let h = DVector::from_fn(6, |_, _| f64::sample(&mut rng));
        let m = sicev_regression_matrix(&ctx, 1);
        assert!(m.ncols() < m.nrows());
        let oracle = (m.transpose() * &m).try_inverse().unwrap() * m.transpose() * &h;
        let r = design_sicev_ls(&ctx, &h, 1).unwrap();
        let FilterSpec::Sicev { alphas, .. } = &r.fitted else { unreachable!() };
        assert!((&alphas[0] - oracle).amax() < 1e-10);
    }
}
