use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{FilterFamily, FilterSpec, SupportedMatrix};
use crate::error::Result;
use crate::field::Scalar;
use crate::graph::{support_pattern, ShiftOperator, SupportPattern};
use crate::linalg;
use crate::nullspace::{ShiftInvariantBasis, DEFAULT_RANK_TOL};

/// Gaussian entries on the support, rescaled to spectral norm `norm`.
pub fn random_supported<T: Scalar, R: Rng + ?Sized>(
    support: &SupportPattern,
    norm: f64,
    rng: &mut R,
) -> SupportedMatrix<T> {
    let n = support.n();
    let mut m = DMatrix::<T>::zeros(n, n);
    for &(i, j) in support.allowed_indices() {
        m[(i, j)] = T::sample(rng);
    }
    let s = linalg::spectral_norm(&m);
    if s > 0.0 {
        m *= T::of(norm / s);
    }
    SupportedMatrix::masked(m, support)
}

fn random_alpha<T: Scalar, R: Rng + ?Sized>(
    ctx: &ShiftInvariantBasis<T>,
    norm: f64,
    rng: &mut R,
) -> Result<DVector<T>> {
    let a = DVector::from_fn(ctx.dim(), |_, _| T::sample(rng));
    let s = linalg::spectral_norm(&ctx.synthesize(&a)?);
    Ok(if s > 0.0 { a * T::of(norm / s) } else { a })
}

/// A random filter of the given family and order whose coefficient
/// matrices have spectral norm at most 0.8 (0.6 for ARMA feedback terms),
/// so every recursion stays bounded.
///
/// Shift-invariant families reuse `ctx` when given, otherwise the basis is
/// computed from `s`.
pub fn random_filter<T: Scalar, R: Rng + ?Sized>(
    family: FilterFamily,
    s: &ShiftOperator<T>,
    ctx: Option<&Arc<ShiftInvariantBasis<T>>>,
    order: usize,
    rng: &mut R,
) -> Result<FilterSpec<T>> {
    let n = s.n();
    let supp = support_pattern(s);
    let order = order.max(1);
    let s_norm = linalg::spectral_norm(s.matrix()).max(f64::MIN_POSITIVE);
    let ctx = || -> Result<Arc<ShiftInvariantBasis<T>>> {
        match ctx {
            Some(c) => Ok(c.clone()),
            None => ShiftInvariantBasis::new(s, DEFAULT_RANK_TOL),
        }
    };
    Ok(match family {
        FilterFamily::Classical => FilterSpec::ClassicalFir {
            taps: (0..=order)
                .map(|k| T::sample(rng) * T::of(s_norm.powi(-(k as i32))))
                .collect(),
        },
        FilterFamily::NodeVariant => FilterSpec::NodeVariantFir {
            taps: (0..=order)
                .map(|k| DVector::from_fn(n, |_, _| T::sample(rng) * T::of(s_norm.powi(-(k as i32)))))
                .collect(),
        },
        FilterFamily::EdgeVariant => FilterSpec::EdgeVariantFir {
            mats: (0..order).map(|_| random_supported(&supp, 0.8, rng)).collect(),
        },
        FilterFamily::ConstrainedEv => FilterSpec::ConstrainedEv {
            mats: (0..order)
                .map(|k| random_supported(&supp, 0.8 * s_norm.powi(-(k as i32)), rng))
                .collect(),
        },
        FilterFamily::Siev => {
            let ctx = ctx()?;
            FilterSpec::Siev {
                alpha0: random_alpha(&ctx, 0.8, rng)?,
                alphas: (0..order)
                    .map(|_| random_alpha(&ctx, 0.8, rng))
                    .collect::<Result<_>>()?,
                ctx,
            }
        }
        FilterFamily::Sicev => {
            let ctx = ctx()?;
            FilterSpec::Sicev {
                alphas: (0..order)
                    .map(|k| random_alpha(&ctx, 0.8 * s_norm.powi(-(k as i32)), rng))
                    .collect::<Result<_>>()?,
                ctx,
            }
        }
        FilterFamily::ClassicalArma1 => {
            let dir = T::sample(rng);
            let dir = if dir.modulus() > 0.0 { dir / T::of(dir.modulus()) } else { T::one() };
            FilterSpec::ClassicalArma1 {
                psi: dir * T::of(0.6 / s_norm),
                phi: T::sample(rng),
            }
        }
        FilterFamily::EvArma1 => FilterSpec::EvArma1 {
            phi0: random_supported(&supp, 1.0, rng),
            phi1: random_supported(&supp, 0.6, rng),
        },
        FilterFamily::Sieva1 => {
            let ctx = ctx()?;
            FilterSpec::Sieva1 {
                alpha0: random_alpha(&ctx, 1.0, rng)?,
                alpha1: random_alpha(&ctx, 0.6, rng)?,
                ctx,
            }
        }
    })
}
