use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{FieldKind, Scalar};
use crate::filters::{FilterSpec, SupportedMatrix};
use crate::graph::{support_pattern, ShiftOperator};
use crate::linalg;

/// Relative tolerance on the embedded operator versus `Σₖ φₖ Sᵏ`.
const EMBED_TOL: f64 = 1e-8;
const GRID: usize = 257;

/// Rewrites `p(S) = Σₖ φₖ Sᵏ` as an edge-variant filter with `order`
/// matrices of the form `Φⱼ = cⱼ (S − rⱼ I)`, using the nested form
/// `p = ℓ₁ (1 + ℓ₂ (1 + ⋯))`.
///
/// Needs `deg p ≤ order`. In the real field every step must find a real
/// root; when no scaling `cⱼ` produces one, or the embedded operator drifts
/// from `p(S)`, this fails with [`Error::Degenerate`].
pub fn factor_polynomial<T: Scalar>(
    s: &ShiftOperator<T>,
    taps: &[T],
    order: usize,
) -> Result<FilterSpec<T>> {
    let n = s.n();
    let supp = support_pattern(s);
    let sm = s.matrix();
    let eye = DMatrix::<T>::identity(n, n);
    let lam = crate::graph::eigendecompose(s).ok().map(|d| d.eigvals().clone());
    let (lo, hi) = spectral_box(sm, lam.as_ref());
    let mats = affine_factors::<T>(taps, order, lo, hi)?
        .into_iter()
        .map(|(a, b)| SupportedMatrix::new(sm * a + &eye * b, &supp))
        .collect::<Result<Vec<_>>>()?;
    let spec = FilterSpec::EdgeVariantFir { mats };
    let h = spec.dense_matrix(s)?;
    let target = FilterSpec::ClassicalFir { taps: taps.to_vec() }.dense_matrix(s)?;
    let err = linalg::frobenius(&(&h - &target));
    if !(err <= EMBED_TOL * linalg::frobenius(&target).max(1.0)) {
        return Err(Error::Degenerate(format!("factored filter deviates by {err:.3e}")));
    }
    Ok(spec)
}

/// The same factorization on eigenvalues: `gⱼ = aⱼ λ + bⱼ`, `j = 1 … order`.
pub(crate) fn factor_modal<T: Scalar>(
    lam: &DVector<T>,
    taps: &[T],
    order: usize,
) -> Result<Vec<DVector<T>>> {
    let re = lam.iter().map(|v| v.to_c64().re);
    let lo = re.clone().fold(f64::INFINITY, f64::min);
    let hi = re.fold(f64::NEG_INFINITY, f64::max);
    let gs: Vec<DVector<T>> = affine_factors::<T>(taps, order, lo, hi)?
        .into_iter()
        .map(|(a, b)| lam.map(|l| l * a + b))
        .collect();
    let mut h = DVector::<T>::zeros(lam.len());
    let mut prod = DVector::from_element(lam.len(), T::one());
    for g in &gs {
        prod.component_mul_assign(g);
        h += &prod;
    }
    let target = lam.map(|l| taps.iter().rev().fold(T::zero(), |acc, &c| acc * l + c));
    let err = (&h - &target).norm();
    if !(err <= EMBED_TOL * target.norm().max(1.0)) {
        return Err(Error::Degenerate(format!("factored response deviates by {err:.3e}")));
    }
    Ok(gs)
}

/// `(aⱼ, bⱼ)` with `p(x) = Σₖ Πⱼ≤ₖ (aⱼ x + bⱼ)`.
fn affine_factors<T: Scalar>(taps: &[T], order: usize, lo: f64, hi: f64) -> Result<Vec<(T, T)>> {
    let zero = Complex64::new(0.0, 0.0);
    let mut t = trim(taps.iter().map(|v| v.to_c64()).collect());
    if t.len() > order + 1 {
        return Err(Error::Degenerate(format!(
            "polynomial of degree {} does not fit in {order} matrices",
            t.len() - 1
        )));
    }
    let mut out = Vec::with_capacity(order);
    while out.len() < order {
        if t.len() <= 1 {
            // Constant remainder: one scaled identity, then zeros.
            out.push((zero, t[0]));
            while out.len() < order {
                out.push((zero, zero));
            }
            break;
        }
        let r = pick_root::<T>(&t, lo, hi)?;
        let q = deflate(&t, r);
        let span = (hi - lo).max(1e-12);
        let c0 = 1.0 / (span.max((lo - r.re).abs()).max((hi - r.re).abs()));
        let c = if q.len() == 1 {
            // Last linear factor: absorb q so the remainder is exactly zero.
            q[0]
        } else {
            choose_scale::<T>(&q, c0, lo, hi)?
        };
        out.push((c, -c * r));
        let mut next: Vec<Complex64> = q.iter().map(|v| v / c).collect();
        next[0] -= 1.0;
        t = trim(next);
    }
    out.into_iter()
        .map(|(a, b)| Ok((narrow::<T>(a)?, narrow::<T>(b)?)))
        .collect()
}

fn narrow<T: Scalar>(z: Complex64) -> Result<T> {
    T::from_c64(z, 1e-9)
        .ok_or_else(|| Error::Degenerate("complex factor in the real field".into()))
}

/// Interval holding the (real parts of the) spectrum.
fn spectral_box<T: Scalar>(sm: &DMatrix<T>, lam: Option<&DVector<T>>) -> (f64, f64) {
    match lam {
        Some(l) if !l.is_empty() => {
            let re = l.iter().map(|v| v.to_c64().re);
            let lo = re.clone().fold(f64::INFINITY, f64::min);
            let hi = re.fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
        _ => {
            let r = linalg::spectral_norm(sm);
            (-r, r)
        }
    }
}

/// Drops negligible leading coefficients (ascending storage).
fn trim(mut p: Vec<Complex64>) -> Vec<Complex64> {
    let scale = p.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    while p.len() > 1 && p.last().is_some_and(|v| v.norm() <= 1e-14 * scale) {
        p.pop();
    }
    if p.is_empty() {
        p.push(Complex64::new(0.0, 0.0));
    }
    p
}

/// Roots of `Σ pₖ xᵏ` as eigenvalues of the companion matrix.
fn roots(p: &[Complex64]) -> Vec<Complex64> {
    let d = p.len() - 1;
    if d == 0 {
        return Vec::new();
    }
    let lead = p[d];
    let mut comp = DMatrix::<Complex64>::zeros(d, d);
    for i in 1..d {
        comp[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..d {
        comp[(i, d - 1)] = -p[i] / lead;
    }
    let (_, r) = comp.schur().unpack();
    (0..d).map(|i| r[(i, i)]).collect()
}

/// The admissible root closest to the middle of the spectrum.
fn pick_root<T: Scalar>(p: &[Complex64], lo: f64, hi: f64) -> Result<Complex64> {
    let mid = 0.5 * (lo + hi);
    let real = T::FIELD == FieldKind::Real;
    roots(p)
        .into_iter()
        .filter(|z| !real || z.im.abs() <= 1e-9 * z.norm().max(1.0))
        .map(|z| if real { Complex64::new(z.re, 0.0) } else { z })
        .min_by(|a, b| (a - mid).norm().total_cmp(&(b - mid).norm()))
        .ok_or_else(|| Error::Degenerate("no real root".into()))
}

/// Synthetic division by `(x − r)`.
fn deflate(p: &[Complex64], r: Complex64) -> Vec<Complex64> {
    let d = p.len() - 1;
    let mut q = vec![Complex64::new(0.0, 0.0); d];
    let mut acc = p[d];
    for k in (0..d).rev() {
        q[k] = acc;
        acc = p[k] + acc * r;
    }
    q
}

fn eval(p: &[Complex64], x: f64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// A scale `c` for which `q / c − 1` keeps a usable root. Tries `±c₀`
/// first, then values `q(x)` on a grid (which make `x` a real root).
fn choose_scale<T: Scalar>(q: &[Complex64], c0: f64, lo: f64, hi: f64) -> Result<Complex64> {
    let ok = |c: Complex64| {
        if c.norm() < 1e-300 {
            return false;
        }
        let mut next: Vec<Complex64> = q.iter().map(|v| v / c).collect();
        next[0] -= 1.0;
        pick_root::<T>(&trim(next), lo, hi).is_ok()
    };
    let mut cands = vec![Complex64::new(c0, 0.0), Complex64::new(-c0, 0.0)];
    let span = (hi - lo).max(1.0);
    let mut grid: Vec<Complex64> = (0..GRID)
        .map(|g| eval(q, lo - span + 3.0 * span * g as f64 / (GRID - 1) as f64))
        .filter(|c| c.norm() > 0.0)
        .collect();
    grid.sort_by(|a, b| {
        let da = (a.norm() / c0).ln().abs();
        let db = (b.norm() / c0).ln().abs();
        da.total_cmp(&db)
    });
    cands.extend(grid);
    cands
        .into_iter()
        .find(|&c| ok(c))
        .ok_or_else(|| Error::Degenerate("no admissible scaling".into()))
}
