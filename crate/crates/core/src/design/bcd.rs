use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::factor::{factor_modal, factor_polynomial};
use super::ls::design_classical_matrix_ls;
use super::{design_classical_ls, DesignReport};
use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::filters::{random_filter, FilterFamily, FilterSpec, SupportedMatrix};
use crate::graph::{support_pattern, ShiftOperator};
use crate::linalg::{self, least_squares, Regularization};
use crate::nullspace::ShiftInvariantBasis;

/// Starting point of a block-coordinate descent run.
#[derive(Debug, Clone, PartialEq)]
pub enum BcdInit<T: Scalar> {
    /// Least-squares classical FIR fit, rewritten in product form.
    Classical,
    /// Random coefficients drawn from the run seed.
    Random,
    /// A filter of the designed family and order.
    Given(FilterSpec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcdOptions<T: Scalar> {
    pub init: BcdInit<T>,
    pub sweeps: usize,
    /// Stop once a sweep lowers the objective by less than `tol` relative.
    pub tol: f64,
    /// Extra runs from random starts; the lowest final objective wins.
    pub restarts: usize,
    pub seed: u64,
    /// SIEV only: also fit the offset `α₀`.
    pub fit_alpha0: bool,
}

impl<T: Scalar> Default for BcdOptions<T> {
    fn default() -> Self {
        BcdOptions {
            init: BcdInit::Classical,
            sweeps: 20,
            tol: 1e-9,
            restarts: 5,
            seed: 0,
            fit_alpha0: false,
        }
    }
}

struct Run<P> {
    params: P,
    trace: Vec<f64>,
}

/// Generic descent loop: `step` performs one sweep in place and returns the
/// new objective.
fn descend<P>(
    mut params: P,
    initial: f64,
    opts_sweeps: usize,
    tol: f64,
    mut step: impl FnMut(&mut P, f64) -> Result<f64>,
) -> Result<Run<P>> {
    let mut trace = vec![initial];
    let mut prev = initial;
    for _ in 0..opts_sweeps {
        let obj = step(&mut params, prev)?;
        trace.push(obj);
        let done = prev - obj <= tol * prev.max(f64::MIN_POSITIVE);
        prev = obj;
        if done {
            break;
        }
    }
    Ok(Run { params, trace })
}

fn pick_best<P>(runs: Vec<Run<P>>) -> Run<P> {
    let mut best: Option<Run<P>> = None;
    for r in runs {
        let better = match &best {
            None => true,
            Some(b) => r.trace.last() < b.trace.last(),
        };
        if better {
            best = Some(r);
        }
    }
    best.expect("at least one run")
}

fn ratio(obj: f64, den: f64) -> f64 {
    if den > 0.0 {
        obj / den
    } else {
        obj
    }
}

/// Solves the Hermitian positive semidefinite system `G θ = r`, falling back
/// to an eigenvalue pseudo-inverse when Cholesky fails.
fn solve_psd<T: Scalar>(g: DMatrix<T>, r: &DVector<T>, pinv: bool) -> DVector<T> {
    if !pinv {
        if let Some(ch) = g.clone().cholesky() {
            return ch.solve(r);
        }
    }
    let eig = g.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cut = 1e-12 * top;
    let qr = eig.eigenvectors.adjoint() * r;
    let mut y = DVector::<T>::zeros(qr.len());
    for k in 0..qr.len() {
        let l = eig.eigenvalues[k];
        if l > cut {
            y[k] = qr[k] / T::of(l);
        }
    }
    eig.eigenvectors * y
}

fn ev_dense<T: Scalar>(mats: &[DMatrix<T>], n: usize) -> DMatrix<T> {
    let mut h = DMatrix::<T>::zeros(n, n);
    let mut prod = DMatrix::<T>::identity(n, n);
    for m in mats {
        prod = m * &prod;
        h += &prod;
    }
    h
}

/// Block-coordinate descent for the edge-variant FIR design
/// `min ‖H̃ − Σₖ Φₖ ⋯ Φ₁‖²_F` over matrices supported on `S + I`.
///
/// Each block step is an exact least-squares solve in one `Φᵢ`, accepted
/// only if it does not raise the objective.
pub fn design_ev_bcd<T: Scalar>(
    s: &ShiftOperator<T>,
    target: &DMatrix<T>,
    order: usize,
    opts: &BcdOptions<T>,
) -> Result<DesignReport<T>> {
    let n = s.n();
    if target.shape() != (n, n) {
        return Err(Error::dim(n, target.nrows()));
    }
    if order == 0 {
        return Err(Error::InvalidParameter("EV order must be at least 1".into()));
    }
    let supp = support_pattern(s);
    let idx = supp.allowed_indices().to_vec();
    let objective = |mats: &[DMatrix<T>]| linalg::frobenius_sq(&(target - ev_dense(mats, n)));

    let random_start = |seed: u64| -> Result<Vec<DMatrix<T>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ev_mats(&random_filter(FilterFamily::EdgeVariant, s, None, order, &mut rng)?)
    };
    let first = match &opts.init {
        BcdInit::Classical => classical_ev_start(s, target, order)?,
        BcdInit::Random => random_start(opts.seed)?,
        BcdInit::Given(spec) => {
            spec.validate(s)?;
            let mats = ev_mats(spec)?;
            if mats.len() != order {
                return Err(Error::dim(order, mats.len()));
            }
            mats
        }
    };

    let sweep = |mats: &mut Vec<DMatrix<T>>, mut obj: f64| -> Result<f64> {
        for i in 0..order {
            let eye = DMatrix::<T>::identity(n, n);
            let mut p = eye.clone();
            let mut c = DMatrix::<T>::zeros(n, n);
            for m in &mats[..i] {
                p = m * &p;
                c += &p;
            }
            let mut l = eye.clone();
            for m in mats[i + 1..].iter().rev() {
                l = &eye + &l * m;
            }
            let r = target - &c;
            let ll = l.adjoint() * &l;
            let pp = &p * p.adjoint();
            let rhs_m = l.adjoint() * &r * p.adjoint();
            let q = idx.len();
            let g = DMatrix::<T>::from_fn(q, q, |u, v| {
                let (a, b) = idx[u];
                let (cc, d) = idx[v];
                ll[(a, cc)] * pp[(d, b)]
            });
            let rhs = DVector::<T>::from_fn(q, |u, _| rhs_m[idx[u]]);
            for pinv in [false, true] {
                let theta = solve_psd(g.clone(), &rhs, pinv);
                let mut cand = DMatrix::<T>::zeros(n, n);
                for (u, &(a, b)) in idx.iter().enumerate() {
                    cand[(a, b)] = theta[u];
                }
                let old = std::mem::replace(&mut mats[i], cand);
                let new_obj = objective(mats);
                if new_obj.is_finite() && new_obj <= obj {
                    obj = new_obj;
                    break;
                }
                mats[i] = old;
            }
        }
        Ok(obj)
    };

    let mut runs = Vec::with_capacity(opts.restarts + 1);
    let init_obj = objective(&first);
    runs.push(descend(first, init_obj, opts.sweeps, opts.tol, &sweep)?);
    for r in 0..opts.restarts {
        let start = random_start(opts.seed.wrapping_add(r as u64 + 1))?;
        let o = objective(&start);
        runs.push(descend(start, o, opts.sweeps, opts.tol, &sweep)?);
    }
    let best = pick_best(runs);
    let mats = best
        .params
        .into_iter()
        .map(|m| SupportedMatrix::new(m, &supp))
        .collect::<Result<Vec<_>>>()?;
    let fitted = FilterSpec::EdgeVariantFir { mats };
    let last = *best.trace.last().expect("trace starts with the initial objective");
    let mut report = DesignReport::new(fitted, ratio(last, linalg::frobenius_sq(target)));
    report.iterations = best.trace.len() - 1;
    report.objective_trace = best.trace;
    Ok(report)
}

fn ev_mats<T: Scalar>(spec: &FilterSpec<T>) -> Result<Vec<DMatrix<T>>> {
    match spec {
        FilterSpec::EdgeVariantFir { mats } => Ok(mats.iter().map(|m| m.matrix().clone()).collect()),
        other => Err(Error::UnsupportedKind {
            kind: other.family().to_string(),
            reason: "expected an edge-variant FIR filter".into(),
        }),
    }
}

/// Embeds the best classical fit that admits a product form, trying orders
/// `K, K − 1, …, 0`.
fn classical_ev_start<T: Scalar>(
    s: &ShiftOperator<T>,
    target: &DMatrix<T>,
    order: usize,
) -> Result<Vec<DMatrix<T>>> {
    for deg in (0..=order).rev() {
        let fit = design_classical_matrix_ls(s, target, deg)?;
        let FilterSpec::ClassicalFir { taps } = &fit.fitted else {
            unreachable!("classical design returns taps")
        };
        if let Ok(spec) = factor_polynomial(s, taps, order) {
            return ev_mats(&spec);
        }
    }
    Err(Error::Degenerate("no classical initialization".into()))
}

/// Block-coordinate descent for the shift-invariant edge-variant FIR design
/// `min Σᵢ |h̃ᵢ − Σₖ Πⱼ≤ₖ bᵢᵀαⱼ|²` (plus `bᵢᵀα₀` when fitted).
pub fn design_siev_bcd<T: Scalar>(
    ctx: &Arc<ShiftInvariantBasis<T>>,
    target: &DVector<T>,
    order: usize,
    opts: &BcdOptions<T>,
) -> Result<DesignReport<T>> {
    let n = ctx.n();
    if target.len() != n {
        return Err(Error::dim(n, target.len()));
    }
    if order == 0 {
        return Err(Error::InvalidParameter("SIEV order must be at least 1".into()));
    }
    let b = ctx.nullspace().basis().clone();
    let d = b.ncols();
    // Parameters: [α₀, α₁, …, α_K].
    let response = |al: &[DVector<T>]| -> DVector<T> {
        let mut h = &b * &al[0];
        let mut prod = DVector::from_element(n, T::one());
        for a in &al[1..] {
            prod.component_mul_assign(&(&b * a));
            h += &prod;
        }
        h
    };
    let objective = |al: &[DVector<T>]| (target - response(al)).norm_squared();

    let random_start = |seed: u64| -> Result<Vec<DVector<T>>> {
        // Each factor gets ‖B α‖_∞ = 0.8.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut al = vec![DVector::zeros(d)];
        for k in 0..=order {
            let a = DVector::<T>::from_fn(d, |_, _| T::sample(&mut rng));
            let top = linalg::vec_inf_norm(&(&b * &a));
            let a = if top > 0.0 { a * T::of(0.8 / top) } else { a };
            if k == 0 {
                if opts.fit_alpha0 {
                    al[0] = a;
                }
            } else {
                al.push(a);
            }
        }
        Ok(al)
    };
    let first = match &opts.init {
        BcdInit::Classical => classical_siev_start(ctx, target, order)?,
        BcdInit::Random => random_start(opts.seed)?,
        BcdInit::Given(spec) => {
            let al = siev_alphas(spec)?;
            if al.len() != order + 1 {
                return Err(Error::dim(order, al.len() - 1));
            }
            if al.iter().any(|a| a.len() != d) {
                return Err(Error::dim(d, al[0].len()));
            }
            al
        }
    };

    let sweep = |al: &mut Vec<DVector<T>>, mut obj: f64| -> Result<f64> {
        let mut g: Vec<DVector<T>> = al.iter().map(|a| &b * a).collect();
        let blocks: Vec<usize> = if opts.fit_alpha0 {
            (0..=order).collect()
        } else {
            (1..=order).collect()
        };
        for m in blocks {
            let (coef, constant) = if m == 0 {
                let mut rest = DVector::<T>::zeros(n);
                let mut prod = DVector::from_element(n, T::one());
                for gk in &g[1..] {
                    prod.component_mul_assign(gk);
                    rest += &prod;
                }
                (DVector::from_element(n, T::one()), rest)
            } else {
                let mut constant = g[0].clone();
                let mut pre = DVector::from_element(n, T::one());
                for gk in &g[1..m] {
                    pre.component_mul_assign(gk);
                    constant += &pre;
                }
                let mut suf = DVector::from_element(n, T::one());
                for gk in g[m + 1..].iter().rev() {
                    suf = suf.component_mul(gk).add_scalar(T::one());
                }
                (pre.component_mul(&suf), constant)
            };
            let a = DMatrix::<T>::from_fn(n, d, |i, c| coef[i] * b[(i, c)]);
            let sol = least_squares(&a, &(target - constant), Regularization::None);
            let old = std::mem::replace(&mut al[m], sol.x);
            let new_obj = objective(al);
            if new_obj.is_finite() && new_obj <= obj {
                obj = new_obj;
                g[m] = &b * &al[m];
            } else {
                al[m] = old;
            }
        }
        Ok(obj)
    };

    let mut runs = Vec::with_capacity(opts.restarts + 1);
    let init_obj = objective(&first);
    runs.push(descend(first, init_obj, opts.sweeps, opts.tol, &sweep)?);
    for r in 0..opts.restarts {
        let start = random_start(opts.seed.wrapping_add(r as u64 + 1))?;
        let o = objective(&start);
        runs.push(descend(start, o, opts.sweeps, opts.tol, &sweep)?);
    }
    let best = pick_best(runs);
    let mut al = best.params;
    let alphas = al.split_off(1);
    let fitted = FilterSpec::Siev {
        alpha0: al.pop().expect("offset block"),
        alphas,
        ctx: ctx.clone(),
    };
    let last = *best.trace.last().expect("trace starts with the initial objective");
    let mut report = DesignReport::new(fitted, ratio(last, target.norm_squared()));
    report.iterations = best.trace.len() - 1;
    report.objective_trace = best.trace;
    Ok(report)
}

fn siev_alphas<T: Scalar>(spec: &FilterSpec<T>) -> Result<Vec<DVector<T>>> {
    match spec {
        FilterSpec::Siev { alpha0, alphas, .. } => {
            let mut al = vec![alpha0.clone()];
            al.extend(alphas.iter().cloned());
            Ok(al)
        }
        other => Err(Error::UnsupportedKind {
            kind: other.family().to_string(),
            reason: "expected a SIEV filter".into(),
        }),
    }
}

fn classical_siev_start<T: Scalar>(
    ctx: &ShiftInvariantBasis<T>,
    target: &DVector<T>,
    order: usize,
) -> Result<Vec<DVector<T>>> {
    let lam = ctx.decomposition().eigvals();
    let d = ctx.dim();
    for deg in (0..=order).rev() {
        let fit = design_classical_ls(lam, target, deg)?;
        let FilterSpec::ClassicalFir { taps } = &fit.fitted else {
            unreachable!("classical design returns taps")
        };
        if let Ok(gs) = factor_modal(lam, taps, order) {
            let mut al = vec![DVector::zeros(d)];
            for g in &gs {
                al.push(ctx.coefficients_of(g)?);
            }
            return Ok(al);
        }
    }
    Err(Error::Degenerate("no classical initialization".into()))
}
