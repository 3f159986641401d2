//! The nine filter families: dense realization, local recursions and modal
//! responses.
//!
//! Order conventions: classical and node-variant filters of order `K` carry
//! `K + 1` taps (powers `S⁰ … Sᴷ`); edge-variant, constrained edge-variant
//! and their shift-invariant versions of order `K` carry `K` coefficient
//! matrices (or coefficient vectors).

mod random;
mod supported;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldKind, Scalar};
use crate::graph::{eigendecompose, support_pattern, GraphSignal, ShiftOperator, SpectralDecomposition};
use crate::io::{MatrixDoc, VectorDoc};
use crate::linalg;
use crate::nullspace::{ShiftInvariantBasis, DEFAULT_RANK_TOL};

pub use random::{random_filter, random_supported};
pub use supported::SupportedMatrix;
use supported::TripletDoc;

pub use crate::linalg::spectral_norm;

/// Denominators below this magnitude make a modal response singular.
pub const SINGULAR_MODE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterFamily {
    #[serde(rename = "classical")]
    Classical,
    #[serde(rename = "nv")]
    NodeVariant,
    #[serde(rename = "ev")]
    EdgeVariant,
    #[serde(rename = "cev")]
    ConstrainedEv,
    #[serde(rename = "siev")]
    Siev,
    #[serde(rename = "sicev")]
    Sicev,
    #[serde(rename = "classical-arma1")]
    ClassicalArma1,
    #[serde(rename = "ev-arma1")]
    EvArma1,
    #[serde(rename = "sieva1")]
    Sieva1,
}

impl FilterFamily {
    pub const ALL: [FilterFamily; 9] = [
        FilterFamily::Classical,
        FilterFamily::NodeVariant,
        FilterFamily::EdgeVariant,
        FilterFamily::ConstrainedEv,
        FilterFamily::Siev,
        FilterFamily::Sicev,
        FilterFamily::ClassicalArma1,
        FilterFamily::EvArma1,
        FilterFamily::Sieva1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterFamily::Classical => "classical",
            FilterFamily::NodeVariant => "nv",
            FilterFamily::EdgeVariant => "ev",
            FilterFamily::ConstrainedEv => "cev",
            FilterFamily::Siev => "siev",
            FilterFamily::Sicev => "sicev",
            FilterFamily::ClassicalArma1 => "classical-arma1",
            FilterFamily::EvArma1 => "ev-arma1",
            FilterFamily::Sieva1 => "sieva1",
        }
    }

    pub fn is_arma(self) -> bool {
        matches!(
            self,
            FilterFamily::ClassicalArma1 | FilterFamily::EvArma1 | FilterFamily::Sieva1
        )
    }

    pub fn is_shift_invariant(self) -> bool {
        matches!(
            self,
            FilterFamily::Classical
                | FilterFamily::Siev
                | FilterFamily::Sicev
                | FilterFamily::ClassicalArma1
                | FilterFamily::Sieva1
        )
    }
}

impl fmt::Display for FilterFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown filter family '{s}'")))
    }
}

/// Coefficients of one filter.
///
/// Matrix coefficients are [`SupportedMatrix`] values; the shift-invariant
/// families hold expansion coefficients `α` together with the basis that
/// maps them to matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterSpec<T: Scalar> {
    /// `Σₖ φₖ Sᵏ`, taps `φ₀ … φ_K`.
    ClassicalFir { taps: Vec<T> },
    /// `Σₖ diag(φₖ) Sᵏ`, taps `φ₀ … φ_K`.
    NodeVariantFir { taps: Vec<DVector<T>> },
    /// `Σₖ Φₖ ⋯ Φ₁`.
    EdgeVariantFir { mats: Vec<SupportedMatrix<T>> },
    /// `Σₖ Φₖ Sᵏ⁻¹`.
    ConstrainedEv { mats: Vec<SupportedMatrix<T>> },
    /// Edge-variant filter with `Φₖ = U diag(B αₖ) U⁻¹`, plus the offset
    /// `U diag(B α₀) U⁻¹`.
    Siev {
        alpha0: DVector<T>,
        alphas: Vec<DVector<T>>,
        ctx: Arc<ShiftInvariantBasis<T>>,
    },
    /// Constrained edge-variant filter with shift-invariant `Φₖ`.
    Sicev {
        alphas: Vec<DVector<T>>,
        ctx: Arc<ShiftInvariantBasis<T>>,
    },
    /// `φ (I − ψ S)⁻¹`.
    ClassicalArma1 { psi: T, phi: T },
    /// `(I − Φ₁)⁻¹ Φ₀`.
    EvArma1 {
        phi0: SupportedMatrix<T>,
        phi1: SupportedMatrix<T>,
    },
    /// Edge-variant ARMA with shift-invariant `Φ₀`, `Φ₁`.
    Sieva1 {
        alpha0: DVector<T>,
        alpha1: DVector<T>,
        ctx: Arc<ShiftInvariantBasis<T>>,
    },
}

/// Stopping rule of the ARMA recursion `y_t = Φ₁ y_{t−1} + Φ₀ x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmaOptions {
    /// Stop once `‖y_t − y_{t−1}‖ ≤ tol · ‖y_t‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ArmaOptions {
    fn default() -> Self {
        ArmaOptions {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Consecutive growing increments that count as divergence.
pub const DIVERGENCE_STREAK: usize = 10;

/// Tracks the increment norms of a fixed-point recursion and flags
/// divergence: a non-finite state, or increments that grew for
/// [`DIVERGENCE_STREAK`] consecutive steps.
#[derive(Debug, Clone)]
pub struct DivergenceMonitor {
    last: f64,
    streak: usize,
}

impl Default for DivergenceMonitor {
    fn default() -> Self {
        DivergenceMonitor {
            last: f64::INFINITY,
            streak: 0,
        }
    }
}

impl DivergenceMonitor {
    pub fn observe(&mut self, increment: f64, state_norm: f64, step: usize) -> Result<()> {
        if !increment.is_finite() || !state_norm.is_finite() {
            return Err(Error::Divergent(format!("non-finite state at iteration {step}")));
        }
        if increment > self.last {
            self.streak += 1;
            if self.streak >= DIVERGENCE_STREAK {
                return Err(Error::Divergent(format!(
                    "increment grew for {DIVERGENCE_STREAK} consecutive iterations (iteration {step})"
                )));
            }
        } else {
            self.streak = 0;
        }
        self.last = increment;
        Ok(())
    }
}

/// Runs `y_t = Φ₁ y_{t−1} + b` from `y₀ = 0`, returning every iterate
/// including `y₀`.
pub fn arma_iterates<T: Scalar>(
    phi1: &DMatrix<T>,
    b: &DVector<T>,
    opts: ArmaOptions,
) -> Result<Vec<DVector<T>>> {
    let mut y = DVector::<T>::zeros(b.len());
    let mut out = vec![y.clone()];
    let mut monitor = DivergenceMonitor::default();
    for t in 1..=opts.max_iter {
        let next = phi1 * &y + b;
        let inc = linalg::vec_norm(&(&next - &y));
        let norm = linalg::vec_norm(&next);
        monitor.observe(inc, norm, t)?;
        y = next;
        out.push(y.clone());
        if inc <= opts.tol * norm || inc == 0.0 {
            break;
        }
    }
    Ok(out)
}

impl<T: Scalar> FilterSpec<T> {
    pub fn family(&self) -> FilterFamily {
        match self {
            FilterSpec::ClassicalFir { .. } => FilterFamily::Classical,
            FilterSpec::NodeVariantFir { .. } => FilterFamily::NodeVariant,
            FilterSpec::EdgeVariantFir { .. } => FilterFamily::EdgeVariant,
            FilterSpec::ConstrainedEv { .. } => FilterFamily::ConstrainedEv,
            FilterSpec::Siev { .. } => FilterFamily::Siev,
            FilterSpec::Sicev { .. } => FilterFamily::Sicev,
            FilterSpec::ClassicalArma1 { .. } => FilterFamily::ClassicalArma1,
            FilterSpec::EvArma1 { .. } => FilterFamily::EvArma1,
            FilterSpec::Sieva1 { .. } => FilterFamily::Sieva1,
        }
    }

    /// Filter order (see the module docs for the tap-count convention).
    pub fn order(&self) -> usize {
        match self {
            FilterSpec::ClassicalFir { taps } => taps.len().saturating_sub(1),
            FilterSpec::NodeVariantFir { taps } => taps.len().saturating_sub(1),
            FilterSpec::EdgeVariantFir { mats } | FilterSpec::ConstrainedEv { mats } => mats.len(),
            FilterSpec::Siev { alphas, .. } | FilterSpec::Sicev { alphas, .. } => alphas.len(),
            FilterSpec::ClassicalArma1 { .. }
            | FilterSpec::EvArma1 { .. }
            | FilterSpec::Sieva1 { .. } => 1,
        }
    }

    /// Neighbor exchanges one FIR evaluation needs (one per shift or
    /// coefficient matrix); zero for ARMA filters, whose round count depends
    /// on convergence.
    pub fn exchanges(&self) -> usize {
        if self.family().is_arma() {
            0
        } else {
            self.order()
        }
    }

    /// Vertex count implied by the coefficients, if any.
    pub fn n(&self) -> Option<usize> {
        match self {
            FilterSpec::ClassicalFir { .. } | FilterSpec::ClassicalArma1 { .. } => None,
            FilterSpec::NodeVariantFir { taps } => taps.first().map(|t| t.len()),
            FilterSpec::EdgeVariantFir { mats } | FilterSpec::ConstrainedEv { mats } => {
                mats.first().map(SupportedMatrix::n)
            }
            FilterSpec::EvArma1 { phi0, .. } => Some(phi0.n()),
            FilterSpec::Siev { ctx, .. }
            | FilterSpec::Sicev { ctx, .. }
            | FilterSpec::Sieva1 { ctx, .. } => Some(ctx.n()),
        }
    }

    /// Structural checks against a shift operator: shapes, coefficient
    /// lengths, and support of every matrix coefficient.
    pub fn validate(&self, s: &ShiftOperator<T>) -> Result<()> {
        let n = s.n();
        if let Some(m) = self.n() {
            if m != n {
                return Err(Error::dim(n, m));
            }
        }
        let nonempty = |len: usize, what: &str| {
            if len == 0 {
                Err(Error::InvalidParameter(format!("{what} must not be empty")))
            } else {
                Ok(())
            }
        };
        let check_alpha = |a: &DVector<T>, d: usize| {
            if a.len() == d {
                Ok(())
            } else {
                Err(Error::dim(d, a.len()))
            }
        };
        match self {
            FilterSpec::ClassicalFir { taps } => nonempty(taps.len(), "taps"),
            FilterSpec::NodeVariantFir { taps } => {
                nonempty(taps.len(), "taps")?;
                taps.iter()
                    .try_for_each(|t| if t.len() == n { Ok(()) } else { Err(Error::dim(n, t.len())) })
            }
            FilterSpec::EdgeVariantFir { mats } | FilterSpec::ConstrainedEv { mats } => {
                nonempty(mats.len(), "coefficient matrices")?;
                let supp = support_pattern(s);
                mats.iter().try_for_each(|m| m.check(&supp))
            }
            FilterSpec::EvArma1 { phi0, phi1 } => {
                let supp = support_pattern(s);
                phi0.check(&supp)?;
                phi1.check(&supp)
            }
            FilterSpec::Siev { alpha0, alphas, ctx } => {
                nonempty(alphas.len(), "coefficient vectors")?;
                check_alpha(alpha0, ctx.dim())?;
                alphas.iter().try_for_each(|a| check_alpha(a, ctx.dim()))?;
                check_context(ctx, s)
            }
            FilterSpec::Sicev { alphas, ctx } => {
                nonempty(alphas.len(), "coefficient vectors")?;
                alphas.iter().try_for_each(|a| check_alpha(a, ctx.dim()))?;
                check_context(ctx, s)
            }
            FilterSpec::Sieva1 { alpha0, alpha1, ctx } => {
                check_alpha(alpha0, ctx.dim())?;
                check_alpha(alpha1, ctx.dim())?;
                check_context(ctx, s)
            }
            FilterSpec::ClassicalArma1 { .. } => Ok(()),
        }
    }

    /// Rewrites a shift-invariant spec as its explicit matrix form
    /// (SIEV → offset plus EV, SICEV → CEV, SIEVA1 → EV ARMA). Other
    /// families are returned unchanged.
    pub fn to_explicit(&self) -> Result<ExplicitFilter<T>> {
        let synth = |ctx: &ShiftInvariantBasis<T>, a: &DVector<T>| ctx.synthesize_supported(a);
        Ok(match self {
            FilterSpec::Siev { alpha0, alphas, ctx } => {
                let mats = alphas.iter().map(|a| synth(ctx, a)).collect::<Result<Vec<_>>>()?;
                ExplicitFilter {
                    offset: Some(synth(ctx, alpha0)?),
                    spec: FilterSpec::EdgeVariantFir { mats },
                }
            }
            FilterSpec::Sicev { alphas, ctx } => {
                let mats = alphas.iter().map(|a| synth(ctx, a)).collect::<Result<Vec<_>>>()?;
                ExplicitFilter {
                    offset: None,
                    spec: FilterSpec::ConstrainedEv { mats },
                }
            }
            FilterSpec::Sieva1 { alpha0, alpha1, ctx } => ExplicitFilter {
                offset: None,
                spec: FilterSpec::EvArma1 {
                    phi0: synth(ctx, alpha0)?,
                    phi1: synth(ctx, alpha1)?,
                },
            },
            other => ExplicitFilter {
                offset: None,
                spec: other.clone(),
            },
        })
    }

    /// The operator `H` the filter implements (steady state for ARMA).
    pub fn dense_matrix(&self, s: &ShiftOperator<T>) -> Result<DMatrix<T>> {
        self.validate(s)?;
        let n = s.n();
        let sm = s.matrix();
        let eye = DMatrix::<T>::identity(n, n);
        match self {
            FilterSpec::ClassicalFir { taps } => {
                let mut h = DMatrix::<T>::zeros(n, n);
                for &phi in taps.iter().rev() {
                    h = &h * sm + &eye * phi;
                }
                Ok(h)
            }
            FilterSpec::NodeVariantFir { taps } => {
                let mut h = DMatrix::<T>::zeros(n, n);
                let mut p = eye.clone();
                for (k, t) in taps.iter().enumerate() {
                    if k > 0 {
                        p = sm * &p;
                    }
                    h += linalg::diag(t) * &p;
                }
                Ok(h)
            }
            FilterSpec::EdgeVariantFir { mats } => {
                let mut h = DMatrix::<T>::zeros(n, n);
                let mut prod = eye;
                for m in mats {
                    prod = m.matrix() * &prod;
                    h += &prod;
                }
                Ok(h)
            }
            FilterSpec::ConstrainedEv { mats } => {
                let mut h = DMatrix::<T>::zeros(n, n);
                let mut p = eye;
                for (k, m) in mats.iter().enumerate() {
                    if k > 0 {
                        p = sm * &p;
                    }
                    h += m.matrix() * &p;
                }
                Ok(h)
            }
            FilterSpec::ClassicalArma1 { psi, phi } => {
                let norm = psi.modulus() * linalg::spectral_norm(sm);
                if norm >= 1.0 {
                    return Err(Error::Divergent(format!("|psi|·‖S‖₂ = {norm} ≥ 1")));
                }
                let a = &eye - sm * *psi;
                let inv = linalg::inverse(&a)
                    .ok_or_else(|| Error::Divergent("I − ψS is singular".into()))?;
                Ok(inv * *phi)
            }
            FilterSpec::EvArma1 { phi0, phi1 } => {
                let norm = linalg::spectral_norm(phi1.matrix());
                if norm >= 1.0 {
                    return Err(Error::Divergent(format!("‖Φ₁‖₂ = {norm} ≥ 1")));
                }
                linalg::solve(&(&eye - phi1.matrix()), phi0.matrix())
                    .ok_or_else(|| Error::Divergent("I − Φ₁ is singular".into()))
            }
            FilterSpec::Siev { .. } | FilterSpec::Sicev { .. } | FilterSpec::Sieva1 { .. } => {
                let ex = self.to_explicit()?;
                let mut h = ex.spec.dense_matrix(s)?;
                if let Some(off) = &ex.offset {
                    h += off.matrix();
                }
                Ok(h)
            }
        }
    }

    /// Evaluates the filter through its local recursion (ARMA with the
    /// default stopping rule).
    pub fn apply_recursive(&self, s: &ShiftOperator<T>, x: &GraphSignal<T>) -> Result<GraphSignal<T>> {
        self.apply_recursive_with(s, x, ArmaOptions::default())
    }

    pub fn apply_recursive_with(
        &self,
        s: &ShiftOperator<T>,
        x: &GraphSignal<T>,
        opts: ArmaOptions,
    ) -> Result<GraphSignal<T>> {
        self.validate(s)?;
        x.check_len(s.n())?;
        let sm = s.matrix();
        let x = x.values();
        let y = match self {
            FilterSpec::ClassicalFir { taps } => {
                let mut shifted = x.clone();
                let mut y = &shifted * taps[0];
                for &phi in &taps[1..] {
                    shifted = sm * &shifted;
                    y += &shifted * phi;
                }
                y
            }
            FilterSpec::NodeVariantFir { taps } => {
                let mut shifted = x.clone();
                let mut y = shifted.component_mul(&taps[0]);
                for t in &taps[1..] {
                    shifted = sm * &shifted;
                    y += shifted.component_mul(t);
                }
                y
            }
            FilterSpec::EdgeVariantFir { mats } => {
                let mut shifted = x.clone();
                let mut y = DVector::zeros(x.len());
                for m in mats {
                    shifted = m.matrix() * &shifted;
                    y += &shifted;
                }
                y
            }
            FilterSpec::ConstrainedEv { mats } => {
                let mut shifted = x.clone();
                let mut y = DVector::zeros(x.len());
                for (k, m) in mats.iter().enumerate() {
                    if k > 0 {
                        shifted = sm * &shifted;
                    }
                    y += m.matrix() * &shifted;
                }
                y
            }
            FilterSpec::ClassicalArma1 { psi, phi } => {
                let phi1 = sm * *psi;
                let b = x * *phi;
                arma_iterates(&phi1, &b, opts)?.pop().expect("at least y₀")
            }
            FilterSpec::EvArma1 { phi0, phi1 } => {
                let b = phi0.matrix() * x;
                arma_iterates(phi1.matrix(), &b, opts)?.pop().expect("at least y₀")
            }
            FilterSpec::Siev { .. } | FilterSpec::Sicev { .. } | FilterSpec::Sieva1 { .. } => {
                let ex = self.to_explicit()?;
                let xs = GraphSignal::new(x.clone());
                let mut y = ex.spec.apply_recursive_with(s, &xs, opts)?.into_values();
                if let Some(off) = &ex.offset {
                    y += off.matrix() * x;
                }
                y
            }
        };
        Ok(GraphSignal::new(y))
    }

    /// ARMA iterates `y₀ = 0, y₁, …` until the stopping rule fires.
    pub fn arma_trajectory(
        &self,
        s: &ShiftOperator<T>,
        x: &GraphSignal<T>,
        opts: ArmaOptions,
    ) -> Result<Vec<DVector<T>>> {
        self.validate(s)?;
        x.check_len(s.n())?;
        match self {
            FilterSpec::ClassicalArma1 { psi, phi } => {
                arma_iterates(&(s.matrix() * *psi), &(x.values() * *phi), opts)
            }
            FilterSpec::EvArma1 { phi0, phi1 } => {
                arma_iterates(phi1.matrix(), &(phi0.matrix() * x.values()), opts)
            }
            FilterSpec::Sieva1 { .. } => self.to_explicit()?.spec.arma_trajectory(s, x, opts),
            other => Err(Error::UnsupportedKind {
                kind: other.family().to_string(),
                reason: "not an ARMA filter".into(),
            }),
        }
    }

    /// Per-mode response `hᵢ` for the shift-invariant families, aligned with
    /// the eigenvalue order of `dec`.
    pub fn modal_response(&self, dec: &SpectralDecomposition<T>) -> Result<DVector<T>> {
        let lam = dec.eigvals();
        let n = lam.len();
        let rows = |ctx: &ShiftInvariantBasis<T>, a: &DVector<T>| -> Result<DVector<T>> {
            if ctx.n() != n {
                return Err(Error::dim(n, ctx.n()));
            }
            ctx.nullspace().eigenvalues_of(a)
        };
        match self {
            FilterSpec::ClassicalFir { taps } => Ok(lam.map(|l| {
                taps.iter().rev().fold(T::zero(), |acc, &phi| acc * l + phi)
            })),
            FilterSpec::ClassicalArma1 { psi, phi } => {
                let mut h = DVector::zeros(n);
                for i in 0..n {
                    let den = T::one() - *psi * lam[i];
                    if den.modulus() < SINGULAR_MODE_TOL {
                        return Err(Error::SingularMode {
                            index: i,
                            gap: den.modulus(),
                        });
                    }
                    h[i] = *phi / den;
                }
                Ok(h)
            }
            FilterSpec::Siev { alpha0, alphas, ctx } => {
                let mut h = rows(ctx, alpha0)?;
                let mut prod = DVector::from_element(n, T::one());
                for a in alphas {
                    prod.component_mul_assign(&rows(ctx, a)?);
                    h += &prod;
                }
                Ok(h)
            }
            FilterSpec::Sicev { alphas, ctx } => {
                let mut h = DVector::zeros(n);
                let mut pow = DVector::from_element(n, T::one());
                for (k, a) in alphas.iter().enumerate() {
                    if k > 0 {
                        pow.component_mul_assign(lam);
                    }
                    h += rows(ctx, a)?.component_mul(&pow);
                }
                Ok(h)
            }
            FilterSpec::Sieva1 { alpha0, alpha1, ctx } => {
                let g0 = rows(ctx, alpha0)?;
                let g1 = rows(ctx, alpha1)?;
                let mut h = DVector::zeros(n);
                for i in 0..n {
                    let den = T::one() - g1[i];
                    if den.modulus() < SINGULAR_MODE_TOL {
                        return Err(Error::SingularMode {
                            index: i,
                            gap: den.modulus(),
                        });
                    }
                    h[i] = g0[i] / den;
                }
                Ok(h)
            }
            other => Err(Error::UnsupportedKind {
                kind: other.family().to_string(),
                reason: "modal response needs a shift-invariant family".into(),
            }),
        }
    }

    /// The order-`k` truncation of an FIR filter: the first `k + 1` taps
    /// (classical, NV) or the first `k` matrices / coefficient vectors.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        let check = |have: usize, want: usize| {
            if want <= have {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "cannot truncate an order-{have} filter to order {want}"
                )))
            }
        };
        let order = self.order();
        check(order, k)?;
        Ok(match self {
            FilterSpec::ClassicalFir { taps } => FilterSpec::ClassicalFir {
                taps: taps[..=k].to_vec(),
            },
            FilterSpec::NodeVariantFir { taps } => FilterSpec::NodeVariantFir {
                taps: taps[..=k].to_vec(),
            },
            FilterSpec::EdgeVariantFir { mats } if k > 0 => FilterSpec::EdgeVariantFir {
                mats: mats[..k].to_vec(),
            },
            FilterSpec::ConstrainedEv { mats } if k > 0 => FilterSpec::ConstrainedEv {
                mats: mats[..k].to_vec(),
            },
            FilterSpec::Siev { alpha0, alphas, ctx } if k > 0 => FilterSpec::Siev {
                alpha0: alpha0.clone(),
                alphas: alphas[..k].to_vec(),
                ctx: ctx.clone(),
            },
            FilterSpec::Sicev { alphas, ctx } if k > 0 => FilterSpec::Sicev {
                alphas: alphas[..k].to_vec(),
                ctx: ctx.clone(),
            },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "{} filters cannot be truncated to order {k}",
                    other.family()
                )))
            }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut doc = FilterDoc {
            family: self.family(),
            field: T::FIELD,
            order: self.order(),
            n: self.n(),
            scalars: None,
            vectors: None,
            matrices: None,
            basis: None,
            rank_tol: None,
        };
        let mut with_ctx = |ctx: &ShiftInvariantBasis<T>, vecs: Vec<&DVector<T>>| {
            doc.vectors = Some(vecs.into_iter().map(VectorDoc::from_vector).collect());
            doc.basis = Some(MatrixDoc::from_matrix(ctx.nullspace().basis()));
            doc.rank_tol = Some(ctx.nullspace().rank_tol());
        };
        match self {
            FilterSpec::Siev { alpha0, alphas, ctx } => {
                with_ctx(ctx, std::iter::once(alpha0).chain(alphas).collect())
            }
            FilterSpec::Sicev { alphas, ctx } => with_ctx(ctx, alphas.iter().collect()),
            FilterSpec::Sieva1 { alpha0, alpha1, ctx } => with_ctx(ctx, vec![alpha0, alpha1]),
            FilterSpec::ClassicalFir { taps } => doc.scalars = Some(VectorDoc::from_slice(taps)),
            FilterSpec::ClassicalArma1 { psi, phi } => {
                doc.scalars = Some(VectorDoc::from_slice(&[*psi, *phi]))
            }
            FilterSpec::NodeVariantFir { taps } => {
                doc.vectors = Some(taps.iter().map(VectorDoc::from_vector).collect())
            }
            FilterSpec::EdgeVariantFir { mats } | FilterSpec::ConstrainedEv { mats } => {
                doc.matrices = Some(mats.iter().map(SupportedMatrix::to_doc).collect())
            }
            FilterSpec::EvArma1 { phi0, phi1 } => {
                doc.matrices = Some(vec![phi0.to_doc(), phi1.to_doc()])
            }
        }
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Reads a spec written by [`FilterSpec::to_json`], re-checking every
    /// matrix against the support of `s`. Shift-invariant specs are bound to
    /// the eigendecomposition of `s` and the stored basis.
    pub fn from_json(json: &str, s: &ShiftOperator<T>) -> Result<Self> {
        let doc: FilterDoc = serde_json::from_str(json)?;
        if doc.field != T::FIELD {
            return Err(Error::Parse(format!(
                "filter stored over the {} field, expected {}",
                doc.field,
                T::FIELD
            )));
        }
        let missing = |what: &str| Error::Parse(format!("{} filter is missing '{what}'", doc.family));
        let supp = support_pattern(s);
        let spec = match doc.family {
            FilterFamily::Classical => FilterSpec::ClassicalFir {
                taps: doc.scalars.as_ref().ok_or_else(|| missing("scalars"))?.to_vec()?,
            },
            FilterFamily::ClassicalArma1 => {
                let v: Vec<T> = doc.scalars.as_ref().ok_or_else(|| missing("scalars"))?.to_vec()?;
                if v.len() != 2 {
                    return Err(Error::Parse("classical ARMA needs [psi, phi]".into()));
                }
                FilterSpec::ClassicalArma1 { psi: v[0], phi: v[1] }
            }
            FilterFamily::NodeVariant => FilterSpec::NodeVariantFir {
                taps: read_vectors(doc.vectors.as_ref().ok_or_else(|| missing("vectors"))?)?,
            },
            FilterFamily::EdgeVariant | FilterFamily::ConstrainedEv | FilterFamily::EvArma1 => {
                let mut mats = doc
                    .matrices
                    .as_ref()
                    .ok_or_else(|| missing("matrices"))?
                    .iter()
                    .map(|m| SupportedMatrix::from_doc(m, &supp))
                    .collect::<Result<Vec<_>>>()?;
                match doc.family {
                    FilterFamily::EdgeVariant => FilterSpec::EdgeVariantFir { mats },
                    FilterFamily::ConstrainedEv => FilterSpec::ConstrainedEv { mats },
                    _ => {
                        if mats.len() != 2 {
                            return Err(Error::Parse("EV ARMA needs [Φ₀, Φ₁]".into()));
                        }
                        let phi1 = mats.pop().expect("two matrices");
                        let phi0 = mats.pop().expect("two matrices");
                        FilterSpec::EvArma1 { phi0, phi1 }
                    }
                }
            }
            FilterFamily::Siev | FilterFamily::Sicev | FilterFamily::Sieva1 => {
                let mut vecs = read_vectors(doc.vectors.as_ref().ok_or_else(|| missing("vectors"))?)?;
                let dec = eigendecompose(s)?;
                let rank_tol = doc.rank_tol.unwrap_or(DEFAULT_RANK_TOL);
                let ctx = match &doc.basis {
                    Some(b) => ShiftInvariantBasis::with_stored_basis(dec, supp, b.to_matrix()?, rank_tol)?,
                    None => ShiftInvariantBasis::from_parts(dec, supp, rank_tol)?,
                };
                match doc.family {
                    FilterFamily::Siev if !vecs.is_empty() => {
                        let alpha0 = vecs.remove(0);
                        FilterSpec::Siev {
                            alpha0,
                            alphas: vecs,
                            ctx,
                        }
                    }
                    FilterFamily::Sicev => FilterSpec::Sicev { alphas: vecs, ctx },
                    FilterFamily::Sieva1 if vecs.len() == 2 => {
                        let alpha1 = vecs.pop().expect("two vectors");
                        let alpha0 = vecs.pop().expect("two vectors");
                        FilterSpec::Sieva1 { alpha0, alpha1, ctx }
                    }
                    _ => return Err(Error::Parse(format!("malformed {} coefficients", doc.family))),
                }
            }
        };
        if spec.order() != doc.order {
            return Err(Error::Parse(format!(
                "stored order {} disagrees with coefficients (order {})",
                doc.order,
                spec.order()
            )));
        }
        spec.validate(s)?;
        Ok(spec)
    }
}

fn check_context<T: Scalar>(ctx: &ShiftInvariantBasis<T>, s: &ShiftOperator<T>) -> Result<()> {
    if ctx.n() != s.n() {
        return Err(Error::dim(s.n(), ctx.n()));
    }
    Ok(())
}

fn read_vectors<T: Scalar>(docs: &[VectorDoc]) -> Result<Vec<DVector<T>>> {
    docs.iter().map(VectorDoc::to_vector).collect()
}

/// A filter in explicit matrix form plus an optional additive offset matrix
/// (the order-zero term of SIEV filters).
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitFilter<T: Scalar> {
    pub offset: Option<SupportedMatrix<T>>,
    pub spec: FilterSpec<T>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterDoc {
    family: FilterFamily,
    field: FieldKind,
    order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scalars: Option<VectorDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vectors: Option<Vec<VectorDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrices: Option<Vec<TripletDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis: Option<MatrixDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rank_tol: Option<f64>,
}
