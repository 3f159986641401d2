//! Filter fitting: least squares, block-coordinate descent and the
//! two-step ARMA designs.
//!
//! All fits use the Frobenius norm for matrix targets and the Euclidean norm
//! for modal targets.

mod arma;
mod bcd;
mod factor;
mod ls;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::filters::{FilterFamily, FilterSpec};
use crate::graph::SpectralDecomposition;
use crate::linalg;

pub use arma::{design_ev_arma1, design_sieva1};
pub use bcd::{design_ev_bcd, design_siev_bcd, BcdInit, BcdOptions};
pub use factor::factor_polynomial;
pub use ls::{
    cev_design_system, cev_theta, design_cev_ls, design_classical_ls, design_classical_matrix_ls,
    design_nv_ls, design_sicev_ls, sicev_regression_matrix, CevOptions, DesignSystem,
};

/// `‖H̃ − H‖²_F / ‖H̃‖²_F`.
pub fn nse<T: Scalar>(target: &DMatrix<T>, approx: &DMatrix<T>) -> Result<f64> {
    if target.shape() != approx.shape() {
        return Err(Error::dim(target.len(), approx.len()));
    }
    let den = linalg::frobenius_sq(target);
    if den == 0.0 {
        return Err(Error::Degenerate("NSE of a zero target".into()));
    }
    Ok(linalg::frobenius_sq(&(target - approx)) / den)
}

/// `‖h̃ − h‖² / ‖h̃‖²` for modal responses.
pub fn modal_nse<T: Scalar>(target: &DVector<T>, approx: &DVector<T>) -> Result<f64> {
    if target.len() != approx.len() {
        return Err(Error::dim(target.len(), approx.len()));
    }
    let den = target.norm_squared();
    if den == 0.0 {
        return Err(Error::Degenerate("NSE of a zero target".into()));
    }
    Ok((target - approx).norm_squared() / den)
}

/// What a design fits: an operator or a per-mode response.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignTarget<T: Scalar> {
    Matrix(DMatrix<T>),
    Modal(DVector<T>),
}

impl<T: Scalar> DesignTarget<T> {
    /// The operator, synthesizing `U diag(h̃) U⁻¹` for modal targets.
    pub fn to_matrix(&self, dec: &SpectralDecomposition<T>) -> Result<DMatrix<T>> {
        match self {
            DesignTarget::Matrix(m) => {
                check_finite_matrix(m)?;
                Ok(m.clone())
            }
            DesignTarget::Modal(h) => {
                if h.len() != dec.n() {
                    return Err(Error::dim(dec.n(), h.len()));
                }
                check_finite_vector(h)?;
                Ok(dec.synthesize_diagonal(h))
            }
        }
    }

    /// The response, taking `diag(U⁻¹ H̃ U)` for matrix targets.
    pub fn to_modal(&self, dec: &SpectralDecomposition<T>) -> Result<DVector<T>> {
        match self {
            DesignTarget::Matrix(m) => {
                if m.shape() != (dec.n(), dec.n()) {
                    return Err(Error::dim(dec.n(), m.nrows()));
                }
                check_finite_matrix(m)?;
                Ok(dec.modal_projection(m))
            }
            DesignTarget::Modal(h) => {
                check_finite_vector(h)?;
                Ok(h.clone())
            }
        }
    }
}

fn check_finite_matrix<T: Scalar>(m: &DMatrix<T>) -> Result<()> {
    if m.iter().all(|v| v.modulus().is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter("target has non-finite entries".into()))
    }
}

fn check_finite_vector<T: Scalar>(v: &DVector<T>) -> Result<()> {
    if v.iter().all(|x| x.modulus().is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter("target has non-finite entries".into()))
    }
}

/// Norm constraint bookkeeping for the ARMA designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub delta: f64,
    /// `‖Φ₁‖₂` (EV ARMA) or `‖B α₁‖_∞` (SIEVA1) after scaling.
    pub achieved: f64,
    pub margin: f64,
    /// Whether the least-squares feedback term had to be scaled down.
    pub scaled: bool,
}

#[derive(Debug, Clone)]
pub struct DesignReport<T: Scalar> {
    pub fitted: FilterSpec<T>,
    /// Matrix NSE for operator designs, modal NSE for designs that fit a
    /// response.
    pub nse: f64,
    pub iterations: usize,
    /// Objective `‖H̃ − H‖²` after every sweep, starting with the
    /// initialization (BCD only).
    pub objective_trace: Vec<f64>,
    pub rank_deficient: bool,
    pub ridge_applied: bool,
    pub feasibility: Option<Feasibility>,
    /// NSE of the linearized (modified) error (ARMA designs).
    pub modified_nse: Option<f64>,
    /// True NSE before the second-step refit (ARMA designs).
    pub nse_before_refit: Option<f64>,
}

impl<T: Scalar> DesignReport<T> {
    pub(crate) fn new(fitted: FilterSpec<T>, nse: f64) -> Self {
        DesignReport {
            fitted,
            nse,
            iterations: 1,
            objective_trace: Vec::new(),
            rank_deficient: false,
            ridge_applied: false,
            feasibility: None,
            modified_nse: None,
            nse_before_refit: None,
        }
    }

    /// Everything except the coefficients (which use the filter format).
    pub fn to_json(&self) -> Result<String> {
        let doc = ReportDoc {
            family: self.fitted.family(),
            order: self.fitted.order(),
            nse: self.nse,
            iterations: self.iterations,
            objective_trace: self.objective_trace.clone(),
            rank_deficient: self.rank_deficient,
            ridge_applied: self.ridge_applied,
            feasibility: self.feasibility,
            modified_nse: self.modified_nse,
            nse_before_refit: self.nse_before_refit,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportDoc {
    family: FilterFamily,
    order: usize,
    nse: f64,
    iterations: usize,
    objective_trace: Vec<f64>,
    rank_deficient: bool,
    ridge_applied: bool,
    feasibility: Option<Feasibility>,
    modified_nse: Option<f64>,
    nse_before_refit: Option<f64>,
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nse_hand_values() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(nse(&i2, &i2).unwrap(), 0.0);
        assert_eq!(nse(&i2, &DMatrix::zeros(2, 2)).unwrap(), 1.0);
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(nse(&i2, &h).unwrap(), 0.5);
        assert!(nse(&DMatrix::<f64>::zeros(2, 2), &h).is_err());
    }
}
