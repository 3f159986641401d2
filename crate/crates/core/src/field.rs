//! Scalar fields the toolkit is generic over.

use std::fmt;

use nalgebra::ComplexField;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Real,
    Complex,
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::Real => f.write_str("real"),
            FieldKind::Complex => f.write_str("complex"),
        }
    }
}

impl std::str::FromStr for FieldKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "real" => Ok(FieldKind::Real),
            "complex" => Ok(FieldKind::Complex),
            other => Err(crate::Error::Parse(format!("unknown field '{other}'"))),
        }
    }
}

/// Real or complex double precision.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {
    const FIELD: FieldKind;

    fn to_c64(self) -> Complex64;

    /// Narrows a complex number into this field. Returns `None` when the
    /// imaginary part exceeds `tol * max(1, |z|)` for the real field.
    fn from_c64(z: Complex64, tol: f64) -> Option<Self>;

    fn from_parts(re: f64, im: f64) -> Self;

    /// Standard normal draw (independent real and imaginary parts for complex).
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn of(x: f64) -> Self {
        Self::from_real(x)
    }
}

impl Scalar for f64 {
    const FIELD: FieldKind = FieldKind::Real;

    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }

    fn from_c64(z: Complex64, tol: f64) -> Option<Self> {
        (z.im.abs() <= tol * z.norm().max(1.0)).then_some(z.re)
    }

    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }

    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl Scalar for Complex64 {
    const FIELD: FieldKind = FieldKind::Complex;

    fn to_c64(self) -> Complex64 {
        self
    }

    fn from_c64(z: Complex64, _tol: f64) -> Option<Self> {
        Some(z)
    }

    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }

    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }
}
