//! Edge-variant graph filters.
//!
//! The crate covers the whole pipeline around distributed graph filtering:
//!
//! * [`graph`]: graphs, shift operators, spectral decompositions, graph Fourier
//!   transforms and the zero pattern of `S + I`.
//! * [`nullspace`]: the constraint system whose kernel parametrizes
//!   fixed-support matrices sharing the eigenbasis of the shift.
//! * [`filters`]: the nine filter families (classical, node-variant,
//!   edge-variant, constrained edge-variant, their shift-invariant subfamilies
//!   and the ARMA₁ variants) with dense and recursive evaluation.
//! * [`design`]: least-squares, block-coordinate-descent and Prony-style
//!   fitting algorithms.
//! * [`distsim`]: a round-synchronous message-passing simulator with locality
//!   certificates and cost accounting.
//! * [`experiments`]: desk-scale drivers producing result tables.
//! * [`io`]: file codecs (edge lists, Matrix Market, CSV, JSON).

// `!(x <= tol)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod distsim;
pub mod error;
pub mod experiments;
pub mod field;
pub mod filters;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod nullspace;

pub use error::{Error, Result};
pub use field::{FieldKind, Scalar};

pub use graph::{
    build_shift, eigendecompose, normalize_spectral, support_pattern, Graph, GraphSignal,
    ShiftKind, ShiftOperator, SpectralDecomposition, SupportPattern,
};

pub use filters::{FilterFamily, FilterSpec, SupportedMatrix};
pub use nullspace::{NullspaceBasis, ShiftInvariantBasis};
