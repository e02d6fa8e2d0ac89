//! Sparse multivariate polynomials over named variable blocks.

mod index;
mod parse;
mod poly;
mod space;

pub use index::{binomial, mono_basis, MonomialBasis, MultiIndex, MAX_DEGREE, MAX_DIM};
pub use poly::{AffineMap, Polynomial, VarImage};
pub use space::{z_name, VarKind, Variable, VariableSpace};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("polynomials live in different variable spaces")]
    SpaceMismatch,
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}
