//! Block linear-matrix-inequality problems with free variables:
//!
//! ```text
//! minimize / maximize   c^T s + offset
//! subject to            A s = b
//!                       F_k(s) = sum_j s_j A_{k,j} - C_k  >= 0   (PSD)
//! ```
//!
//! solved by a dense primal-dual interior-point method after eliminating the
//! equality constraints, plus reading and writing the SDPA sparse format.

mod check;
mod ipm;
mod presolve;
mod problem;
pub mod sdpa;

pub use check::{check_solution, CheckReport};
pub use ipm::{solve, IterInfo, Solution, SolveReport, Status, Tolerances};
pub use presolve::{presolve, Presolved};
pub use problem::{BlockEntry, ConicProblem, LinearRow, PsdBlock, Sense};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpError {
    #[error("total PSD dimension {total} exceeds the configured cap {cap}")]
    PsdCapExceeded { total: usize, cap: usize },
    #[error("equality constraints are inconsistent (residual {residual:e} on row {row})")]
    InconsistentEqualities { row: usize, residual: f64 },
    #[error("variable index {index} out of range for {n_vars} variables")]
    VariableOutOfRange { index: usize, n_vars: usize },
    #[error("block {block} entry ({i}, {j}) outside a {size}x{size} block")]
    EntryOutOfRange {
        block: usize,
        i: usize,
        j: usize,
        size: usize,
    },
    #[error("solution vector has length {got}, expected {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("SDPA parse error on line {line}: {msg}")]
    SdpaParse { line: usize, msg: String },
}
