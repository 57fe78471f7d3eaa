//! Finite-difference solvers for the coupled HJB variational inequalities
//! `min{−(L̃v) − Π, v + h} = 0`.
//!
//! The homogeneous system is solved on a spatial grid by projected SOR. The
//! age-dependent system is truncated at a maximal age `Υ` and solved by
//! backward sweeps in age inside a fixed point on the age-zero slice.

mod field;
mod grid;
mod operator;
mod residual;
mod solve;

use thiserror::Error;

use crate::chain::ChainError;
use crate::probcfg::EvalError;

pub use field::{extract_policy, BoundaryPoint, FieldPolicy, FreeBoundary, ValueField};
pub use grid::{AgeGrid, Grid1D};
pub use operator::{assemble_operator, NodeData, RegimeOperator};
pub use residual::{residual_check, ResidualReport};
pub use solve::{
    continuation_step, solve_homogeneous, solve_homogeneous_ordered, solve_problem,
    solve_truncated_inhomogeneous, Solution, SolveOptions, MAX_OUTER,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HjbError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("volatility of regime {} is {sigma} at x = {x}", regime + 1)]
    NegativeVolatility { regime: usize, x: f64, sigma: f64 },
    #[error(
        "row at x = {x} of regime {} is not a strictly dominant M-matrix row (discount r = {r})",
        regime + 1
    )]
    NotMMatrix { regime: usize, x: f64, r: f64 },
    #[error("{0}")]
    Mode(String),
    #[error("coefficient evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("field file: {0}")]
    Csv(String),
}

impl From<csv::Error> for HjbError {
    fn from(e: csv::Error) -> Self {
        HjbError::Csv(e.to_string())
    }
}

impl From<std::io::Error> for HjbError {
    fn from(e: std::io::Error) -> Self {
        HjbError::Csv(e.to_string())
    }
}
