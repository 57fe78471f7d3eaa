//! Independent oracles and statistical cross-checks.
//!
//! The closed-form put oracle shares nothing with the grid solver. The Monte
//! Carlo checks tie a solved value field to the path simulator by running
//! the field's own stopping rule, and the benchmark corpus bundles the
//! shipped problem files with the checks and tolerances each one must meet.

mod checks;
mod corpus;
mod oracle;

pub use checks::{
    dpp_statistical_check, point_label, policy_value_check, reject_degenerate_discount, threshold_from_field,
    write_report, ReportRow,
};
pub use corpus::{
    audit_rows, corpus, find_case, put_grid_ladder, run_case, verify_problem, BenchmarkCase, Expectation,
    LadderRung, OracleKind, Provenance,
};
pub use oracle::{perpetual_put_oracle, PutOracle};

use crate::hjb::HjbError;
use crate::probcfg::ValidationReport;
use crate::sde::SdeError;

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Validation(#[from] ValidationReport),
    #[error(transparent)]
    Hjb(#[from] HjbError),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error("{0}")]
    Oracle(String),
    #[error("report output: {0}")]
    Io(String),
}

impl From<csv::Error> for VerifyError {
    fn from(e: csv::Error) -> Self {
        VerifyError::Io(e.to_string())
    }
}

impl From<std::io::Error> for VerifyError {
    fn from(e: std::io::Error) -> Self {
        VerifyError::Io(e.to_string())
    }
}

impl From<crate::probcfg::EvalError> for VerifyError {
    fn from(e: crate::probcfg::EvalError) -> Self {
        VerifyError::Oracle(e.to_string())
    }
}
