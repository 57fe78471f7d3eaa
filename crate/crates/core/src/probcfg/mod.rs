//! Problem files and the coefficient expression language.

pub mod expr;
mod problem;

pub use expr::{EvalError, ExprError, Expression, Var};
pub use problem::{
    discount_issues, load_problem, load_problem_file, load_problem_with, GridSettings, Issue, McDefaults,
    Mode, ProblemSpec, SolverSettings, ValidationReport,
};
