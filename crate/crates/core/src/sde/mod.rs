//! Switching diffusion `dX = α(X,θ)ds + σ(X,θ)dW`, its age and discount
//! processes, and Monte Carlo estimation of the stopping payoff
//! `J = E[∫_0^τ e^{-ρ_s} Π(X_s,θ_s) ds − e^{-ρ_τ} h(X_τ,θ_τ)]`.

mod mc;
mod path;
mod payoff;
mod policy;

use thiserror::Error;

use crate::chain::ChainError;
use crate::probcfg::expr::{EvalError, Expression};

pub use mc::{mc_estimate, mc_estimate_policies, mc_run, McEstimate, McSettings, Sample, WelfordAccumulator};
pub use path::{simulate_path, simulate_path_into, DiffusionPath, Exit, PathPoint, StartState};
pub use payoff::{evaluate_payoff, PayoffOutcome};
pub use policy::{Immediate, Never, StopAtTime, StoppingRule, ThresholdRule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error("initial state x0={x0} lies outside the closed region [{lo}, {hi}]")]
    StartOutsideRegion { x0: f64, lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("coefficient evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum End {
    Lower,
    Upper,
}

/// Whether a grid endpoint is a genuine boundary point of the region or an
/// artificial cut of an unbounded (or unreachable) end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndKind {
    Boundary,
    Truncation,
}

/// State space and coefficients of the switching diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSpec {
    /// Open interval `D = (a, b)`; endpoints may be infinite.
    pub domain: (f64, f64),
    /// Region `I` on which the problem is posed.
    pub region: (f64, f64),
    /// Computational cut points for infinite or unreachable region ends.
    pub truncation: (Option<f64>, Option<f64>),
    pub drift: Vec<Expression>,
    pub vol: Vec<Expression>,
}

impl DiffusionSpec {
    /// Closed interval on which paths are simulated and grids are laid out.
    pub fn interval(&self) -> (f64, f64) {
        (
            self.truncation.0.unwrap_or(self.region.0),
            self.truncation.1.unwrap_or(self.region.1),
        )
    }

    pub fn end_kind(&self, end: End) -> EndKind {
        let (lo, hi) = self.interval();
        let genuine = match end {
            End::Lower => lo == self.region.0 && self.region.0 > self.domain.0,
            End::Upper => hi == self.region.1 && self.region.1 < self.domain.1,
        };
        if genuine {
            EndKind::Boundary
        } else {
            EndKind::Truncation
        }
    }

    #[inline]
    pub fn drift(&self, x: f64, i: usize) -> Result<f64, EvalError> {
        self.drift[i].eval(x, 0.0)
    }

    #[inline]
    pub fn vol(&self, x: f64, i: usize) -> Result<f64, EvalError> {
        self.vol[i].eval(x, 0.0)
    }
}

/// Running payoff `Π`, abandonment cost `h` and discount rate `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSpec {
    pub running: Vec<Expression>,
    pub terminal_cost: Vec<Expression>,
    pub discount: Vec<Expression>,
    /// Claimed lower bounds `ε_i` of the discount rate.
    pub epsilon: Vec<f64>,
    /// Optional value data at truncation ends (`[lower, upper]`, per regime).
    /// Without it a truncation end acts like a forced stop paying `−h`.
    pub far_field: [Vec<Option<Expression>>; 2],
}

impl PayoffSpec {
    #[inline]
    pub fn running(&self, x: f64, i: usize) -> Result<f64, EvalError> {
        self.running[i].eval(x, 0.0)
    }

    #[inline]
    pub fn cost(&self, x: f64, i: usize) -> Result<f64, EvalError> {
        self.terminal_cost[i].eval(x, 0.0)
    }

    #[inline]
    pub fn discount(&self, x: f64, i: usize) -> Result<f64, EvalError> {
        self.discount[i].eval(x, 0.0)
    }

    /// Reward for stopping at `x` in regime `i`: `−h(x,i)`.
    #[inline]
    pub fn stop_reward(&self, x: f64, i: usize) -> Result<f64, EvalError> {
        Ok(-self.cost(x, i)?)
    }

    /// Reward collected when a path reaches the computational boundary.
    pub fn exit_reward(&self, end: End, x: f64, i: usize) -> Result<f64, EvalError> {
        let slot = match end {
            End::Lower => 0,
            End::Upper => 1,
        };
        match self.far_field[slot].get(i).and_then(Option::as_ref) {
            Some(e) => e.eval(x, 0.0),
            None => self.stop_reward(x, i),
        }
    }

    pub fn min_epsilon(&self) -> f64 {
        self.epsilon.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
