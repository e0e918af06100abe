//! Numerical engines behind PCTL evaluation.
//!
//! Probability engines return one value per state. Reward engines come in two
//! flavours: the standard ("strict") semantics where any positive chance of
//! missing the target makes the expectation infinite, and a conditional
//! semantics that takes the expectation over the paths that do reach the
//! target (computed on the Doob-transformed chain).
//!
//! Reward accumulated "until" a target counts every state strictly before the
//! first target visit and every transition into it, never the state reward of
//! the target itself.

mod graph;
mod prob;
mod reward;
mod solve;

pub use graph::{backward_reach, prob01, prob01_until, Prob01};
pub use prob::{nested_reach_prob, next_prob, reach_prob, until_prob};
pub use reward::{
    bounded_cumulative, conditional_reach_reward, nested_first_hit_reward, nested_product, nested_reach_reward,
    nested_reach_reward_strict, reach_reward, NestedProduct,
};
pub use solve::{FixedPointSystem, DIRECT_LIMIT};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("solver did not converge (residual {residual:e}{})", .iterations.map(|i| format!(" after {i} iterations")).unwrap_or_default())]
    NonConvergence { residual: f64, iterations: Option<usize> },
    #[error("linear system is singular")]
    Singular,
    #[error("conditioning on null event at state {state}")]
    NullConditioning { state: usize },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    /// Direct elimination up to [`DIRECT_LIMIT`] unknowns, Gauss-Seidel above.
    #[default]
    Auto,
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { method: SolverMethod::Auto, tolerance: 1e-10, max_iterations: 1_000_000 }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<(), CheckError> {
        if !(self.tolerance > 0.0) {
            return Err(CheckError::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(CheckError::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Which semantics reward queries use when the target may be missed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Semantics {
    /// Expectation over the paths that reach the target.
    #[default]
    Conditional,
    /// Infinite whenever the target is missed with positive probability.
    Strict,
}

impl std::fmt::Display for Semantics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Semantics::Conditional => "conditional",
            Semantics::Strict => "strict",
        })
    }
}

impl std::str::FromStr for Semantics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "conditional" => Ok(Semantics::Conditional),
            "strict" => Ok(Semantics::Strict),
            other => Err(format!("unknown semantics {other:?} (expected conditional|strict)")),
        }
    }
}
