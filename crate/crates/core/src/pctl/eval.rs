use std::fmt;

use thiserror::Error;

use crate::checker::{self, CheckError, Semantics, SolverConfig};
use crate::model::{LabeledDtmc, ModelError, StateSet};

use super::ast::{Bound, PathFormula, RewardFormula, StateFormula};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error("state {0} out of range")]
    StateOutOfRange(usize),
    #[error("numerical query {0} may only appear at the top level")]
    NestedQuery(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub solver: SolverConfig,
    pub semantics: Semantics,
}

/// Result of evaluating a formula in one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalValue {
    Bool(bool),
    /// May be infinite for reward queries.
    Number(f64),
}

impl EvalValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            EvalValue::Number(v) => Some(*v),
            EvalValue::Bool(_) => None,
        }
    }
}

impl fmt::Display for EvalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalValue::Bool(b) => write!(f, "{b}"),
            EvalValue::Number(v) if v.is_infinite() => f.write_str("inf"),
            EvalValue::Number(v) => write!(f, "{v}"),
        }
    }
}

/// Evaluates `formula` in state `from`.
///
/// Numerical queries (`=?`) yield a number; every other formula yields the
/// truth value in `from`.
pub fn evaluate(
    formula: &StateFormula,
    model: &LabeledDtmc,
    from: usize,
    options: &EvalOptions,
) -> Result<EvalValue, EvalError> {
    if from >= model.num_states() {
        return Err(EvalError::StateOutOfRange(from));
    }
    let ev = Evaluator { model, options };
    match formula {
        StateFormula::Prob { bound: Bound::Query, path } => Ok(EvalValue::Number(ev.path_values(path)?[from])),
        StateFormula::Reward { structure, bound: Bound::Query, formula } => {
            let v = ev.reward_values(structure, formula)?;
            match v[from] {
                Some(x) => Ok(EvalValue::Number(x)),
                None => Err(CheckError::NullConditioning { state: from }.into()),
            }
        }
        other => Ok(EvalValue::Bool(ev.sat(other)?.contains(from))),
    }
}

/// Values of a numerical query in every state (`None` where a conditional
/// reward is undefined).
pub fn query_values(
    formula: &StateFormula,
    model: &LabeledDtmc,
    options: &EvalOptions,
) -> Result<Vec<Option<f64>>, EvalError> {
    let ev = Evaluator { model, options };
    match formula {
        StateFormula::Prob { path, .. } => Ok(ev.path_values(path)?.into_iter().map(Some).collect()),
        StateFormula::Reward { structure, formula, .. } => ev.reward_values(structure, formula),
        other => Ok(ev.sat(other)?.indicator().into_iter().map(Some).collect()),
    }
}

/// States satisfying a (non-query) state formula.
pub fn satisfying_states(
    formula: &StateFormula,
    model: &LabeledDtmc,
    options: &EvalOptions,
) -> Result<StateSet, EvalError> {
    Evaluator { model, options }.sat(formula)
}

struct Evaluator<'a> {
    model: &'a LabeledDtmc,
    options: &'a EvalOptions,
}

impl Evaluator<'_> {
    fn sat(&self, f: &StateFormula) -> Result<StateSet, EvalError> {
        let n = self.model.num_states();
        Ok(match f {
            StateFormula::True => StateSet::full(n),
            StateFormula::Ap(name) => self.model.labeled(name)?,
            StateFormula::And(a, b) => self.sat(a)?.intersection(&self.sat(b)?),
            StateFormula::Not(a) => self.sat(a)?.complement(),
            StateFormula::Prob { bound: Bound::Compare(cmp, p), path } => {
                let v = self.path_values(path)?;
                StateSet::from_fn(n, |s| cmp.holds(v[s], *p))
            }
            StateFormula::Reward { structure, bound: Bound::Compare(cmp, q), formula } => {
                let v = self.reward_values(structure, formula)?;
                // an undefined conditional expectation satisfies no bound
                StateSet::from_fn(n, |s| v[s].is_some_and(|x| cmp.holds(x, *q)))
            }
            query => return Err(EvalError::NestedQuery(query.to_string())),
        })
    }

    fn path_values(&self, path: &PathFormula) -> Result<Vec<f64>, EvalError> {
        let cfg = &self.options.solver;
        Ok(match path {
            PathFormula::Next(a) => checker::next_prob(self.model, &self.sat(a)?),
            PathFormula::Until(a, b) => checker::until_prob(self.model, &self.sat(a)?, &self.sat(b)?, cfg)?,
            PathFormula::Eventually(a) => checker::reach_prob(self.model, &self.sat(a)?, cfg)?,
            PathFormula::EventuallyNested(a, b) => {
                checker::nested_reach_prob(self.model, &self.sat(a)?, &self.sat(b)?, cfg)?
            }
        })
    }

    fn reward_values(&self, structure: &str, formula: &RewardFormula) -> Result<Vec<Option<f64>>, EvalError> {
        let reward = self.model.reward(structure)?;
        let cfg = &self.options.solver;
        let strict = self.options.semantics == Semantics::Strict;
        let some = |v: Vec<f64>| v.into_iter().map(Some).collect();
        Ok(match formula {
            RewardFormula::Cumulative(t) => some(checker::bounded_cumulative(self.model, reward, *t)),
            RewardFormula::Reach(a) => {
                let target = self.sat(a)?;
                if strict {
                    some(checker::reach_reward(self.model, reward, &target, cfg)?)
                } else {
                    checker::conditional_reach_reward(self.model, reward, &target, cfg)?
                }
            }
            RewardFormula::ReachNested(a, b) => {
                let (a, b) = (self.sat(a)?, self.sat(b)?);
                if strict {
                    some(checker::nested_reach_reward_strict(self.model, reward, &a, &b, cfg)?)
                } else {
                    checker::nested_reach_reward(self.model, reward, &a, &b, cfg)?
                }
            }
        })
    }
}
