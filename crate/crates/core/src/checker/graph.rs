//! Qualitative (graph-based) precomputation of probability-0 and probability-1 states.

use crate::model::{LabeledDtmc, StateSet};

/// States that can reach `target` through states in `through` (target included).
pub fn backward_reach(model: &LabeledDtmc, target: &StateSet, through: &StateSet) -> StateSet {
    let pred = model.predecessors();
    let mut seen = target.clone();
    let mut stack: Vec<usize> = target.iter().collect();
    while let Some(t) = stack.pop() {
        for &s in &pred[t] {
            if !seen.contains(s) && through.contains(s) {
                seen.insert(s);
                stack.push(s);
            }
        }
    }
    seen
}

/// Result of the prob-0/1 precomputation.
#[derive(Debug, Clone, PartialEq)]
pub struct Prob01 {
    /// Probability of the event is exactly 0.
    pub zero: StateSet,
    /// Probability of the event is exactly 1.
    pub one: StateSet,
}

/// Prob-0/1 sets for `safe U target`.
pub fn prob01_until(model: &LabeledDtmc, safe: &StateSet, target: &StateSet) -> Prob01 {
    let zero = backward_reach(model, target, safe).complement();
    let undecided = safe.difference(target);
    let not_one = backward_reach(model, &zero, &undecided);
    Prob01 { zero, one: not_one.complement() }
}

/// Prob-0/1 sets for eventually reaching `target`.
pub fn prob01(model: &LabeledDtmc, target: &StateSet) -> Prob01 {
    prob01_until(model, &StateSet::full(model.num_states()), target)
}
