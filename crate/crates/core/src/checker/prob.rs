use crate::model::{LabeledDtmc, StateSet};

use super::graph::{backward_reach, prob01_until};
use super::solve::FixedPointSystem;
use super::{CheckError, SolverConfig};

/// Solves `x_s = sum_t P(s,t) x_t` for the states in `unknown`, with `x` already
/// holding the fixed values of every other state.
fn solve_harmonic(
    model: &LabeledDtmc,
    unknown: &StateSet,
    mut x: Vec<f64>,
    config: &SolverConfig,
) -> Result<Vec<f64>, CheckError> {
    config.check()?;
    let vars: Vec<usize> = unknown.iter().collect();
    let mut var_of = vec![usize::MAX; model.num_states()];
    for (i, &s) in vars.iter().enumerate() {
        var_of[s] = i;
    }
    let mut coeffs = Vec::with_capacity(vars.len());
    let mut rhs = Vec::with_capacity(vars.len());
    for &s in &vars {
        let mut row = Vec::new();
        let mut b = 0.0;
        for &(t, p) in model.row(s) {
            if var_of[t] != usize::MAX {
                row.push((var_of[t], p));
            } else {
                b += p * x[t];
            }
        }
        coeffs.push(row);
        rhs.push(b);
    }
    let sol = FixedPointSystem { coeffs, rhs }.solve(config)?;
    for (i, &s) in vars.iter().enumerate() {
        x[s] = sol[i].clamp(0.0, 1.0);
    }
    Ok(x)
}

/// Probability of `safe U target` from every state.
pub fn until_prob(
    model: &LabeledDtmc,
    safe: &StateSet,
    target: &StateSet,
    config: &SolverConfig,
) -> Result<Vec<f64>, CheckError> {
    let qual = prob01_until(model, safe, target);
    let x = qual.one.indicator();
    let maybe = qual.zero.union(&qual.one).complement();
    solve_harmonic(model, &maybe, x, config)
}

/// Probability of eventually reaching `target` from every state.
pub fn reach_prob(model: &LabeledDtmc, target: &StateSet, config: &SolverConfig) -> Result<Vec<f64>, CheckError> {
    until_prob(model, &StateSet::full(model.num_states()), target, config)
}

/// Probability that the next state is in `target`.
pub fn next_prob(model: &LabeledDtmc, target: &StateSet) -> Vec<f64> {
    (0..model.num_states())
        .map(|s| {
            model
                .row(s)
                .iter()
                .filter(|(t, _)| target.contains(*t))
                .map(|(_, p)| p)
                .sum::<f64>()
                .min(1.0)
        })
        .collect()
}

/// Probability of visiting an `a`-state and, at or after that visit, a `b`-state.
///
/// Two stages: `y = P(F b)`, then the probability of first hitting `a` weighted
/// by `y` at the hit state.
pub fn nested_reach_prob(
    model: &LabeledDtmc,
    a: &StateSet,
    b: &StateSet,
    config: &SolverConfig,
) -> Result<Vec<f64>, CheckError> {
    let n = model.num_states();
    let y = reach_prob(model, b, config)?;
    let reaches_a = backward_reach(model, a, &StateSet::full(n));
    let mut x = vec![0.0; n];
    for s in a.iter() {
        x[s] = y[s];
    }
    let unknown = reaches_a.difference(a);
    solve_harmonic(model, &unknown, x, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn branch_probability() {
        let m = LabeledDtmc::new(names(3), 0, [(0, 1, 0.3), (0, 2, 0.7), (1, 1, 1.0), (2, 2, 1.0)]).unwrap();
        let x = reach_prob(&m, &StateSet::from_indices(3, [1]), &cfg()).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-15);
        assert_eq!(x[1], 1.0);
        assert_eq!(x[2], 0.0);
    }

    #[test]
    fn geometric_self_loop_reaches_surely() {
        let m = LabeledDtmc::new(names(2), 0, [(0, 0, 0.5), (0, 1, 0.5), (1, 1, 1.0)]).unwrap();
        let x = reach_prob(&m, &StateSet::from_indices(2, [1]), &cfg()).unwrap();
        assert_eq!(x[0], 1.0);
    }

    #[test]
    fn until_through_all_states_is_reachability() {
        let m = LabeledDtmc::new(
            names(4),
            0,
            [(0, 1, 0.5), (0, 2, 0.5), (1, 3, 0.4), (1, 0, 0.6), (2, 2, 1.0), (3, 3, 1.0)],
        )
        .unwrap();
        let t = StateSet::from_indices(4, [3]);
        let u = until_prob(&m, &StateSet::full(4), &t, &cfg()).unwrap();
        let r = reach_prob(&m, &t, &cfg()).unwrap();
        assert_eq!(u, r);
    }

    #[test]
    fn until_blocked_by_unsafe_states_is_zero() {
        // the only route to 2 passes through 1, which is not safe
        let m = LabeledDtmc::new(names(3), 0, [(0, 1, 1.0), (1, 2, 1.0), (2, 2, 1.0)]).unwrap();
        let u = until_prob(&m, &StateSet::from_indices(3, [0]), &StateSet::from_indices(3, [2]), &cfg()).unwrap();
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn until_four_state_hand_model() {
        // 0 -> 1 (0.5) | 2 (0.5); 1 -> 3 (0.4) | 0 (0.6); 2 trap; 3 target.
        // safe = {0, 1}: x0 = 0.5 x1, x1 = 0.4 + 0.6 x0 => x0 = 0.2 / 0.7
        let m = LabeledDtmc::new(
            names(4),
            0,
            [(0, 1, 0.5), (0, 2, 0.5), (1, 3, 0.4), (1, 0, 0.6), (2, 2, 1.0), (3, 3, 1.0)],
        )
        .unwrap();
        let u = until_prob(&m, &StateSet::from_indices(4, [0, 1]), &StateSet::from_indices(4, [3]), &cfg()).unwrap();
        assert!((u[0] - 0.2 / 0.7).abs() < 1e-14);
        assert!((u[1] - (0.4 + 0.6 * 0.2 / 0.7)).abs() < 1e-14);
    }

    #[test]
    fn next_step_sums() {
        let m = LabeledDtmc::new(names(3), 0, [(0, 1, 0.3), (0, 2, 0.7), (1, 1, 1.0), (2, 2, 1.0)]).unwrap();
        let x = next_prob(&m, &StateSet::from_indices(3, [1]));
        assert_eq!(x, vec![0.3, 1.0, 0.0]);
    }

    #[test]
    fn nested_with_equal_sets_is_reachability() {
        let m = LabeledDtmc::new(
            names(4),
            0,
            [(0, 1, 0.5), (0, 2, 0.5), (1, 3, 0.4), (1, 0, 0.6), (2, 2, 1.0), (3, 3, 1.0)],
        )
        .unwrap();
        let b = StateSet::from_indices(4, [1, 3]);
        let nested = nested_reach_prob(&m, &b, &b, &cfg()).unwrap();
        let r = reach_prob(&m, &b, &cfg()).unwrap();
        for s in 0..4 {
            assert!((nested[s] - r[s]).abs() < 1e-14);
        }
    }

    #[test]
    fn nested_with_unreachable_b_is_zero() {
        let m = LabeledDtmc::new(names(3), 0, [(0, 1, 1.0), (1, 1, 1.0), (2, 2, 1.0)]).unwrap();
        let x = nested_reach_prob(&m, &StateSet::from_indices(3, [1]), &StateSet::from_indices(3, [2]), &cfg()).unwrap();
        assert_eq!(x, vec![0.0; 3]);
    }
}
