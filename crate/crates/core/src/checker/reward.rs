use crate::model::{LabeledDtmc, RewardStructure, StateSet};

use super::graph::prob01;
use super::prob::{nested_reach_prob, reach_prob};
use super::solve::FixedPointSystem;
use super::{CheckError, SolverConfig};

/// Expected reward over the first `t` steps, `v_{k+1} = r_S + P (r_T + v_k)`.
pub fn bounded_cumulative(model: &LabeledDtmc, reward: &RewardStructure, t: u64) -> Vec<f64> {
    let n = model.num_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..t {
        for s in 0..n {
            next[s] = reward.state(s)
                + model
                    .row(s)
                    .iter()
                    .map(|&(u, p)| p * (reward.transition(s, u) + v[u]))
                    .sum::<f64>();
        }
        std::mem::swap(&mut v, &mut next);
    }
    v
}

/// Solves the reward equations for `unknown` under weights `w(s, t)`.
///
/// Successors outside `unknown` contribute their value from `known`; states
/// with zero weight are skipped.
fn solve_reward_system(
    model: &LabeledDtmc,
    reward: &RewardStructure,
    unknown: &[usize],
    known: &[f64],
    weight: impl Fn(usize, usize, f64) -> f64,
    config: &SolverConfig,
) -> Result<Vec<f64>, CheckError> {
    config.check()?;
    let mut var_of = vec![usize::MAX; model.num_states()];
    for (i, &s) in unknown.iter().enumerate() {
        var_of[s] = i;
    }
    let mut coeffs = Vec::with_capacity(unknown.len());
    let mut rhs = Vec::with_capacity(unknown.len());
    for &s in unknown {
        let mut row = Vec::new();
        let mut b = reward.state(s);
        for &(t, p) in model.row(s) {
            let w = weight(s, t, p);
            if w == 0.0 {
                continue;
            }
            b += w * reward.transition(s, t);
            if var_of[t] != usize::MAX {
                row.push((var_of[t], w));
            } else {
                b += w * known[t];
            }
        }
        coeffs.push(row);
        rhs.push(b);
    }
    let sol = FixedPointSystem { coeffs, rhs }.solve(config)?;
    Ok(sol.into_iter().map(|v| v.max(0.0)).collect())
}

/// Expected reward accumulated until first reaching `target`, infinite on
/// states that miss `target` with positive probability.
pub fn reach_reward(
    model: &LabeledDtmc,
    reward: &RewardStructure,
    target: &StateSet,
    config: &SolverConfig,
) -> Result<Vec<f64>, CheckError> {
    let one = prob01(model, target).one;
    let mut x: Vec<f64> = (0..model.num_states())
        .map(|s| if one.contains(s) { 0.0 } else { f64::INFINITY })
        .collect();
    solve_on_almost_sure(model, reward, target, &one, &mut x, config)?;
    Ok(x)
}

/// Fills `x` on `one \ target` with the unconditioned reward equations.
fn solve_on_almost_sure(
    model: &LabeledDtmc,
    reward: &RewardStructure,
    target: &StateSet,
    one: &StateSet,
    x: &mut [f64],
    config: &SolverConfig,
) -> Result<(), CheckError> {
    let unknown: Vec<usize> = one.difference(target).iter().collect();
    let sol = solve_reward_system(model, reward, &unknown, x, |_, _, p| p, config)?;
    for (i, &s) in unknown.iter().enumerate() {
        x[s] = sol[i];
    }
    Ok(())
}

/// Expected reward until `target`, conditioned on reaching it.
///
/// `None` marks states from which `target` is unreachable. States that reach
/// `target` almost surely are solved with exactly the same system as
/// [`reach_reward`], so the two agree bit-for-bit there.
pub fn conditional_reach_reward(
    model: &LabeledDtmc,
    reward: &RewardStructure,
    target: &StateSet,
    config: &SolverConfig,
) -> Result<Vec<Option<f64>>, CheckError> {
    let n = model.num_states();
    let y = reach_prob(model, target, config)?;
    let one = prob01(model, target).one;
    let mut x = vec![0.0; n];
    solve_on_almost_sure(model, reward, target, &one, &mut x, config)?;

    let partial: Vec<usize> = (0..n).filter(|&s| !one.contains(s) && y[s] > 0.0).collect();
    let sol = solve_reward_system(model, reward, &partial, &x, |s, t, p| p * y[t] / y[s], config)?;
    for (i, &s) in partial.iter().enumerate() {
        x[s] = sol[i];
    }
    Ok((0..n).map(|s| if y[s] > 0.0 { Some(x[s]) } else { None }).collect())
}

/// Chain tracking whether an `a`-state has been visited yet.
///
/// State `s + phase * n` of the product is model state `s` with `phase = 1`
/// once some `a`-state has been entered (the entered state included). The
/// product target is `b` in phase 1, so reaching it is exactly the event
/// "some `b`-state at or after the first `a`-visit".
pub struct NestedProduct {
    pub model: LabeledDtmc,
    pub target: StateSet,
    pub reward: Option<RewardStructure>,
    n: usize,
}

impl NestedProduct {
    /// Product index of the start state for model state `s`.
    pub fn entry(&self, s: usize, a: &StateSet) -> usize {
        if a.contains(s) {
            s + self.n
        } else {
            s
        }
    }
}

pub fn nested_product(
    model: &LabeledDtmc,
    reward: Option<&RewardStructure>,
    a: &StateSet,
    b: &StateSet,
) -> NestedProduct {
    let n = model.num_states();
    let mut names = Vec::with_capacity(2 * n);
    for phase in 0..2 {
        for s in 0..n {
            names.push(format!("{}#{phase}", model.name(s)));
        }
    }
    let mut triples = Vec::with_capacity(2 * model.num_transitions());
    for phase in 0..2 {
        for s in 0..n {
            for &(t, p) in model.row(s) {
                let next_phase = if phase == 1 || a.contains(t) { 1 } else { 0 };
                triples.push((s + phase * n, t + next_phase * n, p));
            }
        }
    }
    let init = model.initial();
    let init = if a.contains(init) { init + n } else { init };
    let product = LabeledDtmc::new(names, init, triples).expect("product indices are in range");
    let product_reward = reward.map(|r| {
        let mut pr = RewardStructure::zero(r.name.clone(), 2 * n);
        for phase in 0..2 {
            for s in 0..n {
                pr.state_rewards[s + phase * n] = r.state(s);
            }
        }
        for (&(from, to), &v) in &r.transition_rewards {
            for phase in 0..2 {
                let next_phase = if phase == 1 || a.contains(to) { 1 } else { 0 };
                pr.transition_rewards.insert((from + phase * n, to + next_phase * n), v);
            }
        }
        pr
    });
    let target = StateSet::from_fn(2 * n, |i| i >= n && b.contains(i - n));
    NestedProduct { model: product, target, reward: product_reward, n }
}

/// Expected reward until the event "an `a`-state, then (at or after it) a
/// `b`-state" completes, conditioned on the event happening.
///
/// The accumulation stops at the first `b`-visit that follows the first
/// `a`-visit. `None` where the event has probability zero.
pub fn nested_reach_reward(
    model: &LabeledDtmc,
    reward: &RewardStructure,
    a: &StateSet,
    b: &StateSet,
    config: &SolverConfig,
) -> Result<Vec<Option<f64>>, CheckError> {
    let prod = nested_product(model, Some(reward), a, b);
    let values = conditional_reach_reward(
        &prod.model,
        prod.reward.as_ref().expect("reward was supplied"),
        &prod.target,
        config,
    )?;
    Ok((0..model.num_states()).map(|s| values[prod.entry(s, a)]).collect())
}

/// Strict-semantics counterpart of [`nested_reach_reward`]: infinite wherever
/// the nested event can fail.
pub fn nested_reach_reward_strict(
    model: &LabeledDtmc,
    reward: &RewardStructure,
    a: &StateSet,
    b: &StateSet,
    config: &SolverConfig,
) -> Result<Vec<f64>, CheckError> {
    let prod = nested_product(model, Some(reward), a, b);
    let values = reach_reward(&prod.model, prod.reward.as_ref().expect("reward was supplied"), &prod.target, config)?;
    Ok((0..model.num_states()).map(|s| values[prod.entry(s, a)]).collect())
}

/// Expected reward until the first `a`-visit, conditioned on the nested event
/// "an `a`-state followed (at or after it) by a `b`-state".
///
/// The chain is conditioned with `h = P(F (a & F b))`, which is harmonic off
/// `a`; accumulation stops at the first `a`-state.
pub fn nested_first_hit_reward(
    model: &LabeledDtmc,
    reward: &RewardStructure,
    a: &StateSet,
    b: &StateSet,
    config: &SolverConfig,
) -> Result<Vec<Option<f64>>, CheckError> {
    let n = model.num_states();
    let h = nested_reach_prob(model, a, b, config)?;
    let unknown: Vec<usize> = (0..n).filter(|&s| !a.contains(s) && h[s] > 0.0).collect();
    let known = vec![0.0; n];
    let sol = solve_reward_system(model, reward, &unknown, &known, |s, t, p| p * h[t] / h[s], config)?;
    let mut x: Vec<Option<f64>> = (0..n).map(|s| if h[s] > 0.0 { Some(0.0) } else { None }).collect();
    for (i, &s) in unknown.iter().enumerate() {
        x[s] = Some(sol[i]);
    }
    Ok(x)
}
