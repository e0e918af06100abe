//! Property invariants, each checked over random inputs by a proptest runner.

use depcheck_core::checker::*;
use depcheck_core::dependability::{self, DependabilityConfig, PropertyValue};
use depcheck_core::estimation::{count_transitions, Outcome, RiskMap};
use depcheck_core::pctl::{parse, satisfying_states, EvalOptions, StateFormula};
use depcheck_core::simenv::{self, SimConfig};
use depcheck_core::{prism, StateSet};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

type Check = fn(&mut TestRunner) -> Result<(), String>;

fn run<S: Strategy>(runner: &mut TestRunner, s: S, f: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    runner.run(&s, f).map_err(|e| e.to_string())
}

fn models() -> impl Strategy<Value = depcheck_core::LabeledDtmc> {
    (any::<u64>(), 2usize..=12).prop_map(|(seed, n)| model_from_seed(seed, n))
}

fn products() -> impl Strategy<Value = (Vec<Vec<f64>>, f64)> {
    (any::<u64>(), 0.0..3.0f64, 1.0..500.0f64).prop_map(|(seed, w, l)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (random_failure(&mut rng, w), l)
    })
}

fn in_unit(x: f64) -> bool {
    (-1e-12..=1.0 + 1e-12).contains(&x)
}

fn parser_round_trip(r: &mut TestRunner) -> Result<(), String> {
    run(r, formula(), |f: StateFormula| {
        let text = f.to_string();
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(back, f, "{}", text);
        Ok(())
    })
}

fn satisfaction_distributes(r: &mut TestRunner) -> Result<(), String> {
    run(r, models(), |m| {
        let opts = EvalOptions::default();
        let sat = |t: &str| satisfying_states(&parse(t).unwrap(), &m, &opts).unwrap();
        let (a, b) = (set(&m, "a"), set(&m, "b"));
        prop_assert_eq!(sat("a & b"), a.intersection(&b));
        prop_assert_eq!(sat("!a"), a.complement());
        prop_assert_eq!(sat("!(a & !b)"), a.intersection(&b.complement()).complement());
        Ok(())
    })
}

fn probability_bounds(r: &mut TestRunner) -> Result<(), String> {
    run(r, models(), |m| {
        let cfg = SolverConfig::default();
        let (a, b) = (set(&m, "a"), set(&m, "b"));
        let rew = m.reward("r").unwrap();
        let vectors = [
            reach_prob(&m, &b, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?,
            until_prob(&m, &a, &b, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?,
            next_prob(&m, &b),
            nested_reach_prob(&m, &a, &b, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?,
        ];
        for v in &vectors {
            prop_assert!(v.iter().all(|&x| in_unit(x)), "{:?}", v);
        }
        let strict = reach_reward(&m, rew, &b, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(strict.iter().all(|&x| x >= 0.0 && !x.is_nan()));
        let cond = conditional_reach_reward(&m, rew, &b, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(cond.iter().flatten().all(|&x| x >= 0.0 && x.is_finite()));
        Ok(())
    })
}

fn nested_below_min(r: &mut TestRunner) -> Result<(), String> {
    run(r, models(), |m| {
        let cfg = SolverConfig::default();
        let (a, b) = (set(&m, "a"), set(&m, "b"));
        let nested = nested_reach_prob(&m, &a, &b, &cfg).unwrap();
        let pa = reach_prob(&m, &a, &cfg).unwrap();
        let pb = reach_prob(&m, &b, &cfg).unwrap();
        for s in 0..m.num_states() {
            prop_assert!(nested[s] <= pa[s].min(pb[s]) + 1e-12, "state {}: {} vs {} {}", s, nested[s], pa[s], pb[s]);
        }
        Ok(())
    })
}

fn conditional_matches_strict_on_s1(r: &mut TestRunner) -> Result<(), String> {
    run(r, models(), |m| {
        let cfg = SolverConfig::default();
        let b = set(&m, "b");
        let rew = m.reward("r").unwrap();
        let one = prob01(&m, &b).one;
        let strict = reach_reward(&m, rew, &b, &cfg).unwrap();
        let cond = conditional_reach_reward(&m, rew, &b, &cfg).unwrap();
        for s in one.iter() {
            let c = cond[s].ok_or_else(|| TestCaseError::fail("undefined on S1"))?;
            prop_assert!((c - strict[s]).abs() <= 1e-9 * c.abs().max(1.0), "{} vs {}", c, strict[s]);
        }
        let sinks = StateSet::from_fn(m.num_states(), |s| m.is_absorbing(s));
        let strict = reach_reward(&m, rew, &sinks, &cfg).unwrap();
        let cond = conditional_reach_reward(&m, rew, &sinks, &cfg).unwrap();
        for s in 0..m.num_states() {
            prop_assert!((cond[s].unwrap() - strict[s]).abs() <= 1e-9 * strict[s].max(1.0));
        }
        Ok(())
    })
}

fn product_is_valid(r: &mut TestRunner) -> Result<(), String> {
    run(r, products(), |(f, l)| {
        let p = product_of(&f, l);
        prop_assert!(p.model.validate().is_empty(), "{:?}", p.model.validate());
        prop_assert_eq!(p.model.num_states(), 10);
        Ok(())
    })
}

fn dependability_ranges(r: &mut TestRunner) -> Result<(), String> {
    run(r, products(), |(f, l)| {
        let m = product_of(&f, l).model;
        let cfg = DependabilityConfig::default();
        let rep = dependability::report(&m, &cfg, None, None, None).unwrap();
        prop_assert!(in_unit(rep.robustness), "robustness {}", rep.robustness);
        prop_assert!(in_unit(rep.safety));
        if let PropertyValue::Value(v) = rep.resilience {
            prop_assert!(in_unit(v), "resilience {}", v);
        }
        let crash = reach_prob(&m, &set(&m, "crash"), &SolverConfig::default()).unwrap()[m.initial()];
        prop_assert!((rep.safety - (1.0 - crash)).abs() <= 1e-12, "{} vs {}", rep.safety, 1.0 - crash);
        Ok(())
    })
}

fn safety_monotone_in_crash(r: &mut TestRunner) -> Result<(), String> {
    run(r, (products(), 0.0..1.0f64, 0usize..4), |((f, l), delta, row)| {
        let cfg = DependabilityConfig::default();
        let before = dependability::safety(&product_of(&f, l).model, &cfg).unwrap();
        let mut g = f.clone();
        for j in 0..4 {
            let moved = g[row][j] * delta;
            g[row][j] -= moved;
            g[row][4] += moved;
        }
        let after = dependability::safety(&product_of(&g, l).model, &cfg).unwrap();
        prop_assert!(after <= before + 1e-12, "{} -> {}", before, after);
        Ok(())
    })
}

fn count_conservation(r: &mut TestRunner) -> Result<(), String> {
    run(r, (any::<u64>(), 1usize..40, 2.0..30.0f64), |(seed, n, l)| {
        let eps = sample_episodes(&planted_failure(), l, n, seed);
        let counts = count_transitions(&eps, &RiskMap::default()).unwrap();
        let crashes = eps.iter().filter(|e| e.outcome == Outcome::Crash).count() as u64;
        let expected: u64 = eps.iter().map(|e| e.len() as u64 - 1).sum::<u64>() + crashes;
        prop_assert_eq!(counts.total(), expected);
        Ok(())
    })
}

fn prism_round_trip(r: &mut TestRunner) -> Result<(), String> {
    run(r, (any::<u64>(), 2usize..=15), |(seed, n)| {
        let m = model_from_seed(seed, n);
        let back = prism::import(&prism::export(&m).unwrap().model).unwrap();
        for s in 0..n {
            prop_assert_eq!(back.row(s), m.row(s));
        }
        Ok(())
    })
}

fn simulator_episodes_are_valid(r: &mut TestRunner) -> Result<(), String> {
    run(r, (any::<u64>(), 0.0..2.0f64), |(seed, sigma)| {
        let cfg = SimConfig { sigma, seed, episodes: 1, ..SimConfig::default() };
        let eps = simenv::simulate(&cfg).unwrap();
        prop_assert!(eps[0].check().is_ok());
        prop_assert!(eps[0].outcome_consistent(0.0));
        prop_assert!(eps[0].len() <= cfg.max_steps + 1);
        Ok(())
    })
}

pub const INVARIANTS: &[(&str, Check)] = &[
    ("parser round trip", parser_round_trip),
    ("satisfaction distributes over and/not", satisfaction_distributes),
    ("probability bounds", probability_bounds),
    ("nested below min", nested_below_min),
    ("conditional equals strict on S1", conditional_matches_strict_on_s1),
    ("product validity", product_is_valid),
    ("dependability ranges and safety complement", dependability_ranges),
    ("safety monotone in crash probability", safety_monotone_in_crash),
    ("count conservation", count_conservation),
    ("prism round trip", prism_round_trip),
    ("simulator episode invariants", simulator_episodes_are_valid),
];

/// Runs invariant `name` over `cases` random inputs with a fixed RNG seed.
pub fn check(name: &str, cases: u32) -> Result<(), String> {
    let (_, f) = INVARIANTS.iter().find(|(n, _)| *n == name).expect("known invariant");
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(
        config,
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    f(&mut runner)
}
