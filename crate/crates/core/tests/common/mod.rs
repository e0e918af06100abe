//! Shared fixtures for integration and acceptance tests.
#![allow(dead_code)]

pub mod invariants;

use depcheck_core::estimation::{build_product, Episode, MissionStage, Outcome, ProductModel, RiskMap};
use depcheck_core::pctl::{Bound, Comparison, PathFormula, RewardFormula, StateFormula};
use depcheck_core::{LabeledDtmc, RewardStructure, StateSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LABELS: [&str; 3] = ["a", "b", "c"];

/// Random chain over `n` states whose last `absorbing` states are absorbing.
///
/// Every other state moves to a higher index with probability at least
/// `forward`, so absorption is certain and fast. Labels `a`, `b`, `c` are
/// assigned with probability `label_p`; reward `r` has state rewards in [0, 2)
/// and transition rewards on roughly a third of the edges.
pub fn random_model(rng: &mut impl Rng, n: usize, absorbing: usize, forward: f64, label_p: f64) -> LabeledDtmc {
    assert!(absorbing >= 1 && absorbing < n);
    let transient = n - absorbing;
    let mut triples = Vec::new();
    for s in 0..n {
        if s >= transient {
            triples.push((s, s, 1.0));
            continue;
        }
        let mut succ: Vec<usize> = Vec::new();
        let fwd = rng.gen_range(s + 1..n);
        succ.push(fwd);
        for _ in 0..rng.gen_range(0..3) {
            let t = rng.gen_range(0..n);
            if !succ.contains(&t) {
                succ.push(t);
            }
        }
        let rest: Vec<f64> = succ[1..].iter().map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = rest.iter().sum();
        let f = if rest.is_empty() { 1.0 } else { rng.gen_range(forward..1.0) };
        triples.push((s, fwd, f));
        for (t, w) in succ[1..].iter().zip(&rest) {
            triples.push((s, *t, (1.0 - f) * w / total));
        }
    }
    let names = (0..n).map(|i| format!("s{i}")).collect();
    let mut m = LabeledDtmc::new(names, 0, triples).unwrap().renormalized();
    for p in LABELS {
        m.declare_proposition(p);
        for s in 0..n {
            if rng.gen_bool(label_p) {
                m.add_label(s, p);
            }
        }
    }
    let mut r = RewardStructure::zero("r", n);
    for s in 0..n {
        r.state_rewards[s] = if s < transient { rng.gen_range(0.0..2.0) } else { 0.0 };
        for &(t, _) in m.row(s) {
            if s < transient && rng.gen_bool(0.3) {
                r.transition_rewards.insert((s, t), rng.gen_range(0.0..1.0));
            }
        }
    }
    m.add_reward(r);
    m
}

pub fn model_from_seed(seed: u64, n: usize) -> LabeledDtmc {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let absorbing = rng.gen_range(1..=(n / 3).max(1));
    random_model(&mut rng, n, absorbing, 0.2, 0.35)
}

pub fn set(m: &LabeledDtmc, p: &str) -> StateSet {
    m.labeled(p).unwrap()
}

/// Two-state mission-stage chain with `step` transition rewards out of `k0`.
pub fn mission_chain(l_mis: f64) -> LabeledDtmc {
    let q = 1.0 / l_mis;
    let mut m =
        LabeledDtmc::new(vec!["k0".into(), "k1".into()], 0, [(0, 0, 1.0 - q), (0, 1, q), (1, 1, 1.0)]).unwrap();
    m.add_label(0, "progressing");
    m.add_label(1, "terminated");
    let mut step = RewardStructure::zero("step", 2);
    step.transition_rewards.insert((0, 0), 1.0);
    step.transition_rewards.insert((0, 1), 1.0);
    m.add_reward(step);
    m
}

/// Forward propagation of path-prefix probability mass up to `horizon`.
///
/// Each prefix is classified on its last state as satisfied, violated or still
/// open; open mass is carried to the next step. Returns the satisfied mass and
/// the open mass left at the horizon, which bounds the truncation error.
pub fn enumerate_event(
    m: &LabeledDtmc,
    phases: usize,
    initial_phase: impl Fn(usize) -> usize,
    advance: impl Fn(usize, usize) -> usize,
    resolve: impl Fn(usize, usize) -> Option<bool>,
    horizon: usize,
) -> (f64, f64) {
    let n = m.num_states();
    let mut open = vec![0.0; n * phases];
    let s0 = m.initial();
    open[initial_phase(s0) * n + s0] = 1.0;
    let mut hit = 0.0;
    for _ in 0..=horizon {
        let mut next = vec![0.0; n * phases];
        let mut remaining = 0.0;
        for ph in 0..phases {
            for s in 0..n {
                let mass = open[ph * n + s];
                if mass == 0.0 {
                    continue;
                }
                match resolve(s, ph) {
                    Some(true) => hit += mass,
                    Some(false) => {}
                    None => {
                        remaining += mass;
                        for &(t, p) in m.row(s) {
                            next[advance(ph, t) * n + t] += mass * p;
                        }
                    }
                }
            }
        }
        if remaining < 1e-15 {
            return (hit, remaining);
        }
        open = next;
    }
    (hit, open.iter().sum())
}

pub fn enum_until(m: &LabeledDtmc, safe: &StateSet, target: &StateSet, horizon: usize) -> (f64, f64) {
    enumerate_event(
        m,
        1,
        |_| 0,
        |_, _| 0,
        |s, _| {
            if target.contains(s) {
                Some(true)
            } else if !safe.contains(s) || m.is_absorbing(s) {
                Some(false)
            } else {
                None
            }
        },
        horizon,
    )
}

pub fn enum_reach(m: &LabeledDtmc, target: &StateSet, horizon: usize) -> (f64, f64) {
    enum_until(m, &StateSet::full(m.num_states()), target, horizon)
}

/// `F (a & F b)`; phase 1 once an `a`-state has been visited.
pub fn enum_nested(m: &LabeledDtmc, a: &StateSet, b: &StateSet, horizon: usize) -> (f64, f64) {
    let phase = |ph: usize, s: usize| usize::from(ph == 1 || a.contains(s));
    enumerate_event(
        m,
        2,
        |s| phase(0, s),
        phase,
        |s, ph| {
            if ph == 1 && b.contains(s) {
                Some(true)
            } else if m.is_absorbing(s) {
                Some(false)
            } else {
                None
            }
        },
        horizon,
    )
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Planted failure chain for m = 3 (levels N, B1, B2, B3, C).
pub fn planted_failure() -> Vec<Vec<f64>> {
    vec![
        vec![0.80, 0.15, 0.04, 0.00, 0.01],
        vec![0.30, 0.50, 0.15, 0.04, 0.01],
        vec![0.10, 0.30, 0.40, 0.15, 0.05],
        vec![0.05, 0.10, 0.30, 0.45, 0.10],
        vec![0.00, 0.00, 0.00, 0.00, 1.00],
    ]
}

/// A clearance inside the band of `level` under `rm`.
pub fn clearance_for(rm: &RiskMap, level: usize, rng: &mut impl Rng) -> f64 {
    let c = &rm.thresholds;
    match level {
        0 => rng.gen_range(c[0] + 0.01..c[0] + 2.0),
        l if l == rm.crash_level() => 0.0,
        l => {
            let hi = c[l - 1];
            let lo = c.get(l).copied().unwrap_or(0.0);
            rng.gen_range(lo + 1e-6..hi)
        }
    }
}

/// Episodes whose risk levels follow `failure` from `s_N`, each step ending
/// the mission with probability `1 / l_mis`.
pub fn sample_episodes(failure: &[Vec<f64>], l_mis: f64, count: usize, seed: u64) -> Vec<Episode> {
    let rm = RiskMap::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let crash = rm.crash_level();
    (0..count)
        .map(|_| {
            let mut level = 0;
            let mut cl = vec![clearance_for(&rm, 0, &mut rng)];
            loop {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut next = failure[level].len() - 1;
                for (j, p) in failure[level].iter().enumerate() {
                    acc += p;
                    if u < acc {
                        next = j;
                        break;
                    }
                }
                // the crash itself is carried by the outcome, not by a step
                if next == crash {
                    return Episode::from_clearances(&cl, Outcome::Crash);
                }
                level = next;
                cl.push(clearance_for(&rm, level, &mut rng));
                if rng.gen_bool(1.0 / l_mis) {
                    return Episode::from_clearances(&cl, Outcome::Goal);
                }
            }
        })
        .collect()
}

/// Random row-stochastic failure matrix for m = 3 with an absorbing crash row.
pub fn random_failure(rng: &mut impl Rng, crash_weight: f64) -> Vec<Vec<f64>> {
    (0..5)
        .map(|i| {
            if i == 4 {
                return vec![0.0, 0.0, 0.0, 0.0, 1.0];
            }
            let mut row: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
            row[4] *= crash_weight;
            let s: f64 = row.iter().sum();
            row.iter().map(|x| x / s).collect()
        })
        .collect()
}

pub fn product_of(failure: &[Vec<f64>], l_mis: f64) -> ProductModel {
    build_product(failure, MissionStage::new(l_mis).unwrap(), &RiskMap::default()).unwrap()
}

fn atom() -> impl Strategy<Value = StateFormula> {
    prop_oneof![
        3 => "[a-z][a-z0-9_]{0,4}"
            .prop_filter("reserved", |s| s != "true")
            .prop_map(StateFormula::Ap),
        1 => "[ -~]{1,6}".prop_map(StateFormula::Ap),
        1 => Just(StateFormula::True),
    ]
}

fn bound(query: bool) -> impl Strategy<Value = Bound> {
    let cmp = prop_oneof![Just(Comparison::Lt), Just(Comparison::Le), Just(Comparison::Gt), Just(Comparison::Ge)];
    let compare = (cmp, 0.0..1.0f64).prop_map(|(c, v)| Bound::Compare(c, v));
    if query {
        prop_oneof![Just(Bound::Query), compare].boxed()
    } else {
        compare.boxed()
    }
}

fn boxed(f: StateFormula) -> Box<StateFormula> {
    Box::new(f)
}

fn operator(inner: BoxedStrategy<StateFormula>, query: bool) -> BoxedStrategy<StateFormula> {
    let path = prop_oneof![
        inner.clone().prop_map(|a| PathFormula::Next(boxed(a))),
        (inner.clone(), inner.clone()).prop_map(|(a, b)| PathFormula::Until(boxed(a), boxed(b))),
        inner.clone().prop_map(|a| PathFormula::Eventually(boxed(a))),
        (inner.clone(), inner.clone()).prop_map(|(a, b)| PathFormula::EventuallyNested(boxed(a), boxed(b))),
    ];
    let reward = prop_oneof![
        (0u64..1000).prop_map(RewardFormula::Cumulative),
        inner.clone().prop_map(|a| RewardFormula::Reach(boxed(a))),
        (inner.clone(), inner).prop_map(|(a, b)| RewardFormula::ReachNested(boxed(a), boxed(b))),
    ];
    prop_oneof![
        (bound(query), path).prop_map(|(bound, path)| StateFormula::Prob { bound, path }),
        ("[ -~]{1,6}", bound(query), reward)
            .prop_map(|(structure, bound, formula)| StateFormula::Reward { structure, bound, formula }),
    ]
    .boxed()
}

/// Random PCTL state formulas; numerical queries appear only at the top.
pub fn formula() -> impl Strategy<Value = StateFormula> {
    let nested = atom().prop_recursive(4, 24, 2, |inner| {
        let inner = inner.boxed();
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| StateFormula::and(a, b)),
            inner.clone().prop_map(StateFormula::not),
            operator(inner, false),
        ]
    });
    let nested = nested.boxed();
    prop_oneof![2 => nested.clone(), 1 => operator(nested, true)]
}

pub const ENGINES: [&str; 9] = [
    "reach_prob",
    "until_prob",
    "next_prob",
    "nested_reach_prob",
    "bounded_cumulative",
    "reach_reward",
    "conditional_reach_reward",
    "nested_reach_reward",
    "nested_first_hit_reward",
];

/// Checker value and Monte Carlo estimate for every engine on one model.
pub fn engine_cases(
    m: &LabeledDtmc,
    traces: usize,
    seed: u64,
) -> Vec<(Option<f64>, Result<depcheck_core::oracle::Estimate, depcheck_core::oracle::OracleError>)> {
    use depcheck_core::checker::*;
    use depcheck_core::oracle::{mc_estimate_many, OracleConfig, Query};
    let cfg = SolverConfig::default();
    let (a, b) = (set(m, "a"), set(m, "b"));
    let sinks = StateSet::from_fn(m.num_states(), |s| m.is_absorbing(s));
    let r = m.reward("r").unwrap().clone();
    let s0 = m.initial();
    let checker = vec![
        Some(reach_prob(m, &a, &cfg).unwrap()[s0]),
        Some(until_prob(m, &a, &b, &cfg).unwrap()[s0]),
        Some(next_prob(m, &b)[s0]),
        Some(nested_reach_prob(m, &a, &b, &cfg).unwrap()[s0]),
        Some(bounded_cumulative(m, &r, 5)[s0]),
        Some(reach_reward(m, &r, &sinks, &cfg).unwrap()[s0]),
        conditional_reach_reward(m, &r, &b, &cfg).unwrap()[s0],
        nested_reach_reward(m, &r, &a, &b, &cfg).unwrap()[s0],
        nested_first_hit_reward(m, &r, &a, &b, &cfg).unwrap()[s0],
    ];
    let queries = vec![
        Query::Reach(a.clone()),
        Query::Until { safe: a.clone(), target: b.clone() },
        Query::Next(b.clone()),
        Query::NestedProb { a: a.clone(), b: b.clone() },
        Query::Cumulative { reward: r.clone(), steps: 5 },
        Query::ReachReward { reward: r.clone(), target: sinks },
        Query::ReachReward { reward: r.clone(), target: b.clone() },
        Query::NestedReward { reward: r.clone(), a: a.clone(), b: b.clone() },
        Query::NestedFirstHit { reward: r, a, b },
    ];
    let mc = mc_estimate_many(m, &queries, &OracleConfig::new(traces, seed)).unwrap();
    checker.into_iter().zip(mc).collect()
}

/// Agreement within `k` standard errors; both sides undefined also agrees.
pub fn case_agrees(
    case: &(Option<f64>, Result<depcheck_core::oracle::Estimate, depcheck_core::oracle::OracleError>),
    k: f64,
) -> bool {
    match case {
        (Some(v), Ok(e)) => e.agrees(*v, k),
        (None, Err(_)) => true,
        _ => false,
    }
}
