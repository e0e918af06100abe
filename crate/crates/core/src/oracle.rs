//! Monte Carlo estimation of path properties by direct simulation.
//!
//! Only the model's transition rows, labels and rewards are used; none of the
//! numerical checker code is involved. Traces are simulated in batches of
//! [`BATCH`]; batch `b` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream
//! `b`, so results do not depend on the thread count.
//!
//! A trace stops once every query is resolved, at an absorbing state, or at
//! the horizon. Unresolved probability queries count as failures in
//! `estimate` and as successes in `upper`; unresolved reward queries are
//! excluded from the conditional mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{LabeledDtmc, RewardStructure, StateSet};
use crate::pctl::{satisfying_states, Bound, EvalError, EvalOptions, PathFormula, RewardFormula, StateFormula};

pub const BATCH: usize = 4096;
pub const DEFAULT_HORIZON: usize = 100_000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("no sampled path satisfied the conditioning event")]
    NoQualifyingPaths,
    #[error("invalid oracle configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub traces: usize,
    pub seed: u64,
    pub horizon: usize,
}

impl OracleConfig {
    pub fn new(traces: usize, seed: u64) -> Self {
        OracleConfig { traces, seed, horizon: DEFAULT_HORIZON }
    }
}

/// A path event or accumulation evaluated on each trace.
#[derive(Debug, Clone)]
pub enum Query {
    /// `F target`
    Reach(StateSet),
    /// `safe U target`
    Until { safe: StateSet, target: StateSet },
    /// `X target`
    Next(StateSet),
    /// `F (a & F b)`
    NestedProb { a: StateSet, b: StateSet },
    /// Reward until `target`, averaged over paths that reach it.
    ReachReward { reward: RewardStructure, target: StateSet },
    /// Reward until `F (a & F b)` completes, averaged over paths where it does.
    NestedReward { reward: RewardStructure, a: StateSet, b: StateSet },
    /// Reward until the first `a`, averaged over paths satisfying `F (a & F b)`.
    NestedFirstHit { reward: RewardStructure, a: StateSet, b: StateSet },
    /// Reward over the first `steps` transitions.
    Cumulative { reward: RewardStructure, steps: usize },
}

impl Query {
    fn is_probability(&self) -> bool {
        matches!(self, Query::Reach(_) | Query::Until { .. } | Query::Next(_) | Query::NestedProb { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Fraction of traces that hit the horizon with the query unresolved.
    pub truncated_fraction: f64,
    /// Probability estimate counting truncated traces as successes; equal to
    /// `estimate` for reward queries.
    pub upper: f64,
    /// Traces contributing to the mean: all traces for probabilities and
    /// cumulative rewards, qualifying ones for conditional rewards.
    pub qualifying: usize,
    pub traces: usize,
}

impl Estimate {
    /// `|value - estimate| <= k * std_error`, with a floor for zero-variance samples.
    pub fn agrees(&self, value: f64, k: f64) -> bool {
        if value.is_infinite() {
            return false;
        }
        (value - self.estimate).abs() <= (k * self.std_error).max(1e-9 * value.abs().max(1.0))
    }
}

/// Mergeable per-query tallies.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    hits: u64,
    misses: u64,
    truncated: u64,
    mean: f64,
    m2: f64,
}

impl Tally {
    fn push(&mut self, x: f64) {
        self.hits += 1;
        let d = x - self.mean;
        self.mean += d / self.hits as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(mut self, o: Tally) -> Tally {
        let n = self.hits + o.hits;
        if n > 0 {
            let d = o.mean - self.mean;
            let (a, b) = (self.hits as f64, o.hits as f64);
            self.mean += d * b / n as f64;
            self.m2 += o.m2 + d * d * a * b / n as f64;
        }
        self.hits = n;
        self.misses += o.misses;
        self.truncated += o.truncated;
        self
    }
}

/// Per-trace progress of one query.
#[derive(Debug, Clone, Copy)]
struct Progress {
    done: bool,
    phase: bool,
    acc: f64,
}

struct Sampler {
    succ: Vec<Vec<usize>>,
    cdf: Vec<Vec<f64>>,
    absorbing: Vec<bool>,
}

impl Sampler {
    fn new(model: &LabeledDtmc) -> Self {
        let n = model.num_states();
        let mut succ = Vec::with_capacity(n);
        let mut cdf = Vec::with_capacity(n);
        let mut absorbing = Vec::with_capacity(n);
        for s in 0..n {
            let row = model.row(s);
            let mut acc = 0.0;
            succ.push(row.iter().map(|&(t, _)| t).collect());
            cdf.push(
                row.iter()
                    .map(|&(_, p)| {
                        acc += p;
                        acc
                    })
                    .collect(),
            );
            absorbing.push(row.len() == 1 && row[0].0 == s);
        }
        Sampler { succ, cdf, absorbing }
    }

    /// Index of the sampled successor within the row of `s`.
    fn next(&self, s: usize, rng: &mut ChaCha8Rng) -> usize {
        let cdf = &self.cdf[s];
        let u: f64 = rng.gen::<f64>() * cdf[cdf.len() - 1];
        cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
    }

    /// `table[s][i]`: reward earned by taking the `i`-th transition out of `s`.
    fn reward_table(&self, r: &RewardStructure) -> Vec<Vec<f64>> {
        self.succ
            .iter()
            .enumerate()
            .map(|(s, row)| row.iter().map(|&t| r.state(s) + r.transition(s, t)).collect())
            .collect()
    }
}

fn reward_of(q: &Query) -> Option<&RewardStructure> {
    match q {
        Query::ReachReward { reward, .. }
        | Query::NestedReward { reward, .. }
        | Query::NestedFirstHit { reward, .. }
        | Query::Cumulative { reward, .. } => Some(reward),
        _ => None,
    }
}

/// Outcome of visiting `s` at time `k`: `Some(Some(x))` resolved with value
/// `x`, `Some(None)` resolved as failure, `None` still open.
fn visit(q: &Query, table: &[Vec<f64>], pr: &mut Progress, s: usize, k: usize, absorbing: bool) -> Option<Option<f64>> {
    match q {
        Query::Reach(t) => {
            if t.contains(s) {
                Some(Some(1.0))
            } else if absorbing {
                Some(None)
            } else {
                None
            }
        }
        Query::Until { safe, target } => {
            if target.contains(s) {
                Some(Some(1.0))
            } else if !safe.contains(s) || absorbing {
                Some(None)
            } else {
                None
            }
        }
        Query::Next(t) => (k == 1).then(|| t.contains(s).then_some(1.0)),
        Query::NestedProb { a, b } | Query::NestedReward { a, b, .. } | Query::NestedFirstHit { a, b, .. } => {
            if !pr.phase && a.contains(s) {
                pr.phase = true;
            }
            if pr.phase && b.contains(s) {
                let value = if matches!(q, Query::NestedProb { .. }) { 1.0 } else { pr.acc };
                Some(Some(value))
            } else if absorbing {
                Some(None)
            } else {
                None
            }
        }
        Query::ReachReward { target, .. } => {
            if target.contains(s) {
                Some(Some(pr.acc))
            } else if absorbing {
                Some(None)
            } else {
                None
            }
        }
        Query::Cumulative { steps, .. } => {
            if k == *steps {
                Some(Some(pr.acc))
            } else if absorbing {
                // the remaining steps all take the self-loop
                let rest = (*steps - k) as f64 * table[s][0];
                Some(Some(pr.acc + rest))
            } else {
                None
            }
        }
    }
}

fn accumulate(q: &Query, table: &[Vec<f64>], pr: &mut Progress, s: usize, i: usize) {
    match q {
        Query::ReachReward { .. } | Query::NestedReward { .. } | Query::Cumulative { .. } => pr.acc += table[s][i],
        Query::NestedFirstHit { .. } if !pr.phase => pr.acc += table[s][i],
        _ => {}
    }
}

struct Shared<'a> {
    initial: usize,
    sampler: Sampler,
    queries: &'a [Query],
    tables: Vec<Vec<Vec<f64>>>,
}

fn run_batch(sh: &Shared, traces: usize, batch: u64, cfg: &OracleConfig) -> Vec<Tally> {
    let (sampler, queries, tables) = (&sh.sampler, sh.queries, &sh.tables);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(batch);
    let mut tallies = vec![Tally::default(); queries.len()];
    let mut progress = vec![Progress { done: false, phase: false, acc: 0.0 }; queries.len()];
    for _ in 0..traces {
        progress.iter_mut().for_each(|p| *p = Progress { done: false, phase: false, acc: 0.0 });
        let mut open = queries.len();
        let mut s = sh.initial;
        let mut k = 0;
        loop {
            let absorbing = sampler.absorbing[s];
            for (i, q) in queries.iter().enumerate() {
                if progress[i].done {
                    continue;
                }
                if let Some(result) = visit(q, &tables[i], &mut progress[i], s, k, absorbing) {
                    progress[i].done = true;
                    open -= 1;
                    match result {
                        Some(x) => tallies[i].push(x),
                        None => tallies[i].misses += 1,
                    }
                }
            }
            if open == 0 {
                break;
            }
            if k == cfg.horizon {
                for (i, p) in progress.iter().enumerate() {
                    if !p.done {
                        tallies[i].truncated += 1;
                    }
                }
                break;
            }
            let j = sampler.next(s, &mut rng);
            for (i, q) in queries.iter().enumerate() {
                if !progress[i].done {
                    accumulate(q, &tables[i], &mut progress[i], s, j);
                }
            }
            s = sampler.succ[s][j];
            k += 1;
        }
    }
    tallies
}

fn finish(q: &Query, t: &Tally, n: usize) -> Result<Estimate, OracleError> {
    let nf = n as f64;
    let truncated_fraction = t.truncated as f64 / nf;
    if q.is_probability() {
        // hits all carry the value 1
        let p = t.hits as f64 / nf;
        return Ok(Estimate {
            estimate: p,
            std_error: (p * (1.0 - p) / nf).sqrt(),
            truncated_fraction,
            upper: (t.hits + t.truncated) as f64 / nf,
            qualifying: n,
            traces: n,
        });
    }
    if t.hits == 0 {
        return Err(OracleError::NoQualifyingPaths);
    }
    let k = t.hits as f64;
    let var = if t.hits > 1 { t.m2 / (k - 1.0) } else { 0.0 };
    Ok(Estimate {
        estimate: t.mean,
        std_error: (var / k).sqrt(),
        truncated_fraction,
        upper: t.mean,
        qualifying: t.hits as usize,
        traces: n,
    })
}

/// Estimates every query from one shared set of traces.
pub fn mc_estimate_many(
    model: &LabeledDtmc,
    queries: &[Query],
    cfg: &OracleConfig,
) -> Result<Vec<Result<Estimate, OracleError>>, OracleError> {
    if cfg.traces < 1 || cfg.horizon < 1 {
        return Err(OracleError::Config("traces and horizon must be at least 1".into()));
    }
    let sampler = Sampler::new(model);
    let tables = queries.iter().map(|q| reward_of(q).map(|r| sampler.reward_table(r)).unwrap_or_default()).collect();
    let sh = Shared { initial: model.initial(), sampler, queries, tables };
    let batches = cfg.traces.div_ceil(BATCH);
    let tallies = (0..batches)
        .into_par_iter()
        .map(|b| {
            let size = BATCH.min(cfg.traces - b * BATCH);
            run_batch(&sh, size, b as u64, cfg)
        })
        .reduce(
            || vec![Tally::default(); queries.len()],
            |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
        );
    Ok(queries.iter().zip(&tallies).map(|(q, t)| finish(q, t, cfg.traces)).collect())
}

pub fn mc_estimate(model: &LabeledDtmc, query: &Query, cfg: &OracleConfig) -> Result<Estimate, OracleError> {
    mc_estimate_many(model, std::slice::from_ref(query), cfg)?.remove(0)
}

/// The simulation query matching a top-level numerical PCTL query, or `None`
/// for threshold tests. Only the state subformulas are evaluated here.
pub fn query_for_formula(formula: &StateFormula, model: &LabeledDtmc) -> Result<Option<Query>, EvalError> {
    let opts = EvalOptions::default();
    let sat = |f: &StateFormula| satisfying_states(f, model, &opts);
    Ok(Some(match formula {
        StateFormula::Prob { bound: Bound::Query, path } => match path {
            PathFormula::Eventually(t) => Query::Reach(sat(t)?),
            PathFormula::Until(a, b) => Query::Until { safe: sat(a)?, target: sat(b)? },
            PathFormula::Next(t) => Query::Next(sat(t)?),
            PathFormula::EventuallyNested(a, b) => Query::NestedProb { a: sat(a)?, b: sat(b)? },
        },
        StateFormula::Reward { structure, bound: Bound::Query, formula } => {
            let reward = model.reward(structure)?.clone();
            match formula {
                RewardFormula::Reach(t) => Query::ReachReward { reward, target: sat(t)? },
                RewardFormula::ReachNested(a, b) => Query::NestedReward { reward, a: sat(a)?, b: sat(b)? },
                RewardFormula::Cumulative(k) => Query::Cumulative { reward, steps: *k as usize },
            }
        }
        _ => return Ok(None),
    }))
}
