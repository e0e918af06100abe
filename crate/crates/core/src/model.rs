//! Labeled discrete-time Markov chains with reward structures.
//!
//! A [`LabeledDtmc`] stores its transition matrix sparse and row-major. Every
//! state carries a stable name next to its index so that reports and model
//! files stay readable. Numerical side conditions (row sums, probability
//! ranges, reward signs) are not enforced at construction; they are reported
//! by [`LabeledDtmc::validate`] so callers can decide what to do with them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Row sums must be within this distance of 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model has no states")]
    Empty,
    #[error("duplicate state name {0:?}")]
    DuplicateState(String),
    #[error("unknown state {0:?}")]
    UnknownState(String),
    #[error("transition {from}->{to} references a state index outside 0..{n}")]
    IndexOutOfRange { from: usize, to: usize, n: usize },
    #[error("duplicate transition {from}->{to}")]
    DuplicateTransition { from: usize, to: usize },
    #[error("unknown atomic proposition {0:?}")]
    UnknownProposition(String),
    #[error("unknown reward structure {0:?}")]
    UnknownReward(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A set of states, indexed like the model it was computed on.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct StateSet(Vec<bool>);

impl StateSet {
    pub fn empty(n: usize) -> Self {
        StateSet(vec![false; n])
    }

    pub fn full(n: usize) -> Self {
        StateSet(vec![true; n])
    }

    pub fn from_indices(n: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::empty(n);
        for i in indices {
            set.insert(i);
        }
        set
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> bool) -> Self {
        StateSet((0..n).map(f).collect())
    }

    /// Number of states in the universe (not the cardinality).
    pub fn universe(&self) -> usize {
        self.0.len()
    }

    pub fn len(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|b| *b)
    }

    pub fn contains(&self, s: usize) -> bool {
        self.0[s]
    }

    pub fn insert(&mut self, s: usize) {
        self.0[s] = true;
    }

    pub fn remove(&mut self, s: usize) {
        self.0[s] = false;
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }

    pub fn complement(&self) -> Self {
        StateSet(self.0.iter().map(|b| !b).collect())
    }

    pub fn intersection(&self, other: &Self) -> Self {
        debug_assert_eq!(self.universe(), other.universe());
        StateSet(self.0.iter().zip(&other.0).map(|(a, b)| *a && *b).collect())
    }

    pub fn union(&self, other: &Self) -> Self {
        debug_assert_eq!(self.universe(), other.universe());
        StateSet(self.0.iter().zip(&other.0).map(|(a, b)| *a || *b).collect())
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.intersection(&other.complement())
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| !*a || *b)
    }

    pub fn indicator(&self) -> Vec<f64> {
        self.0.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Debug for StateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Boolean combination of atomic propositions.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    True,
    Ap(String),
    Not(Box<Predicate>),
    And(Box<Predicate>, Box<Predicate>),
}

impl Predicate {
    pub fn ap(name: impl Into<String>) -> Self {
        Predicate::Ap(name.into())
    }

    pub fn not(p: Predicate) -> Self {
        Predicate::Not(Box::new(p))
    }

    pub fn and(a: Predicate, b: Predicate) -> Self {
        Predicate::And(Box::new(a), Box::new(b))
    }
}

/// State and transition rewards. Transition rewards default to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardStructure {
    pub name: String,
    pub state_rewards: Vec<f64>,
    pub transition_rewards: BTreeMap<(usize, usize), f64>,
}

impl RewardStructure {
    pub fn zero(name: impl Into<String>, n: usize) -> Self {
        RewardStructure {
            name: name.into(),
            state_rewards: vec![0.0; n],
            transition_rewards: BTreeMap::new(),
        }
    }

    pub fn state(&self, s: usize) -> f64 {
        self.state_rewards[s]
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transition_rewards.get(&(from, to)).copied().unwrap_or(0.0)
    }
}

/// One invariant violation reported by [`LabeledDtmc::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { state: usize, sum: f64 },
    NegativeProbability { from: usize, to: usize, value: f64 },
    ProbabilityAboveOne { from: usize, to: usize, value: f64 },
    NonFiniteProbability { from: usize, to: usize },
    InitialOutOfRange { initial: usize, n: usize },
    UndeclaredProposition { state: usize, prop: String },
    NegativeStateReward { reward: String, state: usize, value: f64 },
    NegativeTransitionReward { reward: String, from: usize, to: usize, value: f64 },
    RewardOnMissingTransition { reward: String, from: usize, to: usize },
    RewardLength { reward: String, len: usize, n: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { state, sum } => {
                write!(f, "row {state} sums to {sum} (expected 1)")
            }
            Violation::NegativeProbability { from, to, value } => {
                write!(f, "negative probability {value} on {from}->{to}")
            }
            Violation::ProbabilityAboveOne { from, to, value } => {
                write!(f, "probability {value} above 1 on {from}->{to}")
            }
            Violation::NonFiniteProbability { from, to } => {
                write!(f, "non-finite probability on {from}->{to}")
            }
            Violation::InitialOutOfRange { initial, n } => {
                write!(f, "initial state {initial} out of range 0..{n}")
            }
            Violation::UndeclaredProposition { state, prop } => {
                write!(f, "state {state} labeled with undeclared proposition {prop:?}")
            }
            Violation::NegativeStateReward { reward, state, value } => {
                write!(f, "reward {reward:?}: negative state reward {value} at {state}")
            }
            Violation::NegativeTransitionReward { reward, from, to, value } => {
                write!(f, "reward {reward:?}: negative transition reward {value} on {from}->{to}")
            }
            Violation::RewardOnMissingTransition { reward, from, to } => {
                write!(f, "reward {reward:?}: transition reward on absent transition {from}->{to}")
            }
            Violation::RewardLength { reward, len, n } => {
                write!(f, "reward {reward:?}: {len} state rewards for {n} states")
            }
        }
    }
}

/// A finite DTMC with atomic-proposition labels and named reward structures.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDtmc {
    names: Vec<String>,
    initial: usize,
    /// Sparse rows sorted by target index.
    rows: Vec<Vec<(usize, f64)>>,
    labels: Vec<BTreeSet<String>>,
    propositions: BTreeSet<String>,
    rewards: BTreeMap<String, RewardStructure>,
}

impl LabeledDtmc {
    /// Builds a model from `(from, to, probability)` triples.
    ///
    /// Structural problems (dangling indices, duplicate entries or names) are
    /// errors. Numerical problems are left for [`validate`](Self::validate).
    pub fn new(
        names: Vec<String>,
        initial: usize,
        transitions: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, ModelError> {
        let n = names.len();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(ModelError::DuplicateState(name.clone()));
            }
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (from, to, p) in transitions {
            if from >= n || to >= n {
                return Err(ModelError::IndexOutOfRange { from, to, n });
            }
            rows[from].push((to, p));
        }
        for (from, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|(to, _)| *to);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(ModelError::DuplicateTransition { from, to: w[0].0 });
            }
        }
        Ok(LabeledDtmc {
            labels: vec![BTreeSet::new(); n],
            names,
            initial,
            rows,
            propositions: BTreeSet::new(),
            rewards: BTreeMap::new(),
        })
    }

    /// Convenience constructor from a dense matrix; zero entries are dropped.
    pub fn from_dense(names: Vec<String>, initial: usize, matrix: &[Vec<f64>]) -> Result<Self, ModelError> {
        let triples = matrix.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, p)| **p != 0.0)
                .map(move |(j, p)| (i, j, *p))
        });
        Self::new(names, initial, triples)
    }

    pub fn declare_proposition(&mut self, prop: impl Into<String>) {
        self.propositions.insert(prop.into());
    }

    /// Adds `prop` to the label set of `state`, declaring it if needed.
    pub fn add_label(&mut self, state: usize, prop: impl Into<String>) {
        let prop = prop.into();
        self.propositions.insert(prop.clone());
        self.labels[state].insert(prop);
    }

    /// Installs a reward structure, replacing any previous one with the same name.
    pub fn add_reward(&mut self, reward: RewardStructure) {
        self.rewards.insert(reward.name.clone(), reward);
    }

    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn name(&self, s: usize) -> &str {
        &self.names[s]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn row(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from]
            .binary_search_by_key(&to, |(t, _)| *t)
            .map(|i| self.rows[from][i].1)
            .unwrap_or(0.0)
    }

    pub fn num_transitions(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn labels(&self, s: usize) -> &BTreeSet<String> {
        &self.labels[s]
    }

    pub fn has_label(&self, s: usize, prop: &str) -> bool {
        self.labels[s].contains(prop)
    }

    pub fn propositions(&self) -> &BTreeSet<String> {
        &self.propositions
    }

    pub fn reward(&self, name: &str) -> Result<&RewardStructure, ModelError> {
        self.rewards
            .get(name)
            .ok_or_else(|| ModelError::UnknownReward(name.to_string()))
    }

    pub fn rewards(&self) -> impl Iterator<Item = &RewardStructure> {
        self.rewards.values()
    }

    /// True when the only transition out of `s` is a probability-one self-loop.
    pub fn is_absorbing(&self, s: usize) -> bool {
        matches!(self.rows[s].as_slice(), [(t, p)] if *t == s && *p == 1.0)
    }

    /// Predecessor lists, used by the graph-based precomputations.
    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut pred = vec![Vec::new(); self.num_states()];
        for (s, row) in self.rows.iter().enumerate() {
            for &(t, p) in row {
                if p > 0.0 {
                    pred[t].push(s);
                }
            }
        }
        pred
    }

    /// Returns every violated invariant; an empty list means the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let n = self.num_states();
        let mut out = Vec::new();
        if self.initial >= n {
            out.push(Violation::InitialOutOfRange { initial: self.initial, n });
        }
        for (s, row) in self.rows.iter().enumerate() {
            let mut sum = 0.0;
            for &(t, p) in row {
                if !p.is_finite() {
                    out.push(Violation::NonFiniteProbability { from: s, to: t });
                } else if p < 0.0 {
                    out.push(Violation::NegativeProbability { from: s, to: t, value: p });
                } else if p > 1.0 {
                    out.push(Violation::ProbabilityAboveOne { from: s, to: t, value: p });
                }
                sum += p;
            }
            if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
                out.push(Violation::RowSum { state: s, sum });
            }
        }
        for (s, labels) in self.labels.iter().enumerate() {
            for prop in labels.difference(&self.propositions) {
                out.push(Violation::UndeclaredProposition { state: s, prop: prop.clone() });
            }
        }
        for r in self.rewards.values() {
            if r.state_rewards.len() != n {
                out.push(Violation::RewardLength { reward: r.name.clone(), len: r.state_rewards.len(), n });
            }
            for (s, &v) in r.state_rewards.iter().enumerate() {
                if !(v >= 0.0) {
                    out.push(Violation::NegativeStateReward { reward: r.name.clone(), state: s, value: v });
                }
            }
            for (&(from, to), &v) in &r.transition_rewards {
                if !(v >= 0.0) {
                    out.push(Violation::NegativeTransitionReward { reward: r.name.clone(), from, to, value: v });
                }
                if from >= n || to >= n || self.prob(from, to) == 0.0 {
                    out.push(Violation::RewardOnMissingTransition { reward: r.name.clone(), from, to });
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Returns a copy with every non-empty row scaled to sum to one.
    pub fn renormalized(&self) -> Self {
        let mut m = self.clone();
        for row in &mut m.rows {
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            if sum > 0.0 {
                for (_, p) in row.iter_mut() {
                    *p /= sum;
                }
            }
        }
        m
    }

    /// States whose label set satisfies `predicate`.
    pub fn satisfying_states(&self, predicate: &Predicate) -> Result<StateSet, ModelError> {
        let n = self.num_states();
        Ok(match predicate {
            Predicate::True => StateSet::full(n),
            Predicate::Ap(name) => {
                if !self.propositions.contains(name) {
                    return Err(ModelError::UnknownProposition(name.clone()));
                }
                StateSet::from_fn(n, |s| self.labels[s].contains(name))
            }
            Predicate::Not(p) => self.satisfying_states(p)?.complement(),
            Predicate::And(a, b) => self.satisfying_states(a)?.intersection(&self.satisfying_states(b)?),
        })
    }

    /// States labeled with `prop`.
    pub fn labeled(&self, prop: &str) -> Result<StateSet, ModelError> {
        self.satisfying_states(&Predicate::ap(prop))
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(&self.to_file()).expect("model serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_file(&self) -> ModelFile {
        let transitions = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().map(move |&(t, p)| (s, t, p)))
            .collect();
        let labels = self
            .labels
            .iter()
            .enumerate()
            .map(|(s, l)| (self.names[s].clone(), l.iter().cloned().collect()))
            .collect();
        let rewards = self
            .rewards
            .values()
            .map(|r| {
                let state = r
                    .state_rewards
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(s, v)| (self.names[s].clone(), *v))
                    .collect();
                let transition = r.transition_rewards.iter().map(|(&(a, b), &v)| (a, b, v)).collect();
                (r.name.clone(), RewardFile { state, transition })
            })
            .collect();
        ModelFile {
            states: self.names.clone(),
            initial: self.initial,
            transitions,
            labels,
            rewards,
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self, ModelError> {
        let mut model = LabeledDtmc::new(file.states, file.initial, file.transitions)?;
        let n = model.num_states();
        for (name, props) in file.labels {
            let s = model
                .state_index(&name)
                .ok_or_else(|| ModelError::UnknownState(name.clone()))?;
            for p in props {
                model.add_label(s, p);
            }
        }
        for (name, rf) in file.rewards {
            let mut r = RewardStructure::zero(name, n);
            for (state, v) in rf.state {
                let s = model
                    .state_index(&state)
                    .ok_or_else(|| ModelError::UnknownState(state.clone()))?;
                r.state_rewards[s] = v;
            }
            for (from, to, v) in rf.transition {
                if from >= n || to >= n {
                    return Err(ModelError::IndexOutOfRange { from, to, n });
                }
                r.transition_rewards.insert((from, to), v);
            }
            model.add_reward(r);
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

/// On-disk interchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub states: Vec<String>,
    pub initial: usize,
    pub transitions: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub labels: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub rewards: BTreeMap<String, RewardFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardFile {
    #[serde(default)]
    pub state: BTreeMap<String, f64>,
    #[serde(default)]
    pub transition: Vec<(usize, usize, f64)>,
}
