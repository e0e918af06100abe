//! Export to the PRISM modelling language and re-import of the emitted subset.
//!
//! The model becomes one module with an integer variable `s`. PRISM transition
//! rewards are attached to a source state, not to a (source, target) pair, so a
//! state whose outgoing transition rewards differ by target is exported with
//! the probability-weighted mean; expectations of reachability and cumulative
//! rewards are unchanged by that substitution.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::dependability::Macros;
use crate::model::{LabeledDtmc, ModelError, RewardStructure};
use crate::pctl::BUILTIN_SUITE;

#[derive(Debug, Error)]
pub enum PrismError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("label {0:?} is not a valid identifier")]
    BadIdentifier(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct PrismExport {
    pub model: String,
    pub properties: String,
    pub warnings: Vec<String>,
}

const MACRO_NAMES: [&str; 3] = ["miss_comp", "crit_situ", "ncrit_situ"];

/// Formats `x` with 17 significant digits, which round-trips every f64.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..=16).contains(&exp) {
        format!("{x:.prec$}", prec = (16 - exp).max(0) as usize)
    } else {
        sci
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(s, "init" | "deadlock" | "true" | "false" | "s")
}

fn guard_list(states: impl Iterator<Item = usize>) -> String {
    let parts: Vec<String> = states.map(|s| format!("s={s}")).collect();
    if parts.is_empty() {
        "false".into()
    } else {
        parts.join(" | ")
    }
}

fn source_transition_reward(model: &LabeledDtmc, r: &RewardStructure, s: usize) -> (f64, bool) {
    let row = model.row(s);
    let first = r.transition(s, row[0].0);
    if row.iter().all(|&(t, _)| r.transition(s, t) == first) {
        (first, true)
    } else {
        (row.iter().map(|&(t, p)| p * r.transition(s, t)).sum(), false)
    }
}

pub fn export(model: &LabeledDtmc) -> Result<PrismExport, PrismError> {
    let n = model.num_states();
    let mut warnings = Vec::new();
    let mut out = String::from("dtmc\n\n");
    for s in 0..n {
        writeln!(out, "// state {s} {}", serde_json::to_string(model.name(s)).unwrap()).unwrap();
    }
    writeln!(out, "\nmodule failure_process\n  s : [0..{}] init {};\n", n - 1, model.initial()).unwrap();
    for s in 0..n {
        let updates: Vec<String> = model.row(s).iter().map(|&(t, p)| format!("{}:(s'={t})", fmt17(p))).collect();
        writeln!(out, "  [] s={s} -> {};", updates.join(" + ")).unwrap();
    }
    out.push_str("\nendmodule\n\n");

    let mut labels: BTreeMap<String, String> = BTreeMap::new();
    for p in model.propositions() {
        if !is_identifier(p) {
            return Err(PrismError::BadIdentifier(p.clone()));
        }
        labels.insert(p.clone(), guard_list(model.labeled(p)?.iter()));
    }
    if let Ok(m) = Macros::resolve(model) {
        for (name, set) in MACRO_NAMES.iter().zip([&m.miss_comp, &m.crit_situ, &m.ncrit_situ]) {
            labels.entry(name.to_string()).or_insert_with(|| guard_list(set.iter()));
        }
    }
    for (name, guard) in &labels {
        writeln!(out, "label \"{name}\" = {guard};").unwrap();
    }

    for r in model.rewards() {
        writeln!(out, "\nrewards \"{}\"", r.name).unwrap();
        for s in 0..n {
            if r.state(s) != 0.0 {
                writeln!(out, "  s={s} : {};", fmt17(r.state(s))).unwrap();
            }
            let (v, exact) = source_transition_reward(model, r, s);
            if !exact {
                warnings.push(format!(
                    "reward {:?}: transition rewards from state {s} depend on the target; exported their expected value",
                    r.name
                ));
            }
            if v != 0.0 {
                writeln!(out, "  [] s={s} : {};", fmt17(v)).unwrap();
            }
        }
        out.push_str("endrewards\n");
    }

    let mut properties = String::new();
    for (name, text) in BUILTIN_SUITE {
        if name.starts_with("recovery") {
            continue;
        }
        writeln!(properties, "// {name}\n{text}\n").unwrap();
    }
    Ok(PrismExport { model: out, properties, warnings })
}

fn syntax(line: usize, message: impl Into<String>) -> PrismError {
    PrismError::Syntax { line, message: message.into() }
}

/// Parses `s=<k>` and returns `k`.
fn state_guard(text: &str, line: usize) -> Result<usize, PrismError> {
    text.trim()
        .strip_prefix("s=")
        .and_then(|k| k.trim().parse().ok())
        .ok_or_else(|| syntax(line, format!("expected s=<index>, found {text:?}")))
}

fn number(text: &str, line: usize) -> Result<f64, PrismError> {
    text.trim().parse().map_err(|_| syntax(line, format!("bad number {text:?}")))
}

/// Reads a model file in the subset written by [`export`].
pub fn import(text: &str) -> Result<LabeledDtmc, PrismError> {
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    let mut size = None;
    let mut transitions = Vec::new();
    let mut labels: Vec<(String, Vec<usize>)> = Vec::new();
    let mut rewards: Vec<(String, Vec<(usize, f64, bool)>)> = Vec::new();
    let mut in_rewards = false;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if let Some(rest) = l.strip_prefix("// state ") {
            let (k, name) = rest.split_once(' ').ok_or_else(|| syntax(line, "bad state comment"))?;
            let k = k.parse().map_err(|_| syntax(line, "bad state index"))?;
            let name = serde_json::from_str(name).map_err(|_| syntax(line, "bad state name"))?;
            names.insert(k, name);
            continue;
        }
        if l.is_empty() || l.starts_with("//") || matches!(l, "dtmc" | "endmodule") || l.starts_with("module ") {
            continue;
        }
        if let Some(rest) = l.strip_prefix("rewards ") {
            let name = rest.trim().trim_matches('"').to_string();
            rewards.push((name, Vec::new()));
            in_rewards = true;
            continue;
        }
        if l == "endrewards" {
            in_rewards = false;
            continue;
        }
        let body = l.strip_suffix(';').ok_or_else(|| syntax(line, "missing ';'"))?;
        if in_rewards {
            let (guard, value) = body.split_once(':').ok_or_else(|| syntax(line, "expected guard : value"))?;
            let (guard, is_transition) = match guard.trim().strip_prefix("[]") {
                Some(g) => (g, true),
                None => (guard, false),
            };
            let entry = (state_guard(guard, line)?, number(value, line)?, is_transition);
            rewards.last_mut().expect("inside a rewards block").1.push(entry);
        } else if let Some(rest) = body.strip_prefix("s : [0..") {
            let (hi, init) = rest.split_once("] init ").ok_or_else(|| syntax(line, "bad variable declaration"))?;
            let hi: usize = hi.parse().map_err(|_| syntax(line, "bad range"))?;
            let init: usize = init.trim().parse().map_err(|_| syntax(line, "bad initial state"))?;
            size = Some((hi + 1, init));
        } else if let Some(rest) = body.strip_prefix("[]") {
            let (guard, updates) = rest.split_once("->").ok_or_else(|| syntax(line, "expected ->"))?;
            let from = state_guard(guard, line)?;
            for u in updates.split('+') {
                let (p, target) = u.split_once(":(s'=").ok_or_else(|| syntax(line, "bad update"))?;
                let to = target
                    .trim()
                    .strip_suffix(')')
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| syntax(line, "bad update target"))?;
                transitions.push((from, to, number(p, line)?));
            }
        } else if let Some(rest) = body.strip_prefix("label ") {
            let (name, guard) = rest.split_once('=').ok_or_else(|| syntax(line, "expected label \"x\" = ..."))?;
            let name = name.trim().trim_matches('"').to_string();
            let states = if guard.trim() == "false" {
                Vec::new()
            } else {
                guard.split('|').map(|g| state_guard(g, line)).collect::<Result<_, _>>()?
            };
            labels.push((name, states));
        } else {
            return Err(syntax(line, format!("unrecognised line {l:?}")));
        }
    }

    let (n, init) = size.ok_or_else(|| syntax(0, "no state variable declared"))?;
    let names = (0..n).map(|s| names.remove(&s).unwrap_or_else(|| format!("s{s}"))).collect();
    let mut model = LabeledDtmc::new(names, init, transitions)?;
    for (name, states) in labels {
        model.declare_proposition(name.clone());
        for s in states {
            if s >= n {
                return Err(syntax(0, format!("label {name:?} names state {s} out of range")));
            }
            model.add_label(s, name.clone());
        }
    }
    for (name, entries) in rewards {
        let mut r = RewardStructure::zero(name, n);
        for (s, v, is_transition) in entries {
            if s >= n {
                return Err(syntax(0, format!("reward on state {s} out of range")));
            }
            if is_transition {
                for &(t, _) in model.row(s) {
                    r.transition_rewards.insert((s, t), v);
                }
            } else {
                r.state_rewards[s] = v;
            }
        }
        model.add_reward(r);
    }
    Ok(model)
}
