//! PCTL subset: AST, parser, printer and evaluation against a [`LabeledDtmc`](crate::LabeledDtmc).
//!
//! One level of nested eventuality, `F (a & F b)`, is accepted inside both the
//! P and the R operator; anything deeper is rejected.

mod ast;
mod eval;
mod parser;

pub use ast::{Bound, Comparison, PathFormula, PctlFormula, RewardFormula, StateFormula};
pub use eval::{evaluate, query_values, satisfying_states, EvalError, EvalOptions, EvalValue};
pub use parser::{parse, ParseError};

/// A formula read from a property file, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyLine {
    pub line: usize,
    pub formula: StateFormula,
}

/// Parses a property file: one formula per line, `#` starts a comment.
pub fn parse_property_file(text: &str) -> Result<Vec<PropertyLine>, (usize, ParseError)> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        let formula = parse(body).map_err(|e| (i + 1, e))?;
        out.push(PropertyLine { line: i + 1, formula });
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_string => escaped = true,
            '"' => in_string = !in_string,
            '#' if !in_string => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Queries behind the five dependability properties.
pub const BUILTIN_SUITE: &[(&str, &str)] = &[
    ("safety", "P=? [ F miss_comp ]"),
    ("resilience_deviation", r#"R{"deviation"}=? [ F miss_comp ]"#),
    ("mission_length", r#"R{"step"}=? [ F miss_comp ]"#),
    ("robustness_numerator", "P=? [ F (crit_situ & F miss_comp) ]"),
    ("critical_reach", "P=? [ F crit_situ ]"),
    ("detection_steps", r#"R{"step"}=? [ F crit_situ ]"#),
    ("recovery_nested_steps", r#"R{"step"}=? [ F (crit_situ & F ncrit_situ) ]"#),
];

/// The built-in suite, parsed.
pub fn builtin_suite() -> Vec<(&'static str, StateFormula)> {
    BUILTIN_SUITE
        .iter()
        .map(|(name, text)| (*name, parse(text).expect("built-in formulas parse")))
        .collect()
}
