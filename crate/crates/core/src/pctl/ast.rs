use std::fmt;

/// Comparison operator of a bounded P or R operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparison {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparison::Lt => lhs < rhs,
            Comparison::Le => lhs <= rhs,
            Comparison::Gt => lhs > rhs,
            Comparison::Ge => lhs >= rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
        }
    }
}

/// Either a numerical query (`=?`) or a threshold test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Query,
    Compare(Comparison, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateFormula {
    True,
    Ap(String),
    And(Box<StateFormula>, Box<StateFormula>),
    Not(Box<StateFormula>),
    Prob { bound: Bound, path: PathFormula },
    Reward { structure: String, bound: Bound, formula: RewardFormula },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathFormula {
    Next(Box<StateFormula>),
    Until(Box<StateFormula>, Box<StateFormula>),
    Eventually(Box<StateFormula>),
    /// `F (a & F b)`
    EventuallyNested(Box<StateFormula>, Box<StateFormula>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RewardFormula {
    /// `C<=t`
    Cumulative(u64),
    Reach(Box<StateFormula>),
    /// `F (a & F b)`
    ReachNested(Box<StateFormula>, Box<StateFormula>),
}

/// Top-level property formula.
pub type PctlFormula = StateFormula;

impl StateFormula {
    pub fn ap(name: impl Into<String>) -> Self {
        StateFormula::Ap(name.into())
    }

    pub fn and(a: StateFormula, b: StateFormula) -> Self {
        StateFormula::And(Box::new(a), Box::new(b))
    }

    pub fn not(a: StateFormula) -> Self {
        StateFormula::Not(Box::new(a))
    }

    /// True for `P=? [...]` and `R{..}=? [...]`.
    pub fn is_numerical_query(&self) -> bool {
        matches!(
            self,
            StateFormula::Prob { bound: Bound::Query, .. } | StateFormula::Reward { bound: Bound::Query, .. }
        )
    }
}

pub(crate) const RESERVED: &[&str] = &["true", "P", "R", "F", "X", "U", "C"];

pub(crate) fn is_plain_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !RESERVED.contains(&name)
}

fn write_quoted(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in name.chars() {
        if c == '"' || c == '\\' {
            f.write_str("\\")?;
        }
        write!(f, "{c}")?;
    }
    f.write_str("\"")
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Query => f.write_str("=?"),
            Bound::Compare(c, v) => write!(f, "{}{v:?}", c.symbol()),
        }
    }
}

impl StateFormula {
    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateFormula::And(..) => write!(f, "({self})"),
            other => write!(f, "{other}"),
        }
    }
}

impl fmt::Display for StateFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateFormula::True => f.write_str("true"),
            StateFormula::Ap(name) => {
                if is_plain_identifier(name) {
                    f.write_str(name)
                } else {
                    write_quoted(f, name)
                }
            }
            StateFormula::And(a, b) => {
                // `&` is left-associative; only a right-nested conjunction needs parentheses.
                write!(f, "{a} & ")?;
                b.fmt_operand(f)
            }
            StateFormula::Not(a) => {
                f.write_str("!")?;
                a.fmt_operand(f)
            }
            StateFormula::Prob { bound, path } => write!(f, "P{bound} [ {path} ]"),
            StateFormula::Reward { structure, bound, formula } => {
                f.write_str("R{")?;
                write_quoted(f, structure)?;
                write!(f, "}}{bound} [ {formula} ]")
            }
        }
    }
}

impl fmt::Display for PathFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathFormula::Next(a) => write!(f, "X {a}"),
            PathFormula::Until(a, b) => write!(f, "{a} U {b}"),
            PathFormula::Eventually(a) => write!(f, "F {a}"),
            PathFormula::EventuallyNested(a, b) => write!(f, "F ({a} & F {b})"),
        }
    }
}

impl fmt::Display for RewardFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardFormula::Cumulative(t) => write!(f, "C<={t}"),
            RewardFormula::Reach(a) => write!(f, "F {a}"),
            RewardFormula::ReachNested(a, b) => write!(f, "F ({a} & F {b})"),
        }
    }
}
