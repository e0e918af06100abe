//! Recursive-descent parser for the PCTL surface syntax.
//!
//! ```text
//! state   := conj
//! conj    := unary ('&' unary)*
//! unary   := '!' unary | atom
//! atom    := 'true' | IDENT | STRING | '(' state ')'
//!          | 'P' bound '[' path ']'
//!          | 'R' '{' STRING '}' bound '[' rpath ']'
//! bound   := '=?' | ('<' | '<=' | '>' | '>=') NUMBER
//! path    := 'X' state | 'F' body | state 'U' state
//! rpath   := 'C' '<=' INT | 'F' body
//! body    := '(' conj '&' 'F' state ')' | state
//! ```

use thiserror::Error;

use super::ast::{Bound, Comparison, PathFormula, RewardFormula, StateFormula, RESERVED};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unsupported nesting at {pos}: only one level of F (a & F b) is allowed")]
    UnsupportedNesting { pos: usize },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { pos, .. } | ParseError::UnsupportedNesting { pos } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(String),
    Query,
    Cmp(Comparison),
    LBracket,
    RBracket,
    LParen,
    RParen,
    LBrace,
    RBrace,
    And,
    Not,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Num(s) => format!("number {s}"),
            Tok::Query => "'=?'".into(),
            Tok::Cmp(_) => "comparison".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::And => "'&'".into(),
            Tok::Not => "'!'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn syntax(pos: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { pos, message: message.into() }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            b'[' => Tok::LBracket,
            b']' => Tok::RBracket,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'{' => Tok::LBrace,
            b'}' => Tok::RBrace,
            b'&' => Tok::And,
            b'!' => Tok::Not,
            b'=' => {
                if bytes.get(i + 1) == Some(&b'?') {
                    i += 1;
                    Tok::Query
                } else {
                    return Err(syntax(i, "expected '=?'"));
                }
            }
            b'<' | b'>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                if eq {
                    i += 1;
                }
                Tok::Cmp(match (c, eq) {
                    (b'<', false) => Comparison::Lt,
                    (b'<', true) => Comparison::Le,
                    (b'>', false) => Comparison::Gt,
                    _ => Comparison::Ge,
                })
            }
            b'"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match text[i..].chars().next() {
                        None => return Err(syntax(start, "unterminated string")),
                        Some('"') => break,
                        Some('\\') => {
                            let esc = text[i + 1..].chars().next().ok_or_else(|| syntax(i, "unterminated escape"))?;
                            s.push(esc);
                            i += 1 + esc.len_utf8();
                        }
                        Some(ch) => {
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                Tok::Str(s)
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() {
                    let d = bytes[i];
                    let exp_sign = (d == b'-' || d == b'+') && matches!(bytes[i - 1], b'e' | b'E');
                    if d.is_ascii_digit() || d == b'.' || d == b'e' || d == b'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                out.push((start, Tok::Num(text[start..i].to_string())));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(syntax(i, format!("unexpected character {ch:?}")));
            }
        };
        i += 1;
        out.push((start, tok));
    }
    out.push((text.len(), Tok::Eof));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if self.at < self.toks.len() - 1 {
            self.at += 1;
        }
        t
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected {}, found {}", want.describe(), self.peek().describe())))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected '{kw}', found {}", self.peek().describe())))
        }
    }

    fn at_and_eventually(&self) -> bool {
        *self.peek() == Tok::And && matches!(self.peek2(), Tok::Ident(s) if s == "F")
    }

    fn state(&mut self, in_nested: bool) -> Result<StateFormula, ParseError> {
        let mut lhs = self.unary(in_nested)?;
        while *self.peek() == Tok::And {
            if self.at_and_eventually() {
                let pos = self.toks[self.at + 1].0;
                return Err(if in_nested {
                    ParseError::UnsupportedNesting { pos }
                } else {
                    syntax(pos, "'F' is only allowed directly inside P or R operators")
                });
            }
            self.bump();
            let rhs = self.unary(in_nested)?;
            lhs = StateFormula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    /// Conjunction that stops in front of `& F`.
    fn conj_before_eventually(&mut self) -> Result<StateFormula, ParseError> {
        let mut lhs = self.unary(false)?;
        while *self.peek() == Tok::And && !self.at_and_eventually() {
            self.bump();
            let rhs = self.unary(false)?;
            lhs = StateFormula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self, in_nested: bool) -> Result<StateFormula, ParseError> {
        if *self.peek() == Tok::Not {
            self.bump();
            return Ok(StateFormula::not(self.unary(in_nested)?));
        }
        self.atom(in_nested)
    }

    fn atom(&mut self, in_nested: bool) -> Result<StateFormula, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let inner = self.state(in_nested)?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Str(s) => {
                self.bump();
                Ok(StateFormula::Ap(s))
            }
            Tok::Ident(s) => match s.as_str() {
                "true" => {
                    self.bump();
                    Ok(StateFormula::True)
                }
                "P" => {
                    self.bump();
                    self.prob()
                }
                "R" => {
                    self.bump();
                    self.reward()
                }
                kw if RESERVED.contains(&kw) => {
                    if in_nested && kw == "F" {
                        Err(ParseError::UnsupportedNesting { pos })
                    } else {
                        Err(syntax(pos, format!("expected state formula, found reserved word '{kw}'")))
                    }
                }
                _ => {
                    self.bump();
                    Ok(StateFormula::Ap(s))
                }
            },
            other => Err(syntax(pos, format!("expected state formula, found {}", other.describe()))),
        }
    }

    fn bound(&mut self, is_prob: bool) -> Result<Bound, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Query => Ok(Bound::Query),
            Tok::Cmp(c) => {
                let npos = self.pos();
                let value = match self.bump() {
                    Tok::Num(s) => s.parse::<f64>().map_err(|_| syntax(npos, format!("invalid number {s:?}")))?,
                    other => return Err(syntax(npos, format!("expected number, found {}", other.describe()))),
                };
                if is_prob && !(0.0..=1.0).contains(&value) {
                    return Err(syntax(npos, format!("probability bound {value} outside [0,1]")));
                }
                if !is_prob && !(value >= 0.0 && value.is_finite()) {
                    return Err(syntax(npos, format!("reward bound {value} must be a non-negative number")));
                }
                Ok(Bound::Compare(c, value))
            }
            other => Err(syntax(pos, format!("expected '=?' or comparison, found {}", other.describe()))),
        }
    }

    fn prob(&mut self) -> Result<StateFormula, ParseError> {
        let bound = self.bound(true)?;
        self.expect(Tok::LBracket)?;
        let path = if self.is_keyword("X") {
            self.bump();
            PathFormula::Next(Box::new(self.state(false)?))
        } else if self.is_keyword("F") {
            self.bump();
            match self.eventually_body()? {
                (a, Some(b)) => PathFormula::EventuallyNested(Box::new(a), Box::new(b)),
                (a, None) => PathFormula::Eventually(Box::new(a)),
            }
        } else {
            let lhs = self.state(false)?;
            self.expect_keyword("U")?;
            let rhs = self.state(false)?;
            PathFormula::Until(Box::new(lhs), Box::new(rhs))
        };
        self.expect(Tok::RBracket)?;
        Ok(StateFormula::Prob { bound, path })
    }

    fn reward(&mut self) -> Result<StateFormula, ParseError> {
        self.expect(Tok::LBrace)?;
        let pos = self.pos();
        let structure = match self.bump() {
            Tok::Str(s) => s,
            other => return Err(syntax(pos, format!("expected quoted reward name, found {}", other.describe()))),
        };
        self.expect(Tok::RBrace)?;
        let bound = self.bound(false)?;
        self.expect(Tok::LBracket)?;
        let formula = if self.is_keyword("C") {
            self.bump();
            self.expect(Tok::Cmp(Comparison::Le))?;
            let npos = self.pos();
            match self.bump() {
                Tok::Num(s) => RewardFormula::Cumulative(
                    s.parse::<u64>()
                        .map_err(|_| syntax(npos, format!("step bound must be a natural number, got {s:?}")))?,
                ),
                other => return Err(syntax(npos, format!("expected step bound, found {}", other.describe()))),
            }
        } else if self.is_keyword("F") {
            self.bump();
            match self.eventually_body()? {
                (a, Some(b)) => RewardFormula::ReachNested(Box::new(a), Box::new(b)),
                (a, None) => RewardFormula::Reach(Box::new(a)),
            }
        } else {
            return Err(syntax(self.pos(), format!("expected 'C<=' or 'F', found {}", self.peek().describe())));
        };
        self.expect(Tok::RBracket)?;
        Ok(StateFormula::Reward { structure, bound, formula })
    }

    /// Body after `F`: either `(a & F b)` or a plain state formula.
    fn eventually_body(&mut self) -> Result<(StateFormula, Option<StateFormula>), ParseError> {
        if *self.peek() == Tok::LParen {
            let save = self.at;
            self.bump();
            if let Ok(a) = self.conj_before_eventually() {
                if self.at_and_eventually() {
                    self.bump();
                    self.bump();
                    let b = self.state(true)?;
                    self.expect(Tok::RParen)?;
                    return Ok((a, Some(b)));
                }
            }
            self.at = save;
        }
        Ok((self.state(false)?, None))
    }
}

/// Parses one formula.
pub fn parse(text: &str) -> Result<StateFormula, ParseError> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    let f = p.state(false)?;
    if *p.peek() != Tok::Eof {
        return Err(syntax(p.pos(), format!("unexpected {}", p.peek().describe())));
    }
    Ok(f)
}
