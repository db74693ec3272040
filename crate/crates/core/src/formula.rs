//! Propositional formulas over feature names.
//!
//! The textual form (used by UVL constraint lines and the edit wire format)
//! is `!`, `&`, `|`, `=>`, `<=>` with that precedence from tightest to
//! loosest. `=>` associates to the right, `<=>` to the left. Rendering
//! inserts exactly the parentheses needed so that parsing the output
//! yields the same tree, including explicitly nested `&`/`|` nodes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    Var(String),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn var(name: impl Into<String>) -> Self {
        Formula::Var(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    /// Conjunction; a single operand is returned unchanged.
    pub fn and(ops: impl IntoIterator<Item = Formula>) -> Self {
        let mut ops: Vec<Formula> = ops.into_iter().collect();
        assert!(!ops.is_empty(), "empty conjunction");
        if ops.len() == 1 {
            ops.pop().unwrap()
        } else {
            Formula::And(ops)
        }
    }

    /// Disjunction; a single operand is returned unchanged.
    pub fn or(ops: impl IntoIterator<Item = Formula>) -> Self {
        let mut ops: Vec<Formula> = ops.into_iter().collect();
        assert!(!ops.is_empty(), "empty disjunction");
        if ops.len() == 1 {
            ops.pop().unwrap()
        } else {
            Formula::Or(ops)
        }
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Self {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    /// `name` or `!name`.
    pub fn literal(name: impl Into<String>, positive: bool) -> Self {
        if positive {
            Formula::var(name)
        } else {
            Formula::not(Formula::var(name))
        }
    }

    pub fn eval(&self, value: &impl Fn(&str) -> bool) -> bool {
        match self {
            Formula::Var(n) => value(n),
            Formula::Not(f) => !f.eval(value),
            Formula::And(fs) => fs.iter().all(|f| f.eval(value)),
            Formula::Or(fs) => fs.iter().any(|f| f.eval(value)),
            Formula::Implies(a, b) => !a.eval(value) || b.eval(value),
            Formula::Iff(a, b) => a.eval(value) == b.eval(value),
        }
    }

    pub fn vars(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Formula::Var(n) => {
                out.insert(n);
            }
            Formula::Not(f) => f.collect_vars(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_vars(out)),
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn mentions(&self, name: &str) -> bool {
        match self {
            Formula::Var(n) => n == name,
            Formula::Not(f) => f.mentions(name),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().any(|f| f.mentions(name)),
            Formula::Implies(a, b) | Formula::Iff(a, b) => a.mentions(name) || b.mentions(name),
        }
    }

    pub fn rename_var(&mut self, from: &str, to: &str) {
        match self {
            Formula::Var(n) => {
                if n == from {
                    *n = to.to_string();
                }
            }
            Formula::Not(f) => f.rename_var(from, to),
            Formula::And(fs) | Formula::Or(fs) => {
                fs.iter_mut().for_each(|f| f.rename_var(from, to))
            }
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.rename_var(from, to);
                b.rename_var(from, to);
            }
        }
    }

    /// Every And/Or node has at least two operands.
    pub fn is_normalized(&self) -> bool {
        match self {
            Formula::Var(_) => true,
            Formula::Not(f) => f.is_normalized(),
            Formula::And(fs) | Formula::Or(fs) => {
                fs.len() >= 2 && fs.iter().all(Formula::is_normalized)
            }
            Formula::Implies(a, b) | Formula::Iff(a, b) => a.is_normalized() && b.is_normalized(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Iff(..) => 1,
            Formula::Implies(..) => 2,
            Formula::Or(_) => 3,
            Formula::And(_) => 4,
            Formula::Not(_) => 5,
            Formula::Var(_) => 6,
        }
    }
}

const KEYWORDS: &[&str] = &[
    "features",
    "constraints",
    "mandatory",
    "optional",
    "or",
    "alternative",
    "abstract",
    "true",
    "false",
];

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Whether `name` can be written without quotes.
pub fn is_bare_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(is_ident_char) && !KEYWORDS.contains(&name)
}

/// Writes `name` bare when possible, otherwise double-quoted with `\"` and `\\` escapes.
pub fn quote_name(name: &str) -> String {
    if is_bare_name(name) {
        return name.to_string();
    }
    let mut s = String::with_capacity(name.len() + 2);
    s.push('"');
    for c in name.chars() {
        if c == '"' || c == '\\' {
            s.push('\\');
        }
        s.push(c);
    }
    s.push('"');
    s
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, sub: &Formula, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({sub})")
            } else {
                write!(f, "{sub}")
            }
        }
        let prec = self.precedence();
        match self {
            Formula::Var(n) => f.write_str(&quote_name(n)),
            Formula::Not(sub) => {
                f.write_str("!")?;
                child(f, sub, sub.precedence() < prec)
            }
            Formula::And(ops) | Formula::Or(ops) => {
                let sep = if matches!(self, Formula::And(_)) {
                    " & "
                } else {
                    " | "
                };
                for (i, sub) in ops.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    child(f, sub, sub.precedence() <= prec)?;
                }
                Ok(())
            }
            Formula::Implies(a, b) => {
                child(f, a, a.precedence() <= prec)?;
                f.write_str(" => ")?;
                child(f, b, b.precedence() < prec)
            }
            Formula::Iff(a, b) => {
                child(f, a, a.precedence() < prec)?;
                f.write_str(" <=> ")?;
                child(f, b, b.precedence() <= prec)
            }
        }
    }
}

// ---- parsing ----

/// Syntax error in a constraint expression; `offset` is a char index.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{message} at offset {offset}")]
pub struct FormulaSyntaxError {
    pub offset: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Name(String),
    Not,
    And,
    Or,
    Implies,
    Iff,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, FormulaSyntaxError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    let err = |offset, message: &str| FormulaSyntaxError {
        offset,
        message: message.to_string(),
    };
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            ' ' | '\t' => {
                i += 1;
                continue;
            }
            '!' => toks.push((start, Tok::Not)),
            '&' => toks.push((start, Tok::And)),
            '|' => toks.push((start, Tok::Or)),
            '(' => toks.push((start, Tok::LParen)),
            ')' => toks.push((start, Tok::RParen)),
            '=' => {
                if chars.get(i + 1) != Some(&'>') {
                    return Err(err(start, "expected '=>'"));
                }
                i += 1;
                toks.push((start, Tok::Implies));
            }
            '<' => {
                if chars.get(i + 1) != Some(&'=') || chars.get(i + 2) != Some(&'>') {
                    return Err(err(start, "expected '<=>'"));
                }
                i += 2;
                toks.push((start, Tok::Iff));
            }
            '"' => {
                let mut name = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(err(start, "unterminated quoted name")),
                        Some('"') => break,
                        Some('\\') => {
                            match chars.get(i + 1) {
                                Some(&e @ ('"' | '\\')) => name.push(e),
                                _ => return Err(err(i, "invalid escape in quoted name")),
                            }
                            i += 2;
                        }
                        Some(&ch) => {
                            name.push(ch);
                            i += 1;
                        }
                    }
                }
                if name.is_empty() {
                    return Err(err(start, "empty name"));
                }
                toks.push((start, Tok::Name(name)));
            }
            c if is_ident_char(c) => {
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                toks.push((start, Tok::Name(word)));
                continue;
            }
            other => return Err(err(start, &format!("unexpected character {other:?}"))),
        }
        i += 1;
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn error(&self, message: impl Into<String>) -> FormulaSyntaxError {
        FormulaSyntaxError {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn iff(&mut self) -> Result<Formula, FormulaSyntaxError> {
        let mut lhs = self.implies()?;
        while self.eat(&Tok::Iff) {
            let rhs = self.implies()?;
            lhs = Formula::iff(lhs, rhs);
        }
        Ok(lhs)
    }

    fn implies(&mut self) -> Result<Formula, FormulaSyntaxError> {
        let lhs = self.or()?;
        if self.eat(&Tok::Implies) {
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, FormulaSyntaxError> {
        let mut ops = vec![self.and()?];
        while self.eat(&Tok::Or) {
            ops.push(self.and()?);
        }
        Ok(Formula::or(ops))
    }

    fn and(&mut self) -> Result<Formula, FormulaSyntaxError> {
        let mut ops = vec![self.unary()?];
        while self.eat(&Tok::And) {
            ops.push(self.unary()?);
        }
        Ok(Formula::and(ops))
    }

    fn unary(&mut self) -> Result<Formula, FormulaSyntaxError> {
        match self.peek().cloned() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.iff()?;
                if !self.eat(&Tok::RParen) {
                    return Err(self.error("expected ')'"));
                }
                Ok(inner)
            }
            Some(Tok::Name(n)) => {
                self.pos += 1;
                Ok(Formula::Var(n))
            }
            Some(_) => Err(self.error("expected a feature name, '!' or '('")),
            None => Err(self.error("unexpected end of expression")),
        }
    }
}

/// Parses a constraint expression. Feature names are not resolved here.
pub fn parse_formula(text: &str) -> Result<Formula, FormulaSyntaxError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.chars().count(),
    };
    let f = p.iff()?;
    if p.pos != p.toks.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(f)
}

impl FromStr for Formula {
    type Err = FormulaSyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_formula(&text).map_err(serde::de::Error::custom)
    }
}
