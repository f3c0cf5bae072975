//! Text syntax for formulas.
//!
//! ```text
//! forall x: P(x, tcp) -> ~P(x, udp)
//! exists x, y p=6: Sim(f(x), y) & (Q(x) | ~Q(y))
//! ```
//!
//! Precedence from tightest: `~`, `&`, `|`, `->` (right associative).
//! A quantifier body extends as far right as possible. Unicode `¬ ∧ ∨ → ∀ ∃`
//! are accepted as aliases. An identifier used as a term is a variable when
//! an enclosing quantifier binds it and a constant otherwise.

use std::fmt;

use thiserror::Error;

use crate::logic::{Formula, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
    /// Byte offset into the parsed text.
    pub offset: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("{span}: expected {expected}, found {found}")]
pub struct ParseError {
    pub span: SourceSpan,
    pub expected: String,
    pub found: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Colon,
    Not,
    And,
    Or,
    Implies,
    Eq,
    Forall,
    Exists,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Number(n) => write!(f, "'{n}'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::Colon => f.write_str("':'"),
            Tok::Not => f.write_str("'~'"),
            Tok::And => f.write_str("'&'"),
            Tok::Or => f.write_str("'|'"),
            Tok::Implies => f.write_str("'->'"),
            Tok::Eq => f.write_str("'='"),
            Tok::Forall => f.write_str("'forall'"),
            Tok::Exists => f.write_str("'exists'"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn span(&self) -> SourceSpan {
        SourceSpan {
            line: self.line,
            column: self.column,
            offset: self.pos,
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, span: SourceSpan, expected: &str, found: String) -> ParseError {
        ParseError {
            span,
            expected: expected.to_string(),
            found,
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, SourceSpan)>, ParseError> {
        let mut out = Vec::new();
        loop {
            while self.peek_char().is_some_and(char::is_whitespace) {
                self.bump();
            }
            let span = self.span();
            let Some(c) = self.bump() else {
                out.push((Tok::End, span));
                return Ok(out);
            };
            let tok = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                ':' => Tok::Colon,
                '=' => Tok::Eq,
                '~' | '¬' | '!' => Tok::Not,
                '&' | '∧' => Tok::And,
                '|' | '∨' => Tok::Or,
                '→' => Tok::Implies,
                '∀' => Tok::Forall,
                '∃' => Tok::Exists,
                '-' => {
                    if self.peek_char() == Some('>') {
                        self.bump();
                        Tok::Implies
                    } else {
                        return Err(self.error(span, "'->'", "'-'".into()));
                    }
                }
                c if c.is_ascii_digit() || c == '.' => {
                    let start = span.offset;
                    while self
                        .peek_char()
                        .is_some_and(|d| d.is_ascii_digit() || d == '.')
                    {
                        self.bump();
                    }
                    if matches!(self.peek_char(), Some('e' | 'E')) {
                        self.bump();
                        if matches!(self.peek_char(), Some('+' | '-')) {
                            self.bump();
                        }
                        while self.peek_char().is_some_and(|d| d.is_ascii_digit()) {
                            self.bump();
                        }
                    }
                    let text = &self.src[start..self.pos];
                    let n = text
                        .parse::<f64>()
                        .map_err(|_| self.error(span, "a number", format!("'{text}'")))?;
                    Tok::Number(n)
                }
                c if c.is_alphabetic() || c == '_' => {
                    let start = span.offset;
                    while self
                        .peek_char()
                        .is_some_and(|d| d.is_alphanumeric() || d == '_')
                    {
                        self.bump();
                    }
                    match &self.src[start..self.pos] {
                        "forall" => Tok::Forall,
                        "exists" => Tok::Exists,
                        s => Tok::Ident(s.to_string()),
                    }
                }
                other => return Err(self.error(span, "a formula token", format!("'{other}'"))),
            };
            out.push((tok, span));
        }
    }
}

struct Parser {
    toks: Vec<(Tok, SourceSpan)>,
    at: usize,
    scope: Vec<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.at + k).min(self.toks.len() - 1)].0
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ParseError> {
        let (tok, span) = &self.toks[self.at];
        Err(ParseError {
            span: *span,
            expected: expected.to_string(),
            found: tok.to_string(),
        })
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            self.fail(expected)
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let left = self.disjunction()?;
        if *self.peek() == Tok::Implies {
            self.next();
            let right = self.formula()?;
            return Ok(Formula::implies(left, right));
        }
        Ok(left)
    }

    fn disjunction(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.conjunction()?;
        while *self.peek() == Tok::Or {
            self.next();
            let right = self.conjunction()?;
            left = Formula::or(left, right);
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.unary()?;
        while *self.peek() == Tok::And {
            self.next();
            let right = self.unary()?;
            left = Formula::and(left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Tok::Not => {
                self.next();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Forall | Tok::Exists => self.quantifier(),
            Tok::LParen => {
                self.next();
                let f = self.formula()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(f)
            }
            Tok::Ident(_) => self.atom(),
            _ => self.fail("a formula"),
        }
    }

    fn quantifier(&mut self) -> Result<Formula, ParseError> {
        let universal = self.next() == Tok::Forall;
        let mut vars = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Ident(v) => {
                    self.next();
                    vars.push(v);
                }
                _ => return self.fail("a variable name"),
            }
            if *self.peek() == Tok::Comma {
                self.next();
            } else {
                break;
            }
        }
        let mut p = None;
        if *self.peek() == Tok::Ident("p".into()) && *self.peek_at(1) == Tok::Eq {
            self.next();
            self.next();
            match self.next() {
                Tok::Number(n) if n >= 1.0 && n.is_finite() => p = Some(n),
                _ => {
                    self.at -= 1;
                    return self.fail("an exponent p >= 1");
                }
            }
        }
        self.expect(Tok::Colon, "':'")?;
        let before = self.scope.len();
        self.scope.extend(vars.iter().cloned());
        let body = self.formula();
        self.scope.truncate(before);
        let body = Box::new(body?);
        Ok(if universal {
            Formula::Forall { vars, body, p }
        } else {
            Formula::Exists { vars, body, p }
        })
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        let Tok::Ident(name) = self.next() else {
            unreachable!()
        };
        if *self.peek() != Tok::LParen {
            return self.fail("'(' after predicate name");
        }
        let args = self.arguments()?;
        Ok(Formula::Pred(name, args))
    }

    fn arguments(&mut self) -> Result<Vec<Term>, ParseError> {
        self.expect(Tok::LParen, "'('")?;
        let mut args = Vec::new();
        if *self.peek() == Tok::RParen {
            self.next();
            return Ok(args);
        }
        loop {
            args.push(self.term()?);
            match self.peek() {
                Tok::Comma => {
                    self.next();
                }
                Tok::RParen => {
                    self.next();
                    return Ok(args);
                }
                _ => return self.fail("',' or ')'"),
            }
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let name = match self.peek().clone() {
            Tok::Ident(name) => name,
            _ => return self.fail("a term"),
        };
        self.next();
        if *self.peek() == Tok::LParen {
            return Ok(Term::Func(name, self.arguments()?));
        }
        if self.scope.contains(&name) {
            Ok(Term::Var(name))
        } else {
            Ok(Term::Const(name))
        }
    }
}

fn parse_in_scope(src: &str, free: &[&str], line: usize) -> Result<Formula, ParseError> {
    let toks = Lexer {
        src,
        pos: 0,
        line,
        column: 1,
    }
    .tokens()?;
    let mut p = Parser {
        toks,
        at: 0,
        scope: free.iter().map(|s| s.to_string()).collect(),
    };
    let f = p.formula()?;
    if *p.peek() != Tok::End {
        return p.fail("end of formula");
    }
    Ok(f)
}

pub fn parse_formula(src: &str) -> Result<Formula, ParseError> {
    parse_in_scope(src, &[], 1)
}

/// Like [`parse_formula`], treating `free` as variables even where no
/// quantifier binds them.
pub fn parse_formula_with_free(src: &str, free: &[&str]) -> Result<Formula, ParseError> {
    parse_in_scope(src, free, 1)
}

/// Parses one formula per line. `#` starts a comment; blank lines are
/// skipped; `name := formula` names a formula, otherwise it is called
/// `<prefix><k>` with `k` counting from 1.
pub fn parse_formula_file(text: &str, prefix: &str) -> Result<Vec<(String, Formula)>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let (name, body) = match line.split_once(":=") {
            Some((n, b)) => (n.trim().to_string(), b),
            None => (format!("{prefix}{}", out.len() + 1), line),
        };
        if name.is_empty() {
            return Err(ParseError {
                span: SourceSpan {
                    line: i + 1,
                    column: 1,
                    offset: 0,
                },
                expected: "a name before ':='".into(),
                found: "':='".into(),
            });
        }
        let f = parse_in_scope(body, &[], i + 1)?;
        out.push((name, f));
    }
    Ok(out)
}

const LEVEL_IMPLIES: u8 = 1;
const LEVEL_OR: u8 = 2;
const LEVEL_AND: u8 = 3;
const LEVEL_UNARY: u8 = 4;

fn level(f: &Formula) -> u8 {
    match f {
        Formula::Implies(..) => LEVEL_IMPLIES,
        Formula::Or(..) => LEVEL_OR,
        Formula::And(..) => LEVEL_AND,
        Formula::Not(_) | Formula::Pred(..) => LEVEL_UNARY,
        // Quantifiers swallow everything to their right, so as operands
        // they are always parenthesised.
        Formula::Forall { .. } | Formula::Exists { .. } => 0,
    }
}

fn write_term(t: &Term, out: &mut String) {
    match t {
        Term::Var(n) | Term::Const(n) => out.push_str(n),
        Term::Func(n, args) => {
            out.push_str(n);
            write_args(args, out);
        }
    }
}

fn write_args(args: &[Term], out: &mut String) {
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_term(a, out);
    }
    out.push(')');
}

fn write_operand(f: &Formula, min_level: u8, out: &mut String) {
    if level(f) < min_level {
        out.push('(');
        write_formula(f, out);
        out.push(')');
    } else {
        write_formula(f, out);
    }
}

fn write_formula(f: &Formula, out: &mut String) {
    match f {
        Formula::Pred(name, args) => {
            out.push_str(name);
            write_args(args, out);
        }
        Formula::Not(a) => {
            out.push('~');
            write_operand(a, LEVEL_UNARY, out);
        }
        Formula::And(a, b) => {
            write_operand(a, LEVEL_AND, out);
            out.push_str(" & ");
            write_operand(b, LEVEL_AND + 1, out);
        }
        Formula::Or(a, b) => {
            write_operand(a, LEVEL_OR, out);
            out.push_str(" | ");
            write_operand(b, LEVEL_OR + 1, out);
        }
        Formula::Implies(a, b) => {
            write_operand(a, LEVEL_IMPLIES + 1, out);
            out.push_str(" -> ");
            write_operand(b, LEVEL_IMPLIES, out);
        }
        Formula::Forall { vars, body, p } | Formula::Exists { vars, body, p } => {
            out.push_str(if matches!(f, Formula::Forall { .. }) {
                "forall "
            } else {
                "exists "
            });
            out.push_str(&vars.join(", "));
            if let Some(p) = p {
                out.push_str(&format!(" p={p}"));
            }
            out.push_str(": ");
            write_formula(body, out);
        }
    }
}

/// Canonical ASCII text of `f`; [`parse_formula`] reads it back to an equal tree.
pub fn format_formula(f: &Formula) -> String {
    let mut out = String::new();
    write_formula(f, &mut out);
    out
}
