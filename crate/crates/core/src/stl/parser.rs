//! Recursive-descent parser for the specification grammar.
//!
//! ```text
//! or      := and ('|' and)*
//! and     := until ('&' until)*
//! until   := unary ('U' '[' INT ',' INT ']' unary)?
//! unary   := 'not' unary | 'G' '[' INT ',' INT ']' unary | 'F' '[' INT ',' INT ']' unary | primary
//! primary := IDENT | '(' or ')'
//! ```
//!
//! `G`, `F` and `U` are operators only when followed by `[`; otherwise they
//! are ordinary predicate names.

use std::fmt;

use thiserror::Error;

use super::formula::validate_indexed;
use super::{Formula, Interval, PredicateTable, Specification, StlError};

#[derive(Debug, Clone, PartialEq, Error)]
pub struct SyntaxError {
    /// 1-based column.
    pub column: usize,
    pub expected: String,
    pub found: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at column {}: expected {}, found {}", self.column, self.expected, self.found)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(usize),
    LBracket,
    RBracket,
    Comma,
    LParen,
    RParen,
    And,
    Or,
    Not,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(n) => write!(f, "integer `{n}`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::And => f.write_str("`&`"),
            Tok::Or => f.write_str("`|`"),
            Tok::Not => f.write_str("`not`"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, SyntaxError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '&' => Some(Tok::And),
            '|' => Some(Tok::Or),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((tok, col));
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let n = s.parse().map_err(|_| SyntaxError { column: col, expected: "a timestep index".into(), found: format!("out-of-range integer `{s}`") })?;
            out.push((Tok::Int(n), col));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            out.push((if s == "not" { Tok::Not } else { Tok::Ident(s) }, col));
        } else {
            return Err(SyntaxError { column: col, expected: "a formula token".into(), found: format!("`{c}`") });
        }
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

/// Source columns of a parsed tree, shaped like the tree itself.
struct Cols {
    col: usize,
    children: Vec<Cols>,
}

impl Cols {
    fn leaf(col: usize) -> Self {
        Cols { col, children: Vec::new() }
    }

    fn preorder(&self, out: &mut Vec<usize>) {
        out.push(self.col);
        for c in &self.children {
            c.preorder(out);
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

type Parsed = Result<(Formula, Cols), SyntaxError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn col(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> SyntaxError {
        SyntaxError { column: self.col(), expected: expected.to_string(), found: self.peek().to_string() }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), SyntaxError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&tok.to_string()))
        }
    }

    fn is_operator(&self, name: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == name) && *self.peek_at(1) == Tok::LBracket
    }

    fn interval(&mut self) -> Result<Interval, SyntaxError> {
        self.expect(Tok::LBracket)?;
        let start_col = self.col();
        let a = self.int()?;
        self.expect(Tok::Comma)?;
        let b = self.int()?;
        self.expect(Tok::RBracket)?;
        Interval::new(a, b).map_err(|_| SyntaxError { column: start_col, expected: "an interval with start <= end".into(), found: format!("[{a},{b}]") })
    }

    fn int(&mut self) -> Result<usize, SyntaxError> {
        match self.peek() {
            Tok::Int(n) => {
                let n = *n;
                self.bump();
                Ok(n)
            }
            _ => Err(self.error("a timestep index")),
        }
    }

    fn or(&mut self) -> Parsed {
        self.nary(Tok::Or, Self::and, Formula::Or)
    }

    fn and(&mut self) -> Parsed {
        self.nary(Tok::And, Self::until, Formula::And)
    }

    fn nary(&mut self, op: Tok, operand: fn(&mut Self) -> Parsed, build: fn(Vec<Formula>) -> Formula) -> Parsed {
        let (first, first_cols) = operand(self)?;
        if *self.peek() != op {
            return Ok((first, first_cols));
        }
        let col = self.col();
        let mut fs = vec![first];
        let mut cols = vec![first_cols];
        while *self.peek() == op {
            self.bump();
            let (f, c) = operand(self)?;
            fs.push(f);
            cols.push(c);
        }
        Ok((build(fs), Cols { col, children: cols }))
    }

    fn until(&mut self) -> Parsed {
        let (lhs, lcols) = self.unary()?;
        if !self.is_operator("U") {
            return Ok((lhs, lcols));
        }
        let col = self.col();
        self.bump();
        let i = self.interval()?;
        let (rhs, rcols) = self.unary()?;
        Ok((Formula::Until(Box::new(lhs), Box::new(rhs), i), Cols { col, children: vec![lcols, rcols] }))
    }

    fn unary(&mut self) -> Parsed {
        let col = self.col();
        if *self.peek() == Tok::Not {
            self.bump();
            let (f, c) = self.unary()?;
            return Ok((Formula::Not(Box::new(f)), Cols { col, children: vec![c] }));
        }
        for (name, build) in [("G", Formula::Always as fn(_, _) -> _), ("F", Formula::Eventually)] {
            if self.is_operator(name) {
                self.bump();
                let i = self.interval()?;
                let (f, c) = self.unary()?;
                return Ok((build(Box::new(f), i), Cols { col, children: vec![c] }));
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> Parsed {
        let col = self.col();
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok((Formula::Atom(name), Cols::leaf(col)))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.or()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            _ => Err(self.error("a predicate name, `not`, `G[`, `F[` or `(`")),
        }
    }
}

fn parse_with_columns(text: &str) -> Result<(Formula, Vec<usize>), SyntaxError> {
    let mut p = Parser { toks: tokenize(text)?, pos: 0 };
    let (f, cols) = p.or()?;
    if *p.peek() != Tok::End {
        return Err(p.error("`&`, `|` or end of input"));
    }
    let mut flat = Vec::new();
    cols.preorder(&mut flat);
    Ok((f, flat))
}

/// Parses text into an unrestricted [`Formula`] without checking the fragment.
pub fn parse_formula(text: &str) -> Result<Formula, SyntaxError> {
    parse_with_columns(text).map(|(f, _)| f)
}

/// Parses, validates and resolves a specification.
pub fn parse_spec(text: &str, horizon: usize, predicates: &PredicateTable) -> Result<Specification, StlError> {
    let (formula, cols) = parse_with_columns(text)?;
    if let Err((mut err, idx)) = validate_indexed(&formula) {
        err.column = cols.get(idx).copied();
        return Err(err.into());
    }
    Specification::from_formula(&formula, horizon, predicates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{FragmentRule, PathFormula, Predicate, StateFormula};

    fn table(names: &[&str]) -> PredicateTable {
        names.iter().map(|n| Predicate::affine(*n, vec![1.0, 0.0], 0.0).unwrap()).collect()
    }

    #[test]
    fn reach_avoid() {
        let spec = parse_spec("G[0,100] (not obs) & F[0,100] goal", 100, &table(&["obs", "goal"])).unwrap();
        assert_eq!(spec.conjuncts().len(), 2);
        match &spec.conjuncts()[0] {
            PathFormula::Always(StateFormula::NegPred(p), i) => {
                assert_eq!(p.name, "obs");
                assert_eq!((i.start, i.end), (0, 100));
            }
            other => panic!("unexpected {other:?}"),
        }
        match &spec.conjuncts()[1] {
            PathFormula::Eventually(StateFormula::Pred(p), i) => {
                assert_eq!(p.name, "goal");
                assert_eq!((i.start, i.end), (0, 100));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn either_or() {
        let spec = parse_spec("(not obs) U[0,50] goal & F[0,33] (t1 | t2)", 50, &table(&["obs", "goal", "t1", "t2"])).unwrap();
        assert_eq!(spec.conjuncts().len(), 2);
        assert!(matches!(&spec.conjuncts()[0], PathFormula::Until(StateFormula::NegPred(_), StateFormula::Pred(_), i) if i.end == 50));
        assert!(matches!(&spec.conjuncts()[1], PathFormula::Eventually(StateFormula::Or(cs), i) if cs.len() == 2 && i.end == 33));
    }

    #[test]
    fn nested_temporal_reports_column() {
        let err = parse_spec("F[0,5] (F[0,5] a)", 10, &table(&["a"])).unwrap_err();
        match err {
            StlError::Fragment(e) => {
                assert_eq!(e.rule, FragmentRule::NestedTemporal);
                assert_eq!(e.column, Some(9));
                assert!(e.to_string().contains("nested temporal operator at column 9"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_formula("G[0,] a").unwrap_err();
        assert_eq!(err.column, 5);
        let err = parse_formula("a &").unwrap_err();
        assert_eq!(err.column, 4);
        assert_eq!(err.found, "end of input");
        let err = parse_formula("a $ b").unwrap_err();
        assert_eq!(err.column, 3);
        assert!(parse_formula("G[5,1] a").is_err());
        assert!(parse_formula("(a | b").is_err());
    }

    #[test]
    fn operator_letters_usable_as_names() {
        let f = parse_formula("G[0,1] (F & U)").unwrap();
        assert_eq!(f.to_string(), "G[0,1] (F & U)");
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let f = parse_formula("a & b | c").unwrap();
        assert!(matches!(f, Formula::Or(ref cs) if matches!(cs[0], Formula::And(_))));
    }

    #[test]
    fn unknown_name() {
        assert_eq!(parse_spec("F[0,1] q", 2, &table(&["a"])), Err(StlError::UnknownPredicate("q".into())));
    }
}
