use std::fmt;

use thiserror::Error;

/// Closed interval of timestep indices `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Result<Self, super::StlError> {
        if start > end {
            return Err(super::StlError::InvalidInterval { t1: start, t2: end });
        }
        Ok(Interval { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.start, self.end)
    }
}

/// Unrestricted STL syntax tree with predicates referenced by name.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Atom(String),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Always(Box<Formula>, Interval),
    Eventually(Box<Formula>, Interval),
    Until(Box<Formula>, Box<Formula>, Interval),
}

impl Formula {
    pub fn atom(name: &str) -> Self {
        Formula::Atom(name.to_string())
    }

    pub fn is_temporal(&self) -> bool {
        matches!(self, Formula::Always(..) | Formula::Eventually(..) | Formula::Until(..))
    }

    /// True if a temporal operator occurs anywhere in the tree.
    pub fn contains_temporal(&self) -> bool {
        match self {
            Formula::Atom(_) => false,
            Formula::Not(c) => c.contains_temporal(),
            Formula::And(cs) | Formula::Or(cs) => cs.iter().any(Formula::contains_temporal),
            Formula::Always(..) | Formula::Eventually(..) | Formula::Until(..) => true,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Or(_) => 1,
            Formula::And(_) => 2,
            Formula::Until(..) => 3,
            Formula::Not(_) | Formula::Always(..) | Formula::Eventually(..) => 4,
            Formula::Atom(_) => 5,
        }
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>, min_precedence: u8) -> fmt::Result {
        if self.precedence() < min_precedence {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(name) => f.write_str(name),
            Formula::Not(c) => {
                f.write_str("not ")?;
                c.fmt_operand(f, 4)
            }
            Formula::And(cs) | Formula::Or(cs) => {
                let sep = if matches!(self, Formula::And(_)) { " & " } else { " | " };
                // same-level children keep their parentheses so the tree shape survives a round trip
                let min = self.precedence() + 1;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    c.fmt_operand(f, min)?;
                }
                Ok(())
            }
            Formula::Always(c, i) => {
                write!(f, "G{i} ")?;
                c.fmt_operand(f, 4)
            }
            Formula::Eventually(c, i) => {
                write!(f, "F{i} ")?;
                c.fmt_operand(f, 4)
            }
            Formula::Until(a, b, i) => {
                a.fmt_operand(f, 4)?;
                write!(f, " U{i} ")?;
                b.fmt_operand(f, 4)
            }
        }
    }
}

/// Which restriction of the supported fragment a formula violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FragmentRule {
    /// A temporal operator appears inside another temporal operator's operand.
    NestedTemporal,
    /// `|` joins formulas that contain temporal operators.
    PathDisjunction,
    /// `not` applied to anything other than a predicate name.
    NegationAboveNonPredicate,
    /// A conjunct of the specification is not wrapped in a temporal operator.
    BareStateFormula,
    /// `&` or `|` with fewer than two operands.
    Arity,
}

impl fmt::Display for FragmentRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FragmentRule::NestedTemporal => "nested temporal operator",
            FragmentRule::PathDisjunction => "disjunction between temporal formulas",
            FragmentRule::NegationAboveNonPredicate => "negation above a non-predicate",
            FragmentRule::BareStateFormula => "state formula outside a temporal operator",
            FragmentRule::Arity => "boolean operator with fewer than two operands",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct FragmentError {
    pub rule: FragmentRule,
    /// Rendering of the offending sub-formula.
    pub construct: String,
    /// 1-based column in the source text, when parsed from text.
    pub column: Option<usize>,
}

impl FragmentError {
    pub fn new(rule: FragmentRule, construct: impl Into<String>) -> Self {
        FragmentError { rule, construct: construct.into(), column: None }
    }
}

impl fmt::Display for FragmentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rule)?;
        if let Some(c) = self.column {
            write!(f, " at column {c}")?;
        }
        write!(f, ": `{}`", self.construct)
    }
}

/// Accepts exactly conjunctions of `G`, `F` and `U` over boolean
/// combinations of (possibly negated) predicates.
pub fn validate_fragment(f: &Formula) -> Result<(), FragmentError> {
    validate_indexed(f).map_err(|(err, _)| err)
}

/// Like [`validate_fragment`] but also returns the pre-order index of the
/// offending node, which the parser maps back to a source column.
pub(crate) fn validate_indexed(f: &Formula) -> Result<(), (FragmentError, usize)> {
    let mut counter = 0;
    check_top(f, &mut counter)
}

type Violation = (FragmentError, usize);

fn violation(rule: FragmentRule, f: &Formula, idx: usize) -> Violation {
    (FragmentError::new(rule, f.to_string()), idx)
}

fn check_top(f: &Formula, counter: &mut usize) -> Result<(), Violation> {
    let idx = *counter;
    *counter += 1;
    match f {
        Formula::And(cs) => {
            if cs.len() < 2 {
                return Err(violation(FragmentRule::Arity, f, idx));
            }
            cs.iter().try_for_each(|c| check_top(c, counter))
        }
        Formula::Always(body, _) | Formula::Eventually(body, _) => check_state(body, counter),
        Formula::Until(a, b, _) => {
            check_state(a, counter)?;
            check_state(b, counter)
        }
        Formula::Or(cs) if cs.iter().any(Formula::contains_temporal) => Err(violation(FragmentRule::PathDisjunction, f, idx)),
        Formula::Not(c) if !matches!(c.as_ref(), Formula::Atom(_)) => Err(violation(FragmentRule::NegationAboveNonPredicate, f, idx)),
        _ => Err(violation(FragmentRule::BareStateFormula, f, idx)),
    }
}

fn check_state(f: &Formula, counter: &mut usize) -> Result<(), Violation> {
    let idx = *counter;
    *counter += 1;
    match f {
        Formula::Atom(_) => Ok(()),
        Formula::Not(c) => match c.as_ref() {
            Formula::Atom(_) => {
                *counter += 1;
                Ok(())
            }
            _ => Err(violation(FragmentRule::NegationAboveNonPredicate, f, idx)),
        },
        Formula::And(cs) | Formula::Or(cs) => {
            if cs.len() < 2 {
                return Err(violation(FragmentRule::Arity, f, idx));
            }
            cs.iter().try_for_each(|c| check_state(c, counter))
        }
        Formula::Always(..) | Formula::Eventually(..) | Formula::Until(..) => Err(violation(FragmentRule::NestedTemporal, f, idx)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(n: &str) -> Formula {
        Formula::atom(n)
    }

    fn iv(s: usize, e: usize) -> Interval {
        Interval::new(s, e).unwrap()
    }

    #[test]
    fn accepts_state_formula_under_always() {
        let f = Formula::Always(Box::new(Formula::And(vec![a("a"), Formula::Or(vec![a("b"), a("c")])])), iv(0, 10));
        assert!(validate_fragment(&f).is_ok());
    }

    #[test]
    fn rejects_disjunction_of_path_formulas() {
        let f = Formula::Or(vec![Formula::Eventually(Box::new(a("a")), iv(0, 3)), Formula::Always(Box::new(a("b")), iv(0, 3))]);
        assert_eq!(validate_fragment(&f).unwrap_err().rule, FragmentRule::PathDisjunction);
    }

    #[test]
    fn rejects_negated_conjunction() {
        let f = Formula::Always(Box::new(Formula::Not(Box::new(Formula::And(vec![a("a"), a("b")])))), iv(0, 1));
        assert_eq!(validate_fragment(&f).unwrap_err().rule, FragmentRule::NegationAboveNonPredicate);
        let bare = Formula::Not(Box::new(Formula::And(vec![a("a"), a("b")])));
        assert_eq!(validate_fragment(&bare).unwrap_err().rule, FragmentRule::NegationAboveNonPredicate);
    }

    #[test]
    fn rejects_nested_temporal() {
        let f = Formula::Eventually(Box::new(Formula::Eventually(Box::new(a("a")), iv(0, 5))), iv(0, 5));
        let (err, idx) = validate_indexed(&f).unwrap_err();
        assert_eq!(err.rule, FragmentRule::NestedTemporal);
        assert_eq!(idx, 1);
    }

    #[test]
    fn rejects_bare_state_formula() {
        assert_eq!(validate_fragment(&a("a")).unwrap_err().rule, FragmentRule::BareStateFormula);
        let f = Formula::And(vec![Formula::Always(Box::new(a("a")), iv(0, 1)), a("b")]);
        let (err, idx) = validate_indexed(&f).unwrap_err();
        assert_eq!(err.rule, FragmentRule::BareStateFormula);
        assert_eq!(idx, 3);
    }

    #[test]
    fn display_keeps_structure() {
        let f = Formula::And(vec![
            Formula::Until(Box::new(Formula::Not(Box::new(a("obs")))), Box::new(a("goal")), iv(0, 50)),
            Formula::Eventually(Box::new(Formula::Or(vec![a("t1"), a("t2")])), iv(0, 33)),
        ]);
        assert_eq!(f.to_string(), "not obs U[0,50] goal & F[0,33] (t1 | t2)");
    }

    #[test]
    fn interval_order_checked() {
        assert!(Interval::new(3, 2).is_err());
        assert_eq!(iv(2, 7).len(), 5);
    }
}
