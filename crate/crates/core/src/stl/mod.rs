//! Signal Temporal Logic: syntax trees, the textual grammar, fragment
//! validation and the exact (non-smooth) quantitative semantics.
//!
//! Two layers of syntax live here. [`Formula`] is an unrestricted STL tree
//! with predicates referenced by name; it is what the parser produces and
//! what [`validate_fragment`] inspects. [`Specification`], [`PathFormula`]
//! and [`StateFormula`] are the typed, resolved representation of the
//! supported fragment: a conjunction of temporal operators, each applied to
//! boolean combinations of predicates with negation only at the leaves.

mod formula;
mod parser;
mod predicate;
mod robustness;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use formula::{validate_fragment, Formula, FragmentError, FragmentRule, Interval};
pub use parser::{parse_formula, parse_spec, SyntaxError};
pub(crate) use predicate::dot as predicate_dot;
pub use predicate::{Predicate, PredicateKind, PredicateTable, DEFAULT_BALL_EPSILON};
pub use robustness::{exact_robustness, Robustness, Verdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StlError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Fragment(#[from] FragmentError),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("invalid predicate `{name}`: {reason}")]
    InvalidPredicate { name: String, reason: String },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("time bound {needed} exceeds the last available index {available}")]
    HorizonExceeded { needed: usize, available: usize },
    #[error("invalid interval [{t1},{t2}]")]
    InvalidInterval { t1: usize, t2: usize },
    #[error("signal is empty")]
    EmptySignal,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("specification has no conjuncts")]
    EmptySpecification,
}

/// Boolean combination of predicates evaluated on a single output sample.
#[derive(Debug, Clone, PartialEq)]
pub enum StateFormula {
    Pred(Arc<Predicate>),
    NegPred(Arc<Predicate>),
    And(Vec<StateFormula>),
    Or(Vec<StateFormula>),
}

impl StateFormula {
    pub fn pred(p: Arc<Predicate>) -> Self {
        StateFormula::Pred(p)
    }

    pub fn neg(p: Arc<Predicate>) -> Self {
        StateFormula::NegPred(p)
    }

    pub fn and(children: Vec<StateFormula>) -> Result<Self, StlError> {
        if children.len() < 2 {
            return Err(FragmentError::new(FragmentRule::Arity, "`&` needs at least two operands").into());
        }
        Ok(StateFormula::And(children))
    }

    pub fn or(children: Vec<StateFormula>) -> Result<Self, StlError> {
        if children.len() < 2 {
            return Err(FragmentError::new(FragmentRule::Arity, "`|` needs at least two operands").into());
        }
        Ok(StateFormula::Or(children))
    }

    /// Output dimension required by the predicates in this formula, if they agree.
    pub fn output_dim(&self) -> Option<usize> {
        let mut dims = Vec::new();
        self.visit_predicates(&mut |p| dims.push(p.dim()));
        let first = *dims.first()?;
        dims.iter().all(|&d| d == first).then_some(first)
    }

    pub fn visit_predicates(&self, f: &mut impl FnMut(&Predicate)) {
        match self {
            StateFormula::Pred(p) | StateFormula::NegPred(p) => f(p),
            StateFormula::And(cs) | StateFormula::Or(cs) => cs.iter().for_each(|c| c.visit_predicates(f)),
        }
    }

    pub fn to_formula(&self) -> Formula {
        match self {
            StateFormula::Pred(p) => Formula::Atom(p.name.clone()),
            StateFormula::NegPred(p) => Formula::Not(Box::new(Formula::Atom(p.name.clone()))),
            StateFormula::And(cs) => Formula::And(cs.iter().map(StateFormula::to_formula).collect()),
            StateFormula::Or(cs) => Formula::Or(cs.iter().map(StateFormula::to_formula).collect()),
        }
    }

    /// PNF and arity check by tree walk.
    pub fn is_well_formed(&self) -> bool {
        match self {
            StateFormula::Pred(_) | StateFormula::NegPred(_) => true,
            StateFormula::And(cs) | StateFormula::Or(cs) => cs.len() >= 2 && cs.iter().all(StateFormula::is_well_formed),
        }
    }
}

/// A temporal operator applied to state formulas. Bounds are timestep indices.
#[derive(Debug, Clone, PartialEq)]
pub enum PathFormula {
    Always(StateFormula, Interval),
    Eventually(StateFormula, Interval),
    Until(StateFormula, StateFormula, Interval),
}

impl PathFormula {
    pub fn interval(&self) -> Interval {
        match self {
            PathFormula::Always(_, i) | PathFormula::Eventually(_, i) | PathFormula::Until(_, _, i) => *i,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PathFormula::Always(..) => "always",
            PathFormula::Eventually(..) => "eventually",
            PathFormula::Until(..) => "until",
        }
    }

    pub fn to_formula(&self) -> Formula {
        match self {
            PathFormula::Always(s, i) => Formula::Always(Box::new(s.to_formula()), *i),
            PathFormula::Eventually(s, i) => Formula::Eventually(Box::new(s.to_formula()), *i),
            PathFormula::Until(a, b, i) => Formula::Until(Box::new(a.to_formula()), Box::new(b.to_formula()), *i),
        }
    }

    fn state_formulas(&self) -> Vec<&StateFormula> {
        match self {
            PathFormula::Always(s, _) | PathFormula::Eventually(s, _) => vec![s],
            PathFormula::Until(a, b, _) => vec![a, b],
        }
    }
}

/// Conjunction of path formulas over a fixed horizon `T` (signals carry
/// `T + 1` samples).
#[derive(Debug, Clone, PartialEq)]
pub struct Specification {
    conjuncts: Vec<PathFormula>,
    horizon: usize,
}

impl Specification {
    pub fn new(conjuncts: Vec<PathFormula>, horizon: usize) -> Result<Self, StlError> {
        if horizon == 0 {
            return Err(StlError::ZeroHorizon);
        }
        if conjuncts.is_empty() {
            return Err(StlError::EmptySpecification);
        }
        for c in &conjuncts {
            let i = c.interval();
            if i.end > horizon {
                return Err(StlError::HorizonExceeded { needed: i.end, available: horizon });
            }
            for s in c.state_formulas() {
                if !s.is_well_formed() {
                    return Err(FragmentError::new(FragmentRule::Arity, "boolean operator with fewer than two operands").into());
                }
            }
        }
        Ok(Specification { conjuncts, horizon })
    }

    /// Resolves a parsed formula against a predicate table. The formula must
    /// lie in the supported fragment.
    pub fn from_formula(formula: &Formula, horizon: usize, predicates: &PredicateTable) -> Result<Self, StlError> {
        validate_fragment(formula)?;
        let mut conjuncts = Vec::new();
        collect_conjuncts(formula, predicates, &mut conjuncts)?;
        Specification::new(conjuncts, horizon)
    }

    pub fn conjuncts(&self) -> &[PathFormula] {
        &self.conjuncts
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn to_formula(&self) -> Formula {
        if self.conjuncts.len() == 1 {
            self.conjuncts[0].to_formula()
        } else {
            Formula::And(self.conjuncts.iter().map(PathFormula::to_formula).collect())
        }
    }

    pub fn output_dim(&self) -> Option<usize> {
        let mut dims = Vec::new();
        for c in &self.conjuncts {
            for s in c.state_formulas() {
                s.visit_predicates(&mut |p| dims.push(p.dim()));
            }
        }
        let first = *dims.first()?;
        dims.iter().all(|&d| d == first).then_some(first)
    }
}

impl fmt::Display for Specification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_formula().fmt(f)
    }
}

fn collect_conjuncts(f: &Formula, preds: &PredicateTable, out: &mut Vec<PathFormula>) -> Result<(), StlError> {
    match f {
        Formula::And(cs) => {
            for c in cs {
                collect_conjuncts(c, preds, out)?;
            }
            Ok(())
        }
        Formula::Always(body, i) => {
            out.push(PathFormula::Always(resolve_state(body, preds)?, *i));
            Ok(())
        }
        Formula::Eventually(body, i) => {
            out.push(PathFormula::Eventually(resolve_state(body, preds)?, *i));
            Ok(())
        }
        Formula::Until(a, b, i) => {
            out.push(PathFormula::Until(resolve_state(a, preds)?, resolve_state(b, preds)?, *i));
            Ok(())
        }
        // validate_fragment rejects everything else at the top level
        other => Err(FragmentError::new(FragmentRule::BareStateFormula, other.to_string()).into()),
    }
}

fn resolve_state(f: &Formula, preds: &PredicateTable) -> Result<StateFormula, StlError> {
    let lookup = |name: &str| preds.get(name).cloned().ok_or_else(|| StlError::UnknownPredicate(name.to_string()));
    match f {
        Formula::Atom(name) => Ok(StateFormula::Pred(lookup(name)?)),
        Formula::Not(inner) => match inner.as_ref() {
            Formula::Atom(name) => Ok(StateFormula::NegPred(lookup(name)?)),
            other => Err(FragmentError::new(FragmentRule::NegationAboveNonPredicate, format!("not ({other})")).into()),
        },
        Formula::And(cs) => StateFormula::and(cs.iter().map(|c| resolve_state(c, preds)).collect::<Result<_, _>>()?),
        Formula::Or(cs) => StateFormula::or(cs.iter().map(|c| resolve_state(c, preds)).collect::<Result<_, _>>()?),
        other => Err(FragmentError::new(FragmentRule::NestedTemporal, other.to_string()).into()),
    }
}

/// Time-indexed output samples `y_0..y_T`. Semantics are index based; `dt`
/// is carried along for reporting only.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<Vec<f64>>,
    dim: usize,
    pub dt: f64,
}

impl Signal {
    pub fn new(samples: Vec<Vec<f64>>, dt: f64) -> Result<Self, StlError> {
        let dim = samples.first().ok_or(StlError::EmptySignal)?.len();
        if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
            return Err(StlError::DimensionMismatch { expected: dim, actual: bad.len() });
        }
        Ok(Signal { samples, dim, dt })
    }

    /// Convenience constructor for scalar signals.
    pub fn scalar(values: &[f64]) -> Result<Self, StlError> {
        Signal::new(values.iter().map(|&v| vec![v]).collect(), 1.0)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `T`, the index of the last sample.
    pub fn horizon(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn sample(&self, t: usize) -> &[f64] {
        &self.samples[t]
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> PredicateTable {
        let mut t = PredicateTable::new();
        t.insert(Predicate::affine("a", vec![1.0], 0.0).unwrap());
        t.insert(Predicate::affine("b", vec![-1.0], -2.0).unwrap());
        t
    }

    #[test]
    fn rejects_zero_horizon_and_overlong_bounds() {
        let f = parse_formula("F[0,5] a").unwrap();
        assert_eq!(Specification::from_formula(&f, 0, &table()), Err(StlError::ZeroHorizon));
        assert!(matches!(Specification::from_formula(&f, 4, &table()), Err(StlError::HorizonExceeded { needed: 5, available: 4 })));
    }

    #[test]
    fn unknown_predicate_is_reported_by_name() {
        let f = parse_formula("G[0,1] zz").unwrap();
        assert_eq!(Specification::from_formula(&f, 3, &table()), Err(StlError::UnknownPredicate("zz".into())));
    }

    #[test]
    fn state_formula_arity_enforced() {
        let a = table().get("a").cloned().unwrap();
        assert!(StateFormula::and(vec![StateFormula::pred(a.clone())]).is_err());
        assert!(StateFormula::or(vec![StateFormula::pred(a.clone()), StateFormula::neg(a)]).is_ok());
    }

    #[test]
    fn signal_rejects_ragged_samples() {
        assert_eq!(Signal::new(vec![], 0.1), Err(StlError::EmptySignal));
        assert!(matches!(Signal::new(vec![vec![1.0, 2.0], vec![1.0]], 0.1), Err(StlError::DimensionMismatch { expected: 2, actual: 1 })));
    }
}
