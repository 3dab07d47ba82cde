use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::StlError;

/// Smoothing radius used for ball predicates unless configured otherwise.
pub const DEFAULT_BALL_EPSILON: f64 = 1e-3;

/// Shape of the predicate function `mu(y)`; the predicate holds when `mu(y) >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredicateKind {
    /// `a . y - b`
    Affine { coeffs: Vec<f64>, offset: f64 },
    /// `r - sqrt(|y - c|^2 + eps^2) + eps`
    Ball { center: Vec<f64>, radius: f64, epsilon: f64 },
    /// Axis-aligned box. `None` leaves a dimension unconstrained. Evaluates
    /// as the conjunction of one affine half-space per finite bound.
    Box { bounds: Vec<Option<(f64, f64)>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub name: String,
    pub kind: PredicateKind,
}

impl Predicate {
    pub fn new(name: impl Into<String>, kind: PredicateKind) -> Result<Self, StlError> {
        let name = name.into();
        let invalid = |reason: &str| StlError::InvalidPredicate { name: name.clone(), reason: reason.to_string() };
        match &kind {
            PredicateKind::Affine { coeffs, offset } => {
                if coeffs.is_empty() {
                    return Err(invalid("affine predicate needs at least one coefficient"));
                }
                if !coeffs.iter().chain(std::iter::once(offset)).all(|v| v.is_finite()) {
                    return Err(invalid("non-finite coefficient"));
                }
            }
            PredicateKind::Ball { center, radius, epsilon } => {
                if center.is_empty() || !center.iter().all(|v| v.is_finite()) {
                    return Err(invalid("ball center must be a non-empty finite vector"));
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(invalid("ball radius must be positive"));
                }
                if !(*epsilon >= 0.0 && epsilon.is_finite()) {
                    return Err(invalid("ball smoothing epsilon must be non-negative"));
                }
            }
            PredicateKind::Box { bounds } => {
                if bounds.iter().all(Option::is_none) {
                    return Err(invalid("box must constrain at least one dimension"));
                }
                for (lo, hi) in bounds.iter().flatten() {
                    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                        return Err(invalid("box lower bound must be strictly below the upper bound"));
                    }
                }
            }
        }
        Ok(Predicate { name, kind })
    }

    pub fn affine(name: impl Into<String>, coeffs: Vec<f64>, offset: f64) -> Result<Self, StlError> {
        Predicate::new(name, PredicateKind::Affine { coeffs, offset })
    }

    pub fn ball(name: impl Into<String>, center: Vec<f64>, radius: f64, epsilon: f64) -> Result<Self, StlError> {
        Predicate::new(name, PredicateKind::Ball { center, radius, epsilon })
    }

    /// Box with every dimension constrained.
    pub fn boxed(name: impl Into<String>, lower: &[f64], upper: &[f64]) -> Result<Self, StlError> {
        let name = name.into();
        if lower.len() != upper.len() {
            return Err(StlError::DimensionMismatch { expected: lower.len(), actual: upper.len() });
        }
        let bounds = lower.iter().zip(upper).map(|(&l, &u)| Some((l, u))).collect();
        Predicate::new(name, PredicateKind::Box { bounds })
    }

    /// Output dimension `p` the predicate is defined over.
    pub fn dim(&self) -> usize {
        match &self.kind {
            PredicateKind::Affine { coeffs, .. } => coeffs.len(),
            PredicateKind::Ball { center, .. } => center.len(),
            PredicateKind::Box { bounds } => bounds.len(),
        }
    }

    /// Half-spaces `(a, b)` (meaning `a . y - b >= 0`) whose conjunction
    /// makes up a box. Empty for the other kinds.
    pub fn box_halfspaces(&self) -> Vec<(Vec<f64>, f64)> {
        let PredicateKind::Box { bounds } = &self.kind else {
            return Vec::new();
        };
        let p = bounds.len();
        let mut out = Vec::with_capacity(2 * p);
        for (i, b) in bounds.iter().enumerate() {
            if let Some((lo, hi)) = b {
                let mut a = vec![0.0; p];
                a[i] = 1.0;
                out.push((a.clone(), *lo));
                a[i] = -1.0;
                out.push((a, -*hi));
            }
        }
        out
    }

    /// Exact value of `mu(y)`.
    pub fn eval(&self, y: &[f64]) -> Result<f64, StlError> {
        if y.len() != self.dim() {
            return Err(StlError::DimensionMismatch { expected: self.dim(), actual: y.len() });
        }
        Ok(match &self.kind {
            PredicateKind::Affine { coeffs, offset } => dot(coeffs, y) - offset,
            PredicateKind::Ball { center, radius, epsilon } => {
                let d2: f64 = y.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                radius - (d2 + epsilon * epsilon).sqrt() + epsilon
            }
            PredicateKind::Box { .. } => self.box_halfspaces().iter().map(|(a, b)| dot(a, y) - b).fold(f64::INFINITY, f64::min),
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Named predicates available to the parser.
#[derive(Debug, Clone, Default)]
pub struct PredicateTable {
    entries: BTreeMap<String, Arc<Predicate>>,
}

impl PredicateTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, p: Predicate) -> Arc<Predicate> {
        let p = Arc::new(p);
        self.entries.insert(p.name.clone(), p.clone());
        p
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Predicate>> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Predicate>> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl FromIterator<Predicate> for PredicateTable {
    fn from_iter<I: IntoIterator<Item = Predicate>>(iter: I) -> Self {
        let mut t = PredicateTable::new();
        for p in iter {
            t.insert(p);
        }
        t
    }
}
