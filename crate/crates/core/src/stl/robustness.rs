//! Exact quantitative semantics with true `min`/`max`.

use serde::{Deserialize, Serialize};

use super::{PathFormula, Predicate, Signal, Specification, StateFormula, StlError};

/// Sign of a robustness value. Zero robustness leaves satisfaction undecided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
    Undefined,
}

impl Verdict {
    pub fn from_robustness(rho: f64) -> Self {
        if rho > 0.0 {
            Verdict::Satisfied
        } else if rho < 0.0 {
            Verdict::Violated
        } else {
            Verdict::Undefined
        }
    }
}

pub trait Robustness {
    /// Robustness of the suffix of `sig` starting at index `t`.
    fn robustness(&self, sig: &Signal, t: usize) -> Result<f64, StlError>;
}

/// `rho((Y, t))` for any formula type of the fragment.
pub fn exact_robustness<F: Robustness + ?Sized>(formula: &F, sig: &Signal, t: usize) -> Result<f64, StlError> {
    formula.robustness(sig, t)
}

impl StateFormula {
    /// Robustness of the state formula at a single output sample.
    pub fn eval(&self, y: &[f64]) -> Result<f64, StlError> {
        match self {
            StateFormula::Pred(p) => p.eval(y),
            StateFormula::NegPred(p) => p.eval(y).map(|v| -v),
            StateFormula::And(cs) => cs.iter().try_fold(f64::INFINITY, |acc, c| Ok(acc.min(c.eval(y)?))),
            StateFormula::Or(cs) => cs.iter().try_fold(f64::NEG_INFINITY, |acc, c| Ok(acc.max(c.eval(y)?))),
        }
    }
}

fn check_index(sig: &Signal, needed: usize) -> Result<(), StlError> {
    if sig.is_empty() {
        return Err(StlError::EmptySignal);
    }
    if needed > sig.horizon() {
        return Err(StlError::HorizonExceeded { needed, available: sig.horizon() });
    }
    Ok(())
}

impl Robustness for Predicate {
    fn robustness(&self, sig: &Signal, t: usize) -> Result<f64, StlError> {
        check_index(sig, t)?;
        self.eval(sig.sample(t))
    }
}

impl Robustness for StateFormula {
    fn robustness(&self, sig: &Signal, t: usize) -> Result<f64, StlError> {
        check_index(sig, t)?;
        self.eval(sig.sample(t))
    }
}

impl Robustness for PathFormula {
    fn robustness(&self, sig: &Signal, t: usize) -> Result<f64, StlError> {
        let i = self.interval();
        check_index(sig, t + i.end)?;
        let window = (t + i.start)..=(t + i.end);
        match self {
            PathFormula::Always(psi, _) => window.map(|k| psi.eval(sig.sample(k))).try_fold(f64::INFINITY, |acc, v| Ok(acc.min(v?))),
            PathFormula::Eventually(psi, _) => window.map(|k| psi.eval(sig.sample(k))).try_fold(f64::NEG_INFINITY, |acc, v| Ok(acc.max(v?))),
            PathFormula::Until(lhs, rhs, _) => {
                // lhs is required on [t + t1, t') only, so the first candidate t' needs rhs alone
                let mut best = f64::NEG_INFINITY;
                let mut lhs_min = f64::INFINITY;
                for k in window {
                    let y = sig.sample(k);
                    best = best.max(rhs.eval(y)?.min(lhs_min));
                    lhs_min = lhs_min.min(lhs.eval(y)?);
                }
                Ok(best)
            }
        }
    }
}

impl Robustness for Specification {
    fn robustness(&self, sig: &Signal, t: usize) -> Result<f64, StlError> {
        self.conjuncts().iter().try_fold(f64::INFINITY, |acc, c| Ok(acc.min(c.robustness(sig, t)?)))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::stl::Interval;

    fn y0() -> Arc<Predicate> {
        Arc::new(Predicate::affine("a", vec![1.0], 0.0).unwrap())
    }

    #[test]
    fn single_predicate() {
        let sig = Signal::scalar(&[3.0]).unwrap();
        assert_eq!(exact_robustness(&StateFormula::Pred(y0()), &sig, 0).unwrap(), 3.0);
        assert_eq!(exact_robustness(&StateFormula::NegPred(y0()), &sig, 0).unwrap(), -3.0);
    }

    #[test]
    fn always_is_window_min() {
        let sig = Signal::scalar(&[1.0, 5.0, -2.0]).unwrap();
        let g = PathFormula::Always(StateFormula::Pred(y0()), Interval::new(0, 2).unwrap());
        assert_eq!(exact_robustness(&g, &sig, 0).unwrap(), -2.0);
        let f = PathFormula::Eventually(StateFormula::Pred(y0()), Interval::new(0, 2).unwrap());
        assert_eq!(exact_robustness(&f, &sig, 0).unwrap(), 5.0);
    }

    #[test]
    fn until_small_case() {
        let a = Arc::new(Predicate::affine("a", vec![1.0, 0.0], 0.0).unwrap());
        let b = Arc::new(Predicate::affine("b", vec![0.0, 1.0], 0.0).unwrap());
        let sig = Signal::new(vec![vec![1.0, -1.0], vec![2.0, 0.0], vec![3.0, 4.0]], 1.0).unwrap();
        let u = PathFormula::Until(StateFormula::Pred(a), StateFormula::Pred(b), Interval::new(0, 2).unwrap());
        // t'=0: b=-1; t'=1: min(0, 1)=0; t'=2: min(4, min(1,2))=1
        assert_eq!(exact_robustness(&u, &sig, 0).unwrap(), 1.0);
    }

    #[test]
    fn horizon_and_empty_errors() {
        let sig = Signal::scalar(&[1.0, 2.0]).unwrap();
        let g = PathFormula::Always(StateFormula::Pred(y0()), Interval::new(0, 2).unwrap());
        assert!(matches!(exact_robustness(&g, &sig, 0), Err(StlError::HorizonExceeded { needed: 2, available: 1 })));
        assert!(matches!(exact_robustness(&StateFormula::Pred(y0()), &sig, 2), Err(StlError::HorizonExceeded { .. })));
    }

    #[test]
    fn verdict_zero_is_undefined() {
        assert_eq!(Verdict::from_robustness(0.0), Verdict::Undefined);
        assert_eq!(Verdict::from_robustness(1e-300), Verdict::Satisfied);
        assert_eq!(Verdict::from_robustness(-1.0), Verdict::Violated);
    }
}
