//! Compilation of a specification into per-timestep running costs.
//!
//! Each path formula is pinned to fixed switching times:
//!
//! | conjunct            | timesteps carrying terms            | weight            |
//! |---------------------|-------------------------------------|-------------------|
//! | `G[t1,t2] psi`      | every `t` in `[t1, t2]`             | 1                 |
//! | `F[t1,t2] psi`      | `t2`                                | `max(1, t2 - t1)` |
//! | `a U[t1,t2] b`      | `a` on `[t1, t2)`, `b` at `t2`      | 1 / `max(1, t2 - t1)` |
//!
//! A term contributes `-weight * smooth_robustness(psi, y_t)`. Several terms
//! at the same timestep are merged with [`smooth_max`] when the cost is
//! evaluated; a timestep without terms costs zero.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::smoothing::{smooth_max, smooth_max_value, smooth_state_robustness, smooth_state_robustness_value, SmoothError, SmoothParams, SmoothValue};
use crate::stl::{exact_robustness, PathFormula, Signal, Specification, StateFormula, StlError, Verdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("timestep {t} is outside the horizon 0..={horizon}")]
    HorizonExceeded { t: usize, horizon: usize },
    #[error("signal has {actual} samples, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("switching time {time} for conjunct {conjunct} lies outside its interval [{start},{end}]")]
    InvalidSwitchingTime { conjunct: usize, time: usize, start: usize, end: usize },
    #[error("switching-time override refers to conjunct {0}, which does not exist")]
    UnknownConjunct(usize),
    #[error(transparent)]
    Smooth(#[from] SmoothError),
    #[error(transparent)]
    Stl(#[from] StlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TermRole {
    AlwaysBody,
    EventuallyTarget,
    UntilHold,
    UntilTarget,
}

/// Where a cost term came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TermSource {
    pub conjunct: usize,
    pub role: TermRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostTerm {
    pub formula: StateFormula,
    /// Always at least 1.
    pub weight: f64,
    pub source: TermSource,
}

impl CostTerm {
    /// `-weight * smooth_robustness(formula, y)`.
    pub fn eval(&self, y: &[f64], params: &SmoothParams) -> Result<SmoothValue, CostError> {
        Ok(smooth_state_robustness(&self.formula, y, params)?.scale(-self.weight))
    }
}

/// Switching times other than the interval end, keyed by conjunct index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompileOptions {
    pub switching: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningCostTable {
    terms: Vec<Vec<CostTerm>>,
    spec: Specification,
}

impl RunningCostTable {
    pub fn horizon(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn terms_at(&self, t: usize) -> &[CostTerm] {
        &self.terms[t]
    }

    pub fn entries(&self) -> &[Vec<CostTerm>] {
        &self.terms
    }

    pub fn spec(&self) -> &Specification {
        &self.spec
    }

    /// Timesteps at which the given conjunct contributed terms.
    pub fn timesteps_of(&self, conjunct: usize) -> Vec<usize> {
        (0..self.terms.len()).filter(|&t| self.terms[t].iter().any(|c| c.source.conjunct == conjunct)).collect()
    }
}

/// Weight for eventually/until targets; floored at 1 so `t1 == t2` keeps an incentive.
pub fn target_weight(start: usize, end: usize) -> f64 {
    ((end - start) as f64).max(1.0)
}

pub fn compile(spec: &Specification) -> Result<RunningCostTable, CostError> {
    compile_with(spec, &CompileOptions::default())
}

pub fn compile_with(spec: &Specification, options: &CompileOptions) -> Result<RunningCostTable, CostError> {
    let horizon = spec.horizon();
    let mut terms: Vec<Vec<CostTerm>> = vec![Vec::new(); horizon + 1];
    if let Some((&idx, _)) = options.switching.iter().find(|(&idx, _)| idx >= spec.conjuncts().len()) {
        return Err(CostError::UnknownConjunct(idx));
    }
    for (idx, conjunct) in spec.conjuncts().iter().enumerate() {
        let iv = conjunct.interval();
        if iv.end > horizon {
            return Err(CostError::HorizonExceeded { t: iv.end, horizon });
        }
        let switch = match options.switching.get(&idx) {
            Some(&s) if s < iv.start || s > iv.end => return Err(CostError::InvalidSwitchingTime { conjunct: idx, time: s, start: iv.start, end: iv.end }),
            Some(&s) => s,
            None => iv.end,
        };
        let term =
            |formula: &StateFormula, weight: f64, role: TermRole| CostTerm { formula: formula.clone(), weight, source: TermSource { conjunct: idx, role } };
        let weight = target_weight(iv.start, iv.end);
        match conjunct {
            PathFormula::Always(psi, _) => {
                for slot in &mut terms[iv.start..=iv.end] {
                    slot.push(term(psi, 1.0, TermRole::AlwaysBody));
                }
            }
            PathFormula::Eventually(psi, _) => terms[switch].push(term(psi, weight, TermRole::EventuallyTarget)),
            PathFormula::Until(hold, target, _) => {
                for slot in &mut terms[iv.start..switch] {
                    slot.push(term(hold, 1.0, TermRole::UntilHold));
                }
                terms[switch].push(term(target, weight, TermRole::UntilTarget));
            }
        }
    }
    Ok(RunningCostTable { terms, spec: spec.clone() })
}

/// `l_t(y)`: zero for an empty entry, the single term's value, or the smooth
/// maximum of all term values.
pub fn eval_running_cost(table: &RunningCostTable, t: usize, y: &[f64], params: &SmoothParams) -> Result<SmoothValue, CostError> {
    let entry = table.terms.get(t).ok_or(CostError::HorizonExceeded { t, horizon: table.horizon() })?;
    match entry.as_slice() {
        [] => Ok(SmoothValue::zero(y.len())),
        [single] => single.eval(y, params),
        many => {
            let vals = many.iter().map(|c| c.eval(y, params)).collect::<Result<Vec<_>, _>>()?;
            Ok(smooth_max(&vals, params)?)
        }
    }
}

/// Value of [`eval_running_cost`] without derivatives.
pub fn eval_running_cost_value(table: &RunningCostTable, t: usize, y: &[f64], params: &SmoothParams) -> Result<f64, CostError> {
    let entry = table.terms.get(t).ok_or(CostError::HorizonExceeded { t, horizon: table.horizon() })?;
    let term = |c: &CostTerm| -> Result<f64, CostError> { Ok(-c.weight * smooth_state_robustness_value(&c.formula, y, params)?) };
    match entry.as_slice() {
        [] => Ok(0.0),
        [single] => term(single),
        many => {
            let vals = many.iter().map(term).collect::<Result<Vec<_>, _>>()?;
            Ok(smooth_max_value(&vals, params)?)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateVerdict {
    Satisfied,
    NotCertified,
}

/// Outcome of the runtime satisfaction check on a trajectory's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub verdict: CertificateVerdict,
    /// Merged running cost `l_t` per timestep; `None` where no term applies.
    pub running_costs: Vec<Option<f64>>,
    /// Largest individual term value `-w * smooth_robustness` per timestep.
    pub term_margins: Vec<Option<f64>>,
    /// First timestep whose margin is not strictly negative.
    pub first_violation: Option<usize>,
    /// Exact robustness of the whole specification on the same signal.
    pub exact_robustness: f64,
    pub exact_verdict: Verdict,
}

impl Certificate {
    pub fn is_satisfied(&self) -> bool {
        self.verdict == CertificateVerdict::Satisfied
    }
}

/// Certifies a signal when every cost term is strictly negative at every
/// timestep, which also makes each merged `l_t` negative.
///
/// Requiring each term rather than only the merged `l_t` to be negative
/// matters: the smooth maximum is a weighted mean and can be negative while
/// one of its arguments is positive.
pub fn check_soundness(table: &RunningCostTable, outputs: &Signal, params: &SmoothParams) -> Result<Certificate, CostError> {
    let expected = table.horizon() + 1;
    if outputs.len() != expected {
        return Err(CostError::LengthMismatch { expected, actual: outputs.len() });
    }
    let mut running_costs = Vec::with_capacity(expected);
    let mut term_margins = Vec::with_capacity(expected);
    let mut first_violation = None;
    for t in 0..expected {
        let y = outputs.sample(t);
        if table.terms[t].is_empty() {
            running_costs.push(None);
            term_margins.push(None);
            continue;
        }
        let l = eval_running_cost(table, t, y, params)?.value;
        let worst = table.terms[t].iter().map(|c| c.eval(y, params).map(|v| v.value)).try_fold(f64::NEG_INFINITY, |acc, v| Ok::<_, CostError>(acc.max(v?)))?;
        // NaN margins must not certify
        if first_violation.is_none() && !(worst < 0.0 && l < 0.0) {
            first_violation = Some(t);
        }
        running_costs.push(Some(l));
        term_margins.push(Some(worst));
    }
    let exact = exact_robustness(&table.spec, outputs, 0)?;
    let verdict = if first_violation.is_none() { CertificateVerdict::Satisfied } else { CertificateVerdict::NotCertified };
    Ok(Certificate { verdict, running_costs, term_margins, first_violation, exact_robustness: exact, exact_verdict: Verdict::from_robustness(exact) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermDiagnostic {
    pub conjunct: usize,
    pub operator: &'static str,
    pub role: TermRole,
    pub formula: String,
    pub weight: f64,
    pub smooth_robustness: f64,
    pub weighted_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimestepDiagnostic {
    pub t: usize,
    pub running_cost: Option<f64>,
    pub terms: Vec<TermDiagnostic>,
}

/// Per-timestep breakdown of every term, for the JSON report.
pub fn diagnostics(table: &RunningCostTable, outputs: &Signal, params: &SmoothParams) -> Result<Vec<TimestepDiagnostic>, CostError> {
    let expected = table.horizon() + 1;
    if outputs.len() != expected {
        return Err(CostError::LengthMismatch { expected, actual: outputs.len() });
    }
    let mut out = Vec::with_capacity(expected);
    for t in 0..expected {
        let y = outputs.sample(t);
        let mut terms = Vec::new();
        for c in &table.terms[t] {
            let rho = smooth_state_robustness(&c.formula, y, params)?.value;
            terms.push(TermDiagnostic {
                conjunct: c.source.conjunct,
                operator: table.spec.conjuncts()[c.source.conjunct].kind_name(),
                role: c.source.role,
                formula: c.formula.to_formula().to_string(),
                weight: c.weight,
                smooth_robustness: rho,
                weighted_cost: -c.weight * rho,
            });
        }
        let running_cost = if terms.is_empty() { None } else { Some(eval_running_cost(table, t, y, params)?.value) };
        out.push(TimestepDiagnostic { t, running_cost, terms });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{parse_spec, Predicate, PredicateTable};

    fn geometry() -> PredicateTable {
        [
            Predicate::boxed("obs", &[3.0, 4.0], &[5.0, 6.0]).unwrap(),
            Predicate::boxed("goal", &[7.0, 8.0], &[8.0, 9.0]).unwrap(),
            Predicate::boxed("t1", &[6.0, 2.0], &[7.0, 3.0]).unwrap(),
            Predicate::boxed("t2", &[1.0, 6.0], &[2.0, 7.0]).unwrap(),
            Predicate::affine("a", vec![1.0, 0.0], 0.0).unwrap(),
            Predicate::affine("b", vec![0.0, 1.0], 0.0).unwrap(),
        ]
        .into_iter()
        .collect()
    }

    #[test]
    fn reach_avoid_placement() {
        let spec = parse_spec("G[0,100] (not obs) & F[0,100] goal", 100, &geometry()).unwrap();
        let table = compile(&spec).unwrap();
        for t in 0..100 {
            assert_eq!(table.terms_at(t).len(), 1);
            assert_eq!(table.terms_at(t)[0].weight, 1.0);
            assert_eq!(table.terms_at(t)[0].source.role, TermRole::AlwaysBody);
        }
        let last = table.terms_at(100);
        assert_eq!(last.len(), 2);
        assert_eq!(last[1].weight, 100.0);
        assert_eq!(last[1].source.role, TermRole::EventuallyTarget);
    }

    #[test]
    fn either_or_placement() {
        let spec = parse_spec("(not obs) U[0,50] goal & F[0,33] (t1 | t2)", 50, &geometry()).unwrap();
        let table = compile(&spec).unwrap();
        assert_eq!(table.timesteps_of(1), vec![33]);
        let ev = table.terms_at(33).iter().find(|c| c.source.conjunct == 1).unwrap();
        assert_eq!(ev.weight, 33.0);
        assert_eq!(table.timesteps_of(0), (0..=50).collect::<Vec<_>>());
        for t in 0..50 {
            let c = table.terms_at(t).iter().find(|c| c.source.conjunct == 0).unwrap();
            assert_eq!((c.weight, c.source.role), (1.0, TermRole::UntilHold));
        }
        let c = &table.terms_at(50)[0];
        assert_eq!((c.weight, c.source.role), (50.0, TermRole::UntilTarget));
    }

    #[test]
    fn degenerate_interval_weight_is_floored() {
        let spec = parse_spec("F[4,4] a", 5, &geometry()).unwrap();
        let table = compile(&spec).unwrap();
        assert_eq!(table.terms_at(4)[0].weight, 1.0);
    }

    #[test]
    fn switching_override() {
        let spec = parse_spec("F[0,10] a & a U[2,8] b", 10, &geometry()).unwrap();
        let opts = CompileOptions { switching: [(0, 3), (1, 5)].into_iter().collect() };
        let table = compile_with(&spec, &opts).unwrap();
        assert_eq!(table.timesteps_of(0), vec![3]);
        assert_eq!(table.timesteps_of(1), vec![2, 3, 4, 5]);
        assert_eq!(table.terms_at(3)[0].weight, 10.0);
        let bad = CompileOptions { switching: [(0, 11)].into_iter().collect() };
        assert!(matches!(compile_with(&spec, &bad), Err(CostError::InvalidSwitchingTime { .. })));
        let missing = CompileOptions { switching: [(7, 1)].into_iter().collect() };
        assert_eq!(compile_with(&spec, &missing), Err(CostError::UnknownConjunct(7)));
    }

    #[test]
    fn empty_entry_is_zero() {
        let spec = parse_spec("F[0,3] a", 5, &geometry()).unwrap();
        let table = compile(&spec).unwrap();
        let v = eval_running_cost(&table, 1, &[4.0, 2.0], &SmoothParams::default()).unwrap();
        assert_eq!(v, SmoothValue::zero(2));
        assert!(eval_running_cost(&table, 6, &[0.0, 0.0], &SmoothParams::default()).is_err());
    }

    #[test]
    fn goal_ball_at_center() {
        let mut preds = PredicateTable::new();
        preds.insert(Predicate::ball("goal", vec![1.0, 2.0], 0.5, 1e-3).unwrap());
        let spec = parse_spec("F[0,100] goal", 100, &preds).unwrap();
        let table = compile(&spec).unwrap();
        let v = eval_running_cost(&table, 100, &[1.0, 2.0], &SmoothParams::default()).unwrap();
        // mu at the center is r - eps + eps = r
        assert!((v.value + 100.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_terms_merge_with_smooth_max() {
        // robustness 1 and 3 at y = (1, 3)
        let spec = parse_spec("G[0,1] a & G[0,1] b", 1, &geometry()).unwrap();
        let table = compile(&spec).unwrap();
        let v = eval_running_cost(&table, 0, &[1.0, 3.0], &SmoothParams::default()).unwrap();
        let e = (-20f64).exp();
        assert!((v.value - (-1.0 - 2.0 * e / (1.0 + e))).abs() < 1e-15);
    }

    #[test]
    fn merge_is_order_independent() {
        let p = SmoothParams::default();
        let s1 = parse_spec("G[0,2] a & G[0,2] b & F[0,2] (not a | b)", 2, &geometry()).unwrap();
        let s2 = parse_spec("F[0,2] (not a | b) & G[0,2] b & G[0,2] a", 2, &geometry()).unwrap();
        let (t1, t2) = (compile(&s1).unwrap(), compile(&s2).unwrap());
        for y in [[0.3, -0.2], [1.5, 2.5], [-1.0, 0.1]] {
            let a = eval_running_cost(&t1, 2, &y, &p).unwrap();
            let b = eval_running_cost(&t2, 2, &y, &p).unwrap();
            assert!((a.value - b.value).abs() < 1e-12);
            assert!((a.grad - b.grad).norm() < 1e-12);
        }
    }

    #[test]
    fn violating_step_reported() {
        let spec = parse_spec("G[0,2] a", 2, &geometry()).unwrap();
        let table = compile(&spec).unwrap();
        let sig = Signal::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![1.0, 0.0]], 0.1).unwrap();
        let cert = check_soundness(&table, &sig, &SmoothParams::default()).unwrap();
        assert_eq!(cert.verdict, CertificateVerdict::NotCertified);
        assert_eq!(cert.first_violation, Some(1));
        let short = Signal::new(vec![vec![1.0, 0.0]], 0.1).unwrap();
        assert_eq!(check_soundness(&table, &short, &SmoothParams::default()), Err(CostError::LengthMismatch { expected: 3, actual: 1 }));
    }

    #[test]
    fn merged_cost_can_hide_a_violated_term() {
        // l_t < 0 from the weighted mean even though b's term is positive
        let spec = parse_spec("G[0,1] a & G[0,1] b", 1, &geometry()).unwrap();
        let table = compile(&spec).unwrap();
        let sig = Signal::new(vec![vec![0.2, -0.01]; 2], 0.1).unwrap();
        let p = SmoothParams::default();
        let l = eval_running_cost(&table, 0, sig.sample(0), &p).unwrap().value;
        assert!(l < 0.0);
        let cert = check_soundness(&table, &sig, &p).unwrap();
        assert_eq!(cert.verdict, CertificateVerdict::NotCertified);
        assert!(cert.exact_robustness < 0.0);
    }

    #[test]
    fn hand_built_reach_avoid_trajectory_is_certified() {
        let spec = parse_spec("G[0,100] (not obs) & F[0,100] goal", 100, &geometry()).unwrap();
        let table = compile(&spec).unwrap();
        // (2,2) -> (7.5,2) -> (7.5,8.5): stays below the obstacle then climbs to the goal
        let mut ys = Vec::new();
        for t in 0..=100 {
            let s = t as f64 / 100.0;
            ys.push(if s < 0.5 { vec![2.0 + 11.0 * s, 2.0] } else { vec![7.5, 2.0 + 13.0 * (s - 0.5)] });
        }
        let sig = Signal::new(ys, 0.01).unwrap();
        let cert = check_soundness(&table, &sig, &SmoothParams::default()).unwrap();
        assert_eq!(cert.verdict, CertificateVerdict::Satisfied, "{:?}", cert.first_violation);
        assert!(cert.exact_robustness > 0.0);
        let diag = diagnostics(&table, &sig, &SmoothParams::default()).unwrap();
        assert_eq!(diag[100].terms.len(), 2);
        assert_eq!(diag[100].terms[1].weight, 100.0);
    }
}
