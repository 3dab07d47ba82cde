//! Smooth under-approximations of `min` and `max` and the smooth robustness
//! of state formulas, carried together with their first and second
//! derivatives with respect to the output vector.
//!
//! ```text
//! smooth_min(a) = -(1/k1) log(sum_i exp(-k1 a_i))
//! smooth_max(a) = sum_i a_i exp(k2 a_i) / sum_i exp(k2 a_i)
//! ```
//!
//! Both satisfy `smooth_min(a) <= min(a)` and `smooth_max(a) <= max(a)`, so
//! a positive smooth robustness implies a positive exact robustness for
//! formulas with negation only at the predicates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stl::{Predicate, PredicateKind, StateFormula};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmoothError {
    #[error("smooth min/max of an empty argument list")]
    EmptyArgumentList,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("sharpness parameters must be positive and finite (k1 = {k1}, k2 = {k2})")]
    InvalidParams { k1: f64, k2: f64 },
}

/// Sharpness of the smooth min (`k1`) and smooth max (`k2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothParams {
    pub k1: f64,
    pub k2: f64,
}

impl SmoothParams {
    pub fn new(k1: f64, k2: f64) -> Result<Self, SmoothError> {
        let ok = |k: f64| k > 0.0 && k.is_finite();
        if !ok(k1) || !ok(k2) {
            return Err(SmoothError::InvalidParams { k1, k2 });
        }
        Ok(SmoothParams { k1, k2 })
    }

    /// Both sharpness values multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, SmoothError> {
        SmoothParams::new(self.k1 * factor, self.k2 * factor)
    }
}

impl Default for SmoothParams {
    fn default() -> Self {
        SmoothParams { k1: 10.0, k2: 10.0 }
    }
}

/// Scalar with gradient and Hessian with respect to a `p`-dimensional input.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothValue {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl SmoothValue {
    pub fn constant(value: f64, dim: usize) -> Self {
        SmoothValue { value, grad: DVector::zeros(dim), hess: DMatrix::zeros(dim, dim) }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(0.0, dim)
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.value *= s;
        self.grad *= s;
        self.hess *= s;
        self
    }
}

impl std::ops::Neg for SmoothValue {
    type Output = SmoothValue;

    fn neg(mut self) -> SmoothValue {
        self.value = -self.value;
        self.grad.neg_mut();
        self.hess.neg_mut();
        self
    }
}

fn check_args(a: &[SmoothValue]) -> Result<usize, SmoothError> {
    let dim = a.first().ok_or(SmoothError::EmptyArgumentList)?.dim();
    if let Some(bad) = a.iter().find(|v| v.dim() != dim || v.hess.nrows() != dim || v.hess.ncols() != dim) {
        return Err(SmoothError::DimensionMismatch { expected: dim, actual: bad.dim() });
    }
    Ok(dim)
}

fn symmetrize(h: &mut DMatrix<f64>) {
    let t = h.transpose();
    *h += t;
    *h *= 0.5;
}

/// Log-sum-exp soft minimum. Exponents are shifted by the true minimum so
/// no term exceeds `exp(0)`.
pub fn smooth_min(a: &[SmoothValue], params: &SmoothParams) -> Result<SmoothValue, SmoothError> {
    let dim = check_args(a)?;
    if a.len() == 1 {
        return Ok(a[0].clone());
    }
    let k = params.k1;
    let lo = a.iter().map(|v| v.value).fold(f64::INFINITY, f64::min);
    let z: Vec<f64> = a.iter().map(|v| (-k * (v.value - lo)).exp()).collect();
    let sum: f64 = z.iter().sum();
    let value = lo - sum.ln() / k;

    // df/da_i = w_i ; d2f/da_i da_j = -k (w_i delta_ij - w_i w_j)
    let w: Vec<f64> = z.iter().map(|zi| zi / sum).collect();
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);
    for (wi, v) in w.iter().zip(a) {
        grad.axpy(*wi, &v.grad, 1.0);
        hess += &v.hess * *wi;
        hess.ger(-k * wi, &v.grad, &v.grad, 1.0);
    }
    hess.ger(k, &grad, &grad, 1.0);
    symmetrize(&mut hess);
    Ok(SmoothValue { value, grad, hess })
}

/// Softmax-weighted mean. Computed as `max + sum_i w_i (a_i - max)` so the
/// result never exceeds the true maximum in floating point.
pub fn smooth_max(a: &[SmoothValue], params: &SmoothParams) -> Result<SmoothValue, SmoothError> {
    let dim = check_args(a)?;
    if a.len() == 1 {
        return Ok(a[0].clone());
    }
    let k = params.k2;
    let hi = a.iter().map(|v| v.value).fold(f64::NEG_INFINITY, f64::max);
    let z: Vec<f64> = a.iter().map(|v| (k * (v.value - hi)).exp()).collect();
    let sum: f64 = z.iter().sum();
    let w: Vec<f64> = z.iter().map(|zi| zi / sum).collect();
    let shifted: f64 = w.iter().zip(a).map(|(wi, v)| wi * (v.value - hi)).sum();
    let value = (hi + shifted).min(hi);

    // d_j = df/da_j = w_j (1 + k (a_j - f))
    // d2f/da_j da_l = k w_j (1 + k c_j) delta_jl + k w_j delta_jl
    //               - k w_j w_l (1 + k c_j) - k w_j d_l
    let c: Vec<f64> = a.iter().map(|v| v.value - value).collect();
    let d: Vec<f64> = w.iter().zip(&c).map(|(wj, cj)| wj * (1.0 + k * cj)).collect();

    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);
    for j in 0..a.len() {
        grad.axpy(d[j], &a[j].grad, 1.0);
        hess += &a[j].hess * d[j];
        let diag = k * w[j] * (1.0 + k * c[j]) + k * w[j];
        hess.ger(diag, &a[j].grad, &a[j].grad, 1.0);
    }
    // off-diagonal part: -k (gd gw^T + gw gd^T) with gw = sum w_j g_j, gd = sum d_j g_j = grad
    let mut gw = DVector::zeros(dim);
    for j in 0..a.len() {
        gw.axpy(w[j], &a[j].grad, 1.0);
    }
    hess.ger(-k, &grad, &gw, 1.0);
    hess.ger(-k, &gw, &grad, 1.0);
    symmetrize(&mut hess);
    Ok(SmoothValue { value, grad, hess })
}

fn affine_value(coeffs: &[f64], offset: f64, y: &[f64]) -> SmoothValue {
    let dim = y.len();
    let value = crate::stl::predicate_dot(coeffs, y) - offset;
    SmoothValue { value, grad: DVector::from_column_slice(coeffs), hess: DMatrix::zeros(dim, dim) }
}

/// `mu(y)` of a non-box predicate with exact derivatives.
fn predicate_value(p: &Predicate, y: &[f64]) -> SmoothValue {
    let dim = y.len();
    match &p.kind {
        PredicateKind::Affine { coeffs, offset } => affine_value(coeffs, *offset, y),
        PredicateKind::Ball { center, radius, epsilon } => {
            let d = DVector::from_iterator(dim, y.iter().zip(center).map(|(a, b)| a - b));
            let s = (d.norm_squared() + epsilon * epsilon).sqrt();
            let value = radius - s + epsilon;
            if s == 0.0 {
                // only reachable with epsilon = 0 exactly at the center, where mu is not differentiable
                return SmoothValue::constant(value, dim);
            }
            let grad = &d * (-1.0 / s);
            let mut hess = DMatrix::identity(dim, dim) * (-1.0 / s);
            hess.ger(1.0 / (s * s * s), &d, &d, 1.0);
            SmoothValue { value, grad, hess }
        }
        PredicateKind::Box { .. } => unreachable!("boxes are expanded into half-spaces"),
    }
}

fn halfspaces(p: &Predicate, y: &[f64], negate: bool) -> Vec<SmoothValue> {
    p.box_halfspaces()
        .iter()
        .map(|(a, b)| {
            let v = affine_value(a, *b, y);
            if negate {
                -v
            } else {
                v
            }
        })
        .collect()
}

/// Smooth robustness of a state formula at output `y`: `&` becomes
/// [`smooth_min`], `|` becomes [`smooth_max`], negation flips the sign of a
/// predicate. A box is the smooth conjunction of its half-spaces and a negated
/// box the smooth disjunction of the complementary half-spaces.
pub fn smooth_state_robustness(psi: &StateFormula, y: &[f64], params: &SmoothParams) -> Result<SmoothValue, SmoothError> {
    match psi {
        StateFormula::Pred(p) | StateFormula::NegPred(p) => {
            if p.dim() != y.len() {
                return Err(SmoothError::DimensionMismatch { expected: p.dim(), actual: y.len() });
            }
            let negate = matches!(psi, StateFormula::NegPred(_));
            match &p.kind {
                PredicateKind::Box { .. } if negate => smooth_max(&halfspaces(p, y, true), params),
                PredicateKind::Box { .. } => smooth_min(&halfspaces(p, y, false), params),
                _ if negate => Ok(-predicate_value(p, y)),
                _ => Ok(predicate_value(p, y)),
            }
        }
        StateFormula::And(cs) => {
            let vals = cs.iter().map(|c| smooth_state_robustness(c, y, params)).collect::<Result<Vec<_>, _>>()?;
            smooth_min(&vals, params)
        }
        StateFormula::Or(cs) => {
            let vals = cs.iter().map(|c| smooth_state_robustness(c, y, params)).collect::<Result<Vec<_>, _>>()?;
            smooth_max(&vals, params)
        }
    }
}

/// Value of [`smooth_min`] without derivatives.
pub fn smooth_min_value(a: &[f64], params: &SmoothParams) -> Result<f64, SmoothError> {
    match a {
        [] => Err(SmoothError::EmptyArgumentList),
        [single] => Ok(*single),
        _ => {
            let k = params.k1;
            let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
            let sum: f64 = a.iter().map(|v| (-k * (v - lo)).exp()).sum();
            Ok(lo - sum.ln() / k)
        }
    }
}

/// Value of [`smooth_max`] without derivatives.
pub fn smooth_max_value(a: &[f64], params: &SmoothParams) -> Result<f64, SmoothError> {
    match a {
        [] => Err(SmoothError::EmptyArgumentList),
        [single] => Ok(*single),
        _ => {
            let k = params.k2;
            let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: Vec<f64> = a.iter().map(|v| (k * (v - hi)).exp()).collect();
            let sum: f64 = z.iter().sum();
            let shifted: f64 = z.iter().zip(a).map(|(zi, v)| zi / sum * (v - hi)).sum();
            Ok((hi + shifted).min(hi))
        }
    }
}

/// Value of [`smooth_state_robustness`] without derivatives.
pub fn smooth_state_robustness_value(psi: &StateFormula, y: &[f64], params: &SmoothParams) -> Result<f64, SmoothError> {
    match psi {
        StateFormula::Pred(p) | StateFormula::NegPred(p) => {
            if p.dim() != y.len() {
                return Err(SmoothError::DimensionMismatch { expected: p.dim(), actual: y.len() });
            }
            let negate = matches!(psi, StateFormula::NegPred(_));
            match &p.kind {
                PredicateKind::Box { .. } => {
                    let sign = if negate { -1.0 } else { 1.0 };
                    let vals: Vec<f64> = p.box_halfspaces().iter().map(|(a, b)| sign * (crate::stl::predicate_dot(a, y) - b)).collect();
                    if negate {
                        smooth_max_value(&vals, params)
                    } else {
                        smooth_min_value(&vals, params)
                    }
                }
                _ => {
                    let v = predicate_value(p, y).value;
                    Ok(if negate { -v } else { v })
                }
            }
        }
        StateFormula::And(cs) => {
            let vals = cs.iter().map(|c| smooth_state_robustness_value(c, y, params)).collect::<Result<Vec<_>, _>>()?;
            smooth_min_value(&vals, params)
        }
        StateFormula::Or(cs) => {
            let vals = cs.iter().map(|c| smooth_state_robustness_value(c, y, params)).collect::<Result<Vec<_>, _>>()?;
            smooth_max_value(&vals, params)
        }
    }
}
