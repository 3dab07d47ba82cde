//! Iterative LQR (Gauss-Newton DDP: dynamics second derivatives dropped).
//!
//! Each iteration linearizes the dynamics and expands the running cost to
//! second order along the nominal trajectory, runs a Riccati-like backward
//! pass with Levenberg-Marquardt regularization on `Q_uu`, and accepts the
//! first line-search step whose actual decrease is at least 1% of the
//! predicted one.

mod baseline;
mod objective;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baseline::{first_order_baseline, first_order_baseline_objective, BaselineConfig};
pub use objective::{CostExpansion, Objective, QuadraticObjective, StlObjective};

use crate::costgen::{check_soundness, Certificate, CostError, RunningCostTable};
use crate::dynamics::{fd_jacobians, DynamicsError, DynamicsModel};
use crate::smoothing::SmoothParams;
use crate::stl::Signal;

/// Fraction of the predicted decrease a line-search step must achieve.
pub const ACCEPT_RATIO: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch { what: &'static str, expected: usize, actual: usize },
    #[error("rollout produced a non-finite state at timestep {t}")]
    NonFiniteState { t: usize },
    #[error("Q_uu is not positive definite at timestep {t}")]
    NotPositiveDefinite { t: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    FiniteDifference,
    #[default]
    AnalyticIfAvailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once an accepted step decreases the cost by less than this.
    pub cost_tolerance: f64,
    pub line_search_alphas: Vec<f64>,
    pub reg_init: f64,
    pub reg_min: f64,
    pub reg_max: f64,
    pub reg_scale: f64,
    pub derivative_mode: DerivativeMode,
    pub fd_step: f64,
    /// Weight `w` of a `0.5 * w * |u|^2` term added to the optimized
    /// objective. It never enters the satisfaction certificate.
    pub control_weight: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 100,
            cost_tolerance: 1e-6,
            line_search_alphas: (0..=10).map(|i| 0.5f64.powi(i)).collect(),
            reg_init: 1e-6,
            reg_min: 1e-9,
            reg_max: 1e10,
            reg_scale: 10.0,
            derivative_mode: DerivativeMode::AnalyticIfAvailable,
            fd_step: 1e-5,
            control_weight: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |msg: &str| Err(SolveError::InvalidConfig(msg.to_string()));
        let alphas = &self.line_search_alphas;
        if alphas.first() != Some(&1.0) {
            return bad("line-search alphas must start at 1");
        }
        if alphas.windows(2).any(|w| !(w[1] < w[0])) || alphas.iter().any(|a| !(*a > 0.0)) {
            return bad("line-search alphas must be positive and strictly decreasing");
        }
        if !(self.reg_min <= self.reg_init && self.reg_init <= self.reg_max) || self.reg_min < 0.0 {
            return bad("regularization must satisfy 0 <= reg_min <= reg_init <= reg_max");
        }
        if !(self.reg_scale > 1.0) {
            return bad("reg_scale must exceed 1");
        }
        if !(self.fd_step > 0.0) {
            return bad("fd_step must be positive");
        }
        if !(self.control_weight >= 0.0) {
            return bad("control_weight must be non-negative");
        }
        Ok(())
    }
}

/// States, controls and outputs for `t = 0..=T`, with per-step costs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub step_costs: Vec<f64>,
    pub cost: f64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn output_signal(&self, dt: f64) -> Signal {
        Signal::new(self.outputs.iter().map(|y| y.as_slice().to_vec()).collect(), dt).expect("trajectory outputs are non-empty and rectangular")
    }
}

/// Feedback law `u = u_nom + k + K (x - x_nom)` for one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    /// `m x n`
    pub feedback: DMatrix<f64>,
    pub feedforward: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardPass {
    pub gains: Vec<Gains>,
    /// Predicted decrease is `-(alpha * linear + alpha^2 * quadratic)`.
    pub linear: f64,
    pub quadratic: f64,
}

impl BackwardPass {
    pub fn expected_decrease(&self, alpha: f64) -> f64 {
        -(alpha * self.linear + alpha * alpha * self.quadratic)
    }
}

/// Linearized dynamics and cost expansion at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDerivatives {
    pub fx: DMatrix<f64>,
    pub fu: DMatrix<f64>,
    pub cost: CostExpansion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    CostTolerance,
    MaxIterations,
    /// No acceptable step even at maximum regularization.
    LineSearchExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub trajectory: Trajectory,
    pub gains: Vec<Gains>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Cost after the initial rollout followed by each accepted iteration.
    pub cost_history: Vec<f64>,
    pub iteration_times: Vec<Duration>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub trajectory: Trajectory,
    pub gains: Vec<Gains>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub cost_history: Vec<f64>,
    pub iteration_times: Vec<Duration>,
    pub elapsed: Duration,
    pub certificate: Certificate,
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<(), SolveError> {
    if expected == actual {
        Ok(())
    } else {
        Err(SolveError::DimensionMismatch { what, expected, actual })
    }
}

fn check_inputs(model: &dyn DynamicsModel, horizon: usize, x0: &DVector<f64>, controls: &[DVector<f64>]) -> Result<(), SolveError> {
    check_len("initial state", model.state_dim(), x0.len())?;
    check_len("control sequence length", horizon + 1, controls.len())?;
    for u in controls {
        check_len("control", model.control_dim(), u.len())?;
    }
    Ok(())
}

/// Simulates `x_{t+1} = f(x_t, u_t)` from `x0` and evaluates every running cost.
pub fn rollout(model: &dyn DynamicsModel, objective: &dyn Objective, x0: &DVector<f64>, controls: &[DVector<f64>]) -> Result<Trajectory, SolveError> {
    check_inputs(model, objective.horizon(), x0, controls)?;
    let horizon = objective.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut outputs = Vec::with_capacity(horizon + 1);
    let mut step_costs = Vec::with_capacity(horizon + 1);
    let mut x = x0.clone();
    for (t, u) in controls.iter().enumerate() {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFiniteState { t });
        }
        outputs.push(model.output(&x, u));
        step_costs.push(objective.cost(t, &x, u)?);
        let next = if t < horizon { Some(model.step(&x, u).map_err(|e| with_timestep(e, t))?) } else { None };
        states.push(x);
        match next {
            Some(n) => x = n,
            None => break,
        }
    }
    let cost = step_costs.iter().sum();
    if !f64::is_finite(cost) {
        let t = step_costs.iter().position(|c| !c.is_finite()).unwrap_or(0);
        return Err(SolveError::NonFiniteState { t });
    }
    Ok(Trajectory { states, controls: controls.to_vec(), outputs, step_costs, cost })
}

fn with_timestep(e: DynamicsError, t: usize) -> SolveError {
    match e {
        DynamicsError::NonFiniteState { .. } => SolveError::NonFiniteState { t },
        other => SolveError::Dynamics(other),
    }
}

/// Rollout of the feedback policy `u_t = u_nom + alpha k_t + K_t (x_t - x_nom)`.
fn forward_pass(model: &dyn DynamicsModel, objective: &dyn Objective, nominal: &Trajectory, gains: &[Gains], alpha: f64) -> Result<Trajectory, SolveError> {
    let horizon = nominal.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon + 1);
    let mut outputs = Vec::with_capacity(horizon + 1);
    let mut step_costs = Vec::with_capacity(horizon + 1);
    let mut x = nominal.states[0].clone();
    for (t, g) in gains.iter().enumerate().take(horizon + 1) {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFiniteState { t });
        }
        let dx = &x - &nominal.states[t];
        let u = &nominal.controls[t] + &g.feedforward * alpha + &g.feedback * dx;
        outputs.push(model.output(&x, &u));
        step_costs.push(objective.cost(t, &x, &u)?);
        let next = if t < horizon { Some(model.step(&x, &u).map_err(|e| with_timestep(e, t))?) } else { None };
        states.push(x);
        controls.push(u);
        match next {
            Some(n) => x = n,
            None => break,
        }
    }
    let cost = step_costs.iter().sum();
    Ok(Trajectory { states, controls, outputs, step_costs, cost })
}

/// Dynamics Jacobians and cost expansions along a trajectory. The dynamics
/// Jacobians at `T` are unused and left at zero.
pub fn derivatives(model: &dyn DynamicsModel, objective: &dyn Objective, traj: &Trajectory, config: &SolverConfig) -> Result<Vec<StepDerivatives>, SolveError> {
    let horizon = traj.horizon();
    let (n, m) = (model.state_dim(), model.control_dim());
    (0..=horizon)
        .map(|t| {
            let (x, u) = (&traj.states[t], &traj.controls[t]);
            let (fx, fu) = if t == horizon {
                (DMatrix::zeros(n, n), DMatrix::zeros(n, m))
            } else {
                let analytic = match config.derivative_mode {
                    DerivativeMode::AnalyticIfAvailable => model.jacobians(x, u),
                    DerivativeMode::FiniteDifference => None,
                };
                let j = match analytic {
                    Some(j) => j,
                    None => fd_jacobians(model, x, u, config.fd_step).map_err(|e| with_timestep(e, t))?,
                };
                (j.fx, j.fu)
            };
            Ok(StepDerivatives { fx, fu, cost: objective.expand(t, x, u)? })
        })
        .collect()
}

/// Riccati-like recursion from `T` down to 0 with `reg * I` added to `Q_uu`.
pub fn backward_pass(derivs: &[StepDerivatives], reg: f64) -> Result<BackwardPass, SolveError> {
    let horizon = derivs.len() - 1;
    let n = derivs[0].fx.nrows();
    let m = derivs[0].fu.ncols();
    let mut vx = DVector::zeros(n);
    let mut vxx = DMatrix::zeros(n, n);
    let mut gains = Vec::with_capacity(horizon + 1);
    let (mut linear, mut quadratic) = (0.0, 0.0);
    for t in (0..=horizon).rev() {
        let d = &derivs[t];
        let c = &d.cost;
        let (qx, qu, qxx, quu, qux) = if t == horizon {
            (c.lx.clone(), c.lu.clone(), c.lxx.clone(), c.luu.clone(), c.lux.clone())
        } else {
            let vxx_fx = &vxx * &d.fx;
            let vxx_fu = &vxx * &d.fu;
            (
                &c.lx + d.fx.transpose() * &vx,
                &c.lu + d.fu.transpose() * &vx,
                &c.lxx + d.fx.transpose() * &vxx_fx,
                &c.luu + d.fu.transpose() * &vxx_fu,
                &c.lux + d.fu.transpose() * &vxx_fx,
            )
        };
        let mut quu_reg = &quu + DMatrix::identity(m, m) * reg;
        quu_reg = (&quu_reg + quu_reg.transpose()) * 0.5;
        let chol = quu_reg.cholesky().ok_or(SolveError::NotPositiveDefinite { t })?;
        let k = -chol.solve(&qu);
        let kk = -chol.solve(&qux);
        linear += k.dot(&qu);
        quadratic += 0.5 * k.dot(&(&quu * &k));
        let kt_quu = kk.transpose() * &quu;
        vx = &qx + &kt_quu * &k + kk.transpose() * &qu + qux.transpose() * &k;
        vxx = &qxx + &kt_quu * &kk + kk.transpose() * &qux + qux.transpose() * &kk;
        vxx = (&vxx + vxx.transpose()) * 0.5;
        gains.push(Gains { feedback: kk, feedforward: k });
    }
    gains.reverse();
    Ok(BackwardPass { gains, linear, quadratic })
}

/// Minimizes `sum_t l_t(x_t, u_t)` from the initial control guess.
pub fn optimize(
    model: &dyn DynamicsModel,
    objective: &dyn Objective,
    x0: &DVector<f64>,
    initial_controls: &[DVector<f64>],
    config: &SolverConfig,
) -> Result<Optimized, SolveError> {
    config.validate()?;
    let start = Instant::now();
    let mut traj = rollout(model, objective, x0, initial_controls)?;
    let mut reg = config.reg_init;
    let mut cost_history = vec![traj.cost];
    let mut iteration_times = Vec::new();
    let mut gains = Vec::new();
    let mut iterations = 0;
    let mut stop_reason = StopReason::MaxIterations;

    while iterations < config.max_iterations {
        let iter_start = Instant::now();
        iterations += 1;
        let derivs = derivatives(model, objective, &traj, config)?;

        let bp = loop {
            match backward_pass(&derivs, reg) {
                Ok(bp) => break Some(bp),
                Err(SolveError::NotPositiveDefinite { .. }) if reg < config.reg_max => {
                    reg = (reg.max(config.reg_min) * config.reg_scale).min(config.reg_max);
                }
                Err(SolveError::NotPositiveDefinite { .. }) => break None,
                Err(e) => return Err(e),
            }
        };
        let Some(bp) = bp else {
            stop_reason = StopReason::LineSearchExhausted;
            iteration_times.push(iter_start.elapsed());
            break;
        };
        gains = bp.gains.clone();

        if bp.expected_decrease(1.0) < config.cost_tolerance {
            stop_reason = StopReason::CostTolerance;
            iteration_times.push(iter_start.elapsed());
            break;
        }

        let mut accepted = None;
        for &alpha in &config.line_search_alphas {
            let Ok(candidate) = forward_pass(model, objective, &traj, &bp.gains, alpha) else {
                continue;
            };
            let actual = traj.cost - candidate.cost;
            if candidate.cost.is_finite() && actual >= ACCEPT_RATIO * bp.expected_decrease(alpha) {
                accepted = Some((candidate, actual));
                break;
            }
        }
        iteration_times.push(iter_start.elapsed());

        match accepted {
            Some((candidate, actual)) => {
                traj = candidate;
                cost_history.push(traj.cost);
                reg = (reg / config.reg_scale).max(config.reg_min);
                if actual < config.cost_tolerance {
                    stop_reason = StopReason::CostTolerance;
                    break;
                }
            }
            None => {
                if reg >= config.reg_max {
                    stop_reason = StopReason::LineSearchExhausted;
                    break;
                }
                reg = (reg.max(config.reg_min) * config.reg_scale).min(config.reg_max);
            }
        }
    }
    if gains.is_empty() {
        let (n, m) = (model.state_dim(), model.control_dim());
        gains = vec![Gains { feedback: DMatrix::zeros(m, n), feedforward: DVector::zeros(m) }; traj.horizon() + 1];
    }
    Ok(Optimized {
        trajectory: traj,
        gains,
        iterations,
        converged: stop_reason == StopReason::CostTolerance,
        stop_reason,
        cost_history,
        iteration_times,
        elapsed: start.elapsed(),
    })
}

pub(crate) fn certify(model: &dyn DynamicsModel, table: &RunningCostTable, params: &SmoothParams, opt: Optimized) -> Result<SolveResult, SolveError> {
    let signal = opt.trajectory.output_signal(model.dt());
    let certificate = check_soundness(table, &signal, params)?;
    Ok(SolveResult {
        trajectory: opt.trajectory,
        gains: opt.gains,
        iterations: opt.iterations,
        converged: opt.converged,
        stop_reason: opt.stop_reason,
        cost_history: opt.cost_history,
        iteration_times: opt.iteration_times,
        elapsed: opt.elapsed,
        certificate,
    })
}

pub(crate) fn check_model(model: &dyn DynamicsModel, table: &RunningCostTable) -> Result<(), SolveError> {
    if let Some(p) = table.spec().output_dim() {
        check_len("predicate output dimension", model.output_dim(), p)?;
    }
    Ok(())
}

/// Synthesizes a trajectory for a compiled specification and certifies it.
pub fn solve(
    model: &dyn DynamicsModel,
    table: &RunningCostTable,
    x0: &DVector<f64>,
    initial_controls: &[DVector<f64>],
    config: &SolverConfig,
    params: &SmoothParams,
) -> Result<SolveResult, SolveError> {
    check_model(model, table)?;
    let objective = StlObjective { table, model, params: *params, control_weight: config.control_weight };
    let opt = optimize(model, &objective, x0, initial_controls, config)?;
    certify(model, table, params, opt)
}

#[cfg(test)]
mod tests {
    use nalgebra::dvector;

    use super::*;
    use crate::costgen::compile;
    use crate::dynamics::{double_integrator, single_integrator};
    use crate::stl::{parse_spec, Predicate, PredicateTable};

    fn quad(n: usize, m: usize, horizon: usize) -> QuadraticObjective {
        QuadraticObjective { q: DMatrix::identity(n, n), r: DMatrix::identity(m, m), qf: DMatrix::identity(n, n) * 10.0, horizon }
    }

    #[test]
    fn zero_input_rollout_stays_put() {
        let model = single_integrator(0.01).unwrap();
        let obj = quad(2, 2, 100);
        let traj = rollout(&model, &obj, &dvector![0.0, 0.0], &vec![DVector::zeros(2); 101]).unwrap();
        assert!(traj.states.iter().all(|x| x.norm() == 0.0));
        assert_eq!(traj.states.len(), 101);
    }

    #[test]
    fn constant_input_rollout_reaches_one() {
        // x_t = t * dt * u, so x_100 = 100 * 0.01 = 1; u_100 only feeds y_100
        let model = single_integrator(0.01).unwrap();
        let obj = quad(2, 2, 100);
        let traj = rollout(&model, &obj, &dvector![0.0, 0.0], &vec![dvector![1.0, 0.0]; 101]).unwrap();
        assert!((&traj.states[100] - dvector![1.0, 0.0]).norm() < 1e-12);
    }

    #[test]
    fn rollout_checks_lengths() {
        let model = single_integrator(0.01).unwrap();
        let obj = quad(2, 2, 10);
        assert!(matches!(rollout(&model, &obj, &dvector![0.0, 0.0], &vec![DVector::zeros(2); 10]), Err(SolveError::DimensionMismatch { .. })));
        assert!(matches!(rollout(&model, &obj, &dvector![0.0], &vec![DVector::zeros(2); 11]), Err(SolveError::DimensionMismatch { .. })));
    }

    #[test]
    fn single_step_backward_pass_is_newton_step() {
        // T = 0: minimize 0.5 u'Ru + u'(lu) in closed form
        let d = StepDerivatives {
            fx: DMatrix::zeros(1, 1),
            fu: DMatrix::zeros(1, 2),
            cost: CostExpansion {
                lx: dvector![0.0],
                lu: dvector![1.0, -2.0],
                lxx: DMatrix::zeros(1, 1),
                luu: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
                lux: DMatrix::from_row_slice(2, 1, &[0.3, -0.1]),
            },
        };
        let bp = backward_pass(std::slice::from_ref(&d), 0.0).unwrap();
        let inv = d.cost.luu.clone().try_inverse().unwrap();
        assert!((&bp.gains[0].feedforward + &inv * &d.cost.lu).norm() < 1e-12);
        assert!((&bp.gains[0].feedback + &inv * &d.cost.lux).norm() < 1e-12);
    }

    #[test]
    fn huge_regularization_freezes_step() {
        let model = double_integrator(0.1, 1).unwrap();
        let obj = quad(2, 1, 20);
        let traj = rollout(&model, &obj, &dvector![1.0, 0.0], &vec![DVector::zeros(1); 21]).unwrap();
        let derivs = derivatives(&model, &obj, &traj, &SolverConfig::default()).unwrap();
        let bp = backward_pass(&derivs, 1e12).unwrap();
        assert!(bp.gains.iter().all(|g| g.feedforward.norm() < 1e-9));
        assert!(bp.expected_decrease(1.0).abs() < 1e-9);
    }

    #[test]
    fn indefinite_quu_is_reported() {
        let d = StepDerivatives {
            fx: DMatrix::zeros(1, 1),
            fu: DMatrix::zeros(1, 1),
            cost: CostExpansion {
                lx: dvector![0.0],
                lu: dvector![1.0],
                lxx: DMatrix::zeros(1, 1),
                luu: DMatrix::from_element(1, 1, -1.0),
                lux: DMatrix::zeros(1, 1),
            },
        };
        assert_eq!(backward_pass(&[d], 0.0).unwrap_err(), SolveError::NotPositiveDefinite { t: 0 });
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        assert!(c.validate().is_ok());
        c.line_search_alphas = vec![0.5, 0.25];
        assert!(c.validate().is_err());
        c = SolverConfig { reg_init: 1e11, ..SolverConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn warm_start_from_solution_is_fixed_point() {
        let model = double_integrator(0.1, 1).unwrap();
        let obj = quad(2, 1, 20);
        let x0 = dvector![1.0, -0.5];
        let first = optimize(&model, &obj, &x0, &vec![DVector::zeros(1); 21], &SolverConfig::default()).unwrap();
        let again = optimize(&model, &obj, &x0, &first.trajectory.controls, &SolverConfig::default()).unwrap();
        assert_eq!(again.iterations, 1);
        assert!(again.converged);
        assert!((again.trajectory.cost - first.trajectory.cost).abs() < 1e-9);
    }

    #[test]
    fn solve_rejects_mismatched_predicates() {
        let mut preds = PredicateTable::new();
        preds.insert(Predicate::affine("a", vec![1.0, 0.0, 0.0], 0.0).unwrap());
        let spec = parse_spec("F[0,5] a", 5, &preds).unwrap();
        let table = compile(&spec).unwrap();
        let model = single_integrator(0.1).unwrap();
        let err = solve(&model, &table, &dvector![0.0, 0.0], &vec![DVector::zeros(2); 6], &SolverConfig::default(), &SmoothParams::default());
        assert!(matches!(err, Err(SolveError::DimensionMismatch { .. })));
    }
}
