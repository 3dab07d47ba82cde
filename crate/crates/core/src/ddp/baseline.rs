//! Gradient descent on the rolled-out total cost, for timing comparisons.
//!
//! Gradients with respect to every control come from central differences
//! through the rollout. A perturbation of `u_t` only changes the costs from
//! `t` on, so each difference re-simulates the suffix only.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{certify, check_model, rollout, Gains, Objective, Optimized, SolveError, SolveResult, StlObjective, StopReason, Trajectory};
use crate::costgen::RunningCostTable;
use crate::dynamics::DynamicsModel;
use crate::smoothing::SmoothParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub max_iterations: usize,
    /// Stop once an accepted step decreases the cost by less than this.
    pub cost_tolerance: f64,
    /// Stop once the gradient infinity norm falls below this.
    pub grad_tolerance: f64,
    pub fd_step: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub control_weight: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            max_iterations: 1000,
            cost_tolerance: 1e-10,
            grad_tolerance: 1e-7,
            fd_step: 1e-6,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 50,
            control_weight: 0.0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |msg: &str| Err(SolveError::InvalidConfig(msg.to_string()));
        if !(self.fd_step > 0.0) {
            return bad("fd_step must be positive");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo constant must lie in (0, 1)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack factor must lie in (0, 1)");
        }
        if !(self.control_weight >= 0.0) {
            return bad("control_weight must be non-negative");
        }
        Ok(())
    }
}

fn suffix_cost(model: &dyn DynamicsModel, objective: &dyn Objective, t0: usize, x: &DVector<f64>, controls: &[DVector<f64>]) -> Result<f64, SolveError> {
    let horizon = objective.horizon();
    let mut x = x.clone();
    let mut total = 0.0;
    for (t, u) in controls.iter().enumerate().skip(t0) {
        total += objective.cost(t, &x, u)?;
        if t < horizon {
            x = model.step(&x, u)?;
        }
    }
    Ok(total)
}

fn fd_gradient(model: &dyn DynamicsModel, objective: &dyn Objective, traj: &Trajectory, h: f64) -> Result<Vec<DVector<f64>>, SolveError> {
    let mut controls = traj.controls.clone();
    let mut grad = Vec::with_capacity(controls.len());
    for t in 0..controls.len() {
        let mut g = DVector::zeros(controls[t].len());
        for j in 0..g.len() {
            let orig = controls[t][j];
            controls[t][j] = orig + h;
            let plus = suffix_cost(model, objective, t, &traj.states[t], &controls)?;
            controls[t][j] = orig - h;
            let minus = suffix_cost(model, objective, t, &traj.states[t], &controls)?;
            controls[t][j] = orig;
            g[j] = (plus - minus) / (2.0 * h);
        }
        grad.push(g);
    }
    Ok(grad)
}

fn dot(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Gradient descent with Barzilai-Borwein initial steps and Armijo backtracking.
pub fn first_order_baseline_objective(
    model: &dyn DynamicsModel,
    objective: &dyn Objective,
    x0: &DVector<f64>,
    initial_controls: &[DVector<f64>],
    config: &BaselineConfig,
) -> Result<Optimized, SolveError> {
    config.validate()?;
    let start = Instant::now();
    let mut traj = rollout(model, objective, x0, initial_controls)?;
    let mut cost_history = vec![traj.cost];
    let mut iteration_times = Vec::new();
    let mut iterations = 0;
    let mut stop_reason = StopReason::MaxIterations;
    let mut grad = fd_gradient(model, objective, &traj, config.fd_step)?;
    let mut step = 1.0;

    while iterations < config.max_iterations {
        let gnorm_inf = grad.iter().map(|g| g.amax()).fold(0.0, f64::max);
        if gnorm_inf < config.grad_tolerance {
            stop_reason = StopReason::CostTolerance;
            break;
        }
        let iter_start = Instant::now();
        iterations += 1;
        let gg = dot(&grad, &grad);
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let trial: Vec<DVector<f64>> = traj.controls.iter().zip(&grad).map(|(u, g)| u - g * alpha).collect();
            if let Ok(candidate) = rollout(model, objective, x0, &trial) {
                if candidate.cost <= traj.cost - config.armijo * alpha * gg {
                    accepted = Some(candidate);
                    break;
                }
            }
            alpha *= config.backtrack;
        }
        let Some(candidate) = accepted else {
            iteration_times.push(iter_start.elapsed());
            stop_reason = StopReason::LineSearchExhausted;
            break;
        };
        let decrease = traj.cost - candidate.cost;
        let new_grad = fd_gradient(model, objective, &candidate, config.fd_step)?;
        let s: Vec<DVector<f64>> = candidate.controls.iter().zip(&traj.controls).map(|(a, b)| a - b).collect();
        let y: Vec<DVector<f64>> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 { dot(&s, &s) / sy } else { alpha / config.backtrack };
        traj = candidate;
        grad = new_grad;
        cost_history.push(traj.cost);
        iteration_times.push(iter_start.elapsed());
        if decrease < config.cost_tolerance {
            stop_reason = StopReason::CostTolerance;
            break;
        }
    }
    let (n, m) = (model.state_dim(), model.control_dim());
    let gains = vec![Gains { feedback: DMatrix::zeros(m, n), feedforward: DVector::zeros(m) }; traj.horizon() + 1];
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

/// First-order counterpart of [`super::solve`] on the same compiled cost.
pub fn first_order_baseline(
    model: &dyn DynamicsModel,
    table: &RunningCostTable,
    x0: &DVector<f64>,
    initial_controls: &[DVector<f64>],
    config: &BaselineConfig,
    params: &SmoothParams,
) -> Result<SolveResult, SolveError> {
    check_model(model, table)?;
    let objective = StlObjective { table, model, params: *params, control_weight: config.control_weight };
    let opt = first_order_baseline_objective(model, &objective, x0, initial_controls, config)?;
    certify(model, table, params, opt)
}

#[cfg(test)]
mod tests {
    use nalgebra::dvector;

    use super::*;
    use crate::ddp::QuadraticObjective;
    use crate::dynamics::double_integrator;

    #[test]
    fn stationary_start_returns_immediately() {
        let model = double_integrator(0.1, 1).unwrap();
        let obj = QuadraticObjective { q: DMatrix::identity(2, 2), r: DMatrix::identity(1, 1), qf: DMatrix::identity(2, 2), horizon: 10 };
        let out = first_order_baseline_objective(&model, &obj, &dvector![0.0, 0.0], &vec![DVector::zeros(1); 11], &BaselineConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn fd_gradient_matches_adjoint_on_quadratic() {
        let model = double_integrator(0.1, 1).unwrap();
        let obj = QuadraticObjective { q: DMatrix::identity(2, 2), r: DMatrix::identity(1, 1), qf: DMatrix::identity(2, 2), horizon: 3 };
        let controls: Vec<_> = (0..4).map(|i| dvector![0.3 * i as f64 - 0.4]).collect();
        let traj = rollout(&model, &obj, &dvector![1.0, 0.5], &controls).unwrap();
        let g = fd_gradient(&model, &obj, &traj, 1e-6).unwrap();
        // adjoint: lambda_T = x_T, lambda_t = x_t + A' lambda_{t+1}; grad_t = u_t + B' lambda_{t+1}
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.1]);
        let mut lambda = traj.states[3].clone();
        assert!((g[3][0] - controls[3][0]).abs() < 1e-7);
        for t in (0..3).rev() {
            let expect = controls[t][0] + (b.transpose() * &lambda)[0];
            assert!((g[t][0] - expect).abs() < 1e-7, "t={t}: {} vs {expect}", g[t][0]);
            lambda = &traj.states[t] + a.transpose() * &lambda;
        }
    }
}
