use nalgebra::{DMatrix, DVector};

use super::SolveError;
use crate::costgen::{eval_running_cost, eval_running_cost_value, RunningCostTable};
use crate::dynamics::{fd_jacobians, DynamicsModel};
use crate::smoothing::SmoothParams;

/// Second-order expansion of a running cost at one `(x_t, u_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostExpansion {
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    pub luu: DMatrix<f64>,
    /// `d2 l / du dx`, shape `m x n`.
    pub lux: DMatrix<f64>,
}

/// Sum of running costs `l_0 .. l_T` minimized by the solvers.
pub trait Objective: Sync {
    /// Index of the last timestep `T`.
    fn horizon(&self) -> usize;
    fn cost(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64, SolveError>;
    fn expand(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<CostExpansion, SolveError>;
}

/// Running cost compiled from a specification, evaluated on the model's
/// output `y_t = g(x_t, u_t)`, plus an optional `0.5 * w * |u|^2` effort term.
///
/// Second derivatives of `g` are dropped; every bundled model has a linear
/// output map, where this is exact.
pub struct StlObjective<'a> {
    pub table: &'a RunningCostTable,
    pub model: &'a dyn DynamicsModel,
    pub params: SmoothParams,
    pub control_weight: f64,
}

impl StlObjective<'_> {
    fn output_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), SolveError> {
        match self.model.jacobians(x, u) {
            Some(j) => Ok((j.gx, j.gu)),
            None => {
                let j = fd_jacobians(self.model, x, u, 1e-6)?;
                Ok((j.gx, j.gu))
            }
        }
    }

    /// Cost of the specification terms alone at `y`.
    pub fn spec_cost(&self, t: usize, y: &[f64]) -> Result<f64, SolveError> {
        Ok(eval_running_cost_value(self.table, t, y, &self.params)?)
    }
}

impl Objective for StlObjective<'_> {
    fn horizon(&self) -> usize {
        self.table.horizon()
    }

    fn cost(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64, SolveError> {
        let y = self.model.output(x, u);
        let effort = if self.control_weight > 0.0 { 0.5 * self.control_weight * u.norm_squared() } else { 0.0 };
        Ok(self.spec_cost(t, y.as_slice())? + effort)
    }

    fn expand(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<CostExpansion, SolveError> {
        let y = self.model.output(x, u);
        let v = eval_running_cost(self.table, t, y.as_slice(), &self.params)?;
        let (gx, gu) = self.output_jacobians(x, u)?;
        let m = u.len();
        let hgx = &v.hess * &gx;
        let mut lu = gu.transpose() * &v.grad;
        let mut luu = gu.transpose() * &v.hess * &gu;
        if self.control_weight > 0.0 {
            lu.axpy(self.control_weight, u, 1.0);
            luu += DMatrix::identity(m, m) * self.control_weight;
        }
        Ok(CostExpansion { lx: gx.transpose() * &v.grad, lu, lxx: gx.transpose() * &hgx, luu, lux: gu.transpose() * hgx })
    }
}

/// `0.5 x'Qx + 0.5 u'Ru` at every step (and `Qf` in place of `Q` at `T`).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub qf: DMatrix<f64>,
    pub horizon: usize,
}

impl Objective for QuadraticObjective {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn cost(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64, SolveError> {
        let q = if t == self.horizon { &self.qf } else { &self.q };
        Ok(0.5 * (x.dot(&(q * x)) + u.dot(&(&self.r * u))))
    }

    fn expand(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<CostExpansion, SolveError> {
        let q = if t == self.horizon { &self.qf } else { &self.q };
        Ok(CostExpansion { lx: q * x, lu: &self.r * u, lxx: q.clone(), luu: self.r.clone(), lux: DMatrix::zeros(u.len(), x.len()) })
    }
}
