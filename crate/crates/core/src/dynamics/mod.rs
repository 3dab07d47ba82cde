//! Discrete-time models `x' = f(x, u)`, `y = g(x, u)` with Jacobian access.

mod arm;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use arm::{gravity_torque, PlanarArm, PlanarArmParams, ARM_LINKS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("non-finite state{}", .t.map(|t| format!(" at timestep {t}")).unwrap_or_default())]
    NonFiniteState { t: Option<usize> },
    #[error("mass matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularMassMatrix { condition: f64 },
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("inverse kinematics did not converge (residual {residual:e} m)")]
    IkFailed { residual: f64 },
}

/// Dynamics and output Jacobians at one `(x, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobians {
    pub fx: DMatrix<f64>,
    pub fu: DMatrix<f64>,
    pub gx: DMatrix<f64>,
    pub gu: DMatrix<f64>,
}

pub trait DynamicsModel: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Sampling period in seconds.
    fn dt(&self) -> f64;
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, DynamicsError>;
    fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// Closed-form Jacobians, if the model has them.
    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<Jacobians> {
        None
    }
}

/// Central-difference Jacobians of `step` and `output`.
pub fn fd_jacobians(model: &dyn DynamicsModel, x: &DVector<f64>, u: &DVector<f64>, h: f64) -> Result<Jacobians, DynamicsError> {
    if !(h > 0.0) {
        return Err(DynamicsError::InvalidParams(format!("finite-difference step must be positive, got {h}")));
    }
    let (n, m, p) = (model.state_dim(), model.control_dim(), model.output_dim());
    let mut fx = DMatrix::zeros(n, n);
    let mut fu = DMatrix::zeros(n, m);
    let mut gx = DMatrix::zeros(p, n);
    let mut gu = DMatrix::zeros(p, m);
    let inv = 0.5 / h;
    for i in 0..n {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[i] += h;
        xm[i] -= h;
        fx.set_column(i, &((model.step(&xp, u)? - model.step(&xm, u)?) * inv));
        gx.set_column(i, &((model.output(&xp, u) - model.output(&xm, u)) * inv));
    }
    for i in 0..m {
        let (mut up, mut um) = (u.clone(), u.clone());
        up[i] += h;
        um[i] -= h;
        fu.set_column(i, &((model.step(x, &up)? - model.step(x, &um)?) * inv));
        gu.set_column(i, &((model.output(x, &up) - model.output(x, &um)) * inv));
    }
    if fx.iter().chain(fu.iter()).any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFiniteState { t: None });
    }
    Ok(Jacobians { fx, fu, gx, gu })
}

fn check_dt(dt: f64) -> Result<(), DynamicsError> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(DynamicsError::InvalidParams(format!("dt must be positive, got {dt}")))
    }
}

/// Planar point robot: `x' = x + u dt`, `y = x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleIntegrator {
    dt: f64,
}

pub fn single_integrator(dt: f64) -> Result<SingleIntegrator, DynamicsError> {
    check_dt(dt)?;
    Ok(SingleIntegrator { dt })
}

impl DynamicsModel for SingleIntegrator {
    fn name(&self) -> &str {
        "single_integrator"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
        Ok(x + u * self.dt)
    }
    fn output(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<Jacobians> {
        Some(Jacobians { fx: DMatrix::identity(2, 2), fu: DMatrix::identity(2, 2) * self.dt, gx: DMatrix::identity(2, 2), gu: DMatrix::zeros(2, 2) })
    }
}

/// Forward-Euler double integrator per axis: state `(positions, velocities)`,
/// control accelerations, output positions.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleIntegrator {
    dt: f64,
    axes: usize,
}

pub fn double_integrator(dt: f64, axes: usize) -> Result<DoubleIntegrator, DynamicsError> {
    check_dt(dt)?;
    if axes == 0 {
        return Err(DynamicsError::InvalidParams("double integrator needs at least one axis".into()));
    }
    Ok(DoubleIntegrator { dt, axes })
}

impl DoubleIntegrator {
    fn matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let k = self.axes;
        let mut a = DMatrix::identity(2 * k, 2 * k);
        let mut b = DMatrix::zeros(2 * k, k);
        for i in 0..k {
            a[(i, k + i)] = self.dt;
            b[(k + i, i)] = self.dt;
        }
        (a, b)
    }
}

impl DynamicsModel for DoubleIntegrator {
    fn name(&self) -> &str {
        "double_integrator"
    }
    fn state_dim(&self) -> usize {
        2 * self.axes
    }
    fn control_dim(&self) -> usize {
        self.axes
    }
    fn output_dim(&self) -> usize {
        self.axes
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
        let k = self.axes;
        let mut next = x.clone();
        for i in 0..k {
            next[i] += x[k + i] * self.dt;
            next[k + i] += u[i] * self.dt;
        }
        Ok(next)
    }
    fn output(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        x.rows(0, self.axes).into_owned()
    }
    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<Jacobians> {
        let (a, b) = self.matrices();
        let mut gx = DMatrix::zeros(self.axes, 2 * self.axes);
        gx.view_mut((0, 0), (self.axes, self.axes)).fill_with_identity();
        Some(Jacobians { fx: a, fu: b, gx, gu: DMatrix::zeros(self.axes, self.axes) })
    }
}

/// General linear model `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub dt: f64,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>, dt: f64) -> Result<Self, DynamicsError> {
        check_dt(dt)?;
        let n = a.nrows();
        let shape_ok = a.ncols() == n && b.nrows() == n && c.ncols() == n && d.nrows() == c.nrows() && d.ncols() == b.ncols();
        if !shape_ok {
            return Err(DynamicsError::InvalidParams("inconsistent linear model shapes".into()));
        }
        Ok(LinearModel { a, b, c, d, dt })
    }

    /// Full-state output.
    pub fn with_state_output(a: DMatrix<f64>, b: DMatrix<f64>, dt: f64) -> Result<Self, DynamicsError> {
        let (n, m) = (a.nrows(), b.ncols());
        Self::new(a, b, DMatrix::identity(n, n), DMatrix::zeros(n, m), dt)
    }
}

impl DynamicsModel for LinearModel {
    fn name(&self) -> &str {
        "linear"
    }
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }
    fn output_dim(&self) -> usize {
        self.c.nrows()
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
        Ok(&self.a * x + &self.b * u)
    }
    fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.d * u
    }
    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<Jacobians> {
        Some(Jacobians { fx: self.a.clone(), fu: self.b.clone(), gx: self.c.clone(), gu: self.d.clone() })
    }
}
