//! Planar three-link torque-controlled arm.
//!
//! Joint angles are relative; link `i` points along the absolute angle
//! `theta_i = q_0 + ... + q_i`, measured from the +x axis with gravity along
//! -y. The manipulator equation `M(q) qdd + C(q, qd) qd + tau_g(q) = tau` is
//! integrated with forward Euler. `C` is built from the Christoffel symbols
//! of `M`.

use nalgebra::{DVector, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{check_dt, DynamicsError, DynamicsModel};

pub const ARM_LINKS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarArmParams {
    /// Link lengths in metres.
    pub lengths: [f64; ARM_LINKS],
    /// Link masses in kilograms.
    pub masses: [f64; ARM_LINKS],
    /// Distance from each link's proximal joint to its centre of mass.
    pub com_offsets: [f64; ARM_LINKS],
    /// Rotational inertia of each link about its centre of mass.
    pub inertias: [f64; ARM_LINKS],
    pub gravity: f64,
}

impl PlanarArmParams {
    /// Uniform slender rods: centre of mass at mid-length, inertia `m l^2 / 12`.
    pub fn uniform_rods(lengths: [f64; ARM_LINKS], masses: [f64; ARM_LINKS]) -> Self {
        PlanarArmParams {
            lengths,
            masses,
            com_offsets: lengths.map(|l| 0.5 * l),
            inertias: std::array::from_fn(|i| masses[i] * lengths[i] * lengths[i] / 12.0),
            gravity: 9.81,
        }
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&self.lengths) || !positive(&self.masses) {
            return Err(DynamicsError::InvalidParams("arm lengths and masses must be positive".into()));
        }
        if self.inertias.iter().any(|i| *i < 0.0) || self.com_offsets.iter().any(|c| *c < 0.0) || self.gravity < 0.0 {
            return Err(DynamicsError::InvalidParams("arm inertias, offsets and gravity must be non-negative".into()));
        }
        Ok(())
    }

    fn absolute_angles(q: &[f64]) -> [f64; ARM_LINKS] {
        let mut th = [0.0; ARM_LINKS];
        let mut acc = 0.0;
        for i in 0..ARM_LINKS {
            acc += q[i];
            th[i] = acc;
        }
        th
    }

    /// Linear-velocity Jacobian of link `i`'s centre of mass.
    fn com_jacobian(&self, th: &[f64; ARM_LINKS], i: usize) -> Matrix2x3<f64> {
        let mut j = Matrix2x3::zeros();
        for k in 0..=i {
            let mut col = Vector2::zeros();
            for (jj, &t) in th.iter().enumerate().take(i).skip(k) {
                col += self.lengths[jj] * Vector2::new(-t.sin(), t.cos());
            }
            col += self.com_offsets[i] * Vector2::new(-th[i].sin(), th[i].cos());
            j.set_column(k, &col);
        }
        j
    }

    /// Derivative of [`Self::com_jacobian`] with respect to joint `r`.
    fn com_jacobian_deriv(&self, th: &[f64; ARM_LINKS], i: usize, r: usize) -> Matrix2x3<f64> {
        let mut j = Matrix2x3::zeros();
        for k in 0..=i {
            let mut col = Vector2::zeros();
            for (jj, &t) in th.iter().enumerate().take(i).skip(k.max(r)) {
                col -= self.lengths[jj] * Vector2::new(t.cos(), t.sin());
            }
            if r <= i {
                col -= self.com_offsets[i] * Vector2::new(th[i].cos(), th[i].sin());
            }
            j.set_column(k, &col);
        }
        j
    }

    fn angular_jacobian(i: usize) -> Vector3<f64> {
        Vector3::from_fn(|k, _| if k <= i { 1.0 } else { 0.0 })
    }

    pub fn mass_matrix(&self, q: &[f64]) -> Matrix3<f64> {
        let th = Self::absolute_angles(q);
        let mut m = Matrix3::zeros();
        for i in 0..ARM_LINKS {
            let jv = self.com_jacobian(&th, i);
            let jw = Self::angular_jacobian(i);
            m += self.masses[i] * jv.transpose() * jv + self.inertias[i] * jw * jw.transpose();
        }
        m
    }

    /// `dM/dq_r`.
    pub fn mass_matrix_deriv(&self, q: &[f64], r: usize) -> Matrix3<f64> {
        let th = Self::absolute_angles(q);
        let mut dm = Matrix3::zeros();
        for i in 0..ARM_LINKS {
            let jv = self.com_jacobian(&th, i);
            let djv = self.com_jacobian_deriv(&th, i, r);
            let prod = djv.transpose() * jv;
            dm += self.masses[i] * (prod + prod.transpose());
        }
        dm
    }

    /// Coriolis/centripetal matrix with `C_kj = sum_i Gamma_kji qd_i`.
    pub fn coriolis_matrix(&self, q: &[f64], qd: &[f64]) -> Matrix3<f64> {
        let dm: [Matrix3<f64>; ARM_LINKS] = std::array::from_fn(|r| self.mass_matrix_deriv(q, r));
        Matrix3::from_fn(|k, j| (0..ARM_LINKS).map(|i| 0.5 * (dm[i][(k, j)] + dm[j][(k, i)] - dm[k][(i, j)]) * qd[i]).sum())
    }

    /// End-effector position.
    pub fn forward_kinematics(&self, q: &[f64]) -> Vector2<f64> {
        let th = Self::absolute_angles(q);
        (0..ARM_LINKS).map(|i| self.lengths[i] * Vector2::new(th[i].cos(), th[i].sin())).sum()
    }

    fn tip_jacobian(&self, q: &[f64]) -> Matrix2x3<f64> {
        let th = Self::absolute_angles(q);
        Matrix2x3::from_fn(|row, k| {
            (k..ARM_LINKS)
                .map(|j| {
                    let v = self.lengths[j];
                    if row == 0 {
                        -v * th[j].sin()
                    } else {
                        v * th[j].cos()
                    }
                })
                .sum()
        })
    }

    /// Damped least-squares inverse kinematics for the end-effector position,
    /// started from `seed`. Converges to within `1e-3` m or fails.
    pub fn inverse_kinematics(&self, target: [f64; 2], seed: [f64; ARM_LINKS]) -> Result<[f64; ARM_LINKS], DynamicsError> {
        const DAMPING: f64 = 1e-2;
        const TOL: f64 = 1e-3;
        let target = Vector2::new(target[0], target[1]);
        let mut q = Vector3::from(seed);
        let mut err = target - self.forward_kinematics(q.as_slice());
        for _ in 0..500 {
            if err.norm() < 1e-9 {
                break;
            }
            let j = self.tip_jacobian(q.as_slice());
            let jjt = j * j.transpose() + nalgebra::Matrix2::identity() * (DAMPING * DAMPING);
            let Some(inv) = jjt.try_inverse() else { break };
            q += j.transpose() * inv * err;
            err = target - self.forward_kinematics(q.as_slice());
        }
        let residual = err.norm();
        if residual < TOL {
            Ok([q[0], q[1], q[2]])
        } else {
            Err(DynamicsError::IkFailed { residual })
        }
    }
}

/// Joint torques needed to hold configuration `q` against gravity.
pub fn gravity_torque(params: &PlanarArmParams, q: &[f64]) -> [f64; ARM_LINKS] {
    let th = PlanarArmParams::absolute_angles(q);
    let mut tau = [0.0; ARM_LINKS];
    for i in 0..ARM_LINKS {
        let jv = params.com_jacobian(&th, i);
        for (k, t) in tau.iter_mut().enumerate() {
            *t += params.masses[i] * params.gravity * jv[(1, k)];
        }
    }
    tau
}

/// State `(q, qd)`, control joint torques, output `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarArm {
    pub params: PlanarArmParams,
    dt: f64,
}

impl PlanarArm {
    pub fn new(params: PlanarArmParams, dt: f64) -> Result<Self, DynamicsError> {
        check_dt(dt)?;
        params.validate()?;
        Ok(PlanarArm { params, dt })
    }

    /// Joint accelerations `M^-1 (tau - C qd - tau_g)`.
    pub fn acceleration(&self, q: &[f64], qd: &[f64], tau: &[f64]) -> Result<Vector3<f64>, DynamicsError> {
        let m = self.params.mass_matrix(q);
        let c = self.params.coriolis_matrix(q, qd);
        let g = Vector3::from(gravity_torque(&self.params, q));
        let rhs = Vector3::from_column_slice(tau) - c * Vector3::from_column_slice(qd) - g;
        let eig = m.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= 1e12) {
            return Err(DynamicsError::SingularMassMatrix { condition });
        }
        m.cholesky().map(|ch| ch.solve(&rhs)).ok_or(DynamicsError::SingularMassMatrix { condition })
    }

    pub fn kinetic_energy(&self, q: &[f64], qd: &[f64]) -> f64 {
        let v = Vector3::from_column_slice(qd);
        0.5 * (v.transpose() * self.params.mass_matrix(q) * v)[(0, 0)]
    }
}

impl DynamicsModel for PlanarArm {
    fn name(&self) -> &str {
        "planar_arm"
    }
    fn state_dim(&self) -> usize {
        2 * ARM_LINKS
    }
    fn control_dim(&self) -> usize {
        ARM_LINKS
    }
    fn output_dim(&self) -> usize {
        ARM_LINKS
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
        let (q, qd) = (&x.as_slice()[..ARM_LINKS], &x.as_slice()[ARM_LINKS..]);
        let qdd = self.acceleration(q, qd, u.as_slice())?;
        let mut next = x.clone();
        for i in 0..ARM_LINKS {
            next[i] += qd[i] * self.dt;
            next[ARM_LINKS + i] += qdd[i] * self.dt;
        }
        Ok(next)
    }
    fn output(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        x.rows(0, ARM_LINKS).into_owned()
    }
}
