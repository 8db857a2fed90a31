//! Recursive Newton-Euler inverse dynamics and its decomposition into
//! inertia, velocity, friction, and gravity terms, plus forward dynamics
//! for simulation.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{check_dim, link_transform, pitch_roll};
use crate::model::{RobotModel, GRAVITY_ACCEL};

/// Joint positions, velocities, and accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub qdd: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qd: DVector<f64>, qdd: DVector<f64>) -> Result<Self> {
        if q.len() != qd.len() || q.len() != qdd.len() {
            return Err(Error::DimensionMismatch { expected: q.len(), got: qd.len().max(qdd.len()) });
        }
        for v in q.iter().chain(qd.iter()).chain(qdd.iter()) {
            if !v.is_finite() {
                return Err(Error::Validation("joint state must be finite".into()));
            }
        }
        Ok(Self { q, qd, qdd })
    }

    /// A state at rest: zero velocity and acceleration.
    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self { q, qd: DVector::zeros(n), qdd: DVector::zeros(n) }
    }
}

/// Per-joint torques (N m).
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueVector {
    pub tau: DVector<f64>,
}

impl TorqueVector {
    pub fn zeros(n: usize) -> Self {
        Self { tau: DVector::zeros(n) }
    }

    pub fn from_vec(tau: Vec<f64>) -> Self {
        Self { tau: DVector::from_vec(tau) }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

/// A spatial force on the end frame, expressed in the base frame with the
/// moment taken about the end-frame origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl Wrench {
    pub fn zero() -> Self {
        Self { force: Vector3::zeros(), moment: Vector3::zeros() }
    }
}

/// Velocity below which Coulomb friction is smoothed with tanh (rad/s).
pub const FRICTION_SMOOTHING_VEL: f64 = 1e-3;

/// Joint torques for the given motion: outward velocity/acceleration
/// recursion followed by the inward force recursion. The result is
/// M(q) qdd + C(q, qd) + G(q) + J^T W; the rotor adds
/// gear_ratio^2 * motor_inertia * qdd_i on joint i. Friction is not
/// included here; see [`friction_torque`].
pub fn rne(
    model: &RobotModel,
    state: &JointState,
    gravity: &Vector3<f64>,
    tip_wrench: &Wrench,
) -> Result<TorqueVector> {
    let n = model.dof();
    check_dim(model, state.q.len())?;
    check_dim(model, state.qd.len())?;
    check_dim(model, state.qdd.len())?;
    if !gravity.iter().all(|g| g.is_finite()) {
        return Err(Error::Validation("gravity must be finite".into()));
    }

    // Per-link local rotations R_i (frame i in frame i-1), translations
    // r_i = R_i^T p_i (origin i relative to origin i-1, in frame i), and
    // the joint axis z_{i-1} expressed in frame i.
    let mut rot = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut rot_base = Vec::with_capacity(n); // base-to-frame-i rotation
    let mut acc_rot = Matrix3::identity();
    for (link, &qi) in model.links().iter().zip(state.q.iter()) {
        let t = link_transform(&link.dh, qi);
        let ri: Matrix3<f64> = t.fixed_view::<3, 3>(0, 0).into();
        let p: Vector3<f64> = t.fixed_view::<3, 1>(0, 3).into();
        r.push(ri.transpose() * p);
        z.push(ri.transpose() * Vector3::z());
        acc_rot *= ri;
        rot_base.push(acc_rot);
        rot.push(ri);
    }

    // Outward recursion. Gravity enters as a fictitious base acceleration.
    let mut omega = vec![Vector3::zeros(); n];
    let mut omega_dot = vec![Vector3::zeros(); n];
    let mut a_com = vec![Vector3::zeros(); n];
    let mut w_prev = Vector3::zeros();
    let mut wd_prev = Vector3::zeros();
    let mut a_prev = -gravity;
    for i in 0..n {
        let qd = state.qd[i];
        let qdd = state.qdd[i];
        let rt = rot[i].transpose();
        let w = rt * w_prev + z[i] * qd;
        let wd = rt * (wd_prev + w_prev.cross(&Vector3::z()) * qd) + z[i] * qdd;
        let a = rt * a_prev + wd.cross(&r[i]) + w.cross(&w.cross(&r[i]));
        let c = model.links()[i].dynamics.com;
        a_com[i] = a + wd.cross(&c) + w.cross(&w.cross(&c));
        omega[i] = w;
        omega_dot[i] = wd;
        w_prev = w;
        wd_prev = wd;
        a_prev = a;
    }

    // Inward recursion, seeded with the tip wrench rotated into frame N.
    let rt_end = rot_base[n - 1].transpose();
    let mut f_next = rt_end * tip_wrench.force;
    let mut n_next = rt_end * tip_wrench.moment;
    let mut tau = DVector::zeros(n);
    for i in (0..n).rev() {
        let dy = &model.links()[i].dynamics;
        let c = dy.com;
        let inertial_force = a_com[i] * dy.mass;
        let inertial_moment =
            dy.inertia * omega_dot[i] + omega[i].cross(&(dy.inertia * omega[i]));
        let (f_child, n_child) = if i + 1 < n {
            (rot[i + 1] * f_next, rot[i + 1] * n_next)
        } else {
            (f_next, n_next)
        };
        let f = f_child + inertial_force;
        let ni = inertial_moment + n_child + (r[i] + c).cross(&f) - c.cross(&f_child);
        tau[i] = ni.dot(&z[i]) + dy.gear_ratio * dy.gear_ratio * dy.motor_inertia * state.qdd[i];
        f_next = f;
        n_next = ni;
    }
    Ok(TorqueVector { tau })
}

/// Gravity load G(q): the torque that holds the chain static under the given
/// gravity with no motion and no tip wrench.
pub fn grav_load(model: &RobotModel, q: &DVector<f64>, gravity: &Vector3<f64>) -> Result<TorqueVector> {
    let state = JointState::at_rest(q.clone());
    rne(model, &state, gravity, &Wrench::zero())
}

/// Joint-space inertia matrix via unit-acceleration columns.
pub fn mass_matrix(model: &RobotModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_dim(model, q.len())?;
    let n = model.dof();
    let mut m = DMatrix::zeros(n, n);
    let zero_g = Vector3::zeros();
    for j in 0..n {
        let mut qdd = DVector::zeros(n);
        qdd[j] = 1.0;
        let state = JointState { q: q.clone(), qd: DVector::zeros(n), qdd };
        let col = rne(model, &state, &zero_g, &Wrench::zero())?;
        m.set_column(j, &col.tau);
    }
    Ok(m)
}

/// Centrifugal and Coriolis torques C(q, qd), quadratic in qd.
pub fn velocity_terms(model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> Result<TorqueVector> {
    check_dim(model, qd.len())?;
    let n = model.dof();
    let state = JointState { q: q.clone(), qd: qd.clone(), qdd: DVector::zeros(n) };
    rne(model, &state, &Vector3::zeros(), &Wrench::zero())
}

/// Viscous plus tanh-smoothed Coulomb friction. Zero at rest, odd in qd.
pub fn friction_torque(model: &RobotModel, qd: &DVector<f64>) -> Result<TorqueVector> {
    check_dim(model, qd.len())?;
    let tau = DVector::from_iterator(
        model.dof(),
        model.links().iter().zip(qd.iter()).map(|(link, &v)| {
            link.dynamics.viscous * v
                + link.dynamics.coulomb * (v / FRICTION_SMOOTHING_VEL).tanh()
        }),
    );
    Ok(TorqueVector { tau })
}

/// Joint accelerations under the applied torque:
/// qdd = M(q)^-1 (tau - C(q, qd) - G(q) - F(qd)), with gravity taken from
/// the model.
pub fn forward_dynamics(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    tau_applied: &TorqueVector,
) -> Result<DVector<f64>> {
    check_dim(model, tau_applied.len())?;
    let n = model.dof();
    // One recursion yields C(q, qd) + G(q) together.
    let bias_state = JointState { q: q.clone(), qd: qd.clone(), qdd: DVector::zeros(n) };
    let bias = rne(model, &bias_state, &model.gravity(), &Wrench::zero())?;
    let friction = friction_torque(model, qd)?;
    let rhs = &tau_applied.tau - bias.tau - friction.tau;
    let m = mass_matrix(model, q)?;
    match m.clone().cholesky() {
        Some(chol) => Ok(chol.solve(&rhs)),
        None => m.lu().solve(&rhs).ok_or(Error::SingularMassMatrix),
    }
}

/// Base-frame gravity when the trunk bows forward by `beta` (pitch, about
/// the base y-axis) and tilts sideways by `phi` (roll, about the base
/// x-axis): g = R_y(beta)^T R_x(phi)^T (0, 0, -9.8).
pub fn rotated_gravity(beta: f64, phi: f64) -> Vector3<f64> {
    let (ry, rx) = pitch_roll(beta, phi);
    ry.inverse() * (rx.inverse() * Vector3::new(0.0, 0.0, -GRAVITY_ACCEL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exoskeleton_default, DhLink, Link, LinkDynamics};
    use crate::kinematics::geometric_jacobian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn pendulum(mass: f64, com_x: f64, izz: f64, gear: f64, jm: f64) -> RobotModel {
        RobotModel::new(
            vec![Link {
                dh: DhLink { a: 0.0, alpha: 0.0, d_offset: 0.0, theta_offset: 0.0 },
                dynamics: LinkDynamics {
                    mass,
                    com: Vector3::new(com_x, 0.0, 0.0),
                    inertia: Matrix3::from_diagonal(&Vector3::new(0.0, 0.0, izz)),
                    motor_inertia: jm,
                    gear_ratio: gear,
                    viscous: 0.0,
                    coulomb: 0.0,
                },
            }],
            Vector3::new(0.0, -9.8, 0.0),
        )
        .unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> JointState {
        JointState {
            q: DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5)),
            qd: DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
            qdd: DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0)),
        }
    }

    #[test]
    fn massless_chain_needs_no_torque() {
        let mut links = exoskeleton_default().links().to_vec();
        for l in &mut links {
            l.dynamics.mass = 0.0;
            l.dynamics.inertia = Matrix3::zeros();
            l.dynamics.motor_inertia = 0.0;
        }
        let model = RobotModel::new(links, Vector3::new(0.0, 0.0, -9.8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let state = random_state(&mut rng, 4);
            let tau = rne(&model, &state, &model.gravity(), &Wrench::zero()).unwrap();
            assert!(tau.tau.amax() < 1e-12);
        }
    }

    #[test]
    fn horizontal_pendulum_static_torque() {
        let model = pendulum(2.0, 0.5, 0.0, 1.0, 0.0);
        // q = 0 lays the link along +x, gravity along -y: torque m g l_c.
        let tau = grav_load(&model, &DVector::zeros(1), &model.gravity()).unwrap();
        assert!((tau.tau[0] - 2.0 * 9.8 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_gravity_zero_load() {
        let model = exoskeleton_default();
        let q = DVector::from_vec(vec![0.3, -0.7, 0.2, 0.9]);
        let tau = grav_load(&model, &q, &Vector3::zeros()).unwrap();
        assert!(tau.tau.amax() < 1e-15);
    }

    #[test]
    fn grav_load_linear_in_gravity() {
        let model = exoskeleton_default();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let q = DVector::from_fn(4, |_, _| rng.random_range(-1.5..1.5));
            let g = model.gravity();
            let t1 = grav_load(&model, &q, &g).unwrap();
            let t3 = grav_load(&model, &q, &(g * 3.0)).unwrap();
            assert!((t3.tau - t1.tau * 3.0).amax() < 1e-12);
        }
    }

    #[test]
    fn mass_matrix_pendulum_closed_form() {
        let model = pendulum(2.0, 0.5, 0.1, 3.0, 0.01);
        let m = mass_matrix(&model, &DVector::from_vec(vec![0.8])).unwrap();
        let expected = 2.0 * 0.25 + 0.1 + 9.0 * 0.01;
        assert!((m[(0, 0)] - expected).abs() < 1e-12);
    }

    #[test]
    fn mass_matrix_symmetric_positive_definite() {
        let model = exoskeleton_default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let q = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
            let m = mass_matrix(&model, &q).unwrap();
            assert!((&m - m.transpose()).amax() < 1e-10);
            let eig = m.symmetric_eigenvalues();
            assert!(eig.min() > 0.0, "min eigenvalue {:.3e}", eig.min());
        }
    }

    #[test]
    fn velocity_terms_vanish_at_rest_and_scale_quadratically() {
        let model = exoskeleton_default();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..20 {
            let q = DVector::from_fn(4, |_, _| rng.random_range(-1.5..1.5));
            let qd = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let zero = velocity_terms(&model, &q, &DVector::zeros(4)).unwrap();
            assert!(zero.tau.amax() < 1e-15);
            let c1 = velocity_terms(&model, &q, &qd).unwrap();
            let c2 = velocity_terms(&model, &q, &(&qd * 2.0)).unwrap();
            assert!((c2.tau - c1.tau * 4.0).amax() < 1e-12);
        }
    }

    #[test]
    fn decomposition_closure() {
        let model = exoskeleton_default();
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..50 {
            let state = random_state(&mut rng, 4);
            let full = rne(&model, &state, &model.gravity(), &Wrench::zero()).unwrap();
            let m = mass_matrix(&model, &state.q).unwrap();
            let c = velocity_terms(&model, &state.q, &state.qd).unwrap();
            let g = grav_load(&model, &state.q, &model.gravity()).unwrap();
            let recombined = &m * &state.qdd + c.tau + g.tau;
            assert!((full.tau - recombined).amax() < 1e-9);
        }
    }

    #[test]
    fn tip_wrench_maps_through_jacobian_transpose() {
        // With a massless chain the entire torque is J^T W.
        let mut links = exoskeleton_default().links().to_vec();
        for l in &mut links {
            l.dynamics.mass = 0.0;
            l.dynamics.inertia = Matrix3::zeros();
            l.dynamics.motor_inertia = 0.0;
        }
        let model = RobotModel::new(links, Vector3::zeros()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for _ in 0..20 {
            let q = DVector::from_fn(4, |_, _| rng.random_range(-1.5..1.5));
            let wrench = Wrench {
                force: Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0)),
                moment: Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0)),
            };
            let state = JointState::at_rest(q.clone());
            let tau = rne(&model, &state, &Vector3::zeros(), &wrench).unwrap();
            let jac = geometric_jacobian(&model, &q).unwrap();
            let w6 = DVector::from_vec(vec![
                wrench.force.x, wrench.force.y, wrench.force.z,
                wrench.moment.x, wrench.moment.y, wrench.moment.z,
            ]);
            let expected = jac.transpose() * w6;
            assert!((tau.tau - expected).amax() < 1e-11);
        }
    }

    #[test]
    fn friction_zero_at_rest_odd_and_additive() {
        let model = exoskeleton_default();
        let zero = friction_torque(&model, &DVector::zeros(4)).unwrap();
        assert!(zero.tau.amax() == 0.0);

        let mut links = model.links().to_vec();
        links[0].dynamics.viscous = 0.1;
        links[0].dynamics.coulomb = 0.05;
        let model = RobotModel::new(links, model.gravity()).unwrap();
        let qd = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let f = friction_torque(&model, &qd).unwrap();
        assert!((f.tau[0] - 0.15).abs() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for _ in 0..20 {
            let qd = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
            let fp = friction_torque(&model, &qd).unwrap();
            let fm = friction_torque(&model, &(-&qd)).unwrap();
            assert_eq!(fp.tau, -fm.tau);
        }
    }

    #[test]
    fn exact_compensation_gives_zero_acceleration() {
        let model = exoskeleton_default();
        let q = DVector::from_vec(vec![0.1, 0.6, -0.4, 0.8]);
        let tau = grav_load(&model, &q, &model.gravity()).unwrap();
        let qdd = forward_dynamics(&model, &q, &DVector::zeros(4), &tau).unwrap();
        assert!(qdd.amax() < 1e-12);
    }

    #[test]
    fn pendulum_release_acceleration_closed_form() {
        let model = pendulum(1.5, 0.4, 0.05, 2.0, 0.01);
        let qdd = forward_dynamics(
            &model,
            &DVector::zeros(1),
            &DVector::zeros(1),
            &TorqueVector::zeros(1),
        )
        .unwrap();
        let inertia = 1.5 * 0.16 + 0.05 + 4.0 * 0.01;
        let expected = -1.5 * 9.8 * 0.4 / inertia;
        assert!((qdd[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn inverse_forward_round_trip() {
        let model = exoskeleton_default();
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        for _ in 0..20 {
            let q = DVector::from_fn(4, |_, _| rng.random_range(-1.5..1.5));
            let qd = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let tau = TorqueVector::from_vec(
                (0..4).map(|_| rng.random_range(-5.0..5.0)).collect(),
            );
            let qdd = forward_dynamics(&model, &q, &qd, &tau).unwrap();
            let state = JointState { q: q.clone(), qd: qd.clone(), qdd };
            let back = rne(&model, &state, &model.gravity(), &Wrench::zero()).unwrap();
            let friction = friction_torque(&model, &qd).unwrap();
            assert!((back.tau + friction.tau - &tau.tau).amax() < 1e-9);
        }
    }

    #[test]
    fn singular_mass_matrix_reported() {
        // Zero masses and rotor inertia give a singular inertia matrix.
        let mut links = exoskeleton_default().links().to_vec();
        for l in &mut links {
            l.dynamics.mass = 0.0;
            l.dynamics.inertia = Matrix3::zeros();
            l.dynamics.motor_inertia = 0.0;
        }
        let model = RobotModel::new(links, Vector3::new(0.0, 0.0, -9.8)).unwrap();
        let out = forward_dynamics(
            &model,
            &DVector::zeros(4),
            &DVector::zeros(4),
            &TorqueVector::zeros(4),
        );
        assert!(matches!(out, Err(Error::SingularMassMatrix)));
    }

    #[test]
    fn rotated_gravity_basics() {
        assert!((rotated_gravity(0.0, 0.0) - Vector3::new(0.0, 0.0, -9.8)).norm() < 1e-15);
        let g = rotated_gravity(FRAC_PI_2, 0.0);
        assert!((g - Vector3::new(9.8, 0.0, 0.0)).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..50 {
            let g = rotated_gravity(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            assert!((g.norm() - 9.8).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_reported() {
        let model = exoskeleton_default();
        let q3 = DVector::zeros(3);
        assert!(matches!(
            grav_load(&model, &q3, &model.gravity()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
