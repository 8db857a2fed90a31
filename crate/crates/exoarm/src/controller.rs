//! Feedforward gravity-compensation law: closed-form static torques,
//! gyro-stabilized mobile torques, motor-to-equation angle calibration,
//! and torque clamping.

use nalgebra::DVector;

use crate::dynamics::grav_load;
use crate::error::{Error, Result};
use crate::model::{RobotModel, PRESET_JOINT_RANGE};
use crate::dynamics::TorqueVector;

/// Peak torques of the preset motors (N m): 9 on joints 1, 3, 4 and 18 on
/// joint 2.
pub const PRESET_TORQUE_LIMITS: [f64; 4] = [9.0, 18.0, 9.0, 9.0];

/// Parameters of the analytical torque equations, derived from a 4-DoF
/// `RobotModel` so that controller and oracle can never drift apart.
#[derive(Debug, Clone, PartialEq)]
pub struct CompParams {
    /// Per-joint torque gains; 1 by default.
    pub c: [f64; 4],
    /// Link masses (kg).
    pub m: [f64; 4],
    /// Link lengths (m).
    pub l: [f64; 4],
    /// COM distance of each link from its proximal joint (m): the DH link
    /// length plus the x-offset of the COM in the link frame.
    pub d_com: [f64; 4],
    /// Gravitational acceleration magnitude (m/s^2).
    pub g: f64,
}

impl CompParams {
    pub fn from_model(model: &RobotModel) -> Result<Self> {
        if model.dof() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, got: model.dof() });
        }
        let mut m = [0.0; 4];
        let mut l = [0.0; 4];
        let mut d_com = [0.0; 4];
        for (i, link) in model.links().iter().enumerate() {
            m[i] = link.dynamics.mass;
            l[i] = link.dh.a;
            d_com[i] = link.dh.a + link.dynamics.com.x;
        }
        Ok(Self { c: [1.0; 4], m, l, d_com, g: model.gravity().norm() })
    }
}

/// Trunk orientation from the gyroscope: bowing (pitch) and lateral tilt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPose {
    pub beta: f64,
    pub phi: f64,
}

impl Default for BodyPose {
    fn default() -> Self {
        Self { beta: 0.0, phi: 0.0 }
    }
}

/// Affine bridge from motor (DH) angles to the equation angles the torque
/// law is written in: theta_i = sign_i * q_i + offset_i.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleMap {
    pub sign: [f64; 4],
    pub offset: [f64; 4],
}

impl AngleMap {
    pub fn identity() -> Self {
        Self { sign: [1.0; 4], offset: [0.0; 4] }
    }

    /// Motor angles to equation angles.
    pub fn map(&self, q_motor: &DVector<f64>) -> [f64; 4] {
        let mut theta = [0.0; 4];
        for i in 0..4 {
            theta[i] = self.sign[i] * q_motor[i] + self.offset[i];
        }
        theta
    }

    /// Equation angles back to motor angles.
    pub fn unmap(&self, theta: &[f64; 4]) -> DVector<f64> {
        DVector::from_fn(4, |i, _| (theta[i] - self.offset[i]) / self.sign[i])
    }
}

/// Applies an angle map; free-function form of [`AngleMap::map`].
pub fn map_angles(map: &AngleMap, q_motor: &DVector<f64>) -> [f64; 4] {
    map.map(q_motor)
}

/// Closed-form gravity torques for a stationary wearer.
///
/// tau1 = c1 g [d1 (m1+m2+m3+m4) + l2 (m2+m3+m4) sin t2
///              + l3 (m3+m4) cos t3 + l4 m4 cos(t3+t4)] sin t1
/// tau2 = c2 g [d2 (m2+m3+m4) + l3 (m3+m4) cos t3 + l4 m4 cos(t3+t4)] sin t2
/// tau3 = c3 g [d3 (m3+m4) sin t3 + l4 m4 sin(t3+t4)] cos t2
/// tau4 = c4 g  d4 m4 sin(t3+t4) cos t2
pub fn static_gravity_torque(params: &CompParams, theta: &[f64; 4]) -> TorqueVector {
    let [t1, t2, t3, t4] = *theta;
    let CompParams { c, m, l, d_com: d, g } = params;
    let m234 = m[1] + m[2] + m[3];
    let m34 = m[2] + m[3];

    let tau1 = c[0]
        * g
        * (d[0] * (m[0] + m234)
            + l[1] * m234 * t2.sin()
            + l[2] * m34 * t3.cos()
            + l[3] * m[3] * (t3 + t4).cos())
        * t1.sin();
    let tau2 = c[1]
        * g
        * (d[1] * m234 + l[2] * m34 * t3.cos() + l[3] * m[3] * (t3 + t4).cos())
        * t2.sin();
    let tau3 = c[2] * g * (d[2] * m34 * t3.sin() + l[3] * m[3] * (t3 + t4).sin()) * t2.cos();
    let tau4 = c[3] * g * d[3] * m[3] * (t3 + t4).sin() * t2.cos();
    TorqueVector::from_vec(vec![tau1, tau2, tau3, tau4])
}

/// Gyro-stabilized gravity torques for a mobile wearer, as printed: every
/// joint torque carries the common cos(phi) cos(beta) factor and joints 2-4
/// an additional cos(t1).
pub fn mobile_gravity_torque(
    params: &CompParams,
    theta: &[f64; 4],
    pose: &BodyPose,
) -> TorqueVector {
    let [t1, t2, t3, t4] = *theta;
    let BodyPose { beta, phi } = *pose;
    let CompParams { c, m, l, d_com: d, g } = params;
    let m234 = m[1] + m[2] + m[3];
    let m34 = m[2] + m[3];
    let lean = phi.cos() * beta.cos();

    let tau1 = c[0]
        * g
        * (d[0] * (m[0] + m234)
            + l[1] * m234 * (t2 + phi).sin()
            + l[2] * m34 * (t3 + beta).cos()
            + l[3] * m[3] * (t3 + t4 + beta).cos())
        * t1.sin()
        * lean;
    let tau2 = c[1]
        * g
        * (d[1] * m234 + l[2] * m34 * (t3 + beta).cos() + l[3] * m[3] * (t3 + t4 + beta).cos())
        * (t2 + phi).sin()
        * t1.cos()
        * lean;
    let tau3 = c[2]
        * g
        * (d[2] * m34 * (t3 + beta).sin() + l[3] * m[3] * (t3 + t4 + beta).sin())
        * (t2 + phi).cos()
        * t1.cos()
        * lean;
    let tau4 = c[3]
        * g
        * d[3]
        * m[3]
        * (t3 + t4 + beta).sin()
        * (t2 + phi).cos()
        * t1.cos()
        * lean;
    TorqueVector::from_vec(vec![tau1, tau2, tau3, tau4])
}

/// Result of a successful angle-map search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub map: AngleMap,
    /// Sum of squared torque residuals over the probe grid.
    pub residual: f64,
}

const CALIBRATION_THRESHOLD: f64 = 1e-6;
const PROBE_POINTS: usize = 5;

/// Searches sign in {-1, +1}^4 and offset in {-pi/2, 0, pi/2, pi}^4 for the
/// map under which the analytical torques reproduce the gravity-load oracle
/// on a 5x5x5 probe grid over joints 2-4 (joint 1 held at zero). Candidates
/// are scanned in lexicographic order with strict improvement, so ties
/// resolve to the smallest (sign, offset).
pub fn calibrate_angle_map(model: &RobotModel, params: &CompParams) -> Result<Calibration> {
    if model.dof() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: model.dof() });
    }
    let (lo, hi) = PRESET_JOINT_RANGE;
    let axis: Vec<f64> = (0..PROBE_POINTS)
        .map(|k| lo + (hi - lo) * k as f64 / (PROBE_POINTS - 1) as f64)
        .collect();
    let mut probes = Vec::with_capacity(PROBE_POINTS.pow(3));
    for &q2 in &axis {
        for &q3 in &axis {
            for &q4 in &axis {
                let q = DVector::from_vec(vec![0.0, q2, q3, q4]);
                let oracle = grav_load(model, &q, &model.gravity())?;
                probes.push((q, oracle));
            }
        }
    }

    let signs = [-1.0, 1.0];
    let offsets = [-std::f64::consts::FRAC_PI_2, 0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI];
    let mut best: Option<Calibration> = None;
    for &s1 in &signs {
        for &s2 in &signs {
            for &s3 in &signs {
                for &s4 in &signs {
                    for &o1 in &offsets {
                        for &o2 in &offsets {
                            for &o3 in &offsets {
                                for &o4 in &offsets {
                                    let map = AngleMap {
                                        sign: [s1, s2, s3, s4],
                                        offset: [o1, o2, o3, o4],
                                    };
                                    let mut residual = 0.0;
                                    for (q, oracle) in &probes {
                                        let tau = static_gravity_torque(params, &map.map(q));
                                        residual += (tau.tau - &oracle.tau).norm_squared();
                                    }
                                    if best.is_none_or(|b| residual < b.residual) {
                                        best = Some(Calibration { map, residual });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let best = best.expect("candidate set is non-empty");
    if best.residual < CALIBRATION_THRESHOLD {
        Ok(best)
    } else {
        Err(Error::CalibrationFailed { best_residual: best.residual })
    }
}

/// Componentwise clamp of each torque to [-limit_i, +limit_i].
pub fn clamp_torque(tau: &TorqueVector, limits: &[f64]) -> TorqueVector {
    let clamped = DVector::from_iterator(
        tau.len(),
        tau.tau.iter().zip(limits.iter()).map(|(&t, &lim)| t.clamp(-lim, lim)),
    );
    TorqueVector { tau: clamped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exoskeleton_default, GRAVITY_ACCEL};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn preset_params() -> CompParams {
        CompParams::from_model(&exoskeleton_default()).unwrap()
    }

    #[test]
    fn params_derive_from_model() {
        let p = preset_params();
        assert_eq!(p.c, [1.0; 4]);
        assert_eq!(p.m, [0.6, 0.8, 0.4, 0.3]);
        assert_eq!(p.l, [0.05, 0.13, 0.30, 0.30]);
        // COM sits at the distal joint, so d equals the link length.
        assert_eq!(p.d_com, p.l);
        assert!((p.g - GRAVITY_ACCEL).abs() < 1e-12);
    }

    #[test]
    fn identity_map_is_identity() {
        let q = DVector::from_vec(vec![0.1, -0.2, 0.3, -0.4]);
        let theta = map_angles(&AngleMap::identity(), &q);
        assert_eq!(theta.to_vec(), q.iter().copied().collect::<Vec<_>>());
    }

    #[test]
    fn map_composes_with_inverse() {
        let map = AngleMap { sign: [-1.0, 1.0, -1.0, 1.0], offset: [0.0, PI, -FRAC_PI_2, FRAC_PI_2] };
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let q = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
            let back = map.unmap(&map.map(&q));
            assert!((back - &q).amax() < 1e-14);
        }
    }

    #[test]
    fn vertical_joint1_needs_no_torque() {
        let tau = static_gravity_torque(&preset_params(), &[0.0, 0.7, -0.3, 0.5]);
        assert_eq!(tau.tau[0], 0.0);
    }

    #[test]
    fn straight_arm_zeroes_joints_3_and_4() {
        let tau = static_gravity_torque(&preset_params(), &[0.0, -FRAC_PI_2, 0.0, 0.0]);
        assert_eq!(tau.tau[2], 0.0);
        assert_eq!(tau.tau[3], 0.0);
    }

    #[test]
    fn gains_scale_each_joint_linearly() {
        let mut params = preset_params();
        let theta = [0.4, 0.8, -0.6, 0.3];
        let base = static_gravity_torque(&params, &theta);
        params.c = [2.0; 4];
        let doubled = static_gravity_torque(&params, &theta);
        assert!((doubled.tau - base.tau * 2.0).amax() < 1e-15);
    }

    #[test]
    fn static_matches_independent_transcription() {
        // Second, term-by-term transcription of the printed equations.
        let p = preset_params();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..10 {
            let t: [f64; 4] = std::array::from_fn(|_| rng.random_range(-PI..PI));
            let tau = static_gravity_torque(&p, &t);
            let sum_m = p.m[0] + p.m[1] + p.m[2] + p.m[3];
            let e1 = p.c[0] * p.g * t[0].sin()
                * (p.d_com[0] * sum_m
                    + p.l[1] * (p.m[1] + p.m[2] + p.m[3]) * t[1].sin()
                    + p.l[2] * (p.m[2] + p.m[3]) * t[2].cos()
                    + p.l[3] * p.m[3] * (t[2] + t[3]).cos());
            let e2 = p.c[1] * p.g * t[1].sin()
                * (p.d_com[1] * (p.m[1] + p.m[2] + p.m[3])
                    + p.l[2] * (p.m[2] + p.m[3]) * t[2].cos()
                    + p.l[3] * p.m[3] * (t[2] + t[3]).cos());
            let e3 = p.c[2] * p.g * t[1].cos()
                * (p.d_com[2] * (p.m[2] + p.m[3]) * t[2].sin()
                    + p.l[3] * p.m[3] * (t[2] + t[3]).sin());
            let e4 = p.c[3] * p.g * p.d_com[3] * p.m[3] * (t[2] + t[3]).sin() * t[1].cos();
            for (got, want) in tau.tau.iter().zip([e1, e2, e3, e4]) {
                assert!((got - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mobile_reduces_to_static_at_zero_pose_and_joint1() {
        let p = preset_params();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let pose = BodyPose::default();
        for _ in 0..100 {
            let t = [0.0, rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI)];
            let st = static_gravity_torque(&p, &t);
            let mo = mobile_gravity_torque(&p, &t, &pose);
            assert!((st.tau - mo.tau).amax() < 1e-15);
        }
    }

    #[test]
    fn mobile_carries_cos_theta1_on_joints_2_to_4() {
        let p = preset_params();
        let pose = BodyPose::default();
        let t = [0.6, 0.8, -0.5, 0.3];
        let st = static_gravity_torque(&p, &t);
        let mo = mobile_gravity_torque(&p, &t, &pose);
        assert!((mo.tau[0] - st.tau[0]).abs() < 1e-15);
        for j in 1..4 {
            assert!((mo.tau[j] - st.tau[j] * t[0].cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn quarter_tilt_kills_all_mobile_torque() {
        let p = preset_params();
        let pose = BodyPose { beta: 0.0, phi: FRAC_PI_2 };
        let mo = mobile_gravity_torque(&p, &[0.3, 0.8, -0.5, 0.2], &pose);
        assert!(mo.tau.amax() < 1e-15);
    }

    #[test]
    fn calibration_recovers_preset_convention() {
        let model = exoskeleton_default();
        let params = CompParams::from_model(&model).unwrap();
        let cal = calibrate_angle_map(&model, &params).unwrap();
        assert_eq!(cal.map.sign, [-1.0, -1.0, -1.0, -1.0]);
        assert_eq!(cal.map.offset, [0.0, 0.0, 0.0, 0.0]);
        assert!(cal.residual < 1e-9, "residual {:.3e}", cal.residual);
    }

    #[test]
    fn calibration_is_deterministic() {
        let model = exoskeleton_default();
        let params = CompParams::from_model(&model).unwrap();
        let a = calibrate_angle_map(&model, &params).unwrap();
        let b = calibrate_angle_map(&model, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_failure_carries_best_residual() {
        // Corrupt the equation parameters so no candidate can match.
        let model = exoskeleton_default();
        let mut params = CompParams::from_model(&model).unwrap();
        params.m = [5.0, 5.0, 5.0, 5.0];
        match calibrate_angle_map(&model, &params) {
            Err(Error::CalibrationFailed { best_residual }) => {
                assert!(best_residual > CALIBRATION_THRESHOLD);
            }
            other => panic!("expected calibration failure, got {other:?}"),
        }
    }

    #[test]
    fn joint2_moment_arm_shrinks_as_arm_folds() {
        // Folding joints 3/4 shortens the moment arm seen by joint 2.
        let p = preset_params();
        for &t2 in &[-1.2, -0.7, -0.3, 0.4, 0.9] {
            let reference = static_gravity_torque(&p, &[0.0, t2, 0.0, 0.0]).tau[1].abs();
            let mut k = 0;
            while k < 50 {
                let t3 = FRAC_PI_2 * (k as f64 / 49.0);
                let t4 = FRAC_PI_2 * ((49 - k) as f64 / 49.0);
                let folded = static_gravity_torque(&p, &[0.0, t2, t3, t4]).tau[1].abs();
                assert!(folded <= reference + 1e-12);
                k += 1;
            }
        }
    }

    #[test]
    fn clamp_preserves_small_torques_and_caps_large() {
        let tau = TorqueVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        let clamped = clamp_torque(&tau, &PRESET_TORQUE_LIMITS);
        assert_eq!(tau, clamped);

        let tau = TorqueVector::from_vec(vec![3.0, 25.0, -12.0, 9.5]);
        let clamped = clamp_torque(&tau, &PRESET_TORQUE_LIMITS);
        assert_eq!(clamped.tau.as_slice(), &[3.0, 18.0, -9.0, 9.0]);
    }

    #[test]
    fn clamp_idempotent_and_order_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..50 {
            let a = TorqueVector::from_vec((0..4).map(|_| rng.random_range(-30.0..30.0)).collect());
            let b = TorqueVector::from_vec(
                a.tau.iter().map(|v| v + rng.random_range(0.0..5.0)).collect(),
            );
            let ca = clamp_torque(&a, &PRESET_TORQUE_LIMITS);
            let cb = clamp_torque(&b, &PRESET_TORQUE_LIMITS);
            assert_eq!(clamp_torque(&ca, &PRESET_TORQUE_LIMITS), ca);
            for j in 0..4 {
                assert!(ca.tau[j] <= cb.tau[j] + 1e-15);
            }
        }
    }

    #[test]
    fn synthetic_pendulum_calibration_recovers_known_offset() {
        // One-joint sanity check of the search idea on a hand-built case:
        // equation torque m g d sin(theta), DH zero pose hanging down, so
        // theta = q + pi/2 reproduces the oracle. The 4-DoF search space is
        // exercised by `calibration_recovers_preset_convention`.
        let offset = FRAC_PI_2;
        let m = 1.3;
        let d = 0.4;
        let oracle = |q: f64| m * GRAVITY_ACCEL * d * (q + offset).sin();
        let eq = |theta: f64| m * GRAVITY_ACCEL * d * theta.sin();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for &s in &[-1.0, 1.0] {
            for &o in &[-FRAC_PI_2, 0.0, FRAC_PI_2, PI] {
                let mut r = 0.0;
                for k in 0..5 {
                    let q = -1.0 + 2.0 * k as f64 / 4.0;
                    let diff = eq(s * q + o) - oracle(q);
                    r += diff * diff;
                }
                if r < best.0 {
                    best = (r, s, o);
                }
            }
        }
        assert!(best.0 < 1e-20);
        assert_eq!((best.1, best.2), (1.0, offset));
    }
}
