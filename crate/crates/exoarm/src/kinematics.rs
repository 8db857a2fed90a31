//! Forward kinematics, COM placement, geometric Jacobian, and gravitational
//! potential energy for the chain.

use nalgebra::{DMatrix, DVector, Matrix4, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::model::{DhLink, RobotModel};

/// Base-to-link homogeneous transforms for every link of a chain at one
/// configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    transforms: Vec<Matrix4<f64>>,
}

impl FrameSet {
    pub fn transforms(&self) -> &[Matrix4<f64>] {
        &self.transforms
    }

    /// Transform of the last link (the end frame).
    pub fn end_frame(&self) -> &Matrix4<f64> {
        self.transforms.last().expect("FrameSet is never empty")
    }

    /// Origin of frame i in the base frame.
    pub fn origin(&self, i: usize) -> Vector3<f64> {
        self.transforms[i].fixed_view::<3, 1>(0, 3).into()
    }

    /// Rotation block of frame i.
    pub fn rotation(&self, i: usize) -> nalgebra::Matrix3<f64> {
        self.transforms[i].fixed_view::<3, 3>(0, 0).into()
    }
}

/// Local transform of one link under the standard (distal) DH convention:
/// T = Rot_z(q + offset) * Trans_z(d) * Trans_x(a) * Rot_x(alpha).
pub fn link_transform(link: &DhLink, q: f64) -> Matrix4<f64> {
    let theta = q + link.theta_offset;
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = link.alpha.sin_cos();
    let a = link.a;
    let d = link.d_offset;
    Matrix4::new(
        ct, -st * ca, st * sa, a * ct, //
        st, ct * ca, -ct * sa, a * st, //
        0.0, sa, ca, d, //
        0.0, 0.0, 0.0, 1.0,
    )
}

pub(crate) fn check_dim(model: &RobotModel, len: usize) -> Result<()> {
    if len == model.dof() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: model.dof(), got: len })
    }
}

/// Composes the per-link transforms into base-to-link frames.
pub fn forward_kinematics(model: &RobotModel, q: &DVector<f64>) -> Result<FrameSet> {
    check_dim(model, q.len())?;
    let mut transforms = Vec::with_capacity(model.dof());
    let mut t = Matrix4::identity();
    for (link, &qi) in model.links().iter().zip(q.iter()) {
        t *= link_transform(&link.dh, qi);
        transforms.push(t);
    }
    Ok(FrameSet { transforms })
}

/// World position of each link's centre of mass.
pub fn com_positions(model: &RobotModel, q: &DVector<f64>) -> Result<Vec<Vector3<f64>>> {
    let frames = forward_kinematics(model, q)?;
    Ok(model
        .links()
        .iter()
        .enumerate()
        .map(|(i, link)| {
            let c = link.dynamics.com;
            frames.rotation(i) * c + frames.origin(i)
        })
        .collect())
}

/// Geometric Jacobian of the end frame, 6 x N. Rows 0-2 are linear, rows 3-5
/// angular; column i is (z_i x (p_e - p_i); z_i) for revolute joint i, where
/// z_i and p_i belong to the frame the joint rotates about (frame i-1).
pub fn geometric_jacobian(model: &RobotModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let frames = forward_kinematics(model, q)?;
    let n = model.dof();
    let p_end = frames.origin(n - 1);
    let mut jac = DMatrix::zeros(6, n);
    for i in 0..n {
        let (z, p) = if i == 0 {
            (Vector3::z(), Vector3::zeros())
        } else {
            (frames.rotation(i - 1) * Vector3::z(), frames.origin(i - 1))
        };
        let linear = z.cross(&(p_end - p));
        for r in 0..3 {
            jac[(r, i)] = linear[r];
            jac[(r + 3, i)] = z[r];
        }
    }
    Ok(jac)
}

/// Gravitational potential energy, signed so that its gradient with respect
/// to the joint angles equals the gravity load torque:
/// V = -sum_i m_i g . p_com,i.
pub fn potential_energy(model: &RobotModel, q: &DVector<f64>) -> Result<f64> {
    let coms = com_positions(model, q)?;
    let g = model.gravity();
    Ok(model
        .links()
        .iter()
        .zip(coms.iter())
        .map(|(link, p)| -link.dynamics.mass * g.dot(p))
        .sum())
}

/// Body pitch/roll rotations used by the trunk-pose gravity model.
pub(crate) fn pitch_roll(beta: f64, phi: f64) -> (Rotation3<f64>, Rotation3<f64>) {
    (
        Rotation3::from_axis_angle(&Vector3::y_axis(), beta),
        Rotation3::from_axis_angle(&Vector3::x_axis(), phi),
    )
}
