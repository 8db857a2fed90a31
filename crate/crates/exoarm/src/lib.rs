//! Serial-link rigid-body dynamics and a feedforward gravity-compensation
//! controller for a 4-DoF upper-body exoskeleton, with a fixed-step
//! simulation harness and a neuro-fuzzy regression baseline.
//!
//! The [`model`] module defines the chain and ships the exoskeleton preset;
//! [`kinematics`] and [`dynamics`] provide frames, Jacobians, and the
//! recursive Newton-Euler torque oracle; [`controller`] implements the
//! closed-form compensation law bridged to motor coordinates by an angle-map
//! calibration; [`anfis`] trains the data-driven baseline; [`sim`] runs
//! hold/disturbance/schedule scenarios and scores their stability.

pub mod anfis;
pub mod cli;
pub mod controller;
pub mod dynamics;
pub mod error;
mod fmt;
pub mod kinematics;
pub mod model;
pub mod plot;
pub mod sim;

pub use controller::{
    calibrate_angle_map, clamp_torque, mobile_gravity_torque, static_gravity_torque, AngleMap,
    BodyPose, CompParams,
};
pub use dynamics::{
    forward_dynamics, friction_torque, grav_load, mass_matrix, rne, rotated_gravity,
    velocity_terms, JointState, TorqueVector, Wrench,
};
pub use error::{Error, Result};
pub use kinematics::{
    com_positions, forward_kinematics, geometric_jacobian, link_transform, potential_energy,
    FrameSet,
};
pub use model::{exoskeleton_default, load_robot_config, serialize_robot_config, RobotModel};
pub use sim::{run_pose_schedule, run_scenario, stability_metrics, Scenario, SimTrace};
