//! Simulation and control stack for the CRANE CT-guided needle-placement robot.
//!
//! The crate is organised bottom-up:
//!
//! - [`kinematics`]: Modified-DH chain, forward kinematics and geometric Jacobians.
//! - [`transmission`]: motor/joint coupling matrix and its least-squares calibration.
//! - [`estimation`]: complementary joint filter and tracker-to-base registration.
//! - [`control`]: joint PD, needle-symmetric pose error and resolved-rate end-effector loop.
//! - [`plant`]: ground-truth robot simulator with cable stretch, backlash, deflection and noisy sensors.
//! - [`clutch`]: SMA needle clutch thermal model, temperature PID and inch-worm insertion.
//! - [`harness`]: cone tracking experiment, insertion scenario, summaries and CSV/SVG export.

pub mod clutch;
pub mod config;
pub mod control;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod kinematics;
pub mod mailbox;
pub mod plant;
pub mod pose;
pub mod transmission;

pub use error::{Error, Result};
pub use pose::Pose;

/// Number of actuated joints (and motors) on CRANE.
pub const DOF: usize = 8;

/// Joint positions: meters for prismatic joints (q1, q2, q3, q8), radians otherwise.
pub type JointVector = nalgebra::SVector<f64, DOF>;

/// Motor output-shaft positions or velocities, one per motor.
pub type MotorVector = nalgebra::SVector<f64, DOF>;

pub type Matrix8 = nalgebra::SMatrix<f64, DOF, DOF>;
