//! Trajectory-tracking experiment: virtual-RCM cone targets, the simulated
//! rig in open- or closed-loop mode, error statistics and file output.

mod cone;
mod export;
mod insertion;
mod rig;
mod tracking;

pub use cone::{generate_cone, ConeTrajectory};
pub use export::{export, read_record_csv, render_svg, summary_text, write_record_csv, write_summary, ExportPaths};
pub use insertion::{run_insertion_scenario, InsertionConfig, InsertionReport};
pub use rig::{calibrate_on_plant, excitation_targets, register_on_plant, registration_poses, Rig, SetupReport};
pub use tracking::{default_cone, home_configuration, prepare_plant, run_tracking};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::pose::Pose;
use crate::{Error, JointVector, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingMode {
    /// Motor position control only: joint angles from the design coupling
    /// and tip pose from nominal forward kinematics.
    OpenLoop,
    /// Joint encoders fused with motor velocity, tip pose from the tracker.
    ClosedLoop,
}

impl TrackingMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::OpenLoop => "open_loop",
            Self::ClosedLoop => "closed_loop",
        }
    }
}

impl std::str::FromStr for TrackingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" | "open_loop" => Ok(Self::OpenLoop),
            "closed" | "closed_loop" => Ok(Self::ClosedLoop),
            other => Err(Error::InvalidParameter(format!("unknown tracking mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub cone_half_angle_deg: f64,
    pub cone_period: f64,
    pub cone_samples: usize,
    pub revolutions: usize,
    /// Distance from the tool tip back along the needle axis to the apex, m.
    pub cone_standoff: f64,
    /// Time given to reach the first cone pose before recording starts, s.
    pub approach_time: f64,
    /// Constant force on the tool tip during tracking, N (base frame).
    pub tip_load: [f64; 3],
    pub transient_fraction: f64,
    /// Tracking aborts when the position error exceeds this, m.
    pub divergence_limit: f64,
    pub calibration_duration: f64,
    pub calibration_samples: usize,
    pub calibration_amplitude_revolute: f64,
    pub calibration_amplitude_prismatic: f64,
    /// Dwell at each registration pose before sampling, s.
    pub registration_settle: f64,
    /// Tracker readings averaged per registration pose.
    pub registration_average: usize,
    pub insertion: InsertionConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            cone_half_angle_deg: 15.0,
            cone_period: 20.0,
            cone_samples: 360,
            revolutions: 2,
            cone_standoff: 0.02,
            approach_time: 2.0,
            tip_load: [0.0, -2.5, 0.0],
            transient_fraction: 0.1,
            divergence_limit: 0.05,
            calibration_duration: 10.0,
            calibration_samples: 2000,
            calibration_amplitude_revolute: 0.3,
            calibration_amplitude_prismatic: 0.015,
            registration_settle: 0.5,
            registration_average: 20,
            insertion: InsertionConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        let half = self.cone_half_angle_deg.to_radians();
        if !(half > 0.0 && half < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParameter("cone half-angle must lie in (0°, 90°)".into()));
        }
        if self.cone_samples < 8 || self.revolutions == 0 || self.registration_average == 0 {
            return Err(Error::InvalidParameter(
                "cone needs at least 8 samples and one revolution; registration at least one reading".into(),
            ));
        }
        if self.calibration_samples < crate::DOF {
            return Err(Error::InvalidParameter("calibration needs at least 8 samples".into()));
        }
        let positive = [
            self.cone_period,
            self.cone_standoff,
            self.divergence_limit,
            self.calibration_duration,
            self.calibration_amplitude_revolute,
            self.calibration_amplitude_prismatic,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite()))
            || !(self.approach_time >= 0.0 && self.registration_settle >= 0.0)
            || !(0.0..1.0).contains(&self.transient_fraction)
            || self.tip_load.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter("harness timing and geometry must be positive and finite".into()));
        }
        self.insertion.validate()
    }

    pub fn tip_load(&self) -> Vector3<f64> {
        Vector3::from(self.tip_load)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSample {
    pub time: f64,
    pub target: Pose,
    /// Tip pose the controller acted on: tracker reading in the base frame
    /// (closed loop) or the forward-kinematics prediction (open loop).
    pub measured: Pose,
    /// Noise-free tip pose seen through the registration, used for scoring.
    pub actual: Pose,
    pub e_pos: Vector3<f64>,
    pub position_error: f64,
    pub orientation_error: f64,
    pub joints: JointVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRecord {
    pub mode: TrackingMode,
    pub seed: u64,
    pub samples: Vec<TrackingSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub mode: TrackingMode,
    pub mean_position_mm: f64,
    pub max_position_mm: f64,
    pub mean_orientation_deg: f64,
    pub max_orientation_deg: f64,
    /// Samples in the steady-state window.
    pub window: usize,
}

/// Mean and max errors over the steady-state window (the first
/// `transient_fraction` of samples is dropped).
pub fn summarize(record: &TrackingRecord, transient_fraction: f64) -> Result<TrackingSummary> {
    let n = record.samples.len();
    let skip = (n as f64 * transient_fraction).floor() as usize;
    let window = &record.samples[skip.min(n)..];
    if window.is_empty() {
        return Err(Error::EmptyRecord { len: n });
    }
    let m = window.len() as f64;
    let pos = window.iter().map(|s| s.position_error * 1e3);
    let ori = window.iter().map(|s| s.orientation_error.to_degrees());
    Ok(TrackingSummary {
        mode: record.mode,
        mean_position_mm: pos.clone().sum::<f64>() / m,
        max_position_mm: pos.fold(0.0, f64::max),
        mean_orientation_deg: ori.clone().sum::<f64>() / m,
        max_orientation_deg: ori.fold(0.0, f64::max),
        window: window.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(errors_mm: &[f64]) -> TrackingRecord {
        let samples = errors_mm
            .iter()
            .enumerate()
            .map(|(i, e)| TrackingSample {
                time: i as f64 * 0.01,
                target: Pose::identity(),
                measured: Pose::identity(),
                actual: Pose::identity(),
                e_pos: Vector3::new(e * 1e-3, 0.0, 0.0),
                position_error: e * 1e-3,
                orientation_error: 0.0,
                joints: JointVector::zeros(),
            })
            .collect();
        TrackingRecord {
            mode: TrackingMode::ClosedLoop,
            seed: 0,
            samples,
        }
    }

    #[test]
    fn constant_error() {
        let s = summarize(&record(&[1.0; 50]), 0.1).unwrap();
        assert!((s.mean_position_mm - 1.0).abs() < 1e-12);
        assert!((s.max_position_mm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_samples() {
        let s = summarize(&record(&[1.0, 3.0]), 0.1).unwrap();
        assert!((s.mean_position_mm - 2.0).abs() < 1e-12);
        assert!((s.max_position_mm - 3.0).abs() < 1e-12);
    }

    #[test]
    fn transient_is_dropped() {
        let mut e = vec![100.0; 10];
        e.extend([1.0; 90]);
        let s = summarize(&record(&e), 0.1).unwrap();
        assert_eq!(s.window, 90);
        assert!((s.max_position_mm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_window_is_an_error() {
        assert!(matches!(summarize(&record(&[]), 0.1), Err(Error::EmptyRecord { len: 0 })));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("open".parse::<TrackingMode>().unwrap(), TrackingMode::OpenLoop);
        assert_eq!("closed_loop".parse::<TrackingMode>().unwrap(), TrackingMode::ClosedLoop);
        assert!("half".parse::<TrackingMode>().is_err());
    }
}
