use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::rig::Rig;
use super::tracking::{home_configuration, prepare_plant};
use super::{HarnessConfig, TrackingMode};
use crate::control::{ee_pose_error, ControlConfig};
use crate::kinematics::KinematicChain;
use crate::plant::PlantConfig;
use crate::{Error, Result};

/// Straight needle advance along the tool axis against a growing tissue
/// reaction, with the end-effector loop holding the needle direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InsertionConfig {
    /// Distance travelled along the needle axis, m.
    pub travel: f64,
    pub duration: f64,
    /// Axial reaction force reached at the end of the advance, N.
    pub max_force: f64,
    /// Time at the start pose before advancing, s.
    pub settle: f64,
    /// Time holding the end pose under full load, s.
    pub hold: f64,
}

impl Default for InsertionConfig {
    fn default() -> Self {
        Self {
            travel: 0.04,
            duration: 10.0,
            max_force: 10.0,
            settle: 2.0,
            hold: 1.0,
        }
    }
}

impl InsertionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.travel > 0.0
            && self.duration > 0.0
            && self.max_force >= 0.0
            && self.settle >= 0.0
            && self.hold >= 0.0
            && [self.travel, self.duration, self.max_force, self.settle, self.hold]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("insertion scenario parameters must be positive and finite".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsertionReport {
    /// Angle between the achieved tip displacement and the nominal needle axis, deg.
    pub displacement_angle_deg: f64,
    /// Largest needle-axis deviation from the nominal axis during the advance, deg.
    pub max_axis_angle_deg: f64,
    /// Achieved travel along any direction, m.
    pub travel: f64,
}

impl InsertionReport {
    /// The insertion-vector error: the worse of the two angular measures.
    pub fn error_deg(&self) -> f64 {
        self.displacement_angle_deg.max(self.max_axis_angle_deg)
    }
}

pub fn run_insertion_scenario(
    plant_cfg: &PlantConfig,
    control: &ControlConfig,
    cfg: &HarnessConfig,
    seed: u64,
) -> Result<InsertionReport> {
    let scenario = cfg.insertion;
    scenario.validate()?;
    let (plant, setup) = prepare_plant(plant_cfg, control, cfg, seed)?;
    let mut rig = Rig::new(plant, *control, TrackingMode::ClosedLoop, setup.coupling, setup.registration)?;
    let start = KinematicChain::crane().forward_kinematics(home_configuration().as_slice())?;
    let axis = start.z_axis();
    rig.run_for(scenario.settle, Some(&start))?;

    let begin = rig.actual_tip().translation;
    let dt = rig.dt();
    let steps = (scenario.duration / dt).round() as usize;
    let hold = (scenario.hold / dt).round() as usize;
    let mut max_axis: f64 = 0.0;
    for k in 1..=steps + hold {
        let s = (k as f64 / steps as f64).min(1.0);
        let mut target = start;
        target.translation += axis * (scenario.travel * s);
        rig.set_tip_force(-axis * (scenario.max_force * s));
        rig.tick(Some(&target))?;
        let actual = rig.actual_tip();
        max_axis = max_axis.max(ee_pose_error(&target, &actual).orientation_norm());
        let error = (target.translation - actual.translation).norm();
        if !(error <= cfg.divergence_limit) {
            return Err(Error::Divergence {
                time: k as f64 * dt,
                error_mm: error * 1e3,
            });
        }
    }
    let moved: Vector3<f64> = rig.actual_tip().translation - begin;
    let travel = moved.norm();
    let displacement_angle = (moved.dot(&axis) / travel).clamp(-1.0, 1.0).acos();
    Ok(InsertionReport {
        displacement_angle_deg: displacement_angle.to_degrees(),
        max_axis_angle_deg: max_axis.to_degrees(),
        travel,
    })
}
