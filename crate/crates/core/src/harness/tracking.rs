use super::rig::{calibrate_on_plant, register_on_plant, Rig, SetupReport};
use super::{generate_cone, ConeTrajectory, HarnessConfig, TrackingMode, TrackingRecord, TrackingSample};
use crate::control::{ee_pose_error, ControlConfig};
use crate::kinematics::KinematicChain;
use crate::plant::{Plant, PlantConfig};
use crate::transmission::CouplingMatrix;
use crate::{Error, JointVector, Result};

/// Starting configuration for every experiment: base centred, wrist
/// straight, insertion axis 10 mm out.
pub fn home_configuration() -> JointVector {
    let mut q = JointVector::zeros();
    q[7] = 0.01;
    q
}

/// Cone about the home needle axis, with its apex one standoff ahead of the
/// home tip.
pub fn default_cone(cfg: &HarnessConfig) -> Result<ConeTrajectory> {
    let home = KinematicChain::crane().forward_kinematics(home_configuration().as_slice())?;
    let axis = home.z_axis();
    generate_cone(
        home.translation + axis * cfg.cone_standoff,
        axis,
        cfg.cone_half_angle_deg.to_radians(),
        cfg.cone_standoff,
        cfg.cone_samples,
        cfg.cone_period,
    )
}

/// Build the as-manufactured robot for `seed`, calibrate its coupling and
/// register the tracker, leaving it at rest at home.
pub fn prepare_plant(
    plant_cfg: &PlantConfig,
    control: &ControlConfig,
    cfg: &HarnessConfig,
    seed: u64,
) -> Result<(Plant, SetupReport)> {
    cfg.validate()?;
    let home = home_configuration();
    let mut plant = Plant::new(plant_cfg.clone(), seed)?;
    plant.place_at(&home)?;
    let coupling = calibrate_on_plant(&mut plant, cfg, &home)?;
    let (plant, registration) = register_on_plant(plant, *control, &coupling, cfg, &home)?;
    Ok((plant, SetupReport { coupling, registration }))
}

/// Run the cone experiment in the given mode and record every end-effector
/// loop period over the configured number of revolutions.
pub fn run_tracking(
    mode: TrackingMode,
    traj: &ConeTrajectory,
    plant_cfg: &PlantConfig,
    control: &ControlConfig,
    cfg: &HarnessConfig,
    seed: u64,
) -> Result<TrackingRecord> {
    let (plant, setup) = prepare_plant(plant_cfg, control, cfg, seed)?;
    let coupling = match mode {
        TrackingMode::ClosedLoop => setup.coupling,
        TrackingMode::OpenLoop => CouplingMatrix::crane_nominal(),
    };
    let mut rig = Rig::new(plant, *control, mode, coupling, setup.registration)?;
    rig.set_tip_force(cfg.tip_load());

    let dt = rig.dt();
    let approach = (cfg.approach_time / dt).round() as usize;
    let start = traj.pose_at(0.0);
    for k in 0..approach {
        rig.tick(Some(&start))?;
        check_divergence(&rig, &start, k as f64 * dt - cfg.approach_time, cfg.divergence_limit)?;
    }

    let steps = (cfg.revolutions as f64 * traj.period / dt).round() as usize;
    let mut samples = Vec::with_capacity(steps / control.ee_decimation() + 1);
    for k in 0..steps {
        let t = k as f64 * dt;
        let target = traj.pose_at(t);
        let actual = rig.ee_due().then(|| rig.actual_tip());
        rig.tick(Some(&target))?;
        if let Some(actual) = actual {
            let err = ee_pose_error(&target, &actual);
            let sample = TrackingSample {
                time: t,
                target,
                measured: *rig.measured_tip(),
                actual,
                e_pos: err.e_pos,
                position_error: err.position_norm(),
                orientation_error: err.orientation_norm(),
                joints: *rig.joint_estimate(),
            };
            if !(sample.position_error <= cfg.divergence_limit) {
                return Err(Error::Divergence {
                    time: t,
                    error_mm: sample.position_error * 1e3,
                });
            }
            samples.push(sample);
        }
    }
    Ok(TrackingRecord { mode, seed, samples })
}

fn check_divergence(rig: &Rig, target: &crate::Pose, time: f64, limit: f64) -> Result<()> {
    let error = (target.translation - rig.actual_tip().translation).norm();
    if error > limit || !error.is_finite() {
        return Err(Error::Divergence {
            time,
            error_mm: error * 1e3,
        });
    }
    Ok(())
}
