use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::pose::Pose;
use crate::{Error, Result};

/// Target poses whose needle axes sweep a cone about a fixed apex, the
/// virtual remote centre of motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeTrajectory {
    pub apex: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub half_angle: f64,
    pub standoff: f64,
    pub period: f64,
    pub samples: Vec<Pose>,
}

/// Frame with z along `axis` and x along the world axis least aligned with it.
fn frame_about(axis: &Vector3<f64>) -> Matrix3<f64> {
    let abs = axis.abs();
    let pick = if abs.x <= abs.y && abs.x <= abs.z {
        Vector3::x()
    } else if abs.y <= abs.z {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let u = (pick - axis * axis.dot(&pick)).normalize();
    let v = axis.cross(&u);
    Matrix3::from_columns(&[u, v, *axis])
}

/// `n` poses evenly spaced in azimuth. Each pose's z-axis is tilted
/// `half_angle` from `axis` and its origin sits `standoff` behind the apex
/// along its own z-axis, so every needle line passes through the apex.
pub fn generate_cone(
    apex: Vector3<f64>,
    axis: Vector3<f64>,
    half_angle: f64,
    standoff: f64,
    n: usize,
    period: f64,
) -> Result<ConeTrajectory> {
    if n < 8 {
        return Err(Error::InvalidParameter(format!("cone needs at least 8 samples, got {n}")));
    }
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&half_angle) {
        return Err(Error::InvalidParameter("cone half-angle must lie in [0, π/2)".into()));
    }
    if !(standoff >= 0.0 && period > 0.0) || apex.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("cone standoff, period and apex must be finite".into()));
    }
    let norm = axis.norm();
    if !(norm > 1e-12 && norm.is_finite()) {
        return Err(Error::DegenerateGeometry("cone axis has zero length".into()));
    }
    let axis = axis / norm;
    let base = frame_about(&axis);
    let (u, v) = (base.column(0).into_owned(), base.column(1).into_owned());
    let samples = (0..n)
        .map(|k| {
            let phi = std::f64::consts::TAU * k as f64 / n as f64;
            let dir = axis * half_angle.cos() + (u * phi.cos() + v * phi.sin()) * half_angle.sin();
            let tilt = Rotation3::rotation_between(&axis, &dir).unwrap_or_else(Rotation3::identity);
            Pose::new(tilt.matrix() * base, apex - dir * standoff)
        })
        .collect();
    Ok(ConeTrajectory {
        apex,
        axis,
        half_angle,
        standoff,
        period,
        samples,
    })
}

impl ConeTrajectory {
    /// Target at time `t`, interpolated between neighbouring samples and
    /// repeating every period.
    pub fn pose_at(&self, t: f64) -> Pose {
        let n = self.samples.len();
        let phase = (t / self.period).rem_euclid(1.0) * n as f64;
        let k = (phase.floor() as usize).min(n - 1);
        let frac = phase - k as f64;
        self.samples[k].interpolate(&self.samples[(k + 1) % n], frac)
    }

    /// Distance from the apex to the needle line of `pose`.
    pub fn apex_distance(&self, pose: &Pose) -> f64 {
        let z = pose.z_axis();
        let r = self.apex - pose.translation;
        (r - z * r.dot(&z)).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_azimuths_about_z() {
        let c = generate_cone(Vector3::zeros(), Vector3::z(), 15f64.to_radians(), 0.05, 8, 1.0).unwrap();
        let h = 15f64.to_radians();
        for (k, p) in c.samples.iter().enumerate().step_by(2) {
            let phi = std::f64::consts::FRAC_PI_4 * k as f64;
            let expected = Vector3::new(h.sin() * phi.cos(), h.sin() * phi.sin(), h.cos());
            assert!((p.z_axis() - expected).norm() < 1e-12);
            assert!((p.z_axis().dot(&Vector3::z()).acos() - h).abs() < 1e-9);
            assert!(c.apex_distance(p) < 1e-12);
            assert!(p.is_valid(1e-12));
        }
    }

    #[test]
    fn zero_half_angle_collapses() {
        let c = generate_cone(Vector3::new(0.1, 0.0, 0.0), Vector3::x(), 0.0, 0.02, 12, 1.0).unwrap();
        for p in &c.samples {
            assert!((p.z_axis() - Vector3::x()).norm() < 1e-12);
            assert!((p.translation - c.samples[0].translation).norm() < 1e-15);
        }
    }

    #[test]
    fn rejects_degenerate_axis() {
        assert!(matches!(
            generate_cone(Vector3::zeros(), Vector3::zeros(), 0.2, 0.02, 12, 1.0),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(generate_cone(Vector3::zeros(), Vector3::z(), 0.2, 0.02, 4, 1.0).is_err());
    }

    #[test]
    fn pose_at_wraps_and_interpolates() {
        let c = generate_cone(Vector3::zeros(), Vector3::z(), 0.3, 0.02, 8, 2.0).unwrap();
        assert!((c.pose_at(0.0).translation - c.samples[0].translation).norm() < 1e-15);
        assert!((c.pose_at(2.0).translation - c.samples[0].translation).norm() < 1e-12);
        assert!((c.pose_at(0.25).translation - c.samples[1].translation).norm() < 1e-12);
        let mid = c.pose_at(0.125);
        assert!(c.apex_distance(&mid) < 1e-3);
    }
}
