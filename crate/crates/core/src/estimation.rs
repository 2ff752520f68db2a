//! Joint-state fusion and tracker registration.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::pose::Pose;
use crate::transmission::CouplingMatrix;
use crate::{Error, JointVector, MotorVector, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    alpha: f64,
    dt: f64,
}

impl Default for FilterConfig {
    /// α = 0.95 at 1 kHz, a changeover near 8 Hz.
    fn default() -> Self {
        Self {
            alpha: 0.95,
            dt: 1e-3,
        }
    }
}

impl FilterConfig {
    pub fn new(alpha: f64, dt: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("filter alpha {alpha} outside [0, 1]")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("filter dt {dt} must be positive")));
        }
        Ok(Self { alpha, dt })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Crossover frequency in Hz implied by `alpha` and `dt`.
    pub fn changeover_hz(&self) -> f64 {
        (1.0 - self.alpha) / (2.0 * std::f64::consts::PI * self.alpha * self.dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointEstimate {
    pub q: JointVector,
    pub timestamp: f64,
}

impl JointEstimate {
    pub fn new(q: JointVector, timestamp: f64) -> Self {
        Self { q, timestamp }
    }
}

/// One complementary-filter update: motor velocity mapped through the
/// coupling matrix is integrated onto the previous estimate and blended with
/// the joint-encoder reading.
pub fn complementary_filter_step(
    prev: &JointEstimate,
    motor_vel: &MotorVector,
    q_meas: &JointVector,
    coupling: &CouplingMatrix,
    cfg: &FilterConfig,
) -> JointEstimate {
    let predicted = prev.q + coupling.motors_to_joints(motor_vel) * cfg.dt;
    JointEstimate {
        q: predicted * cfg.alpha + q_meas * (1.0 - cfg.alpha),
        timestamp: prev.timestamp + cfg.dt,
    }
}

/// Stateful wrapper owned by the estimation loop.
#[derive(Debug, Clone)]
pub struct ComplementaryFilter {
    cfg: FilterConfig,
    estimate: JointEstimate,
}

impl ComplementaryFilter {
    pub fn new(cfg: FilterConfig, initial: JointEstimate) -> Self {
        Self {
            cfg,
            estimate: initial,
        }
    }

    pub fn update(&mut self, motor_vel: &MotorVector, q_meas: &JointVector, coupling: &CouplingMatrix) -> JointEstimate {
        self.estimate = complementary_filter_step(&self.estimate, motor_vel, q_meas, coupling, &self.cfg);
        self.estimate
    }

    pub fn estimate(&self) -> &JointEstimate {
        &self.estimate
    }

    pub fn reset(&mut self, estimate: JointEstimate) {
        self.estimate = estimate;
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }
}

/// Rigid transform from tracker coordinates into the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    pub base_from_tracker: Pose,
    pub rms_residual: f64,
}

impl Registration {
    pub fn identity() -> Self {
        Self {
            base_from_tracker: Pose::identity(),
            rms_residual: 0.0,
        }
    }

    pub fn to_toml(&self) -> String {
        let file = RegistrationFile {
            quaternion_wxyz: self.base_from_tracker.quaternion_wxyz(),
            translation: self.base_from_tracker.translation.into(),
            rms_residual: self.rms_residual,
        };
        toml::to_string(&file).expect("registration is always serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: RegistrationFile = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        let q = file.quaternion_wxyz;
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) || file.rms_residual < 0.0 {
            return Err(Error::InvalidParameter("registration quaternion or residual invalid".into()));
        }
        Ok(Self {
            base_from_tracker: Pose::from_quaternion_wxyz(q, file.translation.into()),
            rms_residual: file.rms_residual,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::format(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct RegistrationFile {
    quaternion_wxyz: [f64; 4],
    translation: [f64; 3],
    rms_residual: f64,
}

/// Relative singular-value floor below which a point set counts as collinear.
const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// Least-squares rigid transform taking tracker points onto base points
/// (orthogonal Procrustes with reflection correction).
///
/// `pairs` holds `(tracker_point, base_point)`.
pub fn register_tracker(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Result<Registration> {
    if pairs.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "registration needs at least 3 point pairs, got {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|(a, b)| !(a.iter().chain(b.iter()).all(|v| v.is_finite()))) {
        return Err(Error::NonFinite("registration points"));
    }
    let n = pairs.len() as f64;
    let tracker_mean = pairs.iter().map(|p| p.0).sum::<Vector3<f64>>() / n;
    let base_mean = pairs.iter().map(|p| p.1).sum::<Vector3<f64>>() / n;

    let mut cross = Matrix3::zeros();
    let mut tracker_spread = Matrix3::zeros();
    let mut base_spread = Matrix3::zeros();
    for (t, b) in pairs {
        let tc = t - tracker_mean;
        let bc = b - base_mean;
        cross += bc * tc.transpose();
        tracker_spread += tc * tc.transpose();
        base_spread += bc * bc.transpose();
    }
    for spread in [&tracker_spread, &base_spread] {
        let sv = spread.symmetric_eigenvalues();
        let mut sorted: Vec<f64> = sv.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        if sorted[2] <= 0.0 || sorted[1] <= DEGENERACY_TOLERANCE * sorted[2] {
            return Err(Error::DegenerateGeometry("registration points are collinear or coincident".into()));
        }
    }

    let svd = cross.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let sign = (u * v_t).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    let rotation = u * correction * v_t;
    let translation = base_mean - rotation * tracker_mean;
    let base_from_tracker = Pose::new(rotation, translation);

    let sq: f64 = pairs
        .iter()
        .map(|(t, b)| (b - base_from_tracker.transform_point(t)).norm_squared())
        .sum();
    Ok(Registration {
        base_from_tracker,
        rms_residual: (sq / n).sqrt(),
    })
}

/// Tracker reading expressed in the robot base frame.
pub fn tip_in_base(reg: &Registration, tracker_pose: &Pose) -> Pose {
    reg.base_from_tracker.compose(tracker_pose)
}
