use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid transform: rotation followed by translation.
///
/// `a.compose(&b)` (or `a * b`) maps points from `b`'s child frame into `a`'s
/// parent frame, the usual homogeneous-matrix product order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        Self::new(*rotation.matrix(), translation)
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self::new(*q.to_rotation_matrix().matrix(), translation)
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    /// Quaternion as `[w, x, y, z]`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn from_quaternion_wxyz(q: [f64; 4], translation: Vector3<f64>) -> Self {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
        Self::from_quaternion(&q, translation)
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn x_axis(&self) -> Vector3<f64> {
        self.rotation.column(0).into_owned()
    }

    pub fn y_axis(&self) -> Vector3<f64> {
        self.rotation.column(1).into_owned()
    }

    /// Tool axis; for the end-effector frame this is the needle direction.
    pub fn z_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix4(m: &Matrix4<f64>) -> Pose {
        Pose::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    /// Orthonormal, right-handed and finite within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.rotation.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
            && self.orthonormality_error() < tol
            && (self.rotation.determinant() - 1.0).abs() < tol
    }

    /// Rotation angle between the two orientations, radians in `[0, π]`.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        // atan2 keeps full precision near 0 and π, where acos of the trace does not
        let rel = self.rotation.transpose() * other.rotation;
        let axial = Vector3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)]);
        (0.5 * axial.norm()).atan2(0.5 * (rel.trace() - 1.0))
    }

    /// Apply a small rotation `delta` (axis × angle, expressed in the parent frame).
    pub fn perturbed(&self, delta_rotation: &Vector3<f64>, delta_translation: &Vector3<f64>) -> Pose {
        let r = Rotation3::new(*delta_rotation);
        Pose::new(r.matrix() * self.rotation, self.translation + delta_translation)
    }

    /// Interpolate between two poses: linear in translation, slerp in rotation.
    pub fn interpolate(&self, other: &Pose, t: f64) -> Pose {
        let qa = self.quaternion();
        let qb = other.quaternion();
        let q = qa.slerp(&qb, t);
        Pose::from_quaternion(&q, self.translation.lerp(&other.translation, t))
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

/// Wrap an angle into `(−π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn inverse_composes_to_identity() {
        let p = Pose::from_axis_angle(&Vector3::new(1.0, 2.0, -0.5), 0.7, Vector3::new(0.1, -0.2, 0.3));
        let id = p.compose(&p.inverse());
        assert!((id.rotation - Matrix3::identity()).norm() < 1e-14);
        assert!(id.translation.norm() < 1e-15);
    }

    #[test]
    fn matrix4_round_trip() {
        let p = Pose::from_axis_angle(&Vector3::z(), PI / 6.0, Vector3::new(0.1, 0.2, 0.3));
        let back = Pose::from_matrix4(&p.to_matrix4());
        assert_eq!(p, back);
    }

    #[test]
    fn quaternion_round_trip() {
        let p = Pose::from_axis_angle(&Vector3::new(0.3, -1.0, 0.2), 2.1, Vector3::new(1.0, 2.0, 3.0));
        let back = Pose::from_quaternion_wxyz(p.quaternion_wxyz(), p.translation);
        assert!((p.rotation - back.rotation).norm() < 1e-14);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn interpolate_midpoint() {
        let a = Pose::identity();
        let b = Pose::from_axis_angle(&Vector3::z(), 0.4, Vector3::new(0.2, 0.0, 0.0));
        let m = a.interpolate(&b, 0.5);
        assert!((a.rotation_angle_to(&m) - 0.2).abs() < 1e-12);
        assert!((m.translation.x - 0.1).abs() < 1e-15);
    }
}
