use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use super::DataError;

/// Frobenius tolerance for the orthonormality and determinant checks.
pub const POSE_TOLERANCE: f64 = 1e-9;

/// Rigid transform `p' = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, DataError> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(DataError::InvalidPose("non-finite entry".into()));
        }
        let deviation = orthogonality_deviation(&rotation);
        let det = rotation.determinant();
        if deviation > POSE_TOLERANCE || (det - 1.0).abs() > POSE_TOLERANCE {
            return Err(DataError::InvalidPose(format!(
                "rotation deviates from SO(3): |RᵀR - I| = {deviation:e}, det = {det}"
            )));
        }
        Ok(Self { rotation, translation })
    }

    /// Projects `rotation` onto SO(3) before constructing the pose.
    pub fn from_projected(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, DataError> {
        let projected =
            project_to_rotation(&rotation).ok_or_else(|| DataError::InvalidPose("rotation SVD failed".into()))?;
        Self::new(projected, translation)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self {
            rotation: rotation.into_inner(),
            translation,
        }
    }

    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Self::from_axis_angle(Vector3::z(), yaw, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Re-projects the rotation onto SO(3). Idempotent up to rounding.
    pub fn reorthonormalized(&self) -> Pose {
        let rotation = project_to_rotation(&self.rotation).unwrap_or(self.rotation);
        Pose {
            rotation,
            translation: self.translation,
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Relative pose `[R_tᵀ R_{t+1} | R_tᵀ (τ_{t+1} − τ_t)]`, so that
/// `pose_t.compose(&relative_pose(pose_t, pose_t1)) == pose_t1`.
pub fn relative_pose(pose_t: &Pose, pose_t1: &Pose) -> Pose {
    let rt = pose_t.rotation.transpose();
    Pose {
        rotation: rt * pose_t1.rotation,
        translation: rt * (pose_t1.translation - pose_t.translation),
    }
}

/// `‖RᵀR − I‖_F`.
pub fn orthogonality_deviation(rotation: &Matrix3<f64>) -> f64 {
    (rotation.transpose() * rotation - Matrix3::identity()).norm()
}

/// Nearest rotation in Frobenius norm: `U diag(1, 1, det(UVᵀ)) Vᵀ`.
pub fn project_to_rotation(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let d = (u * v_t).determinant().signum();
    Some(u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t)
}
