use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use super::CalibrationError;

/// Tolerance used when validating that a rotation block is orthonormal.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Rigid transform stored as rotation + translation (mm).
///
/// The implied 4×4 matrix is `[R t; 0 0 0 1]`. Keeping the two parts separate
/// means the inverse is always the exact rigid inverse `(Rᵀ, −Rᵀt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for HomogeneousTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl HomogeneousTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    /// Builds a transform, checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, CalibrationError> {
        let gram = rotation.transpose() * rotation;
        let ortho_err = (gram - Matrix3::identity()).amax();
        if ortho_err > ROTATION_TOLERANCE {
            return Err(CalibrationError::NotOrthonormal(ortho_err));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(CalibrationError::NotProperRotation(det));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(CalibrationError::NonFinite);
        }
        Ok(Self { rotation, translation })
    }

    /// Rotation about a unit `axis` by `angle` radians followed by a translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self {
            rotation: *rot.matrix(),
            translation,
        }
    }

    /// Accepts a full 4×4 matrix; the bottom row must be `(0, 0, 0, 1)`.
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self, CalibrationError> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)] - 1.0];
        if bottom.iter().any(|v| v.abs() > ROTATION_TOLERANCE) {
            return Err(CalibrationError::BadBottomRow);
        }
        let rotation = m.fixed_view::<3, 3>(0, 0).into_owned();
        let translation = m.fixed_view::<3, 1>(0, 3).into_owned();
        Self::new(rotation, translation)
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Returns `self · other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &HomogeneousTransform) -> HomogeneousTransform {
        HomogeneousTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> HomogeneousTransform {
        let rt = self.rotation.transpose();
        HomogeneousTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Largest entrywise difference between the 4×4 forms of two transforms.
    pub fn max_abs_diff(&self, other: &HomogeneousTransform) -> f64 {
        (self.to_matrix() - other.to_matrix()).amax()
    }
}

/// Free-function form of [`HomogeneousTransform::compose`].
pub fn compose(t1: &HomogeneousTransform, t2: &HomogeneousTransform) -> HomogeneousTransform {
    t1.compose(t2)
}

pub fn invert(t: &HomogeneousTransform) -> HomogeneousTransform {
    t.invert()
}

/// World→camera transform for one image: `A = Z · B · X⁻¹`.
///
/// `x` maps robot-base coordinates into the world frame, `b` maps base
/// coordinates into the hand frame and `z` maps hand coordinates into the
/// camera frame.
pub fn compute_extrinsics(
    z: &HomogeneousTransform,
    b: &HomogeneousTransform,
    x: &HomogeneousTransform,
) -> HomogeneousTransform {
    z.compose(b).compose(&x.invert())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn translations_add() {
        let a = HomogeneousTransform::from_translation(1.0, 2.0, 3.0);
        let b = HomogeneousTransform::from_translation(4.0, 5.0, 6.0);
        let c = compose(&a, &b);
        assert_eq!(*c.translation(), Vector3::new(5.0, 7.0, 9.0));
        assert_eq!(*c.rotation(), Matrix3::identity());
    }

    #[test]
    fn identity_is_neutral() {
        let id = HomogeneousTransform::identity();
        assert_eq!(compose(&id, &id), id);
        assert_eq!(invert(&id), id);
    }

    #[test]
    fn translation_inverse_negates() {
        let t = HomogeneousTransform::from_translation(1.0, 0.0, 0.0);
        assert_eq!(*invert(&t).translation(), Vector3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn extrinsics_cancel() {
        let id = HomogeneousTransform::identity();
        let b = HomogeneousTransform::from_translation(0.0, 0.0, 100.0);
        let x = HomogeneousTransform::from_translation(0.0, 0.0, 100.0);
        assert!(compute_extrinsics(&id, &b, &x).max_abs_diff(&id) < 1e-12);
        assert_eq!(compute_extrinsics(&id, &id, &id), id);
    }

    #[test]
    fn rejects_reflection_and_shear() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = -1.0;
        assert!(matches!(
            HomogeneousTransform::new(r, Vector3::zeros()),
            Err(CalibrationError::NotProperRotation(_))
        ));
        let mut s = Matrix3::identity();
        s[(0, 1)] = 0.1;
        assert!(matches!(
            HomogeneousTransform::new(s, Vector3::zeros()),
            Err(CalibrationError::NotOrthonormal(_))
        ));
    }

    #[test]
    fn from_matrix_checks_bottom_row() {
        let mut m = Matrix4::identity();
        m[(3, 0)] = 0.5;
        assert!(matches!(
            HomogeneousTransform::from_matrix(&m),
            Err(CalibrationError::BadBottomRow)
        ));
    }
}
