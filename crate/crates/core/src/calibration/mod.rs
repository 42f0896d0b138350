//! Rigid transforms, camera models and the per-image extrinsics chain.

mod camera;
mod file;
mod transform;

use std::path::PathBuf;

pub use camera::{project, CameraIntrinsics, CameraView, Projection};
pub use file::{CalibrationSet, Convention};
pub use transform::{compose, compute_extrinsics, invert, HomogeneousTransform, ROTATION_TOLERANCE};

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("rotation is not orthonormal (max |RᵀR − I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("rotation determinant is {0}, expected +1")]
    NotProperRotation(f64),
    #[error("bottom row of a homogeneous transform must be (0, 0, 0, 1)")]
    BadBottomRow,
    #[error("non-finite value in calibration data")]
    NonFinite,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("silhouette for camera {camera} pose {pose} is {found:?}, intrinsics say {expected:?}")]
    DimensionMismatch {
        camera: u32,
        pose: u32,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("calibration parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("calibration block '{0}' is missing")]
    MissingBlock(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
