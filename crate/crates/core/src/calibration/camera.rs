use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{CalibrationError, HomogeneousTransform};
use crate::segmentation::SilhouetteMap;

/// Pinhole intrinsics with two radial distortion terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        k1: f64,
        k2: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, CalibrationError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            k1,
            k2,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Distortion-free intrinsics with the principal point at the image center.
    pub fn ideal(focal: f64, width: u32, height: u32) -> Self {
        Self {
            fx: focal,
            fy: focal,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            k1: 0.0,
            k2: 0.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.k1, self.k2]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(CalibrationError::NonFinite);
        }
        if self.width == 0 || self.height == 0 {
            return Err(CalibrationError::InvalidIntrinsics("image dimensions must be positive".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(CalibrationError::InvalidIntrinsics("focal lengths must be positive".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(CalibrationError::InvalidIntrinsics(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(())
    }

    pub fn has_distortion(&self) -> bool {
        self.k1 != 0.0 || self.k2 != 0.0
    }

    /// Radial scale factor `1 + k1 r² + k2 r⁴` for a normalized radius².
    #[inline]
    pub fn distortion_scale(&self, r2: f64) -> f64 {
        1.0 + self.k1 * r2 + self.k2 * r2 * r2
    }

    /// Maps a camera-frame point to pixel coordinates. `None` when the point
    /// is not strictly in front of the camera.
    #[inline]
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        let x = p.x / p.z;
        let y = p.y / p.z;
        let s = self.distortion_scale(x * x + y * y);
        Some((self.fx * x * s + self.cx, self.fy * y * s + self.cy))
    }

    /// Inverse of the projection: normalized (z = 1) camera ray for a pixel.
    /// Radial distortion is removed by fixed-point iteration.
    pub fn unproject(&self, u: f64, v: f64) -> Vector3<f64> {
        let xd = (u - self.cx) / self.fx;
        let yd = (v - self.cy) / self.fy;
        if !self.has_distortion() {
            return Vector3::new(xd, yd, 1.0);
        }
        let (mut x, mut y) = (xd, yd);
        for _ in 0..50 {
            let s = self.distortion_scale(x * x + y * y);
            let (nx, ny) = (xd / s, yd / s);
            let done = (nx - x).abs() < 1e-14 && (ny - y).abs() < 1e-14;
            x = nx;
            y = ny;
            if done {
                break;
            }
        }
        Vector3::new(x, y, 1.0)
    }

    /// Nearest pixel for a continuous image coordinate, if it falls inside the image.
    /// Pixel `(i, j)` covers `[i − 0.5, i + 0.5) × [j − 0.5, j + 0.5)`.
    #[inline]
    pub fn pixel_at(&self, u: f64, v: f64) -> Option<(u32, u32)> {
        let i = (u + 0.5).floor();
        let j = (v + 0.5).floor();
        if i < 0.0 || j < 0.0 || i >= self.width as f64 || j >= self.height as f64 {
            return None;
        }
        Some((i as u32, j as u32))
    }
}

/// Result of projecting a world point into one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    /// True iff the camera-frame depth is positive. `u`/`v` are NaN otherwise.
    pub in_front: bool,
}

/// One calibrated image: camera `c`, pose `j`, its world→camera transform and
/// the silhouette probability map observed in it.
#[derive(Debug, Clone)]
pub struct CameraView {
    pub camera_id: u32,
    pub pose_index: u32,
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: HomogeneousTransform,
    pub silhouette: SilhouetteMap,
}

impl CameraView {
    pub fn new(
        camera_id: u32,
        pose_index: u32,
        intrinsics: CameraIntrinsics,
        extrinsics: HomogeneousTransform,
        silhouette: SilhouetteMap,
    ) -> Result<Self, CalibrationError> {
        intrinsics.validate()?;
        if silhouette.width() != intrinsics.width || silhouette.height() != intrinsics.height {
            return Err(CalibrationError::DimensionMismatch {
                camera: camera_id,
                pose: pose_index,
                expected: (intrinsics.width, intrinsics.height),
                found: (silhouette.width(), silhouette.height()),
            });
        }
        Ok(Self {
            camera_id,
            pose_index,
            intrinsics,
            extrinsics,
            silhouette,
        })
    }

    pub fn project(&self, world_point: &Vector3<f64>) -> Projection {
        let p = self.extrinsics.apply(world_point);
        match self.intrinsics.project_camera_point(&p) {
            Some((u, v)) => Projection { u, v, in_front: true },
            None => Projection {
                u: f64::NAN,
                v: f64::NAN,
                in_front: false,
            },
        }
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.extrinsics.invert().apply(&Vector3::zeros())
    }

    /// Silhouette probability at the pixel a world point lands on, or `None`
    /// when the point is behind the camera or outside the image.
    #[inline]
    pub fn sample(&self, world_point: &Vector3<f64>) -> Option<f32> {
        let p = self.extrinsics.apply(world_point);
        let (u, v) = self.intrinsics.project_camera_point(&p)?;
        let (i, j) = self.intrinsics.pixel_at(u, v)?;
        Some(self.silhouette.get(i, j))
    }
}

/// Free-function form of [`CameraView::project`].
pub fn project(view: &CameraView, world_point: &Vector3<f64>) -> Projection {
    view.project(world_point)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view_with(k: CameraIntrinsics) -> CameraView {
        let sil = SilhouetteMap::filled(k.width, k.height, 0.0);
        CameraView::new(1, 0, k, HomogeneousTransform::identity(), sil).unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let view = view_with(CameraIntrinsics::new(1000.0, 1000.0, 320.0, 240.0, 0.0, 0.0, 640, 480).unwrap());
        let p = view.project(&Vector3::new(0.0, 0.0, 1000.0));
        assert!(p.in_front);
        assert_eq!((p.u, p.v), (320.0, 240.0));
    }

    #[test]
    fn similar_triangles() {
        let view = view_with(CameraIntrinsics::new(1000.0, 1000.0, 320.0, 240.0, 0.0, 0.0, 640, 480).unwrap());
        let p = view.project(&Vector3::new(100.0, 0.0, 1000.0));
        assert!((p.u - 420.0).abs() < 1e-12);
        assert!((p.v - 240.0).abs() < 1e-12);
    }

    #[test]
    fn radial_distortion_matches_scalar_formula() {
        let k = CameraIntrinsics::new(800.0, 810.0, 320.0, 240.0, 0.1, 0.0, 640, 480).unwrap();
        let view = view_with(k);
        // normalized radius 0.5 along a diagonal
        let x = 0.5 / 2f64.sqrt();
        let y = 0.5 / 2f64.sqrt();
        let z = 700.0;
        let p = view.project(&Vector3::new(x * z, y * z, z));
        // step by step: r² = 0.25, scale = 1 + 0.1·0.25 = 1.025
        let scale = 1.025;
        let u = 800.0 * x * scale + 320.0;
        let v = 810.0 * y * scale + 240.0;
        assert!((p.u - u).abs() < 1e-9 && (p.v - v).abs() < 1e-9);
    }

    #[test]
    fn behind_camera_flagged() {
        let view = view_with(CameraIntrinsics::ideal(500.0, 64, 48));
        let p = view.project(&Vector3::new(0.0, 0.0, -10.0));
        assert!(!p.in_front);
        assert!(view.sample(&Vector3::new(0.0, 0.0, -10.0)).is_none());
    }

    #[test]
    fn unproject_inverts_distortion() {
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, -0.2, 0.05, 640, 480).unwrap();
        let p = Vector3::new(120.0, -80.0, 500.0);
        let (u, v) = k.project_camera_point(&p).unwrap();
        let ray = k.unproject(u, v);
        assert!((ray.x - p.x / p.z).abs() < 1e-10);
        assert!((ray.y - p.y / p.z).abs() < 1e-10);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 9.9, 0.0, 0.0, 0.0, 10, 10).is_ok());
    }

    #[test]
    fn view_rejects_mismatched_silhouette() {
        let k = CameraIntrinsics::ideal(500.0, 64, 48);
        let sil = SilhouetteMap::filled(32, 48, 0.0);
        assert!(matches!(
            CameraView::new(1, 3, k, HomogeneousTransform::identity(), sil),
            Err(CalibrationError::DimensionMismatch { .. })
        ));
    }
}
