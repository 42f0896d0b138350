use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SyntheticError;
use crate::calibration::{CalibrationSet, CameraIntrinsics, HomogeneousTransform};
use crate::grid::Aabb;

/// Named camera arrangements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RigPreset {
    /// 12 azimuths × 2 elevation rings, 640×480
    #[default]
    Desk,
    /// as `Desk` with radial distortion
    DeskDistorted,
    /// 28 azimuths × 2 elevation rings, 1900×1200
    Field,
}

impl FromStr for RigPreset {
    type Err = SyntheticError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Self::Desk),
            "desk-distorted" => Ok(Self::DeskDistorted),
            "field" => Ok(Self::Field),
            other => Err(SyntheticError::Rig(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigPose {
    pub pose_index: u32,
    pub camera_id: u32,
    /// world → camera
    pub extrinsics: HomogeneousTransform,
}

/// Virtual cameras on rings around a target box. Camera `c` (1-based) is
/// ring `c`; pose `j` is the azimuth index within the ring.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualRig {
    pub intrinsics: BTreeMap<u32, CameraIntrinsics>,
    pub poses: Vec<RigPose>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingSpec {
    pub azimuths: usize,
    /// degrees above the horizontal through the target center
    pub elevation: f64,
}

/// Orientation for a camera at `eye` looking at `target`, with the image
/// u axis pointing down the world z axis (portrait framing of a tall tree).
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>) -> HomogeneousTransform {
    let z = (target - eye).normalize();
    let up = Vector3::z();
    let mut x = -(up - z * up.dot(&z));
    if x.norm() < 1e-9 {
        x = Vector3::x() - z * z.x;
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let t = -(r * eye);
    HomogeneousTransform::new(r, t).expect("orthonormal by construction")
}

impl VirtualRig {
    /// Preset framed on the corners of `target`.
    pub fn preset(preset: RigPreset, target: &Aabb, seed: u64) -> Self {
        let corners: Vec<(Vector3<f64>, f64)> = target.corners().iter().map(|c| (*c, 0.0)).collect();
        Self::preset_framing(preset, target, &corners, seed)
    }

    /// Preset aimed at `target`, with each ring's focal length fitted so that
    /// every sphere `(center, radius)` in `framing` stays inside every image.
    pub fn preset_framing(preset: RigPreset, target: &Aabb, framing: &[(Vector3<f64>, f64)], seed: u64) -> Self {
        let (n, w, h) = match preset {
            RigPreset::Desk | RigPreset::DeskDistorted => (12, 640, 480),
            RigPreset::Field => (28, 1900, 1200),
        };
        let rings = [
            RingSpec {
                azimuths: n,
                elevation: 10.0,
            },
            RingSpec {
                azimuths: n,
                elevation: 45.0,
            },
        ];
        let mut rig = Self::rings(&rings, w, h, target, framing, seed);
        if preset == RigPreset::DeskDistorted {
            for k in rig.intrinsics.values_mut() {
                k.k1 = -0.08;
                k.k2 = 0.01;
            }
        }
        rig
    }

    /// Builds the rings around the center of `target` with seeded jitter:
    /// per-ring azimuth offset, per-pose elevation ±5° and distance ±10%.
    /// Each ring's focal length is the largest that keeps every framing
    /// sphere inside every image of the ring.
    pub fn rings(
        rings: &[RingSpec],
        width: u32,
        height: u32,
        target: &Aabb,
        framing: &[(Vector3<f64>, f64)],
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = Vector3::from(target.min).lerp(&Vector3::from(target.max), 0.5);
        let half_diag = 0.5 * (Vector3::from(target.max) - Vector3::from(target.min)).norm();
        let base_distance = 2.5 * half_diag;
        let mut intrinsics = BTreeMap::new();
        let mut poses = Vec::new();
        for (ri, ring) in rings.iter().enumerate() {
            let camera_id = ri as u32 + 1;
            let step = 2.0 * PI / ring.azimuths as f64;
            let offset = rng.gen_range(0.0..step);
            let mut ring_poses = Vec::with_capacity(ring.azimuths);
            for j in 0..ring.azimuths {
                let az = offset + step * j as f64;
                let el = (ring.elevation + rng.gen_range(-5.0..5.0)).to_radians();
                let d = base_distance * rng.gen_range(0.9..1.1);
                let eye = center + d * Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                ring_poses.push(RigPose {
                    pose_index: j as u32,
                    camera_id,
                    extrinsics: look_at(&eye, &center),
                });
            }
            let focal = fit_focal(&ring_poses, framing, width, height);
            intrinsics.insert(camera_id, CameraIntrinsics::ideal(focal, width, height));
            poses.extend(ring_poses);
        }
        Self { intrinsics, poses }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Calibration file contents reproducing this rig: random robot-world `X`
    /// and per-camera `Z`, with `B = Z⁻¹·A·X` so that `Z·B·X⁻¹ = A`.
    pub fn calibration(&self, seed: u64) -> CalibrationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ca11);
        let random_transform = |rng: &mut ChaCha8Rng| {
            let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let t = Vector3::new(
                rng.gen_range(-500.0..500.0),
                rng.gen_range(-500.0..500.0),
                rng.gen_range(-500.0..500.0),
            );
            HomogeneousTransform::from_axis_angle(axis, rng.gen_range(-PI..PI), t)
        };
        let x = random_transform(&mut rng);
        let z: BTreeMap<u32, HomogeneousTransform> =
            self.intrinsics.keys().map(|&c| (c, random_transform(&mut rng))).collect();
        let b = self
            .poses
            .iter()
            .map(|p| {
                let zc = &z[&p.camera_id];
                ((p.pose_index, p.camera_id), zc.invert().compose(&p.extrinsics).compose(&x))
            })
            .collect();
        CalibrationSet {
            x,
            z,
            b,
            intrinsics: self.intrinsics.clone(),
        }
    }
}

fn fit_focal(poses: &[RigPose], framing: &[(Vector3<f64>, f64)], width: u32, height: u32) -> f64 {
    let half_w = 0.95 * (width as f64 / 2.0 - 1.0);
    let half_h = 0.95 * (height as f64 / 2.0 - 1.0);
    let mut focal = f64::INFINITY;
    for p in poses {
        for (center, r) in framing {
            // (|x| + r) / (z − r) bounds the sphere's normalized extent
            let c = p.extrinsics.apply(center);
            let z = c.z - r;
            focal = focal.min(half_w * z / (c.x.abs() + r)).min(half_h * z / (c.y.abs() + r));
        }
    }
    focal
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target() -> Aabb {
        Aabb::new([-200.0, -200.0, 0.0], [200.0, 200.0, 800.0])
    }

    #[test]
    fn desk_rig_shape() {
        let rig = VirtualRig::preset(RigPreset::Desk, &target(), 1);
        assert_eq!(rig.len(), 24);
        assert_eq!(rig.intrinsics.len(), 2);
        for k in rig.intrinsics.values() {
            assert_eq!((k.width, k.height), (640, 480));
        }
        let rig = VirtualRig::preset(RigPreset::Field, &target(), 1);
        assert_eq!(rig.len(), 56);
        assert_eq!(rig.intrinsics[&1].width, 1900);
    }

    #[test]
    fn every_pose_sees_every_corner() {
        let rig = VirtualRig::preset(RigPreset::Desk, &target(), 9);
        for p in &rig.poses {
            let k = &rig.intrinsics[&p.camera_id];
            for corner in target().corners() {
                let c = p.extrinsics.apply(&corner);
                let (u, v) = k.project_camera_point(&c).unwrap();
                assert!(k.pixel_at(u, v).is_some());
            }
        }
    }

    #[test]
    fn look_at_puts_target_on_axis_and_up_along_minus_u() {
        let eye = Vector3::new(1000.0, 0.0, 300.0);
        let target = Vector3::new(0.0, 0.0, 300.0);
        let a = look_at(&eye, &target);
        let c = a.apply(&target);
        assert!(c.x.abs() < 1e-9 && c.y.abs() < 1e-9 && c.z > 0.0);
        let above = a.apply(&(target + Vector3::new(0.0, 0.0, 100.0)));
        assert!(above.x < 0.0);
    }

    #[test]
    fn calibration_chain_reproduces_extrinsics() {
        let rig = VirtualRig::preset(RigPreset::Desk, &target(), 4);
        let cal = rig.calibration(4);
        for p in &rig.poses {
            let a = cal.extrinsics(p.pose_index, p.camera_id).unwrap();
            assert!(a.max_abs_diff(&p.extrinsics) < 1e-9);
        }
    }

    #[test]
    fn seeds_are_deterministic() {
        let a = VirtualRig::preset(RigPreset::Desk, &target(), 3);
        let b = VirtualRig::preset(RigPreset::Desk, &target(), 3);
        let c = VirtualRig::preset(RigPreset::Desk, &target(), 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
