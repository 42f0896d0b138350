//! Procedural trees made of capsules, virtual camera rigs, a ray-casting
//! silhouette renderer and analytic ground truth.

mod perturb;
mod render;
mod rig;
mod scene;

pub use perturb::{boundary_pixels, perturb_silhouettes, PerturbConfig};
pub use render::{render_color, render_silhouette, render_views, FOREGROUND_RGB};
pub use rig::{look_at, RigPose, RigPreset, RingSpec, VirtualRig};
pub use scene::{export_scene, ExportedScene, SceneFile};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{Aabb, GridError, VoxelGrid};
use crate::traits::{angle_between, BranchTraitReport, BranchTraits};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SyntheticError {
    #[error("branch {0}: radius must be positive and finite")]
    BadRadius(usize),
    #[error("branch {0}: parent {1} must come earlier in the list")]
    BadParent(usize, usize),
    #[error("branch {branch}: start lies {distance:e} mm off the parent axis")]
    OffParentAxis { branch: usize, distance: f64 },
    #[error("branch {0}: non-finite coordinates")]
    NonFinite(usize),
    #[error("flip fraction {0} outside [0, 0.2]")]
    FlipFraction(f64),
    #[error("view fraction {0} outside [0, 1]")]
    ViewFraction(f64),
    #[error("invalid rig: {0}")]
    Rig(String),
    #[error("scene file: {0}")]
    Scene(String),
}

/// A cylinder of radius `radius` around the segment `start`–`end`, closed by
/// hemispheres (`capped`) or by flat disks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    #[serde(default = "default_capped")]
    pub capped: bool,
}

fn default_capped() -> bool {
    true
}

impl Capsule {
    pub fn new(start: [f64; 3], end: [f64; 3], radius: f64, parent: Option<usize>) -> Self {
        Self {
            start,
            end,
            radius,
            parent,
            capped: true,
        }
    }

    pub fn a(&self) -> Vector3<f64> {
        Vector3::from(self.start)
    }

    pub fn b(&self) -> Vector3<f64> {
        Vector3::from(self.end)
    }

    pub fn axis_length(&self) -> f64 {
        (self.b() - self.a()).norm()
    }

    /// Unit axis direction, `None` for a sphere.
    pub fn direction(&self) -> Option<Vector3<f64>> {
        let d = self.b() - self.a();
        let n = d.norm();
        (n > 0.0).then(|| d / n)
    }

    /// Distance from `p` to the axis segment.
    pub fn axis_distance(&self, p: &Vector3<f64>) -> f64 {
        let (a, b) = (self.a(), self.b());
        let d = b - a;
        let l2 = d.norm_squared();
        let s = if l2 > 0.0 { ((p - a).dot(&d) / l2).clamp(0.0, 1.0) } else { 0.0 };
        (a + d * s - p).norm()
    }

    /// Whether `p` lies inside the solid.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        if self.capped {
            return self.axis_distance(p) <= self.radius;
        }
        let (a, b) = (self.a(), self.b());
        let d = b - a;
        let l2 = d.norm_squared();
        if l2 == 0.0 {
            return false;
        }
        let s = (p - a).dot(&d) / l2;
        (0.0..=1.0).contains(&s) && (a + d * s - p).norm() <= self.radius
    }

    pub fn bounds(&self) -> Aabb {
        let r = self.radius;
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for k in 0..3 {
            min[k] = self.start[k].min(self.end[k]) - r;
            max[k] = self.start[k].max(self.end[k]) + r;
        }
        Aabb::new(min, max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SyntheticTree {
    pub branches: Vec<Capsule>,
}

impl SyntheticTree {
    pub fn new(branches: Vec<Capsule>) -> Result<Self, SyntheticError> {
        let t = Self { branches };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        for (i, c) in self.branches.iter().enumerate() {
            if c.start.iter().chain(&c.end).any(|v| !v.is_finite()) {
                return Err(SyntheticError::NonFinite(i));
            }
            if !(c.radius > 0.0 && c.radius.is_finite()) {
                return Err(SyntheticError::BadRadius(i));
            }
            if let Some(p) = c.parent {
                if p >= i {
                    return Err(SyntheticError::BadParent(i, p));
                }
                let distance = self.branches[p].axis_distance(&c.a());
                if distance > 1e-9 {
                    return Err(SyntheticError::OffParentAxis { branch: i, distance });
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.branches.iter().any(|c| c.contains(p))
    }

    /// Tight box around every solid, `None` for an empty tree.
    pub fn bounds(&self) -> Option<Aabb> {
        let mut it = self.branches.iter().map(Capsule::bounds);
        let first = it.next()?;
        Some(it.fold(first, |acc, b| {
            let mut min = acc.min;
            let mut max = acc.max;
            for k in 0..3 {
                min[k] = min[k].min(b.min[k]);
                max[k] = max[k].max(b.max[k]);
            }
            Aabb::new(min, max)
        }))
    }

    /// Ideal occupancy: every voxel of the grid covering `region` whose
    /// center lies inside the tree.
    pub fn voxelize(&self, region: &Aabb, voxel_size: f64) -> Result<VoxelGrid, GridError> {
        let mut grid = VoxelGrid::covering(region, voxel_size)?;
        let inside: Vec<bool> = (0..grid.len())
            .into_par_iter()
            .map(|i| self.contains(&grid.center(i)))
            .collect();
        for (i, v) in inside.into_iter().enumerate() {
            if v {
                grid.set_occupied(i, true);
            }
        }
        Ok(grid)
    }

    /// End spheres of every branch; together they bound the tree's image.
    pub fn framing_spheres(&self) -> Vec<(Vector3<f64>, f64)> {
        self.branches
            .iter()
            .flat_map(|c| [(c.a(), c.radius), (c.b(), c.radius)])
            .collect()
    }

    /// Single sphere.
    pub fn sphere(center: [f64; 3], radius: f64) -> Self {
        Self {
            branches: vec![Capsule::new(center, center, radius, None)],
        }
    }

    /// Flat-ended cylinder standing on the origin along +z.
    pub fn cylinder(radius: f64, length: f64) -> Self {
        let mut c = Capsule::new([0.0; 3], [0.0, 0.0, length], radius, None);
        c.capped = false;
        Self { branches: vec![c] }
    }

    /// Trunk with one child per `(diameter, angle from trunk, azimuth, length)`
    /// leaving the trunk top. Angles in degrees, lengths in mm.
    pub fn trunk_with_children(trunk_diameter: f64, trunk_length: f64, children: &[(f64, f64, f64, f64)]) -> Self {
        let top = [0.0, 0.0, trunk_length];
        let mut branches = vec![Capsule::new([0.0; 3], top, trunk_diameter / 2.0, None)];
        for &(diameter, angle, azimuth, length) in children {
            let (t, a) = (angle.to_radians(), azimuth.to_radians());
            let dir = [t.sin() * a.cos(), t.sin() * a.sin(), t.cos()];
            let end = [top[0] + length * dir[0], top[1] + length * dir[1], top[2] + length * dir[2]];
            branches.push(Capsule::new(top, end, diameter / 2.0, Some(0)));
        }
        Self { branches }
    }

    /// Trunk plus four primaries with the diameters of the reference tree.
    pub fn tree_a() -> Self {
        Self::trunk_with_children(
            34.5,
            450.0,
            &[
                (14.1, 30.0, 0.0, 400.0),
                (17.5, 45.0, 90.0, 300.0),
                (16.1, 60.0, 180.0, 250.0),
                (23.0, 75.0, 270.0, 220.0),
            ],
        )
    }

    /// Reconstruction region used with [`tree_a`](Self::tree_a).
    pub fn tree_a_region() -> Aabb {
        Aabb::new([-264.0, -264.0, -36.0], [264.0, 264.0, 852.0])
    }

    /// Trunk splitting into two arms at ±`half_angle` in the x–z plane.
    pub fn y_shape(radius: f64, trunk_length: f64, arm_length: f64, half_angle: f64) -> Self {
        let d = 2.0 * radius;
        Self::trunk_with_children(
            d,
            trunk_length,
            &[(d, half_angle, 0.0, arm_length), (d, half_angle, 180.0, arm_length)],
        )
    }
}

/// Analytic traits per branch: diameter `2r`, axis length, and the angle
/// between the branch axis and its parent's axis. Roots carry no angle.
pub fn ground_truth(tree: &SyntheticTree) -> BranchTraitReport {
    let branches = tree
        .branches
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let angle_deg = c.parent.and_then(|p| {
                let pd = tree.branches[p].direction()?;
                let cd = c.direction()?;
                Some(angle_between(&pd, &cd))
            });
            BranchTraits {
                id: i,
                parent: c.parent,
                from_vertex: c.parent.map_or(0, |p| p + 1),
                to_vertex: i + 1,
                junction: c.start,
                tip: c.end,
                diameter_mm: Some(2.0 * c.radius),
                length_mm: c.axis_length(),
                angle_deg,
                flags: Vec::new(),
            }
        })
        .collect();
    BranchTraitReport { branches }
}
