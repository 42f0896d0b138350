//! Visual-hull carving with a consistency vote and coarse-to-fine refinement.
//!
//! A voxel is kept when, among the views its center projects into, at least
//! `consistency_fraction` of them see silhouette probability at or above
//! `silhouette_threshold` at the projected pixel. Allowing a few dissenting
//! views lets the hull survive silhouettes that disagree with each other.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::CameraView;
use crate::edt::squared_distance_to_mask;
use crate::grid::{Aabb, GridError, VoxelGrid};

#[derive(Debug, thiserror::Error)]
pub enum CarveError {
    #[error("no views supplied")]
    NoViews,
    #[error("invalid carve configuration: {0}")]
    Config(String),
    #[error("search region has zero volume")]
    EmptyRegion,
    #[error("empty reconstruction: no voxel center projects into any image")]
    OutsideAllViews,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarveConfig {
    /// mm
    pub initial_voxel_size: f64,
    /// mm
    pub final_voxel_size: f64,
    pub silhouette_threshold: f32,
    pub consistency_fraction: f64,
    /// neighbors (Chebyshev distance, in voxels of the finished level) added
    /// to the survivors before subdividing
    pub dilation_radius: usize,
    /// At coarse levels keep a voxel when its bounding sphere's footprint
    /// touches the silhouette rather than testing its center only. The final
    /// level always uses the center test.
    pub coarse_footprint: bool,
}

impl Default for CarveConfig {
    fn default() -> Self {
        Self {
            initial_voxel_size: 12.0,
            final_voxel_size: 3.0,
            silhouette_threshold: 0.5,
            consistency_fraction: 0.95,
            dilation_radius: 1,
            coarse_footprint: true,
        }
    }
}

impl CarveConfig {
    /// Number of octree subdivisions between the initial and final sizes.
    pub fn levels(&self) -> Result<u32, CarveError> {
        let (a, b) = (self.initial_voxel_size, self.final_voxel_size);
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(CarveError::Config("voxel sizes must be positive".into()));
        }
        if b > a {
            return Err(CarveError::Config("final voxel size exceeds initial voxel size".into()));
        }
        let ratio = (a / b).log2();
        let levels = ratio.round();
        if (ratio - levels).abs() > 1e-9 {
            return Err(CarveError::Config(format!(
                "initial/final voxel size ratio {} is not a power of two",
                a / b
            )));
        }
        Ok(levels as u32)
    }

    pub fn validate(&self) -> Result<(), CarveError> {
        self.levels()?;
        if !(self.consistency_fraction > 0.5 && self.consistency_fraction <= 1.0) {
            return Err(CarveError::Config("consistency_fraction must lie in (0.5, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.silhouette_threshold) {
            return Err(CarveError::Config("silhouette_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-view data for the coarse footprint test.
struct Footprint {
    /// squared pixel distance to the nearest foreground pixel
    sq_dist: Vec<u32>,
}

fn footprints(views: &[CameraView], threshold: f32) -> Vec<Footprint> {
    views
        .par_iter()
        .map(|v| {
            let mask: Vec<bool> = v.silhouette.data().iter().map(|&p| p >= threshold).collect();
            Footprint {
                sq_dist: squared_distance_to_mask(&mask, v.intrinsics.width as usize, v.intrinsics.height as usize),
            }
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Test<'a> {
    Center,
    Footprint { maps: &'a [Footprint], radius: f64 },
}

#[derive(Clone, Copy, Default)]
struct Vote {
    counted: u32,
    agree: u32,
}

fn vote(center: &Vector3<f64>, views: &[CameraView], threshold: f32, test: Test<'_>) -> Vote {
    let mut v = Vote::default();
    for (k, view) in views.iter().enumerate() {
        let p = view.extrinsics.apply(center);
        let Some((u, w)) = view.intrinsics.project_camera_point(&p) else {
            continue;
        };
        let Some((i, j)) = view.intrinsics.pixel_at(u, w) else {
            continue;
        };
        v.counted += 1;
        let inside = match test {
            Test::Center => view.silhouette.get(i, j) >= threshold,
            Test::Footprint { maps, radius } => {
                let k_ = &view.intrinsics;
                if p.z <= radius {
                    true
                } else {
                    let xn = p.x / p.z;
                    let yn = p.y / p.z;
                    let r2 = xn * xn + yn * yn;
                    // sphere image radius, widened for obliquity and distortion
                    let grow = (1.0 + r2) * (1.0 + 3.0 * k_.k1.abs() * r2 + 5.0 * k_.k2.abs() * r2 * r2);
                    let rad = k_.fx.max(k_.fy) * radius / (p.z - radius) * grow + 1.0;
                    let d2 = maps[k].sq_dist[j as usize * k_.width as usize + i as usize];
                    d2 != u32::MAX && (d2 as f64) <= rad * rad
                }
            }
        };
        if inside {
            v.agree += 1;
        }
    }
    v
}

fn decide(v: Vote, fraction: f64) -> bool {
    v.counted > 0 && v.agree as f64 >= fraction * v.counted as f64 - 1e-9
}

/// Evaluates `candidates` (linear indices of `geometry`) and returns the
/// occupied grid plus whether any candidate was seen by at least one view.
fn carve_candidates(
    geometry: &VoxelGrid,
    candidates: &[u32],
    views: &[CameraView],
    cfg: &CarveConfig,
    test: Test<'_>,
) -> (VoxelGrid, bool) {
    let results: Vec<(bool, bool)> = candidates
        .par_iter()
        .map(|&i| {
            let v = vote(&geometry.center(i as usize), views, cfg.silhouette_threshold, test);
            (decide(v, cfg.consistency_fraction), v.counted > 0)
        })
        .collect();
    let mut out = geometry.empty_like();
    let mut seen = false;
    for (&i, &(keep, s)) in candidates.iter().zip(&results) {
        if keep {
            out.set_occupied(i as usize, true);
        }
        seen |= s;
    }
    (out, seen)
}

/// Carves every voxel of `grid`'s geometry (its current occupancy is ignored)
/// using the center-point test.
pub fn carve_level(grid: &VoxelGrid, views: &[CameraView], cfg: &CarveConfig) -> Result<VoxelGrid, CarveError> {
    if views.is_empty() {
        return Err(CarveError::NoViews);
    }
    cfg.validate()?;
    let all: Vec<u32> = (0..grid.len() as u32).collect();
    let (out, seen) = carve_candidates(grid, &all, views, cfg, Test::Center);
    if !seen {
        log::warn!("empty reconstruction: grid lies outside every view frustum");
        return Err(CarveError::OutsideAllViews);
    }
    Ok(out)
}

/// Empty grid with the geometry of the finest hierarchy level: the region
/// is tiled by initial-size voxels from its min corner, each split
/// `2^levels` times per axis.
pub fn final_geometry(region: &Aabb, cfg: &CarveConfig) -> Result<VoxelGrid, CarveError> {
    let levels = cfg.levels()?;
    if region.volume() <= 0.0 {
        return Err(CarveError::EmptyRegion);
    }
    let coarse = VoxelGrid::covering(region, cfg.initial_voxel_size)?;
    let k = 1usize << levels;
    let d = coarse.dims();
    Ok(VoxelGrid::new(
        coarse.origin(),
        cfg.initial_voxel_size / k as f64,
        [d[0] * k, d[1] * k, d[2] * k],
    )?)
}

fn dilate(grid: &VoxelGrid, radius: usize) -> VoxelGrid {
    if radius == 0 {
        return grid.clone();
    }
    let mut out = grid.empty_like();
    let r = radius as i64;
    let d = grid.dims().map(|v| v as i64);
    for i in grid.occupied_indices() {
        let c = grid.coords(i).map(|v| v as i64);
        for z in (c[2] - r).max(0)..=(c[2] + r).min(d[2] - 1) {
            for y in (c[1] - r).max(0)..=(c[1] + r).min(d[1] - 1) {
                for x in (c[0] - r).max(0)..=(c[0] + r).min(d[0] - 1) {
                    let j = out.index(x as usize, y as usize, z as usize);
                    out.set_occupied(j, true);
                }
            }
        }
    }
    out
}

/// Coarse-to-fine carving over `region`.
///
/// Starts at `initial_voxel_size`; after each level the survivors plus their
/// neighbors within `dilation_radius` are split into eight children that form
/// the next level's search set, until `final_voxel_size` is reached.
pub fn carve_hierarchical(region: &Aabb, views: &[CameraView], cfg: &CarveConfig) -> Result<VoxelGrid, CarveError> {
    if views.is_empty() {
        return Err(CarveError::NoViews);
    }
    cfg.validate()?;
    if region.volume() <= 0.0 {
        return Err(CarveError::EmptyRegion);
    }
    let levels = cfg.levels()?;
    let maps = if cfg.coarse_footprint && levels > 0 {
        footprints(views, cfg.silhouette_threshold)
    } else {
        Vec::new()
    };

    let mut geometry = VoxelGrid::covering(region, cfg.initial_voxel_size)?;
    let mut candidates: Vec<u32> = (0..geometry.len() as u32).collect();
    let mut level = 0;
    loop {
        let test = if level < levels && cfg.coarse_footprint {
            Test::Footprint {
                maps: &maps,
                radius: geometry.voxel_size() * 3f64.sqrt() / 2.0,
            }
        } else {
            Test::Center
        };
        let (carved, seen) = carve_candidates(&geometry, &candidates, views, cfg, test);
        if level == 0 && !seen {
            log::warn!("empty reconstruction: search region lies outside every view frustum");
            return Err(CarveError::OutsideAllViews);
        }
        log::debug!(
            "carve level {level}: voxel {} mm, {} candidates, {} occupied",
            geometry.voxel_size(),
            candidates.len(),
            carved.count_occupied()
        );
        if level == levels {
            return Ok(carved);
        }
        let search = dilate(&carved, cfg.dilation_radius);
        let d = geometry.dims();
        let child = VoxelGrid::new(geometry.origin(), geometry.voxel_size() / 2.0, [d[0] * 2, d[1] * 2, d[2] * 2])?;
        let mut next = Vec::with_capacity(search.count_occupied() * 8);
        for i in search.occupied_indices() {
            let [x, y, z] = search.coords(i);
            for dz in 0..2 {
                for dy in 0..2 {
                    for dx in 0..2 {
                        next.push(child.index(2 * x + dx, 2 * y + dy, 2 * z + dz) as u32);
                    }
                }
            }
        }
        next.sort_unstable();
        candidates = next;
        geometry = child;
        level += 1;
    }
}
