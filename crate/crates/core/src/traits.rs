//! Branch trait measurement: junction location, diameter, length and angle.
//!
//! Every branch is a directed edge `(v0, v1)` of the tree graph whose path
//! starts at the junction `v0`. Distance labels act as local radii: the
//! volume is treated as a union of spheres centered on skeleton voxels.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::graph::{TreeGraph, UpAxis};
use crate::grid::VoxelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraitConfig {
    /// number of path vertices whose labels are averaged for the radius
    pub n_d: usize,
    /// mm from the junction at which branch directions are sampled
    pub d_angle: f64,
    /// taken from the pipeline's up axis
    #[serde(skip)]
    pub up_axis: UpAxis,
}

impl Default for TraitConfig {
    fn default() -> Self {
        Self {
            n_d: 5,
            d_angle: 50.0,
            up_axis: UpAxis::PosZ,
        }
    }
}

impl TraitConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_d == 0 {
            return Err("n_d must be at least 1".into());
        }
        if !(self.d_angle > 0.0 && self.d_angle.is_finite()) {
            return Err("d_angle must be positive".into());
        }
        Ok(())
    }
}

/// Why a trait could not be measured.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum Unmeasured {
    #[error("path ends before leaving the junction sphere")]
    ShorterThanOffset,
    #[error("path never gets d_angle away from the junction")]
    ShorterThanAngleDistance,
    #[error("parent path never gets d_angle away from the junction")]
    ParentShorterThanAngleDistance,
    #[error("path has fewer than two voxels")]
    DegeneratePath,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "flag", content = "reason")]
pub enum TraitFlag {
    /// fewer than `n_d` vertices were left for the radius average
    ShortWindow,
    DiameterUnmeasured(Unmeasured),
    AngleUnmeasured(Unmeasured),
    /// branch leaves the root; its angle is taken against the up axis
    AngleFromUpAxis,
    /// edge starts at a root tip; the diameter offset follows the local radius
    RootOffset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchTraits {
    pub id: usize,
    /// parent branch id, `None` for edges leaving the root
    pub parent: Option<usize>,
    pub from_vertex: usize,
    pub to_vertex: usize,
    /// mm
    pub junction: [f64; 3],
    /// mm
    pub tip: [f64; 3],
    pub diameter_mm: Option<f64>,
    pub length_mm: f64,
    /// deviation of the branch from the parent's direction, degrees
    pub angle_deg: Option<f64>,
    pub flags: Vec<TraitFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BranchTraitReport {
    pub branches: Vec<BranchTraits>,
}

fn vec3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// World center of the edge's start vertex.
pub fn junction_location(graph: &TreeGraph, edge: usize, grid: &VoxelGrid) -> [f64; 3] {
    vec3(&grid.center(graph.vertices[graph.edges[edge].from].voxel))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiameterEstimate {
    pub diameter_mm: f64,
    /// index of the first averaged vertex
    pub offset_index: usize,
    pub samples: usize,
    pub short_window: bool,
}

/// How far along the path the radius window starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offset {
    /// skip vertices closer to `v0` than `v0`'s own label
    JunctionSphere,
    /// as above, but also keep skipping while a vertex is closer to `v0` than
    /// its own label (for paths starting at a free end)
    LocalRadius,
}

/// Diameter from the path labels: leave the sphere around `path[0]`, then
/// average the next `n_d` labels and double.
pub fn branch_diameter(
    path: &[usize],
    grid: &VoxelGrid,
    n_d: usize,
    offset: Offset,
) -> Result<DiameterEstimate, Unmeasured> {
    if path.len() < 2 {
        return Err(Unmeasured::DegeneratePath);
    }
    let vs = grid.voxel_size();
    // compared squared and in voxel units, where both sides are integers
    let sq = |v: usize| grid.squared_labels().map_or(0, |l| l[v]) as u64;
    let c0 = grid.coords(path[0]);
    let sq0 = sq(path[0]);
    let mut a = 0;
    while a < path.len() {
        let c = grid.coords(path[a]);
        let dist2: u64 = (0..3).map(|k| (c[k].abs_diff(c0[k]) as u64).pow(2)).sum();
        let reach2 = match offset {
            Offset::JunctionSphere => sq0,
            Offset::LocalRadius => sq0.max(sq(path[a])),
        };
        if dist2 >= reach2 {
            break;
        }
        a += 1;
    }
    if a == path.len() {
        return Err(Unmeasured::ShorterThanOffset);
    }
    let end = (a + n_d).min(path.len());
    let window = &path[a..end];
    let mean = window.iter().map(|&v| grid.label(v)).sum::<f64>() / window.len() as f64;
    Ok(DiameterEstimate {
        diameter_mm: 2.0 * mean * vs,
        offset_index: a,
        samples: window.len(),
        short_window: window.len() < n_d,
    })
}

/// Sum of distances between consecutive voxel centers, mm.
pub fn branch_length(path: &[usize], grid: &VoxelGrid) -> f64 {
    crate::skeleton::path_length(grid, path)
}

/// First voxel on `path` (which starts at the junction) at straight-line
/// distance ≥ `d_angle` from `v0`; returns its offset vector from `v0`.
pub fn direction_at_distance(path: &[usize], v0: &Vector3<f64>, grid: &VoxelGrid, d_angle: f64) -> Option<Vector3<f64>> {
    path.iter()
        .map(|&v| grid.center(v) - v0)
        .find(|d| d.norm() >= d_angle)
}

/// Angle in degrees between two direction vectors. Equal to the arccosine of
/// the normalized dot product, but stays accurate near 0° and 180°.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

/// Angle at `v0` between the vectors to the first voxels `d_angle` away on the
/// parent path (walked from `v0` towards the parent's origin) and on the
/// child path. A child continuing straight on gives 180°.
pub fn branch_angle(
    parent_path_from_v0: &[usize],
    child_path: &[usize],
    v0: usize,
    grid: &VoxelGrid,
    d_angle: f64,
) -> Result<f64, Unmeasured> {
    let c0 = grid.center(v0);
    let p = direction_at_distance(parent_path_from_v0, &c0, grid, d_angle)
        .ok_or(Unmeasured::ParentShorterThanAngleDistance)?;
    let c = direction_at_distance(child_path, &c0, grid, d_angle).ok_or(Unmeasured::ShorterThanAngleDistance)?;
    Ok(angle_between(&p, &c))
}

/// Measures every edge of `graph`, in edge order.
pub fn measure_all(graph: &TreeGraph, grid: &VoxelGrid, cfg: &TraitConfig) -> BranchTraitReport {
    let root_out = graph.out_degree(graph.root);
    let mut branches = Vec::with_capacity(graph.edges.len());
    for (id, e) in graph.edges.iter().enumerate() {
        let mut flags = Vec::new();
        let v0 = graph.vertices[e.from].voxel;
        let parent = graph.incoming(e.from);
        let starts_at_root_tip = e.from == graph.root && root_out == 1;

        let offset = if starts_at_root_tip {
            flags.push(TraitFlag::RootOffset);
            Offset::LocalRadius
        } else {
            Offset::JunctionSphere
        };
        let diameter_mm = match branch_diameter(&e.path, grid, cfg.n_d, offset) {
            Ok(d) => {
                if d.short_window {
                    flags.push(TraitFlag::ShortWindow);
                }
                Some(d.diameter_mm)
            }
            Err(why) => {
                flags.push(TraitFlag::DiameterUnmeasured(why));
                None
            }
        };

        let vector_angle = match parent {
            Some(p) => {
                let mut back = graph.edges[p].path.clone();
                back.reverse();
                Some(branch_angle(&back, &e.path, v0, grid, cfg.d_angle))
            }
            None if starts_at_root_tip => None,
            None => {
                // the root is itself a junction: the parent direction is straight down
                flags.push(TraitFlag::AngleFromUpAxis);
                let c0 = grid.center(v0);
                Some(
                    direction_at_distance(&e.path, &c0, grid, cfg.d_angle)
                        .map(|d| angle_between(&(-cfg.up_axis.vector()), &d))
                        .ok_or(Unmeasured::ShorterThanAngleDistance),
                )
            }
        };
        let angle_deg = match vector_angle {
            Some(Ok(a)) => Some(180.0 - a),
            Some(Err(why)) => {
                flags.push(TraitFlag::AngleUnmeasured(why));
                None
            }
            None => None,
        };

        branches.push(BranchTraits {
            id,
            parent,
            from_vertex: e.from,
            to_vertex: e.to,
            junction: junction_location(graph, id, grid),
            tip: vec3(&grid.center(graph.vertices[e.to].voxel)),
            diameter_mm,
            length_mm: branch_length(&e.path, grid),
            angle_deg,
            flags,
        });
    }
    BranchTraitReport { branches }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::skeleton::SkeletonSegment;

    /// Grid with constant label `label` on every voxel of a straight x-run.
    fn labeled_line(n: usize, labels: &[u32]) -> (VoxelGrid, Vec<usize>) {
        let mut g = VoxelGrid::new(Vector3::zeros(), 3.0, [n, 3, 3]).unwrap();
        let path: Vec<usize> = (0..n).map(|x| g.index(x, 1, 1)).collect();
        for &i in &path {
            g.set_occupied(i, true);
        }
        let mut sq = vec![0u32; g.len()];
        for (k, &i) in path.iter().enumerate() {
            let l = labels[k.min(labels.len() - 1)];
            sq[i] = l * l;
        }
        g.set_squared_labels(sq);
        (g, path)
    }

    #[test]
    fn constant_label_diameter() {
        let (g, path) = labeled_line(30, &[5]);
        let d = branch_diameter(&path, &g, 5, Offset::JunctionSphere).unwrap();
        assert_eq!(d.offset_index, 5);
        assert_eq!(d.diameter_mm, 30.0);
        assert!(!d.short_window);
    }

    #[test]
    fn window_is_arithmetic_mean() {
        // junction label 2 → skip 2 voxels, then window {5,5,4,5,6}
        let (g, path) = labeled_line(12, &[2, 2, 5, 5, 4, 5, 6, 9, 9, 9, 9, 9]);
        let d = branch_diameter(&path, &g, 5, Offset::JunctionSphere).unwrap();
        assert_eq!(d.offset_index, 2);
        assert_eq!(d.diameter_mm, 30.0);
    }

    #[test]
    fn short_window_is_clamped() {
        let (g, path) = labeled_line(7, &[5, 5, 5, 5, 5, 4, 2]);
        let d = branch_diameter(&path, &g, 5, Offset::JunctionSphere).unwrap();
        assert!(d.short_window);
        assert_eq!(d.samples, 2);
        assert_eq!(d.diameter_mm, 2.0 * 3.0 * 3.0);
    }

    #[test]
    fn too_short_for_offset() {
        let (g, path) = labeled_line(4, &[5]);
        assert_eq!(
            branch_diameter(&path, &g, 5, Offset::JunctionSphere),
            Err(Unmeasured::ShorterThanOffset)
        );
    }

    #[test]
    fn local_radius_offset_skips_end_cap() {
        // labels grow from a free end, then saturate at 5
        let (g, path) = labeled_line(20, &[1, 2, 3, 4, 5, 5]);
        let plain = branch_diameter(&path, &g, 5, Offset::JunctionSphere).unwrap();
        let local = branch_diameter(&path, &g, 5, Offset::LocalRadius).unwrap();
        assert_eq!(plain.offset_index, 1);
        assert_eq!(local.offset_index, 5);
        assert_eq!(local.diameter_mm, 30.0);
    }

    #[test]
    fn lengths() {
        let (g, path) = labeled_line(101, &[1]);
        assert!((branch_length(&path, &g) - 300.0).abs() < 1e-9);
        let g = VoxelGrid::new(Vector3::zeros(), 3.0, [2, 2, 2]).unwrap();
        let diag = [g.index(0, 0, 0), g.index(1, 1, 1)];
        assert!((branch_length(&diag, &g) - 3.0 * 3f64.sqrt()).abs() < 1e-12);
    }

    fn l_grid() -> (VoxelGrid, Vec<usize>, Vec<usize>, Vec<usize>) {
        // trunk up the z axis to (10, 10, 40), child along +x, continuation up
        let mut g = VoxelGrid::new(Vector3::zeros(), 3.0, [60, 21, 80]).unwrap();
        let trunk: Vec<usize> = (0..=40).map(|z| g.index(10, 10, z)).collect();
        let side: Vec<usize> = (40..60).map(|x| g.index(x - 30, 10, 40)).collect();
        let up: Vec<usize> = (40..80).map(|z| g.index(10, 10, z)).collect();
        for &i in trunk.iter().chain(&side).chain(&up) {
            g.set_occupied(i, true);
        }
        g.set_squared_labels(vec![1; g.len()]);
        (g, trunk, side, up)
    }

    #[test]
    fn perpendicular_and_straight_angles() {
        let (g, trunk, side, up) = l_grid();
        let junction = *trunk.last().unwrap();
        let mut back = trunk.clone();
        back.reverse();
        let right = branch_angle(&back, &side, junction, &g, 50.0).unwrap();
        assert!((right - 90.0).abs() <= (3.0f64 / 50.0).atan().to_degrees());
        let straight = branch_angle(&back, &up, junction, &g, 50.0).unwrap();
        assert!((straight - 180.0).abs() < 1e-9);
    }

    #[test]
    fn angle_needs_long_paths() {
        let (g, trunk, side, _) = l_grid();
        let junction = *trunk.last().unwrap();
        let mut back = trunk.clone();
        back.reverse();
        assert_eq!(
            branch_angle(&back, &side[..5], junction, &g, 50.0),
            Err(Unmeasured::ShorterThanAngleDistance)
        );
        assert_eq!(
            branch_angle(&back[..5], &side, junction, &g, 50.0),
            Err(Unmeasured::ParentShorterThanAngleDistance)
        );
    }

    #[test]
    fn junction_is_voxel_center() {
        let mut g = VoxelGrid::new(Vector3::zeros(), 3.0, [4, 4, 4]).unwrap();
        let a = g.index(0, 0, 0);
        let b = g.index(0, 0, 1);
        g.set_occupied(a, true);
        g.set_occupied(b, true);
        let graph = build_graph(&[SkeletonSegment::from_path_unchecked(vec![a, b])], &g, UpAxis::PosZ).unwrap();
        assert_eq!(junction_location(&graph, 0, &g), [1.5, 1.5, 1.5]);
    }

    #[test]
    fn report_shapes() {
        let (g, trunk, side, up) = l_grid();
        let single = build_graph(&[SkeletonSegment::from_path_unchecked(trunk.clone())], &g, UpAxis::PosZ).unwrap();
        let r = measure_all(&single, &g, &TraitConfig::default());
        assert_eq!(r.branches.len(), 1);
        assert!(r.branches[0].angle_deg.is_none());

        let segs: Vec<SkeletonSegment> = [trunk, side, up]
            .into_iter()
            .map(SkeletonSegment::from_path_unchecked)
            .collect();
        let y = build_graph(&segs, &g, UpAxis::PosZ).unwrap();
        let r = measure_all(&y, &g, &TraitConfig::default());
        assert_eq!(r.branches.len(), 3);
        let angles: Vec<f64> = r.branches.iter().filter_map(|b| b.angle_deg).collect();
        assert_eq!(angles.len(), 2);
        // straight continuation deviates 0°, the side branch about 90°
        assert!(angles.iter().any(|a| a.abs() < 1e-9));
        assert!(angles.iter().any(|a| (a - 90.0).abs() < 3.5));
    }

    #[test]
    fn root_junction_measures_against_up_axis() {
        let mut g = VoxelGrid::new(Vector3::zeros(), 3.0, [60, 3, 60]).unwrap();
        let a: Vec<usize> = (0..30).map(|k| g.index(30 + k, 1, k)).collect();
        let mut b: Vec<usize> = (0..30).map(|k| g.index(30 - k, 1, k)).collect();
        b[0] = a[0];
        for &i in a.iter().chain(&b) {
            g.set_occupied(i, true);
        }
        g.set_squared_labels(vec![1; g.len()]);
        let graph = build_graph(
            &[
                SkeletonSegment::from_path_unchecked(a),
                SkeletonSegment::from_path_unchecked(b),
            ],
            &g,
            UpAxis::PosZ,
        )
        .unwrap();
        let r = measure_all(&graph, &g, &TraitConfig::default());
        for br in &r.branches {
            assert!(br.flags.contains(&TraitFlag::AngleFromUpAxis));
            assert!((br.angle_deg.unwrap() - 45.0).abs() < 1e-9);
        }
    }
}
