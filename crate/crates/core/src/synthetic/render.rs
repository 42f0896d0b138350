use nalgebra::Vector3;
use rayon::prelude::*;

use super::{Capsule, SyntheticTree, VirtualRig};
use crate::calibration::{CameraIntrinsics, CameraView, HomogeneousTransform};
use crate::segmentation::{ColorImage, SilhouetteMap};

/// Bark color used by [`render_color`].
pub const FOREGROUND_RGB: [u8; 3] = [235, 230, 220];

/// Squared distance between the ray `o + t·w` (`t ≥ 0`) and the segment `a`–`b`.
fn ray_segment_distance2(o: &Vector3<f64>, w: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let d = b - a;
    let r = o - a;
    let (ww, dd, wd) = (w.dot(w), d.dot(&d), w.dot(&d));
    let (wr, dr) = (w.dot(&r), d.dot(&r));
    let dist2 = |t: f64, s: f64| (o + w * t - (a + d * s)).norm_squared();

    // interior stationary point of |r + t·w − s·d|²
    let det = ww * dd - wd * wd;
    if det > 1e-12 * ww * dd.max(1e-300) {
        let t = (wd * dr - dd * wr) / det;
        let s = (ww * dr - wd * wr) / det;
        if t >= 0.0 && (0.0..=1.0).contains(&s) {
            return dist2(t, s);
        }
    }
    // boundary: s = 0, s = 1 with t ≥ 0; t = 0 with s ∈ [0, 1]
    let t0 = (-wr / ww).max(0.0);
    let t1 = ((d.dot(w) - wr) / ww).max(0.0);
    let s0 = if dd > 0.0 { (dr / dd).clamp(0.0, 1.0) } else { 0.0 };
    dist2(t0, 0.0).min(dist2(t1, 1.0)).min(dist2(0.0, s0))
}

/// Whether the ray hits a flat-ended cylinder: its side between the end planes
/// or one of the two end disks.
fn ray_hits_flat_cylinder(o: &Vector3<f64>, w: &Vector3<f64>, c: &Capsule) -> bool {
    let a = c.a();
    let Some(d) = c.direction() else { return false };
    let len = c.axis_length();
    let r2 = c.radius * c.radius;
    let oc = o - a;
    let w_perp = w - d * w.dot(&d);
    let oc_perp = oc - d * oc.dot(&d);
    let qa = w_perp.norm_squared();
    let qb = 2.0 * oc_perp.dot(&w_perp);
    let qc = oc_perp.norm_squared() - r2;
    if qa > 1e-15 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
                if t >= 0.0 {
                    let s = (oc + w * t).dot(&d);
                    if (0.0..=len).contains(&s) {
                        return true;
                    }
                }
            }
        }
    }
    let wd = w.dot(&d);
    if wd.abs() > 1e-15 {
        for plane in [0.0, len] {
            let t = (plane - oc.dot(&d)) / wd;
            if t >= 0.0 && (oc_perp + w_perp * t).norm_squared() <= r2 {
                return true;
            }
        }
    }
    false
}

fn ray_hits(o: &Vector3<f64>, w: &Vector3<f64>, c: &Capsule) -> bool {
    // bounding-sphere rejection
    let mid = (c.a() + c.b()) * 0.5;
    let bound = 0.5 * c.axis_length() + c.radius;
    let to_mid = mid - o;
    let t = to_mid.dot(w).max(0.0) / w.norm_squared();
    if (to_mid - w * t).norm_squared() > bound * bound {
        return false;
    }
    if c.capped {
        ray_segment_distance2(o, w, &c.a(), &c.b()) <= c.radius * c.radius
    } else {
        ray_hits_flat_cylinder(o, w, c)
    }
}

fn hit_mask(tree: &SyntheticTree, intrinsics: &CameraIntrinsics, extrinsics: &HomogeneousTransform) -> Vec<bool> {
    let (w, h) = (intrinsics.width as usize, intrinsics.height as usize);
    let inv = extrinsics.invert();
    let origin = *inv.translation();
    let rot = *inv.rotation();
    let mut mask = vec![false; w * h];
    if tree.branches.is_empty() {
        return mask;
    }
    mask.par_chunks_mut(w).enumerate().for_each(|(j, row)| {
        for (i, px) in row.iter_mut().enumerate() {
            let dir = rot * intrinsics.unproject(i as f64, j as f64);
            *px = tree.branches.iter().any(|c| ray_hits(&origin, &dir, c));
        }
    });
    mask
}

/// Binary silhouette: 1 where the ray through the pixel center hits the tree.
pub fn render_silhouette(
    tree: &SyntheticTree,
    intrinsics: &CameraIntrinsics,
    extrinsics: &HomogeneousTransform,
) -> SilhouetteMap {
    let mask = hit_mask(tree, intrinsics, extrinsics);
    let data = mask.into_iter().map(|m| if m { 1.0 } else { 0.0 }).collect();
    SilhouetteMap::from_vec(intrinsics.width, intrinsics.height, data).expect("dimensions match")
}

/// Color render: [`FOREGROUND_RGB`] on a uniform `background`.
pub fn render_color(
    tree: &SyntheticTree,
    intrinsics: &CameraIntrinsics,
    extrinsics: &HomogeneousTransform,
    background: [u8; 3],
) -> ColorImage {
    let mask = hit_mask(tree, intrinsics, extrinsics);
    let mut img = ColorImage::filled(intrinsics.width, intrinsics.height, background);
    let w = intrinsics.width as usize;
    for (k, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        img.set((k % w) as u32, (k / w) as u32, FOREGROUND_RGB);
    }
    img
}

/// One calibrated view per rig pose, in rig order.
pub fn render_views(tree: &SyntheticTree, rig: &VirtualRig) -> Vec<CameraView> {
    rig.poses
        .iter()
        .map(|p| {
            let k = rig.intrinsics[&p.camera_id];
            let sil = render_silhouette(tree, &k, &p.extrinsics);
            CameraView::new(p.camera_id, p.pose_index, k, p.extrinsics, sil).expect("rig intrinsics are valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    // camera at the origin looking down +z
    fn facing() -> HomogeneousTransform {
        HomogeneousTransform::identity()
    }

    #[test]
    fn empty_tree_is_blank() {
        let k = CameraIntrinsics::ideal(300.0, 64, 48);
        let m = render_silhouette(&SyntheticTree::default(), &k, &facing());
        assert_eq!(m.count_at_least(0.5), 0);
    }

    #[test]
    fn sphere_disk_radius() {
        let (f, z, r) = (400.0, 1000.0, 100.0);
        let k = CameraIntrinsics::ideal(f, 201, 201);
        let m = render_silhouette(&SyntheticTree::sphere([0.0, 0.0, z], r), &k, &facing());
        let expected = f * r / (z * z - r * r).sqrt();
        for y in 0..201u32 {
            for x in 0..201u32 {
                let rho = ((x as f64 - 100.0).powi(2) + (y as f64 - 100.0).powi(2)).sqrt();
                if rho < expected - 1.0 {
                    assert_eq!(m.get(x, y), 1.0, "({x},{y})");
                } else if rho > expected + 1.0 {
                    assert_eq!(m.get(x, y), 0.0, "({x},{y})");
                }
            }
        }
    }

    #[test]
    fn area_shrinks_with_depth() {
        let k = CameraIntrinsics::ideal(300.0, 120, 120);
        let mut last = usize::MAX;
        for z in [300.0, 400.0, 600.0, 900.0] {
            let m = render_silhouette(&SyntheticTree::sphere([0.0, 0.0, z], 50.0), &k, &facing());
            let area = m.count_at_least(0.5);
            assert!(area <= last);
            last = area;
        }
    }

    #[test]
    fn distance_oracle() {
        // ray along +z from the origin against a segment parallel to x at height 10
        let o = Vector3::zeros();
        let w = Vector3::z();
        let a = Vector3::new(-5.0, 3.0, 10.0);
        let b = Vector3::new(5.0, 3.0, 10.0);
        assert!((ray_segment_distance2(&o, &w, &a, &b) - 9.0).abs() < 1e-12);
        // segment behind the camera: closest point is the ray origin
        let a = Vector3::new(0.0, 4.0, -10.0);
        let b = Vector3::new(0.0, 4.0, -20.0);
        assert!((ray_segment_distance2(&o, &w, &a, &b) - 116.0).abs() < 1e-9);
        // parallel segment
        let a = Vector3::new(2.0, 0.0, 5.0);
        let b = Vector3::new(2.0, 0.0, 9.0);
        assert!((ray_segment_distance2(&o, &w, &a, &b) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn flat_cylinder_end_on_and_side_on() {
        let mut c = Capsule::new([0.0, 0.0, 100.0], [0.0, 0.0, 200.0], 10.0, None);
        c.capped = false;
        let o = Vector3::zeros();
        assert!(ray_hits_flat_cylinder(&o, &Vector3::z(), &c));
        assert!(!ray_hits_flat_cylinder(&o, &Vector3::new(0.2, 0.0, 1.0), &c));
        let o = Vector3::new(-50.0, 0.0, 150.0);
        assert!(ray_hits_flat_cylinder(&o, &Vector3::x(), &c));
        assert!(!ray_hits_flat_cylinder(&o, &(-Vector3::x()), &c));
        assert!(!ray_hits_flat_cylinder(&Vector3::new(-50.0, 0.0, 201.0), &Vector3::x(), &c));
    }
}
