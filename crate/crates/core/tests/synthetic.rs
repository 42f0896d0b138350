use arborscan::calibration::HomogeneousTransform;
use arborscan::pipeline::{run_pipeline, PipelineConfig};
use arborscan::synthetic::{
    export_scene, ground_truth, render_views, Capsule, PerturbConfig, RigPreset, SceneFile, SyntheticTree, VirtualRig,
};
use nalgebra::Vector3;
use proptest::prelude::*;

/// Points spread over every capsule's side and caps, at `scale` × radius
/// from the axis (1 for the surface itself).
fn shell_points(tree: &SyntheticTree, scale: f64) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    for c in &tree.branches {
        let (a, b) = (c.a(), c.b());
        let d = (b - a).try_normalize(1e-12).unwrap_or(Vector3::z());
        let u = d.cross(&Vector3::x()).try_normalize(1e-6).unwrap_or_else(|| d.cross(&Vector3::y()).normalize());
        let v = d.cross(&u);
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            for j in 0..24 {
                let phi = j as f64 / 24.0 * std::f64::consts::TAU;
                let ring = u * phi.cos() + v * phi.sin();
                let r = scale * c.radius;
                out.push(a + (b - a) * t + ring * r);
                // caps: hemispheres beyond each end
                let theta = t * std::f64::consts::FRAC_PI_2;
                let cap = ring * theta.cos() * r;
                out.push(a + cap - d * theta.sin() * r);
                out.push(b + cap + d * theta.sin() * r);
            }
        }
    }
    out
}

fn check_render_projection(preset: RigPreset) {
    let tree = SyntheticTree::tree_a();
    let rig = VirtualRig::preset_framing(preset, &tree.bounds().unwrap(), &tree.framing_spheres(), 3);
    let views = render_views(&tree, &rig);
    let fg = |view: &arborscan::calibration::CameraView, x: i64, y: i64| {
        let k = view.intrinsics;
        x >= 0 && y >= 0 && (x as u32) < k.width && (y as u32) < k.height && view.silhouette.get(x as u32, y as u32) >= 0.5
    };
    for view in &views {
        let k = view.intrinsics;
        let pixel = |p: &Vector3<f64>| {
            let pr = view.project(p);
            assert!(pr.in_front);
            let (x, y) = k.pixel_at(pr.u, pr.v).expect("framed rigs see the whole tree");
            (x as i64, y as i64)
        };
        for p in shell_points(&tree, 1.0) {
            // on the outline the pixel center's own ray may just miss
            let (x, y) = pixel(&p);
            let near = (-1..=1).any(|dx| (-1..=1).any(|dy| fg(view, x + dx, y + dy)));
            assert!(near, "{preset:?}: surface point {p:?} projects to background at ({x}, {y})");
        }
        // half a radius inside the surface is several pixels from the outline
        for p in shell_points(&tree, 0.5) {
            let (x, y) = pixel(&p);
            assert!(fg(view, x, y), "{preset:?}: interior point {p:?} projects to background at ({x}, {y})");
        }
    }
}

#[test]
fn surface_points_project_into_the_silhouette() {
    check_render_projection(RigPreset::Desk);
}

#[test]
fn distorted_rig_renders_consistently() {
    check_render_projection(RigPreset::DeskDistorted);
}

fn rigid() -> impl Strategy<Value = HomogeneousTransform> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        -3.1f64..3.1,
        prop::array::uniform3(-1000.0f64..1000.0),
    )
        .prop_filter("nonzero axis", |(a, _, _)| a.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        .prop_map(|(a, angle, t)| HomogeneousTransform::from_axis_angle(Vector3::from(a), angle, Vector3::from(t)))
}

fn moved(tree: &SyntheticTree, t: &HomogeneousTransform) -> SyntheticTree {
    let m = |p: [f64; 3]| {
        let q = t.apply(&Vector3::from(p));
        [q.x, q.y, q.z]
    };
    SyntheticTree {
        branches: tree
            .branches
            .iter()
            .map(|c| Capsule {
                start: m(c.start),
                end: m(c.end),
                ..*c
            })
            .collect(),
    }
}

proptest! {
    #[test]
    fn ground_truth_ignores_rigid_motion(t in rigid()) {
        let tree = SyntheticTree::tree_a();
        let (a, b) = (ground_truth(&tree), ground_truth(&moved(&tree, &t)));
        for (x, y) in a.branches.iter().zip(&b.branches) {
            prop_assert_eq!(x.diameter_mm, y.diameter_mm);
            prop_assert!((x.length_mm - y.length_mm).abs() <= 1e-9);
            match (x.angle_deg, y.angle_deg) {
                (Some(p), Some(q)) => prop_assert!((p - q).abs() <= 1e-6),
                (p, q) => prop_assert_eq!(p, q),
            }
        }
    }
}

#[test]
fn ground_truth_examples() {
    let c = SyntheticTree::new(vec![Capsule::new([0.0; 3], [0.0, 0.0, 300.0], 15.0, None)]).unwrap();
    let gt = ground_truth(&c);
    assert_eq!(gt.branches[0].length_mm, 300.0);
    assert_eq!(gt.branches[0].diameter_mm, Some(30.0));
    assert_eq!(gt.branches[0].angle_deg, None);
    let t = SyntheticTree::trunk_with_children(30.0, 300.0, &[(20.0, 60.0, 0.0, 200.0)]);
    assert!((ground_truth(&t).branches[1].angle_deg.unwrap() - 60.0).abs() < 1e-9);
}

fn diameter_mae(perturb: Option<PerturbConfig>) -> f64 {
    let dir = tempfile::tempdir().unwrap();
    let mut scene = SceneFile::from_preset("tree-a", RigPreset::Desk, 0).unwrap();
    scene.perturb = perturb;
    let e = export_scene(&scene, dir.path(), false).unwrap();
    let out = run_pipeline(&PipelineConfig::load(&e.config_path).unwrap()).unwrap();
    let cmp = out.traits.unwrap().comparison.unwrap();
    assert_eq!(cmp.matched.len(), 5);
    cmp.diameter.mae
}

#[test]
fn perturbation_costs_under_a_millimeter_of_diameter() {
    let clean = diameter_mae(None);
    let damaged = diameter_mae(Some(PerturbConfig::default()));
    assert!(damaged - clean < 1.0, "{clean:.3} -> {damaged:.3}");
}
