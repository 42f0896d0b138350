use arborscan::edt::distance_transform;
use arborscan::graph::{build_graph, UpAxis};
use arborscan::grid::{Aabb, VoxelGrid};
use arborscan::skeleton::{skeletonize, SkeletonConfig};
use arborscan::synthetic::SyntheticTree;
use arborscan::traits::{
    angle_between, branch_angle, branch_diameter, branch_length, junction_location, measure_all, Offset, TraitConfig,
};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 24;

fn grid(vs: f64) -> VoxelGrid {
    VoxelGrid::new(Vector3::zeros(), vs, [N, N, N]).unwrap()
}

/// Random 26-connected walk of `len` voxels starting at the grid center.
fn walk(rng: &mut ChaCha8Rng, g: &VoxelGrid, len: usize) -> Vec<usize> {
    let mut c = [N as i64 / 2; 3];
    let mut out = vec![g.index(c[0] as usize, c[1] as usize, c[2] as usize)];
    while out.len() < len {
        let step: Vec<i64> = (0..3).map(|_| rng.gen_range(-1..=1)).collect();
        if step.iter().all(|&s| s == 0) {
            continue;
        }
        let n: Vec<i64> = (0..3).map(|k| (c[k] + step[k]).clamp(0, N as i64 - 1)).collect();
        if n[..] == c[..] {
            continue;
        }
        c = [n[0], n[1], n[2]];
        out.push(g.index(c[0] as usize, c[1] as usize, c[2] as usize));
    }
    out
}

fn chord(g: &VoxelGrid, p: &[usize]) -> f64 {
    (g.center(p[0]) - g.center(p[p.len() - 1])).norm()
}

/// Independent length: count axis, face-diagonal and body-diagonal steps.
fn step_count_length(g: &VoxelGrid, p: &[usize]) -> f64 {
    let mut counts = [0usize; 4];
    for w in p.windows(2) {
        let (a, b) = (g.coords(w[0]), g.coords(w[1]));
        counts[(0..3).filter(|&k| a[k] != b[k]).count()] += 1;
    }
    g.voxel_size() * (counts[1] as f64 + counts[2] as f64 * 2f64.sqrt() + counts[3] as f64 * 3f64.sqrt())
}

proptest! {
    #[test]
    fn length_properties(seed in any::<u64>(), len in 2usize..80) {
        let g = grid(3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = walk(&mut rng, &g, len);
        let l = branch_length(&p, &g);
        let mut r = p.clone();
        r.reverse();
        prop_assert!((branch_length(&r, &g) - l).abs() <= 1e-9);
        prop_assert!(l + 1e-9 >= chord(&g, &p));
        prop_assert!((l - step_count_length(&g, &p)).abs() <= 1e-9 * l.max(1.0));
    }

    #[test]
    fn angle_symmetric_and_rotation_invariant(
        a in prop::array::uniform3(-10.0f64..10.0),
        b in prop::array::uniform3(-10.0f64..10.0),
        axis in prop::array::uniform3(-1.0f64..1.0),
        turn in -3.1f64..3.1,
    ) {
        let (a, b) = (Vector3::from(a), Vector3::from(b));
        prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3 && Vector3::from(axis).norm() > 1e-3);
        let ab = angle_between(&a, &b);
        prop_assert!((0.0..=180.0).contains(&ab));
        prop_assert_eq!(ab, angle_between(&b, &a));
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(axis)), turn);
        prop_assert!((angle_between(&(rot * a), &(rot * b)) - ab).abs() <= 1e-6);
    }

    #[test]
    fn lattice_rotation_keeps_branch_angle(seed in any::<u64>(), perm in 0usize..6, flips in 0usize..8) {
        // voxel paths rotated exactly by an axis permutation with flips
        let g = grid(3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parent = walk(&mut rng, &g, 30);
        let mut child = walk(&mut rng, &g, 30);
        child[0] = parent[0];
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let map = |v: usize| {
            let c = g.coords(v);
            let mut r = [0usize; 3];
            for k in 0..3 {
                let x = c[perms[perm][k]];
                r[k] = if flips >> k & 1 == 1 { N - 1 - x } else { x };
            }
            g.index(r[0], r[1], r[2])
        };
        let rp: Vec<usize> = parent.iter().map(|&v| map(v)).collect();
        let rc: Vec<usize> = child.iter().map(|&v| map(v)).collect();
        let before = branch_angle(&parent, &child, parent[0], &g, 15.0);
        let after = branch_angle(&rp, &rc, rp[0], &g, 15.0);
        match (before, after) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= 1e-6, "{x} vs {y}"),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn labels_outside_the_window_do_not_matter(seed in any::<u64>(), n_d in 1usize..8) {
        let mut g = grid(3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = walk(&mut rng, &g, 40);
        for &v in &p {
            g.set_occupied(v, true);
        }
        let sq: Vec<u32> = (0..g.len()).map(|_| rng.gen_range(1..16)).collect();
        g.set_squared_labels(sq.clone());
        let Ok(before) = branch_diameter(&p, &g, n_d, Offset::JunctionSphere) else {
            return Ok(());
        };
        // everything up to the end of the window fixes the estimate
        let window_end = before.offset_index + before.samples;
        let fixed: std::collections::BTreeSet<usize> = p[..window_end].iter().copied().collect();
        let free: Vec<usize> = (0..g.len()).filter(|i| !fixed.contains(i)).collect();
        let mut shuffled: Vec<u32> = free.iter().map(|&i| sq[i]).collect();
        shuffled.shuffle(&mut rng);
        let mut sq2 = sq;
        for (&i, &l) in free.iter().zip(&shuffled) {
            sq2[i] = l;
        }
        g.set_squared_labels(sq2);
        prop_assert_eq!(branch_diameter(&p, &g, n_d, Offset::JunctionSphere).unwrap(), before);
    }

    #[test]
    fn scaling_the_grid(seed in any::<u64>(), k in 0.25f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut g, mut h) = (grid(3.0), grid(3.0 * k));
        let parent = walk(&mut rng, &g, 30);
        let mut child = walk(&mut rng, &g, 30);
        child[0] = parent[0];
        let sq: Vec<u32> = (0..g.len()).map(|_| rng.gen_range(1..10)).collect();
        g.set_squared_labels(sq.clone());
        h.set_squared_labels(sq);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(1.0);
        prop_assert!(close(branch_length(&child, &h), k * branch_length(&child, &g)));
        if let (Ok(a), Ok(b)) = (
            branch_diameter(&child, &g, 5, Offset::JunctionSphere),
            branch_diameter(&child, &h, 5, Offset::JunctionSphere),
        ) {
            prop_assert_eq!(a.offset_index, b.offset_index);
            prop_assert!(close(b.diameter_mm, k * a.diameter_mm));
        }
        // 13 mm = 13/3 voxels is never exactly a lattice distance, so no ties
        let a = branch_angle(&parent, &child, parent[0], &g, 13.0);
        let b = branch_angle(&parent, &child, parent[0], &h, 13.0 * k);
        match (a, b) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= 1e-6, "{x} vs {y}"),
            (x, y) => prop_assert_eq!(x, y),
        }
    }
}

#[test]
fn length_examples() {
    let g = VoxelGrid::new(Vector3::zeros(), 3.0, [110, 2, 2]).unwrap();
    let straight: Vec<usize> = (0..101).map(|x| g.index(x, 0, 0)).collect();
    assert!((branch_length(&straight, &g) - 300.0).abs() < 1e-9);
    let diag = [g.index(0, 0, 0), g.index(1, 1, 1)];
    assert!((branch_length(&diag, &g) - 5.196).abs() < 1e-3);
    // a staircase is never shorter than its chord
    let stairs: Vec<usize> = (0..40).map(|i| g.index(i / 2 + i % 2, i / 2 % 2, 0)).collect();
    assert!(branch_length(&stairs, &g) >= chord(&g, &stairs));
}

#[test]
fn junction_location_is_the_voxel_center() {
    let mut g = VoxelGrid::new(Vector3::zeros(), 3.0, [4, 4, 4]).unwrap();
    let a = [g.index(0, 0, 0), g.index(1, 0, 1), g.index(1, 0, 2)];
    for &v in &a {
        g.set_occupied(v, true);
    }
    let graph = build_graph(
        &[arborscan::skeleton::SkeletonSegment::from_path_unchecked(a.to_vec())],
        &g,
        UpAxis::PosZ,
    )
    .unwrap();
    assert_eq!(junction_location(&graph, 0, &g), [1.5, 1.5, 1.5]);
    let o = Vector3::new(-10.0, 4.0, 7.5);
    let h = VoxelGrid::new(o, 2.0, [5, 6, 7]).unwrap();
    let c = h.center(h.index(3, 1, 4));
    assert_eq!([c.x, c.y, c.z], [o.x + 3.5 * 2.0, o.y + 1.5 * 2.0, o.z + 4.5 * 2.0]);
}

#[test]
fn y_junction_and_traits() {
    let vs = 3.0;
    for half_angle in [45.0, 60.0] {
        let tree = SyntheticTree::y_shape(15.0, 300.0, 250.0, half_angle);
        let region = Aabb::new([-270.0, -36.0, -36.0], [270.0, 36.0, 600.0]);
        let g = distance_transform(&tree.voxelize(&region, vs).unwrap());
        let skel = skeletonize(&g, &SkeletonConfig::default()).unwrap();
        let graph = build_graph(&skel.segments, &g, UpAxis::PosZ).unwrap();
        let report = measure_all(&graph, &g, &TraitConfig::default());
        assert_eq!(report.branches.len(), 3);
        let angles: Vec<f64> = report.branches.iter().filter_map(|b| b.angle_deg).collect();
        assert_eq!(angles.len(), 2, "{half_angle}°");
        for a in angles {
            assert!((a - half_angle).abs() <= 10.0, "{a} vs {half_angle}");
        }
        let junction = Vector3::new(0.0, 0.0, 300.0);
        for b in report.branches.iter().filter(|b| b.parent.is_some()) {
            let d = (Vector3::from(b.junction) - junction).norm();
            assert!(d <= 3f64.sqrt() * vs, "{half_angle}°: junction {d:.2} mm off");
            assert!((b.diameter_mm.unwrap() - 30.0).abs() <= 3.0, "{:?}", b.diameter_mm);
        }
    }
}
