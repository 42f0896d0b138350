#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use arborscan::graph::TreeGraph;
use arborscan::grid::VoxelGrid;
use arborscan::skeleton::SkeletonSegment;
use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_grid(rng: &mut ChaCha8Rng, n: usize, fill: f64) -> VoxelGrid {
    let mut g = VoxelGrid::new(Vector3::zeros(), 3.0, [n, n, n]).unwrap();
    for i in 0..g.len() {
        if rng.gen_bool(fill) {
            g.set_occupied(i, true);
        }
    }
    g
}

/// All-pairs squared distance to the nearest empty voxel, where everything
/// outside the grid is empty.
pub fn brute_force(g: &VoxelGrid) -> Vec<u32> {
    let dims = g.dims();
    let empty: Vec<[i64; 3]> = (0..g.len())
        .filter(|&i| !g.is_occupied(i))
        .map(|i| g.coords(i).map(|c| c as i64))
        .collect();
    (0..g.len())
        .map(|i| {
            if !g.is_occupied(i) {
                return 0;
            }
            let c = g.coords(i).map(|c| c as i64);
            let mut best = (0..3)
                .map(|a| (c[a] + 1).min(dims[a] as i64 - c[a]).pow(2))
                .min()
                .unwrap();
            for e in &empty {
                let d = (0..3).map(|a| (c[a] - e[a]).pow(2)).sum::<i64>();
                best = best.min(d);
            }
            best as u32
        })
        .collect()
}

pub const N: usize = 32;

pub fn grid() -> VoxelGrid {
    VoxelGrid::new(Vector3::zeros(), 3.0, [N, N, N]).unwrap()
}

/// 26-connected raster line from `a` to `b`, both included.
pub fn line(g: &VoxelGrid, a: [usize; 3], b: [usize; 3]) -> Vec<usize> {
    let steps = (0..3).map(|k| a[k].abs_diff(b[k])).max().unwrap();
    let mut out: Vec<usize> = (0..=steps)
        .map(|i| {
            let t = i as f64 / steps as f64;
            let c: Vec<usize> = (0..3)
                .map(|k| (a[k] as f64 + t * (b[k] as f64 - a[k] as f64)).round() as usize)
                .collect();
            g.index(c[0], c[1], c[2])
        })
        .collect();
    out.dedup();
    out
}

/// Random tree over distinct voxels: vertex `i > 0` hangs from a random
/// earlier vertex; segment orientation is random.
pub fn random_tree(rng: &mut ChaCha8Rng, g: &VoxelGrid, n: usize) -> Vec<SkeletonSegment> {
    let mut pts: BTreeSet<[usize; 3]> = BTreeSet::new();
    let mut order = Vec::new();
    while order.len() < n {
        let p = [rng.gen_range(0..N), rng.gen_range(0..N), rng.gen_range(0..N)];
        if pts.insert(p) {
            order.push(p);
        }
    }
    (1..n)
        .map(|i| {
            let j = rng.gen_range(0..i);
            let mut p = line(g, order[j], order[i]);
            if rng.gen_bool(0.5) {
                p.reverse();
            }
            SkeletonSegment::from_path_unchecked(p)
        })
        .collect()
}

pub type EdgeKey = (usize, usize, Vec<usize>);

pub fn vertex_set(graph: &TreeGraph) -> BTreeSet<usize> {
    graph.vertices.iter().map(|v| v.voxel).collect()
}

pub fn edge_set(graph: &TreeGraph) -> BTreeSet<EdgeKey> {
    graph
        .edges
        .iter()
        .map(|e| (graph.vertices[e.from].voxel, graph.vertices[e.to].voxel, e.path.clone()))
        .collect()
}

/// Vertices reached from the root along directed edges, by plain BFS.
pub fn reached(graph: &TreeGraph) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([graph.root]);
    let mut queue = VecDeque::from([graph.root]);
    while let Some(v) = queue.pop_front() {
        for e in graph.edges.iter().filter(|e| e.from == v) {
            if seen.insert(e.to) {
                queue.push_back(e.to);
            }
        }
    }
    seen
}

pub fn lowest_endpoint(g: &VoxelGrid, segments: &[SkeletonSegment]) -> usize {
    segments
        .iter()
        .flat_map(|s| [s.endpoint_a(), s.endpoint_b()])
        .min_by_key(|&v| {
            let [x, y, z] = g.coords(v);
            (z, x, y)
        })
        .unwrap()
}

/// Each input segment is used by exactly one edge (either direction) or one
/// remainder entry.
pub fn assert_partition(graph: &TreeGraph, segments: &[SkeletonSegment]) {
    let mut used: Vec<Vec<usize>> = graph.edges.iter().map(|e| e.path.clone()).collect();
    used.extend(graph.remainder.iter().map(|r| r.path.clone()));
    let norm = |p: &[usize]| {
        let mut p = p.to_vec();
        if p[0] > p[p.len() - 1] {
            p.reverse();
        }
        p
    };
    let mut got: Vec<Vec<usize>> = used.iter().map(|p| norm(p)).collect();
    let mut want: Vec<Vec<usize>> = segments.iter().map(|s| norm(s.path())).collect();
    got.sort();
    want.sort();
    assert_eq!(got, want);
}

pub fn assert_tree_invariants(g: &VoxelGrid, graph: &TreeGraph, segments: &[SkeletonSegment]) {
    let nv = graph.vertices.len();
    assert_eq!(graph.edges.len() + 1, nv, "|E| = |V| - 1");
    assert_eq!(reached(graph).len(), nv, "all vertices reachable");
    assert_eq!(graph.vertices[graph.root].voxel, lowest_endpoint(g, segments));
    for e in &graph.edges {
        assert_eq!(e.path[0], graph.vertices[e.from].voxel);
        assert_eq!(*e.path.last().unwrap(), graph.vertices[e.to].voxel);
    }
    // tips are exactly the leaves of the undirected segment set, minus the root
    let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
    for s in segments {
        *degree.entry(s.endpoint_a()).or_default() += 1;
        *degree.entry(s.endpoint_b()).or_default() += 1;
    }
    for v in 0..nv {
        let out = graph.edges.iter().filter(|e| e.from == v).count();
        let leaf = degree[&graph.vertices[v].voxel] == 1 && v != graph.root;
        assert_eq!(out == 0, leaf, "vertex {v}");
        assert_eq!(graph.tips().contains(&v), out == 0);
    }
    assert_eq!(vertex_set(graph), degree.keys().copied().collect());
}

/// Adds `extra` segments between existing endpoints that are not already
/// joined, each closing a cycle.
pub fn add_cycles(rng: &mut ChaCha8Rng, g: &VoxelGrid, segments: &mut Vec<SkeletonSegment>, extra: usize) {
    let ends: Vec<usize> = segments
        .iter()
        .flat_map(|s| [s.endpoint_a(), s.endpoint_b()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pairs: BTreeSet<(usize, usize)> = segments
        .iter()
        .map(|s| (s.endpoint_a().min(s.endpoint_b()), s.endpoint_a().max(s.endpoint_b())))
        .collect();
    let mut added = 0;
    while added < extra {
        let (a, b) = (*ends.choose(rng).unwrap(), *ends.choose(rng).unwrap());
        if a == b || pairs.contains(&(a.min(b), a.max(b))) {
            continue;
        }
        // a detour through a fresh voxel keeps it distinct from a tree edge
        let (ca, cb) = (g.coords(a), g.coords(b));
        let mid: Vec<usize> = (0..3).map(|k| (ca[k] + cb[k]) / 2).collect();
        let mut p = vec![a, g.index(mid[0], mid[1], mid[2]), b];
        p.dedup();
        segments.push(SkeletonSegment::from_path_unchecked(p));
        added += 1;
    }
}
