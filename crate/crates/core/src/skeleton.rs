//! Curve skeleton extraction from a labeled voxel grid.
//!
//! The skeleton is grown from a seed voxel. A single Dijkstra search over the
//! occupied voxels, with step costs that are cheap deep inside the volume and
//! expensive near its surface, yields a shortest-path tree. Paths are then
//! peeled off that tree: the geodesically farthest voxel not yet covered by
//! the skeleton is connected back to the skeleton, the voxels within
//! `coverage_radius_scale × label` of every new path voxel are marked covered,
//! and the process repeats until nothing is left uncovered. A path that joins
//! the skeleton in the middle of an existing segment splits it there.
//!
//! Afterwards short terminal spurs are pruned, junctions joined by a short
//! segment are merged, and tips are re-centered onto the local axis.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::grid::{VoxelGrid, NEIGHBORS_26};

const NONE: u32 = u32::MAX;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SkeletonError {
    #[error("grid has no occupied voxels")]
    EmptyGrid,
    #[error("grid has no distance labels; run the distance transform first")]
    MissingLabels,
    #[error("invalid skeleton configuration: {0}")]
    Config(String),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkeletonConfig {
    pub coverage_radius_scale: f64,
    /// mm; terminal segments shorter than this are pruned
    pub min_branch_length: f64,
    pub centering_exponent: f64,
    /// re-center tips onto the branch axis after pruning
    pub refine_tips: bool,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        Self {
            coverage_radius_scale: 1.5,
            min_branch_length: 20.0,
            centering_exponent: 2.0,
            refine_tips: true,
        }
    }
}

impl SkeletonConfig {
    pub fn validate(&self) -> Result<(), SkeletonError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.coverage_radius_scale) || !ok(self.centering_exponent) {
            return Err(SkeletonError::Config(
                "coverage_radius_scale and centering_exponent must be positive".into(),
            ));
        }
        if !(self.min_branch_length >= 0.0 && self.min_branch_length.is_finite()) {
            return Err(SkeletonError::Config("min_branch_length must be non-negative".into()));
        }
        Ok(())
    }
}

/// Ordered voxel path (linear grid indices) between two endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SkeletonSegment {
    path: Vec<usize>,
}

fn are_26_neighbors(grid: &VoxelGrid, a: usize, b: usize) -> bool {
    let (ca, cb) = (grid.coords(a), grid.coords(b));
    let mut same = true;
    for k in 0..3 {
        let d = ca[k].abs_diff(cb[k]);
        if d > 1 {
            return false;
        }
        same &= d == 0;
    }
    !same
}

impl SkeletonSegment {
    /// Checks the path against `grid`: at least two voxels, no repeats
    /// (which also rules out self-loops), consecutive voxels 26-adjacent and
    /// every voxel occupied.
    pub fn new(path: Vec<usize>, grid: &VoxelGrid) -> Result<Self, SkeletonError> {
        if path.len() < 2 {
            return Err(SkeletonError::InvalidSegment("path needs at least two voxels".into()));
        }
        let mut sorted = path.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(SkeletonError::InvalidSegment("path repeats a voxel".into()));
        }
        if let Some(&v) = path.iter().find(|&&v| v >= grid.len() || !grid.is_occupied(v)) {
            return Err(SkeletonError::InvalidSegment(format!("voxel {v} is not occupied")));
        }
        if path.windows(2).any(|w| !are_26_neighbors(grid, w[0], w[1])) {
            return Err(SkeletonError::InvalidSegment("consecutive voxels are not 26-neighbors".into()));
        }
        Ok(Self { path })
    }

    /// Builds a segment without grid checks. Paths must still have two or
    /// more voxels and distinct endpoints.
    pub fn from_path_unchecked(path: Vec<usize>) -> Self {
        debug_assert!(path.len() >= 2 && path[0] != path[path.len() - 1]);
        Self { path }
    }

    pub fn path(&self) -> &[usize] {
        &self.path
    }

    pub fn into_path(self) -> Vec<usize> {
        self.path
    }

    pub fn endpoint_a(&self) -> usize {
        self.path[0]
    }

    pub fn endpoint_b(&self) -> usize {
        self.path[self.path.len() - 1]
    }

    pub fn reversed(&self) -> Self {
        let mut p = self.path.clone();
        p.reverse();
        Self { path: p }
    }

    /// Sum of center-to-center distances along the path, mm.
    pub fn length_mm(&self, grid: &VoxelGrid) -> f64 {
        path_length(grid, &self.path)
    }
}

pub(crate) fn path_length(grid: &VoxelGrid, path: &[usize]) -> f64 {
    path.windows(2)
        .map(|w| (grid.center(w[0]) - grid.center(w[1])).norm())
        .sum()
}

/// Output of [`skeletonize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub segments: Vec<SkeletonSegment>,
    pub seed: usize,
    /// occupied voxels outside the largest connected component
    pub dropped_voxels: usize,
    pub pruned_segments: usize,
}

/// Occupied voxels of the largest 26-connected component (sorted) and the
/// number of occupied voxels outside it. Ties go to the component holding the
/// smallest voxel index.
pub fn largest_component(grid: &VoxelGrid) -> (Vec<usize>, usize) {
    let total = grid.count_occupied();
    let mut comp = vec![NONE; grid.len()];
    let mut best: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();
    let mut next_id = 0u32;
    for start in grid.occupied_indices() {
        if comp[start] != NONE {
            continue;
        }
        let mut members = vec![start];
        comp[start] = next_id;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            let c = grid.coords(v);
            for off in NEIGHBORS_26 {
                if let Some(n) = grid.offset_index(c, off) {
                    if comp[n] == NONE && grid.is_occupied(n) {
                        comp[n] = next_id;
                        members.push(n);
                        queue.push_back(n);
                    }
                }
            }
        }
        if members.len() > best.len() {
            best = members;
        }
        next_id += 1;
    }
    best.sort_unstable();
    let dropped = total - best.len();
    (best, dropped)
}

/// Lowest-z occupied voxel of the largest component; ties broken by lowest
/// x, then lowest y.
pub fn seed_voxel(grid: &VoxelGrid) -> Result<usize, SkeletonError> {
    let (comp, _) = largest_component(grid);
    comp.into_iter()
        .min_by_key(|&i| {
            let [x, y, z] = grid.coords(i);
            (z, x, y)
        })
        .ok_or(SkeletonError::EmptyGrid)
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    cost: f64,
    id: u32,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, then on id
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Working state over the voxels of one connected component, addressed by
/// compact ids.
struct Component<'a> {
    grid: &'a VoxelGrid,
    voxels: Vec<usize>,
    id_of: Vec<u32>,
}

impl<'a> Component<'a> {
    fn new(grid: &'a VoxelGrid, voxels: Vec<usize>) -> Self {
        let mut id_of = vec![NONE; grid.len()];
        for (k, &v) in voxels.iter().enumerate() {
            id_of[v] = k as u32;
        }
        Self { grid, voxels, id_of }
    }

    fn label(&self, id: u32) -> f64 {
        self.grid.label(self.voxels[id as usize])
    }

    fn coords(&self, id: u32) -> [usize; 3] {
        self.grid.coords(self.voxels[id as usize])
    }

    fn neighbors(&self, id: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        let c = self.coords(id);
        NEIGHBORS_26.iter().filter_map(move |off| {
            let n = self.grid.offset_index(c, *off)?;
            let nid = self.id_of[n];
            if nid == NONE {
                return None;
            }
            let step = ((off[0] * off[0] + off[1] * off[1] + off[2] * off[2]) as f64).sqrt();
            Some((nid, step))
        })
    }

    /// Ids of component voxels within `radius` (voxel units) of `id`.
    fn ball(&self, id: u32, radius: f64, mut f: impl FnMut(u32)) {
        let c = self.coords(id).map(|v| v as i64);
        let r = radius.floor() as i64;
        let r2 = radius * radius;
        let d = self.grid.dims().map(|v| v as i64);
        for z in (c[2] - r).max(0)..=(c[2] + r).min(d[2] - 1) {
            for y in (c[1] - r).max(0)..=(c[1] + r).min(d[1] - 1) {
                for x in (c[0] - r).max(0)..=(c[0] + r).min(d[0] - 1) {
                    let dist2 = ((x - c[0]).pow(2) + (y - c[1]).pow(2) + (z - c[2]).pow(2)) as f64;
                    if dist2 > r2 {
                        continue;
                    }
                    let nid = self.id_of[self.grid.index(x as usize, y as usize, z as usize)];
                    if nid != NONE {
                        f(nid);
                    }
                }
            }
        }
    }
}

/// Shortest-path tree from `source` with centering-weighted step costs.
/// Returns (predecessor, Euclidean path length in voxel units) per id.
fn shortest_path_tree(comp: &Component<'_>, source: u32, exponent: f64) -> (Vec<u32>, Vec<f64>) {
    let n = comp.voxels.len();
    let mut cost = vec![f64::INFINITY; n];
    let mut pred = vec![NONE; n];
    let mut arc = vec![0.0; n];
    let mut done = vec![false; n];
    let weight: Vec<f64> = (0..n as u32).map(|i| (1.0 + comp.label(i)).powf(exponent).recip()).collect();
    let mut heap = BinaryHeap::new();
    cost[source as usize] = 0.0;
    heap.push(HeapItem { cost: 0.0, id: source });
    while let Some(HeapItem { cost: c, id }) = heap.pop() {
        if done[id as usize] {
            continue;
        }
        done[id as usize] = true;
        for (nid, step) in comp.neighbors(id) {
            let nc = c + step * weight[nid as usize];
            if nc < cost[nid as usize] {
                cost[nid as usize] = nc;
                pred[nid as usize] = id;
                arc[nid as usize] = arc[id as usize] + step;
                heap.push(HeapItem { cost: nc, id: nid });
            }
        }
    }
    (pred, arc)
}

/// Skeleton as segments of compact ids; segments share only endpoints.
struct Builder<'a> {
    comp: Component<'a>,
    segments: Vec<Vec<u32>>,
    in_skel: Vec<bool>,
}

impl Builder<'_> {
    fn degree_map(&self) -> BTreeMap<u32, usize> {
        let mut deg = BTreeMap::new();
        for s in &self.segments {
            *deg.entry(s[0]).or_insert(0) += 1;
            *deg.entry(*s.last().unwrap()).or_insert(0) += 1;
        }
        deg
    }

    fn length(&self, seg: &[u32]) -> f64 {
        let g = self.comp.grid;
        seg.windows(2)
            .map(|w| (g.center(self.comp.voxels[w[0] as usize]) - g.center(self.comp.voxels[w[1] as usize])).norm())
            .sum()
    }

    /// Attaches `path` (skeleton voxel first) to the skeleton, splitting the
    /// segment it lands on if it lands mid-segment.
    fn attach(&mut self, path: Vec<u32>) {
        let joint = path[0];
        let hit = self
            .segments
            .iter()
            .enumerate()
            .find_map(|(k, s)| s[1..s.len() - 1].iter().position(|&v| v == joint).map(|p| (k, p + 1)));
        if let Some((k, p)) = hit {
            let tail = self.segments[k].split_off(p);
            self.segments[k].push(tail[0]);
            self.segments.push(tail);
        }
        for &v in &path {
            self.in_skel[v as usize] = true;
        }
        self.segments.push(path);
    }

    /// Shortest Euclidean route from `start` to the nearest skeleton voxel,
    /// avoiding `exclude`. Starts with `start`, ends on the skeleton.
    fn link_to_skeleton(&self, start: u32, exclude: &[u32]) -> Vec<u32> {
        let mut dist: BTreeMap<u32, f64> = BTreeMap::new();
        let mut prev: BTreeMap<u32, u32> = BTreeMap::new();
        let blocked: std::collections::BTreeSet<u32> = exclude.iter().copied().filter(|&v| v != start).collect();
        let mut heap = BinaryHeap::new();
        dist.insert(start, 0.0);
        heap.push(HeapItem { cost: 0.0, id: start });
        while let Some(HeapItem { cost, id }) = heap.pop() {
            if cost > dist[&id] {
                continue;
            }
            if self.in_skel[id as usize] {
                let mut route = vec![id];
                let mut cur = id;
                while let Some(&p) = prev.get(&cur) {
                    route.push(p);
                    cur = p;
                }
                route.reverse();
                return route;
            }
            for (nid, step) in self.comp.neighbors(id) {
                if blocked.contains(&nid) {
                    continue;
                }
                let nc = cost + step;
                if dist.get(&nid).is_none_or(|&d| nc < d) {
                    dist.insert(nid, nc);
                    prev.insert(nid, id);
                    heap.push(HeapItem { cost: nc, id: nid });
                }
            }
        }
        unreachable!("the skeleton lies in the same connected component")
    }

    /// Joins the two segments meeting at every degree-2 vertex.
    fn merge_degree_two(&mut self) {
        loop {
            let deg = self.degree_map();
            let Some((&v, _)) = deg.iter().find(|(_, &d)| d == 2) else {
                return;
            };
            let idx: Vec<usize> = self
                .segments
                .iter()
                .enumerate()
                .filter(|(_, s)| s[0] == v || *s.last().unwrap() == v)
                .map(|(k, _)| k)
                .collect();
            if idx.len() != 2 {
                // a closed loop through v; leave it
                return;
            }
            let mut b = self.segments.remove(idx[1]);
            let mut a = self.segments.remove(idx[0]);
            if *a.last().unwrap() != v {
                a.reverse();
            }
            if b[0] != v {
                b.reverse();
            }
            if a[0] == *b.last().unwrap() {
                // the two segments form a cycle; keep them apart
                self.segments.push(a);
                self.segments.push(b);
                return;
            }
            a.extend_from_slice(&b[1..]);
            self.segments.push(a);
        }
    }

    /// Removes the shortest terminal segment below `min_len`. Returns true if
    /// one was removed.
    fn prune_one(&mut self, min_len: f64) -> bool {
        let deg = self.degree_map();
        let mut best: Option<(f64, usize)> = None;
        for (k, s) in self.segments.iter().enumerate() {
            let (da, db) = (deg[&s[0]], deg[s.last().unwrap()]);
            if da != 1 && db != 1 {
                continue;
            }
            let len = self.length(s);
            if len < min_len && best.is_none_or(|(l, _)| len < l) {
                best = Some((len, k));
            }
        }
        let Some((_, k)) = best else {
            return false;
        };
        let removed = self.segments.remove(k);
        let deg_after = self.degree_map();
        for (i, &v) in removed.iter().enumerate() {
            let is_end = i == 0 || i == removed.len() - 1;
            // keep the junction voxel it hung from
            if !(is_end && deg_after.contains_key(&v)) {
                self.in_skel[v as usize] = false;
            }
        }
        true
    }

    /// Collapses the shortest segment below `min_len` whose endpoints are
    /// both junctions. The endpoint with the larger label survives; segments
    /// at the other endpoint are extended through the collapsed path.
    fn contract_one(&mut self, min_len: f64) -> bool {
        let deg = self.degree_map();
        let mut best: Option<(f64, usize)> = None;
        for (k, s) in self.segments.iter().enumerate() {
            if deg[&s[0]] < 3 || deg[s.last().unwrap()] < 3 {
                continue;
            }
            let len = self.length(s);
            if len < min_len && best.is_none_or(|(l, _)| len < l) {
                best = Some((len, k));
            }
        }
        let Some((_, k)) = best else {
            return false;
        };
        let mut short = self.segments.remove(k);
        let (a, b) = (short[0], *short.last().unwrap());
        let keep_a = match self.comp.label(a).total_cmp(&self.comp.label(b)) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => self.comp.voxels[a as usize] < self.comp.voxels[b as usize],
        };
        if !keep_a {
            short.reverse();
        }
        let gone = *short.last().unwrap();
        let keep = short[0];
        for &v in &short[1..] {
            self.in_skel[v as usize] = false;
        }
        for k in 0..self.segments.len() {
            let s = &self.segments[k];
            if s[0] != gone && *s.last().unwrap() != gone {
                continue;
            }
            let mut s = std::mem::take(&mut self.segments[k]);
            if s[0] != gone {
                s.reverse();
            }
            if *s.last().unwrap() == keep {
                // would close a loop; leave this one as is
                self.in_skel[gone as usize] = true;
                self.segments[k] = s;
                continue;
            }
            // each redirected segment gets its own route to `keep`, so that
            // segments still meet only at the surviving junction
            let joined = match self.route(s[1], keep) {
                Some(mut r) => {
                    r.reverse();
                    r.extend_from_slice(&s[2..]);
                    r
                }
                None => {
                    let mut j = short.clone();
                    j.extend_from_slice(&s[1..]);
                    j
                }
            };
            for &v in &joined {
                self.in_skel[v as usize] = true;
            }
            self.segments[k] = joined;
        }
        true
    }

    /// Shortest route from `from` to `to` through voxels not on the skeleton
    /// (apart from `to`). Starts with `from`, ends with `to`.
    fn route(&self, from: u32, to: u32) -> Option<Vec<u32>> {
        let mut dist: BTreeMap<u32, f64> = BTreeMap::new();
        let mut prev: BTreeMap<u32, u32> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert(from, 0.0);
        heap.push(HeapItem { cost: 0.0, id: from });
        while let Some(HeapItem { cost, id }) = heap.pop() {
            if cost > dist[&id] {
                continue;
            }
            if id == to {
                let mut route = vec![to];
                let mut cur = to;
                while let Some(&p) = prev.get(&cur) {
                    route.push(p);
                    cur = p;
                }
                route.reverse();
                return Some(route);
            }
            for (nid, step) in self.comp.neighbors(id) {
                if nid != to && self.in_skel[nid as usize] {
                    continue;
                }
                let nc = cost + step;
                if dist.get(&nid).is_none_or(|&d| nc < d) {
                    dist.insert(nid, nc);
                    prev.insert(nid, id);
                    heap.push(HeapItem { cost: nc, id: nid });
                }
            }
        }
        None
    }

    /// Re-centers a tip: the tail of the path that already lies inside the
    /// coverage ball of an earlier path voxel is cut, the path is extended
    /// along the local branch direction until it leaves the volume, and then
    /// pulled back to the end of the medial axis.
    fn refine_tip(&mut self, k: usize, tip_at_end: bool, scale: f64) {
        let mut path = std::mem::take(&mut self.segments[k]);
        if !tip_at_end {
            path.reverse();
        }
        let pos = |id: u32| {
            let c = self.comp.coords(id);
            Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64)
        };
        let tip = pos(*path.last().unwrap());
        let m = path.len() - 1;
        let cut = (1..=m)
            .find(|&i| (pos(path[i]) - tip).norm() <= scale * self.comp.label(path[i]))
            .unwrap_or(m);
        for &v in &path[cut + 1..] {
            self.in_skel[v as usize] = false;
        }
        path.truncate(cut + 1);

        let end = pos(path[cut]);
        let window = (2.0 * self.comp.label(path[cut])).ceil().max(3.0) as usize;
        let back = pos(path[cut.saturating_sub(window)]);
        let dir = end - back;
        if dir.norm() > 1e-9 {
            let dir = dir.normalize() * 0.5;
            let g = self.comp.grid;
            let dims = g.dims();
            let mut p = end;
            let mut last = path[cut];
            for _ in 0..4 * (dims[0] + dims[1] + dims[2]) {
                p += dir;
                let r = [p.x.round(), p.y.round(), p.z.round()];
                if (0..3).any(|a| r[a] < 0.0 || r[a] >= dims[a] as f64) {
                    break;
                }
                let idx = g.index(r[0] as usize, r[1] as usize, r[2] as usize);
                let id = self.comp.id_of[idx];
                if id == last {
                    continue;
                }
                if id == NONE || self.in_skel[id as usize] {
                    break;
                }
                path.push(id);
                self.in_skel[id as usize] = true;
                last = id;
            }
        }
        // a rounded end's medial axis stops where the maximal ball still
        // reaches the apex: retract to the innermost such voxel
        let apex = pos(*path.last().unwrap());
        let mut keep = path.len() - 1;
        while keep > 1 {
            let prev = path[keep - 1];
            if (pos(prev) - apex).norm() > self.comp.label(prev) + 0.5 {
                break;
            }
            keep -= 1;
        }
        for &v in &path[keep + 1..] {
            self.in_skel[v as usize] = false;
        }
        path.truncate(keep + 1);

        if !tip_at_end {
            path.reverse();
        }
        self.segments[k] = path;
    }

    fn refine_tips(&mut self, scale: f64) {
        let deg = self.degree_map();
        for k in 0..self.segments.len() {
            let s = &self.segments[k];
            let (a, b) = (s[0], *s.last().unwrap());
            if deg[&b] == 1 {
                self.refine_tip(k, true, scale);
            }
            if deg[&a] == 1 && self.segments[k].len() >= 2 {
                self.refine_tip(k, false, scale);
            }
        }
        // a tip may have been cut back onto its own junction
        self.segments.retain(|s| s.len() >= 2);
    }

    fn simplify(&mut self, min_len: f64) -> usize {
        let mut pruned = 0;
        loop {
            self.merge_degree_two();
            if self.prune_one(min_len) {
                pruned += 1;
                continue;
            }
            if self.contract_one(min_len) {
                continue;
            }
            return pruned;
        }
    }
}

/// Extracts the curve skeleton of the largest connected component of `grid`.
pub fn skeletonize(grid: &VoxelGrid, cfg: &SkeletonConfig) -> Result<Skeleton, SkeletonError> {
    cfg.validate()?;
    if !grid.has_labels() {
        return Err(SkeletonError::MissingLabels);
    }
    let (voxels, dropped) = largest_component(grid);
    if voxels.is_empty() {
        return Err(SkeletonError::EmptyGrid);
    }
    if dropped > 0 {
        log::info!("skeleton: dropped {dropped} voxels outside the largest component");
    }
    let seed_voxel = seed_voxel(grid)?;
    let comp = Component::new(grid, voxels);
    let n = comp.voxels.len();
    let seed = comp.id_of[seed_voxel];
    let (pred, arc) = shortest_path_tree(&comp, seed, cfg.centering_exponent);

    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&a, &b| arc[b as usize].total_cmp(&arc[a as usize]).then(a.cmp(&b)));

    let mut b = Builder {
        comp,
        segments: Vec::new(),
        in_skel: vec![false; n],
    };
    let mut covered = vec![false; n];
    let scale = cfg.coverage_radius_scale;
    let cover = |b: &Builder<'_>, covered: &mut Vec<bool>, id: u32| {
        covered[id as usize] = true;
        b.comp.ball(id, scale * b.comp.label(id), |v| covered[v as usize] = true);
    };
    let mut near = vec![false; n];
    b.in_skel[seed as usize] = true;
    cover(&b, &mut covered, seed);
    b.comp.ball(seed, b.comp.label(seed), |u| near[u as usize] = true);

    let mut cursor = 0;
    loop {
        while cursor < n && covered[order[cursor] as usize] {
            cursor += 1;
        }
        if cursor == n {
            break;
        }
        let target = order[cursor];
        let mut path = vec![target];
        let mut cur = target;
        // stop on entering the maximal ball of a skeleton voxel, so that a
        // path running alongside the skeleton does not join it late
        while !b.in_skel[cur as usize] && !near[cur as usize] {
            cur = pred[cur as usize];
            path.push(cur);
        }
        if !b.in_skel[cur as usize] {
            let link = b.link_to_skeleton(cur, &path);
            path.extend_from_slice(&link[1..]);
        }
        path.reverse();
        for &v in &path {
            cover(&b, &mut covered, v);
            b.comp.ball(v, b.comp.label(v), |u| near[u as usize] = true);
        }
        b.attach(path);
    }

    let mut pruned = 0;
    if cfg.min_branch_length > 0.0 {
        pruned += b.simplify(cfg.min_branch_length);
    }
    if cfg.refine_tips {
        b.refine_tips(scale);
        if cfg.min_branch_length > 0.0 {
            pruned += b.simplify(cfg.min_branch_length);
        }
    }

    let voxels = &b.comp.voxels;
    let mut segments: Vec<SkeletonSegment> = b
        .segments
        .iter()
        .map(|s| {
            let mut p: Vec<usize> = s.iter().map(|&id| voxels[id as usize]).collect();
            // canonical orientation: smaller endpoint index first
            if p[0] > p[p.len() - 1] {
                p.reverse();
            }
            SkeletonSegment::from_path_unchecked(p)
        })
        .collect();
    segments.sort();
    Ok(Skeleton {
        segments,
        seed: seed_voxel,
        dropped_voxels: dropped,
        pruned_segments: pruned,
    })
}

/// True iff every voxel of the largest component lies within
/// `scale × label(s)` (voxel units) of some skeleton voxel `s`.
pub fn covers_volume(grid: &VoxelGrid, segments: &[SkeletonSegment], scale: f64) -> bool {
    let (voxels, _) = largest_component(grid);
    let comp = Component::new(grid, voxels);
    let mut covered = vec![false; comp.voxels.len()];
    for s in segments {
        for &v in s.path() {
            let id = comp.id_of[v];
            if id == NONE {
                continue;
            }
            covered[id as usize] = true;
            comp.ball(id, scale * comp.label(id), |n| covered[n as usize] = true);
        }
    }
    covered.iter().all(|&c| c)
}
