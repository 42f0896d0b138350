//! Rooted directed tree graph built from undirected skeleton segments.
//!
//! The root is the segment endpoint lowest along the up axis. Starting from
//! it, a breadth-first sweep consumes every segment incident to the vertex at
//! the head of the queue and emits a directed edge towards the segment's other
//! endpoint. A segment whose far endpoint has already been reached would close
//! a cycle; it is left out of the edge set and reported instead.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::grid::VoxelGrid;
use crate::skeleton::SkeletonSegment;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("segment set is empty")]
    NoSegments,
    #[error("unknown up axis '{0}' (expected one of +x, -x, +y, -y, +z, -z)")]
    BadUpAxis(String),
}

/// Direction pointing away from the ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpAxis {
    PosX,
    NegX,
    PosY,
    NegY,
    #[default]
    PosZ,
    NegZ,
}

impl UpAxis {
    pub fn vector(self) -> Vector3<f64> {
        match self {
            UpAxis::PosX => Vector3::x(),
            UpAxis::NegX => -Vector3::x(),
            UpAxis::PosY => Vector3::y(),
            UpAxis::NegY => -Vector3::y(),
            UpAxis::PosZ => Vector3::z(),
            UpAxis::NegZ => -Vector3::z(),
        }
    }

    /// Height above the ground plane through the world origin.
    pub fn height(self, p: &Vector3<f64>) -> f64 {
        self.vector().dot(p)
    }
}

impl FromStr for UpAxis {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "+x" | "x" => UpAxis::PosX,
            "-x" => UpAxis::NegX,
            "+y" | "y" => UpAxis::PosY,
            "-y" => UpAxis::NegY,
            "+z" | "z" => UpAxis::PosZ,
            "-z" => UpAxis::NegZ,
            _ => return Err(GraphError::BadUpAxis(s.to_string())),
        })
    }
}

impl fmt::Display for UpAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpAxis::PosX => "+x",
            UpAxis::NegX => "-x",
            UpAxis::PosY => "+y",
            UpAxis::NegY => "-y",
            UpAxis::PosZ => "+z",
            UpAxis::NegZ => "-z",
        })
    }
}

impl Serialize for UpAxis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UpAxis {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub voxel: usize,
    /// world position of the voxel center, mm
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// voxel path with `path[0]` at `from` and the last entry at `to`
    pub path: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemainderReason {
    /// both endpoints were already in the graph when the segment was reached
    Cycle,
    /// never reached from the root
    Unreachable,
    SelfLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderSegment {
    pub path: Vec<usize>,
    pub reason: RemainderReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub root: usize,
    pub remainder: Vec<RemainderSegment>,
}

impl TreeGraph {
    pub fn out_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.from == v).count()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.to == v).count()
    }

    /// The edge arriving at `v`, if any.
    pub fn incoming(&self, v: usize) -> Option<usize> {
        self.edges.iter().position(|e| e.to == v)
    }

    pub fn children(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.from == v)
            .map(|(k, _)| k)
    }

    /// Vertices with out-degree zero.
    pub fn tips(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| self.out_degree(v) == 0).collect()
    }

    /// Vertices reachable from the root along directed edges.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        while let Some(v) = stack.pop() {
            for e in self.edges.iter().filter(|e| e.from == v) {
                if !seen[e.to] {
                    seen[e.to] = true;
                    stack.push(e.to);
                }
            }
        }
        seen
    }

    pub fn vertex_position(&self, v: usize) -> Vector3<f64> {
        Vector3::from(self.vertices[v].position)
    }

    /// Edge paths as segments, e.g. to rebuild the graph.
    pub fn segments(&self) -> Vec<SkeletonSegment> {
        self.edges
            .iter()
            .map(|e| SkeletonSegment::from_path_unchecked(e.path.clone()))
            .collect()
    }
}

fn position(grid: &VoxelGrid, voxel: usize) -> [f64; 3] {
    let c = grid.center(voxel);
    [c.x, c.y, c.z]
}

/// Endpoint voxel closest to the ground plane; ties broken by lowest world
/// x, then y, then z.
pub fn select_root(segments: &[SkeletonSegment], grid: &VoxelGrid, up: UpAxis) -> Result<usize, GraphError> {
    segments
        .iter()
        .flat_map(|s| [s.endpoint_a(), s.endpoint_b()])
        .min_by(|&a, &b| {
            let (pa, pb) = (grid.center(a), grid.center(b));
            up.height(&pa)
                .total_cmp(&up.height(&pb))
                .then(pa.x.total_cmp(&pb.x))
                .then(pa.y.total_cmp(&pb.y))
                .then(pa.z.total_cmp(&pb.z))
                .then(a.cmp(&b))
        })
        .ok_or(GraphError::NoSegments)
}

/// Converts skeleton segments into a rooted directed graph.
pub fn build_graph(segments: &[SkeletonSegment], grid: &VoxelGrid, up: UpAxis) -> Result<TreeGraph, GraphError> {
    let root_voxel = select_root(segments, grid, up)?;
    let mut incident: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, s) in segments.iter().enumerate() {
        incident.entry(s.endpoint_a()).or_default().push(k);
        if s.endpoint_b() != s.endpoint_a() {
            incident.entry(s.endpoint_b()).or_default().push(k);
        }
    }
    let mut consumed = vec![false; segments.len()];
    let mut vertex_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut graph = TreeGraph {
        vertices: vec![Vertex {
            voxel: root_voxel,
            position: position(grid, root_voxel),
        }],
        edges: Vec::new(),
        root: 0,
        remainder: Vec::new(),
    };
    vertex_of.insert(root_voxel, 0);
    let mut queue = VecDeque::from([root_voxel]);

    while let Some(va) = queue.pop_front() {
        let from = vertex_of[&va];
        let mut batch: Vec<(usize, Vec<usize>)> = incident
            .get(&va)
            .into_iter()
            .flatten()
            .copied()
            .filter(|&k| !consumed[k])
            .map(|k| {
                let s = &segments[k];
                let path = if s.endpoint_a() == va {
                    s.path().to_vec()
                } else {
                    s.reversed().into_path()
                };
                (k, path)
            })
            .collect();
        // canonical order: far endpoint, then the path itself
        batch.sort_by(|a, b| (a.1.last(), &a.1).cmp(&(b.1.last(), &b.1)));
        for (k, _) in &batch {
            consumed[*k] = true;
        }
        for (_, path) in batch {
            let vb = *path.last().unwrap();
            if vb == va {
                graph.remainder.push(RemainderSegment {
                    path,
                    reason: RemainderReason::SelfLoop,
                });
                continue;
            }
            if vertex_of.contains_key(&vb) {
                graph.remainder.push(RemainderSegment {
                    path,
                    reason: RemainderReason::Cycle,
                });
                continue;
            }
            let to = graph.vertices.len();
            graph.vertices.push(Vertex {
                voxel: vb,
                position: position(grid, vb),
            });
            vertex_of.insert(vb, to);
            queue.push_back(vb);
            graph.edges.push(Edge { from, to, path });
        }
    }
    for (k, s) in segments.iter().enumerate() {
        if !consumed[k] {
            graph.remainder.push(RemainderSegment {
                path: s.path().to_vec(),
                reason: RemainderReason::Unreachable,
            });
        }
    }
    if !graph.remainder.is_empty() {
        log::warn!("graph: {} segments left out (cycles or unreachable)", graph.remainder.len());
    }
    Ok(graph)
}
