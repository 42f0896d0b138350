//! Dense voxel grid with bit-packed occupancy and optional distance labels.
//!
//! # Binary format
//!
//! All multi-byte fields are little-endian.
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! | 0      | 4    | magic `ARBV`                            |
//! | 4      | 4    | u32 version (= 1)                       |
//! | 8      | 4    | u32 flags (bit 0: labels present)       |
//! | 12     | 24   | f64 origin x, y, z (mm)                 |
//! | 36     | 8    | f64 voxel size (mm)                     |
//! | 44     | 12   | u32 nx, ny, nz                          |
//! | 56     | ⌈n/8⌉| occupancy bits                          |
//! | …      | 4·n  | u32 squared labels (only if flag bit 0) |
//!
//! Voxel `(x, y, z)` has linear index `i = x + nx·(y + ny·z)` (x fastest) and
//! is stored in byte `i / 8`, bit `i % 8` (least significant bit first).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

const MAGIC: &[u8; 4] = b"ARBV";
const VERSION: u32 = 1;
const FLAG_LABELS: u32 = 1;
const HEADER_LEN: usize = 56;

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("voxel size must be positive and finite, got {0}")]
    BadVoxelSize(f64),
    #[error("grid dimensions must be positive, got {0:?}")]
    BadDims([usize; 3]),
    #[error("grid of {0:?} voxels is too large")]
    TooLarge([usize; 3]),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Axis-aligned box in world coordinates (mm).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        if e.iter().any(|&v| v <= 0.0) {
            return 0.0;
        }
        e[0] * e[1] * e[2]
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let mut out = [Vector3::zeros(); 8];
        for (k, c) in out.iter_mut().enumerate() {
            *c = Vector3::new(
                if k & 1 == 0 { self.min[0] } else { self.max[0] },
                if k & 2 == 0 { self.min[1] } else { self.max[1] },
                if k & 4 == 0 { self.min[2] } else { self.max[2] },
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    origin: Vector3<f64>,
    voxel_size: f64,
    dims: [usize; 3],
    bits: Vec<u64>,
    /// squared distance to the nearest empty voxel, voxel units
    sq_labels: Option<Vec<u32>>,
}

/// The 26 neighbor offsets, in a fixed order.
pub const NEIGHBORS_26: [[i32; 3]; 26] = {
    let mut out = [[0i32; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

impl VoxelGrid {
    pub fn new(origin: Vector3<f64>, voxel_size: f64, dims: [usize; 3]) -> Result<Self, GridError> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(GridError::BadVoxelSize(voxel_size));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(GridError::BadDims(dims));
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or(GridError::TooLarge(dims))?;
        Ok(Self {
            origin,
            voxel_size,
            dims,
            bits: vec![0; n.div_ceil(64)],
            sq_labels: None,
        })
    }

    /// Grid of `voxel_size` cubes covering `region` from its min corner.
    pub fn covering(region: &Aabb, voxel_size: f64) -> Result<Self, GridError> {
        let e = region.extent();
        let dims = e.map(|v| ((v / voxel_size) - 1e-9).ceil().max(1.0) as usize);
        Self::new(Vector3::from(region.min), voxel_size, dims)
    }

    /// Empty grid with the same geometry.
    pub fn empty_like(&self) -> Self {
        Self {
            origin: self.origin,
            voxel_size: self.voxel_size,
            dims: self.dims,
            bits: vec![0; self.bits.len()],
            sq_labels: None,
        }
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.count_occupied() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let r = index / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    /// Linear index of `c + offset` if it lies inside the grid.
    #[inline]
    pub fn offset_index(&self, c: [usize; 3], offset: [i32; 3]) -> Option<usize> {
        let x = c[0] as i64 + offset[0] as i64;
        let y = c[1] as i64 + offset[1] as i64;
        let z = c[2] as i64 + offset[2] as i64;
        if x < 0
            || y < 0
            || z < 0
            || x >= self.dims[0] as i64
            || y >= self.dims[1] as i64
            || z >= self.dims[2] as i64
        {
            return None;
        }
        Some(self.index(x as usize, y as usize, z as usize))
    }

    /// World center of voxel `c`: `origin + (c + 0.5) · voxel_size`.
    #[inline]
    pub fn center_of(&self, c: [usize; 3]) -> Vector3<f64> {
        Vector3::new(
            self.origin.x + (c[0] as f64 + 0.5) * self.voxel_size,
            self.origin.y + (c[1] as f64 + 0.5) * self.voxel_size,
            self.origin.z + (c[2] as f64 + 0.5) * self.voxel_size,
        )
    }

    #[inline]
    pub fn center(&self, index: usize) -> Vector3<f64> {
        self.center_of(self.coords(index))
    }

    /// Voxel containing a world point, if inside the grid.
    pub fn locate(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.voxel_size).floor();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            c[a] = f as usize;
        }
        Some(c)
    }

    #[inline]
    pub fn is_occupied(&self, index: usize) -> bool {
        (self.bits[index >> 6] >> (index & 63)) & 1 == 1
    }

    #[inline]
    pub fn set_occupied(&mut self, index: usize, value: bool) {
        let word = &mut self.bits[index >> 6];
        let mask = 1u64 << (index & 63);
        if value {
            *word |= mask;
        } else {
            *word &= !mask;
        }
        self.sq_labels = None;
    }

    pub fn count_occupied(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Occupied voxel indices in increasing order.
    pub fn occupied_indices(&self) -> impl Iterator<Item = usize> + '_ {
        let n = self.len();
        self.bits.iter().enumerate().flat_map(move |(w, &word)| {
            let mut word = word;
            std::iter::from_fn(move || {
                if word == 0 {
                    return None;
                }
                let b = word.trailing_zeros() as usize;
                word &= word - 1;
                Some(w * 64 + b)
            })
            .filter(move |&i| i < n)
        })
    }

    pub fn has_labels(&self) -> bool {
        self.sq_labels.is_some()
    }

    pub fn squared_labels(&self) -> Option<&[u32]> {
        self.sq_labels.as_deref()
    }

    /// Attaches squared distance labels; panics on length mismatch.
    pub fn set_squared_labels(&mut self, labels: Vec<u32>) {
        assert_eq!(labels.len(), self.len(), "label buffer must cover the grid");
        self.sq_labels = Some(labels);
    }

    /// Distance label in voxel units; 0 for empty voxels or when unlabeled.
    #[inline]
    pub fn label(&self, index: usize) -> f64 {
        self.sq_labels
            .as_ref()
            .map_or(0.0, |l| (l[index] as f64).sqrt())
    }

    /// Inclusive min/max coordinates of occupied voxels.
    pub fn occupied_bounds(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for i in self.occupied_indices() {
            let c = self.coords(i);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            any = true;
        }
        any.then_some((lo, hi))
    }

    /// Sub-grid around the occupied voxels with `margin` empty voxels on each
    /// side (clamped to this grid). Returns the crop and the offset of its
    /// voxel (0, 0, 0) in this grid. Labels are not carried over.
    pub fn cropped(&self, margin: usize) -> Option<(VoxelGrid, [usize; 3])> {
        let (lo, hi) = self.occupied_bounds()?;
        let start = lo.map(|v| v.saturating_sub(margin));
        let mut dims = [0usize; 3];
        for a in 0..3 {
            dims[a] = (hi[a] + margin).min(self.dims[a] - 1) - start[a] + 1;
        }
        let origin = self.center_of(start) - Vector3::repeat(0.5 * self.voxel_size);
        let mut out = VoxelGrid::new(origin, self.voxel_size, dims).ok()?;
        for i in self.occupied_indices() {
            let c = self.coords(i);
            let j = out.index(c[0] - start[0], c[1] - start[1], c[2] - start[2]);
            out.set_occupied(j, true);
        }
        Some((out, start))
    }

    /// Total occupied volume in mm³.
    pub fn occupied_volume(&self) -> f64 {
        self.count_occupied() as f64 * self.voxel_size.powi(3)
    }

    pub fn occupied_centers(&self) -> Vec<Vector3<f64>> {
        self.occupied_indices().map(|i| self.center(i)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(HEADER_LEN + n.div_ceil(8));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let flags = if self.sq_labels.is_some() { FLAG_LABELS } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        for a in 0..3 {
            out.extend_from_slice(&self.origin[a].to_le_bytes());
        }
        out.extend_from_slice(&self.voxel_size.to_le_bytes());
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        let nbytes = n.div_ceil(8);
        for b in 0..nbytes {
            let word = self.bits[b / 8];
            out.push((word >> ((b % 8) * 8)) as u8);
        }
        if let Some(labels) = &self.sq_labels {
            for l in labels {
                out.extend_from_slice(&l.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, GridError> {
        let fail = |message: &str| GridError::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        if bytes.len() < HEADER_LEN || &bytes[0..4] != MAGIC {
            return Err(fail("not a voxel grid file (bad magic)"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(4) != VERSION {
            return Err(fail("unsupported version"));
        }
        let flags = u32_at(8);
        let origin = Vector3::new(f64_at(12), f64_at(20), f64_at(28));
        let size = f64_at(36);
        let dims = [u32_at(44) as usize, u32_at(48) as usize, u32_at(52) as usize];
        let mut grid = VoxelGrid::new(origin, size, dims)?;
        let n = grid.len();
        let nbytes = n.div_ceil(8);
        let label_bytes = if flags & FLAG_LABELS != 0 { 4 * n } else { 0 };
        if bytes.len() != HEADER_LEN + nbytes + label_bytes {
            return Err(fail("payload length does not match header"));
        }
        let payload = &bytes[HEADER_LEN..HEADER_LEN + nbytes];
        for (b, &byte) in payload.iter().enumerate() {
            grid.bits[b / 8] |= (byte as u64) << ((b % 8) * 8);
        }
        if n % 64 != 0 && grid.bits.last().is_some_and(|w| w >> (n % 64) != 0) {
            return Err(fail("padding bits must be zero"));
        }
        if label_bytes > 0 {
            let start = HEADER_LEN + nbytes;
            let labels = bytes[start..]
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            grid.sq_labels = Some(labels);
        }
        Ok(grid)
    }

    pub fn save(&self, path: &Path) -> Result<(), GridError> {
        let io = |source| GridError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        f.write_all(&self.to_bytes()).map_err(io)?;
        f.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, GridError> {
        let io = |source| GridError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(io)?
            .read_to_end(&mut bytes)
            .map_err(io)?;
        Self::from_bytes(&bytes, path)
    }
}
