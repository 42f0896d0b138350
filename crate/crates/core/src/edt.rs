//! Exact Euclidean distance transform in linear time.
//!
//! Squared distances are computed in integer arithmetic with three separable
//! passes: a two-sweep scan along x, then lower envelopes of parabolas along
//! y and z. Space outside the grid counts as empty.

use rayon::prelude::*;

use crate::grid::VoxelGrid;

/// Sentinel for "no site" in envelope computations.
pub const INF: i64 = i64::MAX / 4;

/// Lower envelope of parabolas `f[i] + (x − i)²` sampled at `x = 0..n`.
/// Sites with `f[i] >= INF` are ignored; if every site is ignored the output
/// is `INF` everywhere.
pub fn lower_envelope(f: &[i64], out: &mut [i64], sites: &mut Vec<usize>, starts: &mut Vec<i64>) {
    let n = f.len();
    debug_assert_eq!(out.len(), n);
    sites.clear();
    starts.clear();
    let eval = |x: i64, i: usize| (x - i as i64).pow(2) + f[i];
    for u in 0..n {
        if f[u] >= INF {
            continue;
        }
        loop {
            let Some(&s) = sites.last() else { break };
            let t = *starts.last().unwrap();
            if eval(t, s) > eval(t, u) {
                sites.pop();
                starts.pop();
            } else {
                break;
            }
        }
        match sites.last() {
            None => {
                sites.push(u);
                starts.push(0);
            }
            Some(&s) => {
                // first x at which u is strictly better than s
                let (si, ui) = (s as i64, u as i64);
                let num = ui * ui - si * si + f[u] - f[s];
                let w = 1 + num.div_euclid(2 * (ui - si));
                if w < n as i64 {
                    sites.push(u);
                    starts.push(w);
                }
            }
        }
    }
    if sites.is_empty() {
        out.fill(INF);
        return;
    }
    let mut q = sites.len() - 1;
    for x in (0..n).rev() {
        out[x] = eval(x as i64, sites[q]);
        if q > 0 && x as i64 == starts[q] {
            q -= 1;
        }
    }
}

/// Squared EDT of a 3D occupancy volume (x fastest), empty border assumed.
pub fn squared_edt(occupied: &[bool], dims: [usize; 3]) -> Vec<u32> {
    let [nx, ny, nz] = dims;
    assert_eq!(occupied.len(), nx * ny * nz);

    // pass 1: distance along x to the nearest empty voxel or the border
    let mut g: Vec<i64> = vec![0; occupied.len()];
    g.par_chunks_mut(nx)
        .zip(occupied.par_chunks(nx))
        .for_each(|(row, occ)| {
            let mut run = 0i64;
            for x in 0..nx {
                run = if occ[x] { run + 1 } else { 0 };
                row[x] = run;
            }
            let mut run = 0i64;
            for x in (0..nx).rev() {
                run = if occ[x] { run + 1 } else { 0 };
                let d = row[x].min(run);
                row[x] = d * d;
            }
        });

    // pass 2: along y, one z-slab per task
    g.par_chunks_mut(nx * ny).for_each(|slab| {
        let (mut col, mut out) = (vec![0i64; ny], vec![0i64; ny]);
        let (mut s, mut t) = (Vec::new(), Vec::new());
        for x in 0..nx {
            for y in 0..ny {
                col[y] = slab[x + nx * y];
            }
            lower_envelope(&col, &mut out, &mut s, &mut t);
            for y in 0..ny {
                let border = ((y + 1).min(ny - y) as i64).pow(2);
                slab[x + nx * y] = out[y].min(border);
            }
        }
    });

    // pass 3: along z, gathered per (x, y) column
    let plane = nx * ny;
    let columns: Vec<Vec<i64>> = (0..plane)
        .into_par_iter()
        .map_init(
            || (vec![0i64; nz], Vec::new(), Vec::new()),
            |(col, s, t), xy| {
                for z in 0..nz {
                    col[z] = g[xy + plane * z];
                }
                let mut out = vec![0i64; nz];
                lower_envelope(col, &mut out, s, t);
                for (z, v) in out.iter_mut().enumerate() {
                    *v = (*v).min(((z + 1).min(nz - z) as i64).pow(2));
                }
                out
            },
        )
        .collect();
    let mut result = vec![0u32; occupied.len()];
    for (xy, col) in columns.into_iter().enumerate() {
        for (z, v) in col.into_iter().enumerate() {
            result[xy + plane * z] = v as u32;
        }
    }
    // empty voxels are their own nearest empty voxel
    for (r, &o) in result.iter_mut().zip(occupied) {
        if !o {
            *r = 0;
        }
    }
    result
}

/// Computes distance labels for every voxel. Occupied voxels get the distance
/// between their center and the nearest empty voxel center (voxel units);
/// empty voxels get 0.
pub fn distance_transform(grid: &VoxelGrid) -> VoxelGrid {
    let mut out = grid.clone();
    distance_transform_in_place(&mut out);
    out
}

pub fn distance_transform_in_place(grid: &mut VoxelGrid) {
    let occ: Vec<bool> = (0..grid.len()).map(|i| grid.is_occupied(i)).collect();
    let labels = squared_edt(&occ, grid.dims());
    grid.set_squared_labels(labels);
}

/// Squared distance (pixels²) from each pixel to the nearest `true` pixel of a
/// row-major mask. No border is assumed; `u32::MAX` when the mask is empty.
pub fn squared_distance_to_mask(mask: &[bool], width: usize, height: usize) -> Vec<u32> {
    assert_eq!(mask.len(), width * height);
    let mut g: Vec<i64> = vec![0; mask.len()];
    g.par_chunks_mut(width)
        .zip(mask.par_chunks(width))
        .for_each(|(row, m)| {
            let f: Vec<i64> = m.iter().map(|&b| if b { 0 } else { INF }).collect();
            let (mut s, mut t) = (Vec::new(), Vec::new());
            lower_envelope(&f, row, &mut s, &mut t);
        });
    let columns: Vec<Vec<i64>> = (0..width)
        .into_par_iter()
        .map(|x| {
            let col: Vec<i64> = (0..height).map(|y| g[x + width * y]).collect();
            let mut out = vec![0i64; height];
            let (mut s, mut t) = (Vec::new(), Vec::new());
            lower_envelope(&col, &mut out, &mut s, &mut t);
            out
        })
        .collect();
    let mut result = vec![0u32; mask.len()];
    for (x, col) in columns.into_iter().enumerate() {
        for (y, v) in col.into_iter().enumerate() {
            result[x + width * y] = if v >= INF { u32::MAX } else { v as u32 };
        }
    }
    result
}
