use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SyntheticError;
use crate::segmentation::SilhouetteMap;

/// Seeded silhouette damage emulating segmentation errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbConfig {
    /// fraction of a damaged view's boundary pixels used as damage centers
    pub flip_fraction: f64,
    /// fraction of views that are damaged
    pub view_fraction: f64,
    /// radius of each flipped disk, px
    pub radius_px: u32,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            flip_fraction: 0.05,
            view_fraction: 0.2,
            radius_px: 2,
            seed: 0,
        }
    }
}

fn is_fg(map: &SilhouetteMap, x: u32, y: u32) -> bool {
    map.get(x, y) >= 0.5
}

/// Pixels with a 4-neighbor on the other side of the 0.5 threshold, row-major.
pub fn boundary_pixels(map: &SilhouetteMap) -> Vec<(u32, u32)> {
    let (w, h) = (map.width(), map.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = is_fg(map, x, y);
            let differs = (x > 0 && is_fg(map, x - 1, y) != v)
                || (x + 1 < w && is_fg(map, x + 1, y) != v)
                || (y > 0 && is_fg(map, x, y - 1) != v)
                || (y + 1 < h && is_fg(map, x, y + 1) != v);
            if differs {
                out.push((x, y));
            }
        }
    }
    out
}

/// Damages `round(view_fraction·n)` views. In each, `round(flip_fraction·B)`
/// of its `B` boundary pixels become centers of disks that are set to the
/// opposite of the center's original class (eroding or dilating the outline).
pub fn perturb_silhouettes(maps: &[SilhouetteMap], cfg: &PerturbConfig) -> Result<Vec<SilhouetteMap>, SyntheticError> {
    if !(0.0..=0.2).contains(&cfg.flip_fraction) {
        return Err(SyntheticError::FlipFraction(cfg.flip_fraction));
    }
    if !(0.0..=1.0).contains(&cfg.view_fraction) {
        return Err(SyntheticError::ViewFraction(cfg.view_fraction));
    }
    let mut out = maps.to_vec();
    if cfg.flip_fraction == 0.0 || maps.is_empty() {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_views = (cfg.view_fraction * maps.len() as f64).round() as usize;
    let mut views = sample(&mut rng, maps.len(), n_views).into_vec();
    views.sort_unstable();
    let r = cfg.radius_px as i64;
    for v in views {
        let orig = &maps[v];
        let boundary = boundary_pixels(orig);
        let k = (cfg.flip_fraction * boundary.len() as f64).round() as usize;
        let mut centers = sample(&mut rng, boundary.len(), k).into_vec();
        centers.sort_unstable();
        let (w, h) = (orig.width() as i64, orig.height() as i64);
        for c in centers {
            let (cx, cy) = boundary[c];
            let value = if is_fg(orig, cx, cy) { 0.0 } else { 1.0 };
            for dy in -r..=r {
                for dx in -r..=r {
                    let (x, y) = (cx as i64 + dx, cy as i64 + dy);
                    if dx * dx + dy * dy <= r * r && (0..w).contains(&x) && (0..h).contains(&y) {
                        out[v].set(x as u32, y as u32, value);
                    }
                }
            }
        }
    }
    Ok(out)
}
