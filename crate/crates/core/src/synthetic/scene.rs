use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    ground_truth, perturb_silhouettes, render_views, Capsule, PerturbConfig, RigPreset, SyntheticError, SyntheticTree,
    VirtualRig, FOREGROUND_RGB,
};
use crate::calibration::{CalibrationSet, CameraView, Convention};
use crate::grid::Aabb;
use crate::pipeline::{image_name, silhouette_name, write_json, Paths, PipelineConfig, Stage};
use crate::segmentation::{save_silhouette, ColorImage};
use crate::traits::BranchTraitReport;

fn default_background() -> [u8; 3] {
    [0, 0, 255]
}

/// Scene description (TOML):
///
/// ```toml
/// preset = "tree-a"          # or list [[branch]] tables instead
/// rig = "desk"               # desk | desk-distorted | field
/// rig_seed = 0
/// [[branch]]
/// start = [0.0, 0.0, 0.0]
/// end = [0.0, 0.0, 300.0]
/// radius = 15.0
/// parent = 0                 # optional
/// capped = true              # optional
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub rig: RigPreset,
    #[serde(default)]
    pub rig_seed: u64,
    #[serde(default)]
    pub calibration_seed: u64,
    #[serde(default = "default_background")]
    pub background_rgb: [u8; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Aabb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb: Option<PerturbConfig>,
    #[serde(default, rename = "branch", skip_serializing_if = "Vec::is_empty")]
    pub branches: Vec<Capsule>,
}

impl SceneFile {
    pub fn from_preset(name: &str, rig: RigPreset, rig_seed: u64) -> Result<Self, SyntheticError> {
        let s = Self {
            preset: Some(name.to_string()),
            rig,
            rig_seed,
            calibration_seed: rig_seed,
            background_rgb: default_background(),
            region: None,
            perturb: None,
            branches: Vec::new(),
        };
        s.tree()?;
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self, SyntheticError> {
        let s: Self = toml::from_str(text).map_err(|e| SyntheticError::Scene(e.to_string()))?;
        s.tree()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SyntheticError> {
        let text = fs::read_to_string(path).map_err(|e| SyntheticError::Scene(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scene serializes")
    }

    pub fn tree(&self) -> Result<SyntheticTree, SyntheticError> {
        let tree = match self.preset.as_deref() {
            None => SyntheticTree {
                branches: self.branches.clone(),
            },
            Some(_) if !self.branches.is_empty() => {
                return Err(SyntheticError::Scene("give either a preset or branches, not both".into()))
            }
            Some("tree-a") => SyntheticTree::tree_a(),
            Some("sphere") => SyntheticTree::sphere([0.0, 0.0, 100.0], 50.0),
            Some("cylinder") => SyntheticTree::cylinder(15.0, 300.0),
            Some("y") => SyntheticTree::y_shape(10.0, 200.0, 200.0, 40.0),
            Some(other) => return Err(SyntheticError::Scene(format!("unknown preset '{other}'"))),
        };
        if tree.branches.is_empty() {
            return Err(SyntheticError::Scene("scene has no branches".into()));
        }
        tree.validate()?;
        Ok(tree)
    }

    /// Explicit region, the reference region for `tree-a`, or the tree's
    /// bounds grown by 36 mm and rounded out to multiples of 12 mm.
    pub fn region(&self) -> Result<Aabb, SyntheticError> {
        if let Some(r) = self.region {
            return Ok(r);
        }
        if self.preset.as_deref() == Some("tree-a") {
            return Ok(SyntheticTree::tree_a_region());
        }
        let b = self.tree()?.bounds().expect("nonempty");
        let snap = |v: f64, up: bool| {
            let q = v / 12.0;
            12.0 * if up { q.ceil() } else { q.floor() }
        };
        Ok(Aabb::new(
            [0, 1, 2].map(|k| snap(b.min[k] - 36.0, false)),
            [0, 1, 2].map(|k| snap(b.max[k] + 36.0, true)),
        ))
    }

    pub fn rig(&self) -> Result<VirtualRig, SyntheticError> {
        let tree = self.tree()?;
        let target = tree.bounds().expect("nonempty");
        Ok(VirtualRig::preset_framing(self.rig, &target, &tree.framing_spheres(), self.rig_seed))
    }
}

#[derive(Debug, Clone)]
pub struct ExportedScene {
    pub views: Vec<CameraView>,
    pub calibration: CalibrationSet,
    pub truth: BranchTraitReport,
    pub region: Aabb,
    /// ready-to-run pipeline config inside the export directory
    pub config_path: PathBuf,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SyntheticError {
    SyntheticError::Scene(format!("{}: {e}", path.display()))
}

/// Renders the scene and writes a self-contained pipeline input set to `dir`:
/// `scene.toml`, `calibration.txt`, `silhouettes/`, optionally `images/`
/// (color renders on `background_rgb`), `ground_truth.json` and
/// `pipeline.toml` (output into `dir/out`).
pub fn export_scene(scene: &SceneFile, dir: &Path, write_images: bool) -> Result<ExportedScene, SyntheticError> {
    let tree = scene.tree()?;
    let region = scene.region()?;
    let rig = scene.rig()?;
    let mut views = render_views(&tree, &rig);
    if let Some(p) = &scene.perturb {
        let maps: Vec<_> = views.iter().map(|v| v.silhouette.clone()).collect();
        for (v, m) in views.iter_mut().zip(perturb_silhouettes(&maps, p)?) {
            v.silhouette = m;
        }
    }
    let calibration = rig.calibration(scene.calibration_seed);
    let truth = ground_truth(&tree);

    let sil_dir = dir.join("silhouettes");
    fs::create_dir_all(&sil_dir).map_err(|e| io_err(&sil_dir, e))?;
    let img_dir = dir.join("images");
    if write_images {
        fs::create_dir_all(&img_dir).map_err(|e| io_err(&img_dir, e))?;
    }
    for v in &views {
        let p = sil_dir.join(silhouette_name(v.pose_index, v.camera_id));
        save_silhouette(&v.silhouette, &p).map_err(|e| io_err(&p, e))?;
        if write_images {
            let (w, h) = (v.silhouette.width(), v.silhouette.height());
            let mut img = ColorImage::filled(w, h, scene.background_rgb);
            for y in 0..h {
                for x in 0..w {
                    if v.silhouette.get(x, y) >= 0.5 {
                        img.set(x, y, FOREGROUND_RGB);
                    }
                }
            }
            let p = img_dir.join(image_name(v.pose_index, v.camera_id));
            img.save(&p).map_err(|e| io_err(&p, e))?;
        }
    }
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| io_err(&p, e))
    };
    write("scene.toml", scene.to_toml())?;
    write("calibration.txt", calibration.to_text(Convention::Forward))?;
    let gt = dir.join("ground_truth.json");
    write_json(&gt, &truth).map_err(|e| SyntheticError::Scene(e.to_string()))?;

    // segment only when the color images are clean renders of the silhouettes
    let segment = write_images && scene.perturb.is_none();
    let mut cfg = PipelineConfig::new(
        Paths {
            calibration: "calibration.txt".into(),
            images: write_images.then(|| "images".into()),
            silhouettes: (!segment).then(|| "silhouettes".into()),
            output: "out".into(),
            ground_truth: Some("ground_truth.json".into()),
        },
        region,
    );
    cfg.segmentation.background_rgb = scene.background_rgb;
    if !segment {
        cfg.stages.retain(|s| *s != Stage::Segment);
    }
    if scene.perturb.is_some() {
        cfg.carve.consistency_fraction = 0.9;
    }
    write("pipeline.toml", cfg.to_toml())?;

    Ok(ExportedScene {
        views,
        calibration,
        truth,
        region,
        config_path: dir.join("pipeline.toml"),
    })
}
