//! Runs segmentation → carving → distance labels → skeleton → graph → traits
//! from a TOML config, writing every intermediate result to the output
//! directory so that any stage can be re-run from its predecessor's files.
//!
//! Artifacts (relative to `paths.output`):
//!
//! | stage         | files                                        |
//! |---------------|----------------------------------------------|
//! | `segment`     | `silhouettes/sil_<j>_<c>.pgm`                |
//! | `carve`       | `occupancy.vox`, `occupancy.ply`             |
//! | `edt`         | `labels.vox`, `labels.ply`                   |
//! | `skeletonize` | `skeleton.json`, `skeleton.ply`              |
//! | `graph`       | `graph.json`, `graph.ply`                    |
//! | `traits`      | `traits.json`                                |
//!
//! A run over all six stages also writes `timing.json`.

mod compare;

pub use compare::{compare_traits, ComparisonSummary, ErrorStats, MatchedBranch};

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationError, CalibrationSet, CameraView, Convention};
use crate::edt::distance_transform;
use crate::graph::{build_graph, TreeGraph, UpAxis};
use crate::grid::{Aabb, GridError, VoxelGrid};
use crate::ply;
use crate::reconstruction::{carve_hierarchical, CarveConfig};
use crate::segmentation::{load_silhouette, save_silhouette, segment_chroma, ChromaParams, ColorImage, SilhouetteMap};
use crate::skeleton::{skeletonize, Skeleton, SkeletonConfig};
use crate::traits::{measure_all, BranchTraitReport, BranchTraits, TraitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Segment,
    Carve,
    Edt,
    Skeletonize,
    Graph,
    Traits,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Segment,
        Stage::Carve,
        Stage::Edt,
        Stage::Skeletonize,
        Stage::Graph,
        Stage::Traits,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Segment => "segment",
            Stage::Carve => "carve",
            Stage::Edt => "edt",
            Stage::Skeletonize => "skeletonize",
            Stage::Graph => "graph",
            Stage::Traits => "traits",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage '{s}'")))
    }
}

/// Parses `all` or a comma-separated stage list.
pub fn parse_stages(s: &str) -> Result<Vec<Stage>, PipelineError> {
    if s.trim() == "all" {
        return Ok(Stage::ALL.to_vec());
    }
    let mut out: Vec<Stage> = s.split(',').map(|p| p.trim().parse()).collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("calibration file {}: {source}", path.display())]
    Calibration { path: PathBuf, source: CalibrationError },
    #[error("{}: {source}", path.display())]
    Grid { path: PathBuf, source: GridError },
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    /// 1 for a failing stage, 2 for config and IO problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Stage { .. } => 1,
            _ => 2,
        }
    }

    fn stage(stage: Stage, e: impl fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub calibration: PathBuf,
    /// color images `img_<j>_<c>.png` (or `.ppm`)
    pub images: Option<PathBuf>,
    /// probability maps `sil_<j>_<c>.pgm`, read by `carve` when `segment`
    /// does not run; defaults to `<output>/silhouettes`
    pub silhouettes: Option<PathBuf>,
    pub output: PathBuf,
    /// trait report (JSON) to compare against
    pub ground_truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// mm
    pub match_radius: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { match_radius: 30.0 }
    }
}

fn all_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub paths: Paths,
    /// search region for carving, mm
    pub region: Aabb,
    #[serde(default)]
    pub up_axis: UpAxis,
    #[serde(default = "all_stages")]
    pub stages: Vec<Stage>,
    /// read the calibration file with every matrix inverted
    #[serde(default)]
    pub inverse_convention: bool,
    /// worker threads, 0 = one per core; never changes results
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub segmentation: ChromaParams,
    #[serde(default)]
    pub carve: CarveConfig,
    #[serde(default)]
    pub skeleton: SkeletonConfig,
    #[serde(default)]
    pub traits: TraitConfig,
    #[serde(default)]
    pub compare: CompareConfig,
}

const PATH_KEYS: [&str; 5] = ["calibration", "images", "silhouettes", "output", "ground_truth"];

fn resolve_table_paths(table: &mut toml::Table, base: &Path) {
    let Some(toml::Value::Table(paths)) = table.get_mut("paths") else {
        return;
    };
    for key in PATH_KEYS {
        if let Some(toml::Value::String(s)) = paths.get_mut(key) {
            let p = Path::new(s.as_str());
            if p.is_relative() && !s.is_empty() {
                *s = base.join(p).to_string_lossy().into_owned();
            }
        }
    }
}

/// Splits `key=value`; the value uses TOML syntax, and anything that does
/// not parse as TOML is taken as a string.
pub fn parse_override(arg: &str) -> Result<(String, toml::Value), PipelineError> {
    let (key, text) = arg
        .split_once('=')
        .ok_or_else(|| PipelineError::Config(format!("override '{arg}' is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()));
    Ok((key.trim().to_string(), value))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), PipelineError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(PipelineError::Config(format!("bad override key '{key}'")));
    }
    let mut t = table;
    for part in &parts[..parts.len() - 1] {
        let entry = t
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = match entry {
            toml::Value::Table(inner) => inner,
            _ => return Err(PipelineError::Config(format!("override '{key}': '{part}' is not a table"))),
        };
    }
    t.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl PipelineConfig {
    pub fn new(paths: Paths, region: Aabb) -> Self {
        Self {
            paths,
            region,
            up_axis: UpAxis::default(),
            stages: all_stages(),
            inverse_convention: false,
            workers: 0,
            segmentation: ChromaParams::default(),
            carve: CarveConfig::default(),
            skeleton: SkeletonConfig::default(),
            traits: TraitConfig::default(),
            compare: CompareConfig::default(),
        }
    }

    /// Reads a TOML config; relative paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::from_sources(Some(path), &[])
    }

    /// Builds a config from an optional TOML file and overrides keyed by
    /// dotted field paths (`carve.consistency_fraction`). Relative paths from
    /// the file resolve against its directory, relative paths from overrides
    /// against the working directory.
    pub fn from_sources(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self, PipelineError> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| PipelineError::io(p, e))?;
                let mut t: toml::Table =
                    toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
                resolve_table_paths(&mut t, p.parent().unwrap_or(Path::new(".")));
                t
            }
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            set_dotted(&mut table, key, value.clone())?;
        }
        let what = path.map_or_else(|| "command line".to_string(), |p| p.display().to_string());
        table
            .try_into()
            .map_err(|e| PipelineError::Config(format!("{what}: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = PipelineError::Config;
        if self.stages.is_empty() {
            return Err(cfg("no stages selected".into()));
        }
        if !(self.region.volume() > 0.0) {
            return Err(cfg("region has zero volume".into()));
        }
        if self.paths.output.as_os_str().is_empty() {
            return Err(cfg("paths.output is required".into()));
        }
        self.segmentation.validate().map_err(|e| cfg(e.to_string()))?;
        self.carve.validate().map_err(|e| cfg(e.to_string()))?;
        self.skeleton.validate().map_err(|e| cfg(e.to_string()))?;
        self.traits.validate().map_err(cfg)?;
        if !(self.compare.match_radius > 0.0) {
            return Err(cfg("compare.match_radius must be positive".into()));
        }
        Ok(())
    }

    fn runs(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.paths.output.join(name)
    }

    fn silhouette_dir(&self) -> PathBuf {
        self.paths
            .silhouettes
            .clone()
            .unwrap_or_else(|| self.out("silhouettes"))
    }
}

/// Placement of a voxel grid, stored with index-based artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFrame {
    pub origin: [f64; 3],
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl GridFrame {
    pub fn of(grid: &VoxelGrid) -> Self {
        let o = grid.origin();
        Self {
            origin: [o.x, o.y, o.z],
            voxel_size: grid.voxel_size(),
            dims: grid.dims(),
        }
    }

    fn check(&self, grid: &VoxelGrid, what: &str) -> Result<(), PipelineError> {
        if *self != Self::of(grid) {
            return Err(PipelineError::Config(format!(
                "{what} was computed on a different voxel grid than labels.vox"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonDocument {
    pub frame: GridFrame,
    pub skeleton: Skeleton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub frame: GridFrame,
    pub up_axis: UpAxis,
    pub graph: TreeGraph,
}

/// Contents of `traits.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitDocument {
    pub frame: GridFrame,
    pub up_axis: UpAxis,
    pub n_d: usize,
    pub d_angle_mm: f64,
    pub root_vertex: usize,
    pub remainder_segments: usize,
    pub branches: Vec<BranchTraits>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonSummary>,
}

impl TraitDocument {
    pub fn report(&self) -> BranchTraitReport {
        BranchTraitReport {
            branches: self.branches.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

/// Wall-clock time per stage, also grouped as segmentation / reconstruction
/// (carve and distance labels) / skeleton, graph and measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Timing {
    pub stages: Vec<StageTiming>,
    pub segmentation_s: f64,
    pub reconstruction_s: f64,
    pub skeleton_graph_traits_s: f64,
    pub total_s: f64,
}

impl Timing {
    fn record(&mut self, stage: Stage, seconds: f64) {
        self.stages.push(StageTiming { stage, seconds });
        match stage {
            Stage::Segment => self.segmentation_s += seconds,
            Stage::Carve | Stage::Edt => self.reconstruction_s += seconds,
            _ => self.skeleton_graph_traits_s += seconds,
        }
        self.total_s += seconds;
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub stages_run: Vec<Stage>,
    pub artifacts: Vec<PathBuf>,
    pub timing: Timing,
    pub occupied_voxels: Option<usize>,
    pub traits: Option<TraitDocument>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

pub fn silhouette_name(pose: u32, camera: u32) -> String {
    format!("sil_{pose}_{camera}.pgm")
}

pub fn image_name(pose: u32, camera: u32) -> String {
    format!("img_{pose}_{camera}.png")
}

pub fn load_calibration(path: &Path, inverse: bool) -> Result<CalibrationSet, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    CalibrationSet::parse(&text, inverse.then_some(Convention::Inverse)).map_err(|source| PipelineError::Calibration {
        path: path.to_path_buf(),
        source,
    })
}

/// Segments `img_<j>_<c>` for every calibrated image in `dir`.
pub fn segment_images(
    calibration: &CalibrationSet,
    dir: &Path,
    params: &ChromaParams,
) -> Result<Vec<((u32, u32), SilhouetteMap)>, PipelineError> {
    calibration
        .images()
        .map(|(j, c)| {
            let png = dir.join(image_name(j, c));
            let path = if png.exists() {
                png.clone()
            } else {
                dir.join(format!("img_{j}_{c}.ppm"))
            };
            if !path.exists() {
                return Err(PipelineError::io(&png, io::ErrorKind::NotFound.into()));
            }
            let img = ColorImage::load(&path).map_err(|e| PipelineError::Config(e.to_string()))?;
            let map = segment_chroma(&img, params).map_err(|e| PipelineError::stage(Stage::Segment, e))?;
            Ok(((j, c), map))
        })
        .collect()
}

/// One view per calibrated image, using maps `sil_<j>_<c>.pgm` from `dir`.
pub fn load_views(
    calibration: &CalibrationSet,
    maps: impl Fn(u32, u32) -> Result<SilhouetteMap, PipelineError>,
) -> Result<Vec<CameraView>, PipelineError> {
    let cal_err = |source| PipelineError::Config(format!("calibration: {source}"));
    calibration
        .images()
        .map(|(j, c)| {
            let a = calibration.extrinsics(j, c).map_err(cal_err)?;
            let k = *calibration.intrinsics_for(c).map_err(cal_err)?;
            CameraView::new(c, j, k, a, maps(j, c)?).map_err(cal_err)
        })
        .collect()
}

fn load_silhouette_file(dir: &Path, j: u32, c: u32) -> Result<SilhouetteMap, PipelineError> {
    let path = dir.join(silhouette_name(j, c));
    if !path.exists() {
        return Err(PipelineError::io(&path, io::ErrorKind::NotFound.into()));
    }
    load_silhouette(&path).map_err(|e| PipelineError::Config(e.to_string()))
}

fn load_grid(path: &Path) -> Result<VoxelGrid, PipelineError> {
    VoxelGrid::load(path).map_err(|source| PipelineError::Grid {
        path: path.to_path_buf(),
        source,
    })
}

fn save_grid(path: &Path, grid: &VoxelGrid) -> Result<(), PipelineError> {
    grid.save(path).map_err(|source| PipelineError::Grid {
        path: path.to_path_buf(),
        source,
    })
}

fn ply_result(path: &Path, r: io::Result<()>) -> Result<(), PipelineError> {
    r.map_err(|e| PipelineError::io(path, e))
}

fn path_points(grid: &VoxelGrid, path: &[usize]) -> Vec<Vector3<f64>> {
    path.iter().map(|&v| grid.center(v)).collect()
}

/// Runs the selected stages in pipeline order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    cfg.validate()?;
    let out_dir = &cfg.paths.output;
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let mut timing = Timing::default();
    let mut artifacts = Vec::new();
    let mut stages_run = Vec::new();

    let calibration = if cfg.runs(Stage::Segment) || cfg.runs(Stage::Carve) {
        Some(load_calibration(&cfg.paths.calibration, cfg.inverse_convention)?)
    } else {
        None
    };

    // segment
    let mut maps: Option<Vec<((u32, u32), SilhouetteMap)>> = None;
    if cfg.runs(Stage::Segment) {
        let t = Instant::now();
        let images = cfg
            .paths
            .images
            .as_ref()
            .ok_or_else(|| PipelineError::Config("paths.images is required for the segment stage".into()))?;
        let cal = calibration.as_ref().expect("loaded above");
        let segmented = segment_images(cal, images, &cfg.segmentation)?;
        let dir = cfg.out("silhouettes");
        fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        for ((j, c), m) in &segmented {
            let p = dir.join(silhouette_name(*j, *c));
            save_silhouette(m, &p).map_err(|e| PipelineError::Config(e.to_string()))?;
            artifacts.push(p);
        }
        maps = Some(segmented);
        timing.record(Stage::Segment, t.elapsed().as_secs_f64());
        stages_run.push(Stage::Segment);
    }

    // carve
    let mut occupancy: Option<VoxelGrid> = None;
    if cfg.runs(Stage::Carve) {
        let t = Instant::now();
        let cal = calibration.as_ref().expect("loaded above");
        let views = match &maps {
            Some(m) => load_views(cal, |j, c| {
                m.iter()
                    .find(|(k, _)| *k == (j, c))
                    .map(|(_, s)| s.clone())
                    .ok_or_else(|| PipelineError::Config(format!("no silhouette for image ({j}, {c})")))
            })?,
            None => {
                let dir = cfg.silhouette_dir();
                load_views(cal, |j, c| load_silhouette_file(&dir, j, c))?
            }
        };
        let grid = carve_hierarchical(&cfg.region, &views, &cfg.carve).map_err(|e| PipelineError::stage(Stage::Carve, e))?;
        if grid.count_occupied() == 0 {
            return Err(PipelineError::stage(Stage::Carve, "reconstruction is empty"));
        }
        let p = cfg.out("occupancy.vox");
        save_grid(&p, &grid)?;
        artifacts.push(p);
        let p = cfg.out("occupancy.ply");
        ply_result(&p, ply::write_points(&p, &grid.occupied_centers(), None))?;
        artifacts.push(p);
        occupancy = Some(grid);
        timing.record(Stage::Carve, t.elapsed().as_secs_f64());
        stages_run.push(Stage::Carve);
    }
    let occupied_voxels = occupancy.as_ref().map(VoxelGrid::count_occupied);

    // edt
    let mut labels: Option<VoxelGrid> = None;
    if cfg.runs(Stage::Edt) {
        let t = Instant::now();
        let occ = match occupancy.take() {
            Some(g) => g,
            None => load_grid(&cfg.out("occupancy.vox"))?,
        };
        let grid = distance_transform(&occ);
        let p = cfg.out("labels.vox");
        save_grid(&p, &grid)?;
        artifacts.push(p);
        let idx: Vec<usize> = grid.occupied_indices().collect();
        let pts: Vec<Vector3<f64>> = idx.iter().map(|&i| grid.center(i)).collect();
        let lab: Vec<f64> = idx.iter().map(|&i| grid.label(i)).collect();
        let p = cfg.out("labels.ply");
        ply_result(&p, ply::write_points(&p, &pts, Some(("distance", &lab))))?;
        artifacts.push(p);
        labels = Some(grid);
        timing.record(Stage::Edt, t.elapsed().as_secs_f64());
        stages_run.push(Stage::Edt);
    }

    let need_labels = cfg.runs(Stage::Skeletonize) || cfg.runs(Stage::Graph) || cfg.runs(Stage::Traits);
    if labels.is_none() && need_labels {
        let g = load_grid(&cfg.out("labels.vox"))?;
        if !g.has_labels() {
            return Err(PipelineError::Config("labels.vox carries no distance labels".into()));
        }
        labels = Some(g);
    }

    // skeletonize
    let mut skeleton: Option<Skeleton> = None;
    if cfg.runs(Stage::Skeletonize) {
        let t = Instant::now();
        let grid = labels.as_ref().expect("loaded above");
        let sk = skeletonize(grid, &cfg.skeleton).map_err(|e| PipelineError::stage(Stage::Skeletonize, e))?;
        if sk.dropped_voxels > 0 {
            log::warn!("skeletonize: ignored {} voxels outside the main component", sk.dropped_voxels);
        }
        let p = cfg.out("skeleton.json");
        write_json(
            &p,
            &SkeletonDocument {
                frame: GridFrame::of(grid),
                skeleton: sk.clone(),
            },
        )?;
        artifacts.push(p);
        let lines: Vec<_> = sk.segments.iter().map(|s| path_points(grid, s.path())).collect();
        let p = cfg.out("skeleton.ply");
        ply_result(&p, ply::write_polylines(&p, &lines))?;
        artifacts.push(p);
        skeleton = Some(sk);
        timing.record(Stage::Skeletonize, t.elapsed().as_secs_f64());
        stages_run.push(Stage::Skeletonize);
    }

    // graph
    let mut graph: Option<TreeGraph> = None;
    if cfg.runs(Stage::Graph) {
        let t = Instant::now();
        let grid = labels.as_ref().expect("loaded above");
        let sk = match skeleton.take() {
            Some(s) => s,
            None => {
                let doc: SkeletonDocument = read_json(&cfg.out("skeleton.json"))?;
                doc.frame.check(grid, "skeleton.json")?;
                doc.skeleton
            }
        };
        let g = build_graph(&sk.segments, grid, cfg.up_axis).map_err(|e| PipelineError::stage(Stage::Graph, e))?;
        if !g.remainder.is_empty() {
            log::warn!("graph: {} segments left out of the tree", g.remainder.len());
        }
        let p = cfg.out("graph.json");
        write_json(
            &p,
            &GraphDocument {
                frame: GridFrame::of(grid),
                up_axis: cfg.up_axis,
                graph: g.clone(),
            },
        )?;
        artifacts.push(p);
        let lines: Vec<_> = g.edges.iter().map(|e| path_points(grid, &e.path)).collect();
        let p = cfg.out("graph.ply");
        ply_result(&p, ply::write_polylines(&p, &lines))?;
        artifacts.push(p);
        graph = Some(g);
        timing.record(Stage::Graph, t.elapsed().as_secs_f64());
        stages_run.push(Stage::Graph);
    }

    // traits
    let mut traits = None;
    if cfg.runs(Stage::Traits) {
        let t = Instant::now();
        let grid = labels.as_ref().expect("loaded above");
        let (g, up) = match graph.take() {
            Some(g) => (g, cfg.up_axis),
            None => {
                let doc: GraphDocument = read_json(&cfg.out("graph.json"))?;
                doc.frame.check(grid, "graph.json")?;
                (doc.graph, doc.up_axis)
            }
        };
        let tcfg = TraitConfig { up_axis: up, ..cfg.traits };
        let report = measure_all(&g, grid, &tcfg);
        let comparison = match &cfg.paths.ground_truth {
            Some(p) => {
                let truth: BranchTraitReport = read_json(p)?;
                Some(compare_traits(&report, &truth, cfg.compare.match_radius))
            }
            None => None,
        };
        let doc = TraitDocument {
            frame: GridFrame::of(grid),
            up_axis: up,
            n_d: tcfg.n_d,
            d_angle_mm: tcfg.d_angle,
            root_vertex: g.root,
            remainder_segments: g.remainder.len(),
            branches: report.branches,
            comparison,
        };
        let p = cfg.out("traits.json");
        write_json(&p, &doc)?;
        artifacts.push(p);
        traits = Some(doc);
        timing.record(Stage::Traits, t.elapsed().as_secs_f64());
        stages_run.push(Stage::Traits);
    }

    for s in &timing.stages {
        log::info!("{:<12} {:8.3} s", s.stage.name(), s.seconds);
    }
    // a full run; segmentation is optional when silhouettes are supplied
    if Stage::ALL[1..].iter().all(|s| cfg.runs(*s)) {
        let p = cfg.out("timing.json");
        write_json(&p, &timing)?;
        artifacts.push(p);
    }
    Ok(PipelineOutcome {
        stages_run,
        artifacts,
        timing,
        occupied_voxels,
        traits,
    })
}
