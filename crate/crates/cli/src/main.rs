use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arborscan::pipeline::{
    compare_traits, parse_override, parse_stages, read_json, run_pipeline, write_json, ComparisonSummary,
    PipelineConfig, PipelineError, PipelineOutcome, Stage,
};
use arborscan::synthetic::{export_scene, PerturbConfig, RigPreset, SceneFile};
use arborscan::traits::BranchTraitReport;
use clap::{ArgAction, Args, Parser, Subcommand};

/// Branch structure and traits of a tree from calibrated silhouettes.
#[derive(Debug, Parser)]
#[command(name = "arborscan", version)]
struct Cli {
    /// Worker threads, 0 = one per core (overrides the config; results do
    /// not depend on it)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log more (-v info, -vv debug)
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the selected stages in order (all by default)
    Pipeline {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated stages, or "all"
        #[arg(long)]
        stages: Option<String>,
    },
    /// Color images to silhouette probability maps
    Segment(ConfigArgs),
    /// Silhouettes to an occupancy grid
    Carve(ConfigArgs),
    /// Occupancy grid to distance labels
    Edt(ConfigArgs),
    /// Distance labels to skeleton segments
    Skeletonize(ConfigArgs),
    /// Skeleton segments to a rooted tree graph
    Graph(ConfigArgs),
    /// Tree graph to per-branch diameter, length and angle
    Traits(ConfigArgs),
    /// Render a synthetic scene into a ready-to-run input set
    Synth(SynthArgs),
    /// Compare a trait report against ground truth
    Compare(CompareArgs),
}

/// Config file plus per-field overrides.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Pipeline config (TOML)
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Calibration file
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Directory of color images img_<j>_<c>.png
    #[arg(long)]
    images: Option<PathBuf>,
    /// Directory of probability maps sil_<j>_<c>.pgm
    #[arg(long)]
    silhouettes: Option<PathBuf>,
    /// Directory for stage artifacts and reports
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Trait report to compare against
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Carving region, mm: xmin,ymin,zmin,xmax,ymax,zmax
    #[arg(long, value_parser = parse_floats::<6>)]
    region: Option<[f64; 6]>,
    /// +x, -x, +y, -y, +z or -z
    #[arg(long)]
    up_axis: Option<String>,
    /// Calibration matrices are stored in the inverse direction
    #[arg(long)]
    inverse_convention: bool,
    /// Background color R,G,B for segmentation
    #[arg(long, value_parser = parse_rgb)]
    background_rgb: Option<[u8; 3]>,
    /// Chroma distance at which foreground probability is 0.5
    #[arg(long)]
    chroma_threshold: Option<f32>,
    /// Width of the chroma-distance transition
    #[arg(long)]
    softness: Option<f32>,
    /// Minimum fraction of views that must see a voxel as foreground
    #[arg(long)]
    consistency: Option<f64>,
    /// Coarsest voxel size, mm
    #[arg(long)]
    initial_voxel_size: Option<f64>,
    /// Finest voxel size, mm
    #[arg(long)]
    final_voxel_size: Option<f64>,
    /// Terminal skeleton segments shorter than this (mm) are pruned
    #[arg(long)]
    min_branch_length: Option<f64>,
    /// Number of labels averaged for a branch diameter
    #[arg(long)]
    n_d: Option<usize>,
    /// Distance from the junction for branch directions, mm
    #[arg(long)]
    d_angle: Option<f64>,
    /// Junction distance for matching against ground truth, mm
    #[arg(long)]
    match_radius: Option<f64>,
    /// Any config field, e.g. --set skeleton.refine_tips=false
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory
    #[arg(short, long)]
    out: PathBuf,
    /// tree-a, sphere, cylinder or y
    #[arg(long, default_value = "tree-a", conflicts_with = "scene")]
    preset: String,
    /// Scene file (TOML) instead of a preset
    #[arg(long)]
    scene: Option<PathBuf>,
    /// desk, desk-distorted or field
    #[arg(long)]
    rig: Option<RigPreset>,
    /// Seed for camera placement and calibration
    #[arg(long)]
    seed: Option<u64>,
    /// Damage silhouette boundaries in a fraction of the views
    #[arg(long)]
    perturb: bool,
    /// Fraction of boundary pixels to damage in a perturbed view
    #[arg(long, requires = "perturb")]
    flip_fraction: Option<f64>,
    /// Fraction of views to perturb
    #[arg(long, requires = "perturb")]
    view_fraction: Option<f64>,
    /// Background color R,G,B for the rendered images
    #[arg(long, value_parser = parse_rgb)]
    background_rgb: Option<[u8; 3]>,
    /// Write silhouettes only
    #[arg(long)]
    no_images: bool,
    /// Run the full pipeline on the exported scene
    #[arg(long)]
    run: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// traits.json from the pipeline, or any trait report
    #[arg(long)]
    report: PathBuf,
    /// Ground-truth trait report
    #[arg(long)]
    truth: PathBuf,
    /// mm
    #[arg(long, default_value_t = 30.0)]
    match_radius: f64,
    /// Write the summary as JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected {N} numbers, got {}", v.len()))
}

fn parse_rgb(s: &str) -> Result<[u8; 3], String> {
    let v: Vec<u8> = s
        .split(',')
        .map(|t| t.trim().parse::<u8>().map_err(|e| format!("'{t}': {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<u8>| format!("expected 3 values, got {}", v.len()))
}

struct Failure {
    code: u8,
    message: String,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn config_error(e: impl fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, toml::Value)>, PipelineError> {
        let mut out = Vec::new();
        let mut put = |k: &str, v: toml::Value| out.push((k.to_string(), v));
        let path = |p: &Path| toml::Value::String(p.to_string_lossy().into_owned());
        let paths = [
            ("paths.calibration", &self.calibration),
            ("paths.images", &self.images),
            ("paths.silhouettes", &self.silhouettes),
            ("paths.output", &self.output),
            ("paths.ground_truth", &self.ground_truth),
        ];
        for (k, v) in paths {
            if let Some(p) = v {
                put(k, path(p));
            }
        }
        if let Some(r) = self.region {
            put("region.min", toml::Value::from(r[..3].to_vec()));
            put("region.max", toml::Value::from(r[3..].to_vec()));
        }
        if let Some(u) = &self.up_axis {
            put("up_axis", toml::Value::from(u.as_str()));
        }
        if self.inverse_convention {
            put("inverse_convention", toml::Value::from(true));
        }
        if let Some(rgb) = self.background_rgb {
            put("segmentation.background_rgb", toml::Value::from(rgb.map(i64::from).to_vec()));
        }
        let floats = [
            ("segmentation.threshold", self.chroma_threshold.map(f64::from)),
            ("segmentation.softness", self.softness.map(f64::from)),
            ("carve.consistency_fraction", self.consistency),
            ("carve.initial_voxel_size", self.initial_voxel_size),
            ("carve.final_voxel_size", self.final_voxel_size),
            ("skeleton.min_branch_length", self.min_branch_length),
            ("traits.d_angle", self.d_angle),
            ("compare.match_radius", self.match_radius),
        ];
        for (k, v) in floats {
            if let Some(x) = v {
                put(k, toml::Value::from(x));
            }
        }
        if let Some(n) = self.n_d {
            put("traits.n_d", toml::Value::from(n as i64));
        }
        for s in &self.set {
            out.push(parse_override(s)?);
        }
        Ok(out)
    }

    fn load(&self) -> Result<PipelineConfig, PipelineError> {
        PipelineConfig::from_sources(self.config.as_deref(), &self.overrides()?)
    }
}

fn init_workers(n: usize) -> Result<(), Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| config_error(format!("worker pool: {e}")))
}

fn print_comparison(s: &ComparisonSummary) {
    if s.zero_matches {
        println!("comparison: no branches matched within {} mm", s.match_radius_mm);
        return;
    }
    println!(
        "comparison: {} matched, {} unmatched measured, {} unmatched truth",
        s.matched.len(),
        s.unmatched_measured.len(),
        s.unmatched_truth.len()
    );
    println!("  {:<9} {:>3} {:>9} {:>9} {:>9} {:>9} {:>9}", "trait", "n", "mean", "mse", "rmse", "mae", "std");
    for (name, st) in [("diameter", s.diameter), ("length", s.length), ("angle", s.angle)] {
        println!(
            "  {:<9} {:>3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            name, st.count, st.mean, st.mse, st.rmse, st.mae, st.std
        );
    }
}

fn print_outcome(outcome: &PipelineOutcome) {
    let names: Vec<&str> = outcome.stages_run.iter().map(|s| s.name()).collect();
    println!("stages: {}", names.join(", "));
    if let Some(n) = outcome.occupied_voxels {
        println!("occupied voxels: {n}");
    }
    for p in &outcome.artifacts {
        println!("wrote {}", p.display());
    }
    if let Some(doc) = &outcome.traits {
        println!("{} branches", doc.branches.len());
        println!("  {:>3} {:>6} {:>13} {:>11} {:>9}", "id", "parent", "diameter_mm", "length_mm", "angle_deg");
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"));
        for b in &doc.branches {
            let parent = b.parent.map_or_else(|| "-".to_string(), |p| p.to_string());
            println!(
                "  {:>3} {:>6} {:>13} {:>11.1} {:>9}",
                b.id,
                parent,
                opt(b.diameter_mm),
                b.length_mm,
                opt(b.angle_deg)
            );
        }
        if let Some(c) = &doc.comparison {
            print_comparison(c);
        }
    }
}

fn run_config(cfg: PipelineConfig, workers: Option<usize>) -> Result<(), Failure> {
    init_workers(workers.unwrap_or(cfg.workers))?;
    print_outcome(&run_pipeline(&cfg)?);
    Ok(())
}

fn synth(args: &SynthArgs, workers: Option<usize>) -> Result<(), Failure> {
    // rendering is parallel too, so the pool is fixed before it starts
    init_workers(workers.unwrap_or(0))?;
    let mut scene = match &args.scene {
        Some(p) => SceneFile::load(p).map_err(config_error)?,
        None => SceneFile::from_preset(&args.preset, RigPreset::default(), 0).map_err(config_error)?,
    };
    if let Some(r) = args.rig {
        scene.rig = r;
    }
    if let Some(s) = args.seed {
        scene.rig_seed = s;
        scene.calibration_seed = s;
    }
    if let Some(rgb) = args.background_rgb {
        scene.background_rgb = rgb;
    }
    if args.perturb {
        let mut p = scene.perturb.unwrap_or(PerturbConfig {
            seed: scene.rig_seed,
            ..Default::default()
        });
        if let Some(f) = args.flip_fraction {
            p.flip_fraction = f;
        }
        if let Some(f) = args.view_fraction {
            p.view_fraction = f;
        }
        scene.perturb = Some(p);
    }
    let exported = export_scene(&scene, &args.out, !args.no_images).map_err(config_error)?;
    println!(
        "rendered {} views into {}",
        exported.views.len(),
        args.out.display()
    );
    println!("config: {}", exported.config_path.display());
    if args.run {
        let cfg = PipelineConfig::load(&exported.config_path)?;
        print_outcome(&run_pipeline(&cfg)?);
    }
    Ok(())
}

fn compare(args: &CompareArgs) -> Result<(), Failure> {
    let report: BranchTraitReport = read_json(&args.report)?;
    let truth: BranchTraitReport = read_json(&args.truth)?;
    if !(args.match_radius > 0.0) {
        return Err(config_error("match radius must be positive"));
    }
    let summary = compare_traits(&report, &truth, args.match_radius);
    print_comparison(&summary);
    if let Some(p) = &args.out {
        write_json(p, &summary)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let single = |stage: Stage, args: &ConfigArgs| -> Result<(), Failure> {
        let mut cfg = args.load()?;
        cfg.stages = vec![stage];
        run_config(cfg, cli.workers)
    };
    match &cli.command {
        Command::Pipeline { config, stages } => {
            let mut cfg = config.load()?;
            if let Some(s) = stages {
                cfg.stages = parse_stages(s)?;
            }
            run_config(cfg, cli.workers)
        }
        Command::Segment(a) => single(Stage::Segment, a),
        Command::Carve(a) => single(Stage::Carve, a),
        Command::Edt(a) => single(Stage::Edt, a),
        Command::Skeletonize(a) => single(Stage::Skeletonize, a),
        Command::Graph(a) => single(Stage::Graph, a),
        Command::Traits(a) => single(Stage::Traits, a),
        Command::Synth(a) => synth(a, cli.workers),
        Command::Compare(a) => compare(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
