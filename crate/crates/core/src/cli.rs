//! The `fan` command line.
//!
//! Precedence: built-in defaults, then the `--config` file, then flags.
//! Exit codes: 0 ok, 1 usage or configuration, 2 bad input data, 3 runtime
//! fault.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;

use crate::bench::{parse_sizes, run_bench, BenchConfig};
use crate::config::RunConfig;
use crate::control::ControllerMode;
use crate::detection::{classify_regions, coarse_detect, Strategy};
use crate::error::{FanError, Result};
use crate::evaluation::{
    trajectory_comparison_csv, AnnotatedFrame, AnnotatedSequence, EvalReport, TrajectoryComparisonRow,
};
use crate::pipeline::viz::render_png;
use crate::pipeline::{gateway_serve, Annotation, DetectorPath, FieldsDirSource, FrameSource, Processor, SceneSource};
use crate::providers::queries::load_query_specs;
use crate::providers::{load_descriptor_field, load_masks, scenarios, write_masks, QuerySpec, Scene, SceneScript};
use crate::redetection::RecoveryMode;
use crate::simulator::{run_following, TrajectoryLog};
use crate::types::{DescriptorField, LabeledRegion, Mask, QueryDescriptor};

#[derive(Debug, Parser)]
#[command(name = "fan", version, about = "Open-vocabulary detect, track and follow over per-pixel descriptors")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Label regions of one frame with the given queries.
    Detect(DetectArgs),
    /// Run the closed follow loop over a scene and write the trajectory log.
    Follow(FollowArgs),
    /// Stream an annotated pipeline over websocket.
    Serve(ServeArgs),
    /// Score a trajectory log.
    Eval(EvalArgs),
    /// Per-stage throughput at several frame sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["field", "scene"])))]
struct DetectArgs {
    /// Descriptor field file (.fand).
    #[arg(long, value_name = "FILE")]
    field: Option<PathBuf>,
    /// Scene file or built-in scenario name; renders one frame.
    #[arg(long, value_name = "SCENE")]
    scene: Option<String>,
    /// Scene time in seconds.
    #[arg(long, default_value_t = 0.0)]
    time: f64,
    /// Segment masks (.fanm) for the mask path; scenes supply their own.
    #[arg(long, value_name = "FILE")]
    masks: Option<PathBuf>,
    /// Query list (JSON). The first entry is the target.
    #[arg(long, value_name = "FILE")]
    queries: PathBuf,
    /// Detection path: mask or coarse [default: coarse]
    #[arg(long)]
    mode: Option<DetectorPath>,
    /// Similarity threshold [default: 0.35 mask, 0.4 coarse with several queries, 0.6 with one]
    #[arg(long)]
    alpha: Option<f32>,
    /// Region aggregation on the mask path: mean, majority or kmeans [default: mean]
    #[arg(long)]
    strategy: Option<String>,
    /// Cluster count for kmeans.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Scene and clustering seed [default: from scene or config]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct FollowArgs {
    /// Scene file or built-in scenario name.
    #[arg(long, value_name = "SCENE")]
    scene: String,
    /// P or PID [default: P]
    #[arg(long)]
    controller: Option<ControllerMode>,
    /// tracker, human or auto [default: auto]
    #[arg(long)]
    recovery: Option<RecoveryMode>,
    /// mask or coarse [default: coarse]
    #[arg(long)]
    detector: Option<DetectorPath>,
    /// Simulated seconds [default: scene duration]
    #[arg(long)]
    duration: Option<f64>,
    /// Query list (JSON); the first entry is the target [default: target and background classes]
    #[arg(long, value_name = "FILE")]
    queries: Option<PathBuf>,
    /// Run all four controller and detector combinations.
    #[arg(long)]
    compare: bool,
    /// Leave stage latencies out of the log so reruns are bit-identical.
    #[arg(long)]
    no_timings: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Scene seed [default: from scene or config]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["scene", "fields_dir"])))]
struct ServeArgs {
    /// Scene file or built-in scenario name, looped.
    #[arg(long, value_name = "SCENE")]
    scene: Option<String>,
    /// Directory of .fand files replayed in name order, looped.
    #[arg(long, value_name = "DIR")]
    fields_dir: Option<PathBuf>,
    /// Listening port [default: 8765]
    #[arg(long)]
    port: Option<u16>,
    /// Initial query list (JSON) [default: none, wait for a click]
    #[arg(long, value_name = "FILE")]
    queries: Option<PathBuf>,
    /// Replay rate for --fields-dir in frames per second [default: 10]
    #[arg(long)]
    frame_rate: Option<f64>,
    /// Scene seed [default: from scene or config]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Trajectory log (trajectory.json from follow).
    #[arg(long, value_name = "FILE")]
    log: PathBuf,
    /// Ground-truth target masks (.fanm), one per step [default: masks in the log]
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Minimum IoU for a true positive [default: 0.5]
    #[arg(long)]
    iou_min: Option<f64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated WIDTHxHEIGHT list.
    #[arg(long, default_value = "320x240,640x480")]
    sizes: String,
    /// Frames per size.
    #[arg(long, default_value_t = 20)]
    frames: usize,
    /// Descriptor dimension.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Output directory; prints to stdout only when unset.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for a failed command.
pub fn exit_code(e: &FanError) -> i32 {
    use std::io::ErrorKind;
    match e {
        FanError::Config(_) => 1,
        FanError::Io(io) if matches!(io.kind(), ErrorKind::NotFound | ErrorKind::InvalidData) => 2,
        FanError::Io(_) => 3,
        _ => 2,
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("FAN_LOG_LEVEL", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            FanError::Io(io) => FanError::Config(format!("cannot read {}: {io}", path.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    match cli.command {
        Cmd::Detect(a) => detect(a, cfg),
        Cmd::Follow(a) => follow(a, cfg),
        Cmd::Serve(a) => serve(a, cfg),
        Cmd::Eval(a) => eval(a, cfg),
        Cmd::Bench(a) => bench(a),
    }
}

/// Loads a scene from a JSON file, or builds a named scenario.
pub fn load_scene(spec: &str, seed: Option<u64>) -> Result<Scene> {
    let path = Path::new(spec);
    let script = if path.is_file() {
        let mut s = SceneScript::load(path)?;
        if let Some(seed) = seed {
            s.seed = seed;
        }
        s
    } else if let Some(s) = scenarios::by_name(spec, seed.unwrap_or(0)) {
        s
    } else {
        return Err(FanError::Config(format!(
            "scene '{spec}' is neither a file nor one of {}",
            scenarios::NAMES.join(", ")
        )));
    };
    Scene::new(script)
}

fn resolve_queries(specs: &[QuerySpec], field: &DescriptorField, scene: Option<&Scene>) -> Result<Vec<QueryDescriptor>> {
    specs.iter().map(|s| s.resolve(field, scene)).collect()
}

fn default_specs(scene: &Scene) -> Result<Vec<QuerySpec>> {
    let target = scene
        .script()
        .target_class()
        .ok_or_else(|| FanError::Config("scene designates no target; pass --queries".into()))?;
    Ok(vec![
        QuerySpec::Class {
            label: "target".into(),
            class: target,
        },
        QuerySpec::Class {
            label: "background".into(),
            class: scene.script().background_class,
        },
    ])
}

fn parse_strategy(name: &str, k: usize) -> Result<Strategy> {
    match name.to_ascii_lowercase().as_str() {
        "mean" => Ok(Strategy::Mean),
        "majority" | "majority_vote" => Ok(Strategy::MajorityVote),
        "kmeans" => Ok(Strategy::Kmeans { k }),
        other => Err(FanError::Config(format!("unknown strategy '{other}'"))),
    }
}

#[derive(Serialize)]
struct RegionOut<'a> {
    index: usize,
    label: Option<&'a str>,
    score: f32,
    area: usize,
    bbox: Option<[usize; 4]>,
}

#[derive(Serialize)]
struct DetectOut<'a> {
    width: usize,
    height: usize,
    mode: String,
    alpha: f32,
    regions: Vec<RegionOut<'a>>,
}

fn detect(a: DetectArgs, cfg: RunConfig) -> Result<()> {
    let seed = a.seed.or(cfg.seed);
    let specs = load_query_specs(&a.queries)?;
    if specs.is_empty() {
        return Err(FanError::Config("query list is empty".into()));
    }
    let (field, scene_masks, scene) = match (&a.field, &a.scene) {
        (Some(path), None) => (load_descriptor_field(path)?, None, None),
        (None, Some(spec)) => {
            let scene = load_scene(spec, seed)?;
            let (field, truth) = scene.render_frame(a.time, &cfg.simulator.camera)?;
            (field, Some(truth.segments()), Some(scene))
        }
        _ => unreachable!("clap enforces exactly one source"),
    };
    let queries = resolve_queries(&specs, &field, scene.as_ref())?;

    let mut pipeline = cfg.pipeline;
    if let Some(mode) = a.mode {
        pipeline.detector = mode;
    }
    if a.alpha.is_some() {
        pipeline.alpha = a.alpha;
    }
    let mut det = pipeline.detection.with_alpha(pipeline.alpha_for(queries.len()));
    if let Some(s) = &a.strategy {
        det.strategy = parse_strategy(s, a.k)?;
    }
    if let Some(seed) = seed {
        det.kmeans_seed = seed;
    }
    det.validate()?;

    let regions: Vec<LabeledRegion> = match pipeline.detector {
        DetectorPath::Mask => {
            let masks = match (&a.masks, scene_masks) {
                (Some(path), _) => load_masks(path)?,
                (None, Some(m)) => m,
                (None, None) => return Err(FanError::Config("mask path needs --masks or --scene".into())),
            };
            classify_regions(&field, &masks, &queries, &det)?
        }
        DetectorPath::Coarse => {
            let mut all = Vec::new();
            for k in 0..queries.len() {
                all.extend(coarse_detect(&field, &queries, k, &det)?);
            }
            all
        }
    };

    fs::create_dir_all(&a.out)?;
    let annotations: Vec<Annotation> = regions.iter().filter_map(Annotation::from_region).collect();
    fs::write(a.out.join("overlay.png"), render_png(&field, &annotations)?)?;
    let masks: Vec<Mask> = regions.iter().map(|r| r.mask.clone()).collect();
    write_masks(a.out.join("regions.fanm"), &masks)?;
    let out = DetectOut {
        width: field.width(),
        height: field.height(),
        mode: pipeline.detector.to_string(),
        alpha: det.alpha(),
        regions: regions
            .iter()
            .enumerate()
            .map(|(index, r)| RegionOut {
                index,
                label: r.label.as_deref(),
                score: r.score,
                area: r.mask.count(),
                bbox: r.mask.bbox().map(|b| [b.x, b.y, b.w, b.h]),
            })
            .collect(),
    };
    fs::write(a.out.join("annotations.json"), serde_json::to_string_pretty(&out)?)?;
    for r in regions.iter().filter(|r| r.is_labeled()) {
        let b = r.mask.bbox().expect("labeled regions are non-empty");
        println!(
            "{}\t{:.4}\t{} {} {} {}",
            r.label.as_deref().unwrap_or_default(),
            r.score,
            b.x,
            b.y,
            b.w,
            b.h
        );
    }
    Ok(())
}

fn follow(a: FollowArgs, cfg: RunConfig) -> Result<()> {
    let scene = load_scene(&a.scene, a.seed.or(cfg.seed))?;
    let specs = match &a.queries {
        Some(path) => load_query_specs(path)?,
        None => default_specs(&scene)?,
    };
    if specs.is_empty() {
        return Err(FanError::Config("query list is empty".into()));
    }
    let mut sim = cfg.simulator;
    if a.duration.is_some() {
        sim.duration = a.duration;
    }
    if a.no_timings {
        sim.record_timings = false;
    }
    sim.record_masks = true;
    let (first, _) = scene.render_frame(0.0, &sim.camera)?;
    let queries = resolve_queries(&specs, &first, Some(&scene))?;

    let mut pipeline = cfg.pipeline;
    if let Some(r) = a.recovery {
        pipeline.recovery = r;
    }
    let mut controller = cfg.controller;
    let runs: Vec<(ControllerMode, DetectorPath)> = if a.compare {
        vec![
            (ControllerMode::P, DetectorPath::Mask),
            (ControllerMode::Pid, DetectorPath::Mask),
            (ControllerMode::P, DetectorPath::Coarse),
            (ControllerMode::Pid, DetectorPath::Coarse),
        ]
    } else {
        vec![(
            a.controller.unwrap_or(controller.mode),
            a.detector.unwrap_or(pipeline.detector),
        )]
    };

    fs::create_dir_all(&a.out)?;
    let mut rows = Vec::new();
    for (mode, detector) in runs {
        controller.mode = mode;
        pipeline.detector = detector;
        let log = run_following(&scene, &pipeline, &controller, &sim, queries.clone(), 0)?;
        let report = log.report(None, cfg.evaluation.iou_min)?;
        let dir = if a.compare {
            a.out.join(format!("{}_{}", mode.to_string().to_lowercase(), detector))
        } else {
            a.out.clone()
        };
        write_run(&dir, &log, &report)?;
        let distance = report.mean_trajectory_distance_m.unwrap_or(f64::NAN);
        println!(
            "{mode}/{detector}: mean distance {distance:.4} m, tp_rate {}, fp {}, mIoU {}, events {}",
            fmt_opt(report.tp_rate),
            report.fp_count.unwrap_or(0),
            fmt_opt(report.miou),
            log.events.len()
        );
        rows.push(TrajectoryComparisonRow {
            controller: mode.to_string(),
            detector: detector.to_string(),
            mean_distance_m: distance,
        });
    }
    fs::write(a.out.join("comparison.csv"), trajectory_comparison_csv(&rows)?)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "N/A".into())
}

fn write_run(dir: &Path, log: &TrajectoryLog, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trajectory.csv"), log.to_csv()?)?;
    fs::write(dir.join("trajectory.json"), log.to_json()?)?;
    fs::write(dir.join("events.json"), serde_json::to_string_pretty(&log.events)?)?;
    write_report(dir, report)
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report.to_json()?)?;
    fs::write(dir.join("report.csv"), report.to_csv()?)?;
    fs::write(dir.join("fps.csv"), report.fps_csv()?)?;
    Ok(())
}

fn serve(a: ServeArgs, cfg: RunConfig) -> Result<()> {
    let seed = a.seed.or(cfg.seed);
    let frame_rate = a.frame_rate.unwrap_or(cfg.serve.frame_rate);
    let port = a.port.unwrap_or(cfg.serve.port);
    let (mut source, scene): (Box<dyn FrameSource>, Option<Scene>) = match (&a.scene, &a.fields_dir) {
        (Some(spec), None) => {
            let scene = load_scene(spec, seed)?;
            (Box::new(SceneSource::new(scene.clone(), cfg.simulator.camera, true)), Some(scene))
        }
        (None, Some(dir)) => (Box::new(FieldsDirSource::open(dir, frame_rate, true)?), None),
        _ => unreachable!("clap enforces exactly one source"),
    };
    let queries = match &a.queries {
        Some(path) => {
            let specs = load_query_specs(path)?;
            // resolve against the first frame, then restart the stream
            let first = source
                .next_frame()?
                .ok_or_else(|| FanError::Config("source produced no frames".into()))?;
            let q = resolve_queries(&specs, &first.field, scene.as_ref())?;
            source = match (&a.scene, &a.fields_dir, scene) {
                (Some(_), _, Some(scene)) => Box::new(SceneSource::new(scene, cfg.simulator.camera, true)),
                (_, Some(dir), _) => Box::new(FieldsDirSource::open(dir, frame_rate, true)?),
                _ => unreachable!(),
            };
            q
        }
        None => Vec::new(),
    };
    let processor = Processor::new(cfg.pipeline, queries, 0)?;
    let handle = gateway_serve(source, processor, ("127.0.0.1", port))?;
    println!("listening on ws://{}", handle.local_addr());
    handle.wait();
    Ok(())
}

fn eval(a: EvalArgs, cfg: RunConfig) -> Result<()> {
    let log = TrajectoryLog::from_json(&fs::read_to_string(&a.log)?)?;
    let annotations = match &a.annotations {
        Some(path) => Some(AnnotatedSequence {
            target_label: log.target_label.clone(),
            frames: load_masks(path)?.into_iter().map(|target| AnnotatedFrame { target }).collect(),
        }),
        None => None,
    };
    let iou_min = a.iou_min.unwrap_or(cfg.evaluation.iou_min);
    if !(0.0..=1.0).contains(&iou_min) {
        return Err(FanError::Config("--iou-min must be in [0, 1]".into()));
    }
    let report = log.report(annotations.as_ref(), iou_min)?;
    write_report(&a.out, &report)?;
    print!("{}", report.to_csv()?);
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        sizes: parse_sizes(&a.sizes)?,
        frames: a.frames,
        dim: a.dim,
        seed: a.seed,
    };
    let rows = run_bench(&cfg)?;
    let report = EvalReport {
        fps: rows,
        ..EvalReport::new(cfg.frames as u64)
    };
    let table = report.fps_csv()?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("fps.csv"), &table)?;
    }
    print!("{table}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("fan").chain(args.iter().copied()))
    }

    #[test]
    fn detect_needs_queries_and_one_source() {
        assert!(parse(&["detect", "--scene", "detection"]).is_err());
        assert!(parse(&["detect", "--queries", "q.json"]).is_err());
        assert!(parse(&["detect", "--scene", "a", "--field", "b", "--queries", "q"]).is_err());
        assert!(parse(&["detect", "--scene", "a", "--queries", "q"]).is_ok());
    }

    #[test]
    fn enum_flags_parse() {
        let cli = parse(&["follow", "--scene", "tunnel", "--controller", "pid", "--recovery", "auto", "--detector", "mask"])
            .unwrap();
        let Cmd::Follow(f) = cli.command else { panic!() };
        assert_eq!(f.controller, Some(ControllerMode::Pid));
        assert_eq!(f.recovery, Some(RecoveryMode::Automatic));
        assert_eq!(f.detector, Some(DetectorPath::Mask));
        assert!(parse(&["follow", "--scene", "tunnel", "--controller", "pd"]).is_err());
    }

    #[test]
    fn serve_needs_exactly_one_source() {
        assert!(parse(&["serve"]).is_err());
        assert!(parse(&["serve", "--scene", "a", "--fields-dir", "b"]).is_err());
        assert!(parse(&["serve", "--fields-dir", "b"]).is_ok());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&FanError::Config("x".into())), 1);
        assert_eq!(exit_code(&FanError::EmptyRegion), 2);
        assert_eq!(exit_code(&FanError::Format { offset: 0, detail: "x".into() }), 2);
        let missing = std::io::Error::new(std::io::ErrorKind::NotFound, "x");
        assert_eq!(exit_code(&FanError::Io(missing)), 2);
        let busy = std::io::Error::new(std::io::ErrorKind::AddrInUse, "x");
        assert_eq!(exit_code(&FanError::Io(busy)), 3);
    }

    #[test]
    fn unknown_scene_is_config_error() {
        assert!(matches!(load_scene("no-such-scene", None), Err(FanError::Config(_))));
        assert!(load_scene("tunnel", Some(3)).is_ok());
    }
}
