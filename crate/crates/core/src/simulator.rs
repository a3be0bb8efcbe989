//! 2D kinematic world that closes the loop between the pipeline and the
//! controller: the target follows its script, the follower integrates
//! velocity commands and the camera renders follower-centered frames.

use serde::{Deserialize, Serialize};

use crate::control::{compute_command, pixel_error, reset, ControlCommand, ControllerConfig, ControllerState};
use crate::error::{FanError, Result};
use crate::evaluation::{
    csv_err, detection_rates, headerless, into_string, iou, mean, per_frame_iou, trajectory_distance, AnnotatedFrame,
    AnnotatedSequence, EvalReport, FpsRow,
};
use crate::pipeline::timing::{fps, timed};
use crate::pipeline::{
    Command, DetectorPath, Frame, PipelineConfig, PipelineStatus, Processor, StageTimings, TrackEvent,
};
use crate::providers::{CameraModel, Scene};
use crate::redetection::RecoveryMode;
use crate::types::{LabeledRegion, Mask, MaskRle, QueryDescriptor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// View geometry; the pose is replaced by the follower position each step.
    pub camera: CameraModel,
    /// Simulated seconds; defaults to the scene duration.
    pub duration: Option<f64>,
    /// Initial follower position; defaults to the target's start.
    pub follower_start: Option<[f64; 2]>,
    /// Frames the scripted operator waits after a loss before clicking.
    pub human_reaction_frames: u32,
    /// Wall-clock stage latencies in the log. Off gives bit-identical logs.
    pub record_timings: bool,
    /// Store predicted and ground-truth target masks per step.
    pub record_masks: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            camera: CameraModel::default(),
            duration: None,
            follower_start: None,
            human_reaction_frames: 10,
            record_timings: true,
            record_masks: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub t: f64,
    pub follower: (f64, f64),
    /// `(object id, position)` for every scripted object.
    pub objects: Vec<(u32, (f64, f64))>,
}

impl WorldState {
    pub fn initial(scene: &Scene, follower: (f64, f64)) -> Self {
        Self {
            t: 0.0,
            follower,
            objects: object_poses(scene, 0.0),
        }
    }
}

fn object_poses(scene: &Scene, t: f64) -> Vec<(u32, (f64, f64))> {
    scene
        .script()
        .objects
        .iter()
        .map(|o| (o.id, scene.object_position(o.id, t).expect("object exists")))
        .collect()
}

/// Euler step of the follower under `command`; objects move to their
/// scripted poses at `t + dt`.
pub fn step_world(world: &WorldState, command: ControlCommand, scene: &Scene, dt: f64) -> WorldState {
    let t = world.t + dt;
    WorldState {
        t,
        follower: (world.follower.0 + command.vx * dt, world.follower.1 + command.vy * dt),
        objects: object_poses(scene, t),
    }
}

/// One simulation step. Latencies are zero unless timings are recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub t: f64,
    pub follower_x: f64,
    pub follower_y: f64,
    pub target_x: f64,
    pub target_y: f64,
    pub error_x: Option<f64>,
    pub error_y: Option<f64>,
    pub vx: f64,
    pub vy: f64,
    pub status: PipelineStatus,
    pub target_visible: bool,
    /// IoU of the pipeline's target mask against the visible target.
    pub iou: f64,
    pub ingest_ms: f64,
    pub detection_ms: f64,
    pub tracking_ms: f64,
    pub redetection_ms: f64,
    pub control_ms: f64,
}

pub const TRAJECTORY_CSV_HEADER: [&str; 18] = [
    "step",
    "t",
    "follower_x",
    "follower_y",
    "target_x",
    "target_y",
    "error_x",
    "error_y",
    "vx",
    "vy",
    "status",
    "target_visible",
    "iou",
    "ingest_ms",
    "detection_ms",
    "tracking_ms",
    "redetection_ms",
    "control_ms",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub step: u64,
    pub t: f64,
    pub event: TrackEvent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub target_label: String,
    pub dt: f64,
    /// Camera view in pixels.
    pub width: usize,
    pub height: usize,
    pub records: Vec<StepRecord>,
    pub events: Vec<LogEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<Vec<MaskRle>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<MaskRle>>,
}

impl TrajectoryLog {
    pub fn follower_path(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.follower_x, r.follower_y)).collect()
    }

    pub fn target_path(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.target_x, r.target_y)).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = headerless();
        w.write_record(TRAJECTORY_CSV_HEADER).map_err(csv_err)?;
        for r in &self.records {
            w.serialize(r).map_err(csv_err)?;
        }
        into_string(w)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Ground-truth sequence, available when masks were recorded.
    pub fn annotations(&self) -> Result<Option<AnnotatedSequence>> {
        let Some(truth) = &self.truth else {
            return Ok(None);
        };
        let frames = truth
            .iter()
            .map(|r| r.decode().map(|target| AnnotatedFrame { target }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(AnnotatedSequence {
            target_label: self.target_label.clone(),
            frames,
        }))
    }

    pub fn predictions(&self) -> Result<Option<Vec<Mask>>> {
        self.predicted
            .as_ref()
            .map(|p| p.iter().map(MaskRle::decode).collect())
            .transpose()
    }

    /// Evaluation report for the run. Detection metrics use `annotations`
    /// when given, then the recorded masks, then the per-step IoU column.
    pub fn report(&self, annotations: Option<&AnnotatedSequence>, iou_min: f64) -> Result<EvalReport> {
        let mut report = EvalReport::new(self.records.len() as u64);
        let recorded = self.annotations()?;
        let truth = annotations.or(recorded.as_ref());
        match (truth, self.predictions()?) {
            (Some(truth), Some(predicted)) => {
                let detections: Vec<Vec<LabeledRegion>> = predicted
                    .iter()
                    .map(|m| {
                        if m.is_empty() {
                            Vec::new()
                        } else {
                            vec![LabeledRegion {
                                mask: m.clone(),
                                label: Some(truth.target_label.clone()),
                                query: None,
                                score: 1.0,
                            }]
                        }
                    })
                    .collect();
                let rates = detection_rates(&detections, truth, iou_min)?;
                report.appearances = rates.appearances;
                report.tp_rate = rates.tp_rate;
                report.fp_count = Some(rates.fp_count);
                report.per_frame_iou = per_frame_iou(&predicted, truth)?;
            }
            (Some(_), None) => {
                return Err(FanError::Config("annotations need a log recorded with masks".into()));
            }
            (None, _) => {
                let (mut tp, mut fp) = (0u64, 0u64);
                for r in &self.records {
                    if r.error_x.is_none() {
                        continue;
                    }
                    if r.target_visible && r.iou >= iou_min {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
                let appearances = self.records.iter().filter(|r| r.target_visible).count() as u64;
                report.appearances = appearances;
                report.tp_rate = (appearances > 0).then(|| tp as f64 / appearances as f64);
                report.fp_count = Some(fp);
                report.per_frame_iou = self.records.iter().map(|r| r.iou).collect();
            }
        }
        report.miou = mean(&report.per_frame_iou);
        if !self.records.is_empty() {
            report.mean_trajectory_distance_m = Some(trajectory_distance(&self.follower_path(), &self.target_path())?);
        }
        report.fps = self.fps_rows();
        Ok(report)
    }

    /// Per-stage latency over the steps where the stage ran, plus the
    /// end-to-end row over all steps. Empty when timings were not recorded.
    pub fn fps_rows(&self) -> Vec<FpsRow> {
        let per_step: Vec<[f64; 5]> = self
            .records
            .iter()
            .map(|r| [r.ingest_ms, r.detection_ms, r.tracking_ms, r.redetection_ms, r.control_ms])
            .collect();
        let total: Vec<f64> = per_step.iter().map(|v| v.iter().sum()).collect();
        if total.iter().all(|&t| t == 0.0) {
            return Vec::new();
        }
        let row = |stage: &str, ms: f64| FpsRow {
            stage: stage.into(),
            width: self.width,
            height: self.height,
            mean_ms: ms,
            fps: fps(ms),
        };
        let mut rows: Vec<FpsRow> = StageTimings::STAGES
            .iter()
            .enumerate()
            .filter_map(|(k, stage)| {
                let ran: Vec<f64> = per_step.iter().map(|v| v[k]).filter(|&v| v > 0.0).collect();
                mean(&ran).map(|ms| row(stage, ms))
            })
            .collect();
        rows.push(row("end_to_end", mean(&total).unwrap_or(0.0)));
        rows
    }
}

/// Pixel of `mask` closest to its centroid.
fn click_point(mask: &Mask) -> Option<(usize, usize)> {
    let (cx, cy) = mask.centroid()?;
    let w = mask.width();
    mask.indices()
        .map(|i| (i % w, i / w))
        .min_by(|a, b| {
            let da = (a.0 as f64 - cx).powi(2) + (a.1 as f64 - cy).powi(2);
            let db = (b.0 as f64 - cx).powi(2) + (b.1 as f64 - cy).powi(2);
            da.total_cmp(&db)
        })
}

/// Runs the closed loop for the scene's designated target. `queries[target]`
/// is the target query; any others describe the environment.
///
/// In human recovery mode a scripted operator clicks the visible target's
/// center once the track has been lost for `human_reaction_frames` frames.
pub fn run_following(
    scene: &Scene,
    pipeline: &PipelineConfig,
    controller: &ControllerConfig,
    sim: &SimConfig,
    queries: Vec<QueryDescriptor>,
    target: usize,
) -> Result<TrajectoryLog> {
    controller.validate()?;
    sim.camera.validate()?;
    let script = scene.script();
    let target_id = script
        .target
        .ok_or_else(|| FanError::Config("scene designates no target object".into()))?;
    let label = queries
        .get(target)
        .map(|q| q.label.clone())
        .ok_or_else(|| FanError::Range(format!("target query {target} missing")))?;
    let dt = controller.dt;
    let duration = sim.duration.unwrap_or(script.duration);
    if !(duration >= 0.0) || duration > script.duration {
        return Err(FanError::Range(format!(
            "duration {duration} outside scene duration {}",
            script.duration
        )));
    }
    let steps = (duration / dt + 1e-9).floor() as u64 + 1;
    let start = sim
        .follower_start
        .map(|p| (p[0], p[1]))
        .unwrap_or_else(|| scene.object_position(target_id, 0.0).expect("target exists"));

    let mut processor = Processor::new(*pipeline, queries, target)?;
    let mut world = WorldState::initial(scene, start);
    let mut ctl = ControllerState::default();
    let mut lost_for = 0u32;
    let view = (sim.camera.view_width, sim.camera.view_height);
    let mut log = TrajectoryLog {
        target_label: label.clone(),
        dt,
        width: view.0,
        height: view.1,
        records: Vec::with_capacity(steps as usize),
        events: Vec::new(),
        predicted: sim.record_masks.then(Vec::new),
        truth: sim.record_masks.then(Vec::new),
    };

    for step in 0..steps {
        let t = step as f64 * dt;
        world.t = t;
        let camera = sim.camera.at(world.follower.0, world.follower.1);
        let (rendered, ingest_ms) = timed(|| scene.render_frame(t, &camera));
        let (field, truth) = rendered?;
        let visible = truth
            .object(target_id)
            .map(|o| o.mask.clone())
            .unwrap_or_else(|| Mask::empty(view.1, view.0));
        let frame = Frame {
            index: step,
            t,
            segments: (pipeline.detector == DetectorPath::Mask).then(|| truth.segments()),
            field,
            truth: None,
        };
        let result = processor.process(&frame)?;

        if processor.config().recovery == RecoveryMode::Human && result.status == PipelineStatus::Lost {
            lost_for += 1;
            if lost_for >= sim.human_reaction_frames {
                if let Some((x, y)) = click_point(&visible) {
                    processor.submit(Command::Click {
                        x,
                        y,
                        label: label.clone(),
                    });
                    lost_for = 0;
                }
            }
        } else {
            lost_for = 0;
        }

        let predicted = result.target.as_ref().map(|r| &r.mask);
        let ((command, error), control_ms) = timed(|| match predicted.and_then(Mask::centroid) {
            Some(c) => {
                let e = pixel_error(c, view);
                let (u, next) = compute_command(&ctl, e, controller);
                ctl = next;
                (u, Some(e))
            }
            None => {
                ctl = reset(&ctl);
                (ControlCommand::ZERO, None)
            }
        });

        let empty = Mask::empty(view.1, view.0);
        let pred_mask = predicted.unwrap_or(&empty);
        let target_pose = scene.object_position(target_id, t).expect("target exists");
        let mut timings = result.timings;
        timings.ingest_ms = ingest_ms;
        timings.control_ms = control_ms;
        if !sim.record_timings {
            timings = Default::default();
        }
        log.records.push(StepRecord {
            step,
            t,
            follower_x: world.follower.0,
            follower_y: world.follower.1,
            target_x: target_pose.0,
            target_y: target_pose.1,
            error_x: error.map(|e| e.0),
            error_y: error.map(|e| e.1),
            vx: command.vx,
            vy: command.vy,
            status: result.status,
            target_visible: !visible.is_empty(),
            iou: iou(pred_mask, &visible)?,
            ingest_ms: timings.ingest_ms,
            detection_ms: timings.detection_ms,
            tracking_ms: timings.tracking_ms,
            redetection_ms: timings.redetection_ms,
            control_ms: timings.control_ms,
        });
        if let Some(event) = result.event {
            log::info!("step {step} t={t:.2}: {event:?}");
            log.events.push(LogEvent { step, t, event });
        }
        if let (Some(p), Some(g)) = (log.predicted.as_mut(), log.truth.as_mut()) {
            p.push(MaskRle::encode(pred_mask));
            g.push(MaskRle::encode(&visible));
        }
        world = step_world(&world, command, scene, dt);
    }
    if processor.status() != PipelineStatus::Active {
        log::warn!("run ended with the target {:?}", processor.status());
    }
    Ok(log)
}
