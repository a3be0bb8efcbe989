//! Per-stage throughput at several frame sizes on synthetic fields.

use crate::control::{compute_command, pixel_error, ControllerConfig, ControllerState};
use crate::detection::{coarse_detect, DetectionConfig};
use crate::error::{FanError, Result};
use crate::evaluation::{mean, FpsRow};
use crate::pipeline::timing::{fps, timed};
use crate::pipeline::StageTimings;
use crate::providers::{scenarios, CameraModel, Scene};
use crate::redetection::{redetect, Candidates};
use crate::tracking::{init_track, step_track, TrackerConfig};
use crate::types::{DescriptorField, QueryDescriptor, QueryKind};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    /// `(width, height)` pairs.
    pub sizes: Vec<(usize, usize)>,
    pub frames: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![(320, 240), (640, 480)],
            frames: 20,
            dim: 32,
            seed: 0,
        }
    }
}

/// Parses `320x240,640x480`.
pub fn parse_sizes(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|s| {
            let (w, h) = s
                .trim()
                .split_once(['x', 'X'])
                .ok_or_else(|| FanError::Config(format!("size '{s}' is not WIDTHxHEIGHT")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| FanError::Config(format!("bad size '{s}'")))
            };
            Ok((parse(w)?, parse(h)?))
        })
        .collect()
}

/// One row per stage and size, stages in pipeline order. Detection is the
/// coarse path with target and background queries.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<FpsRow>> {
    if cfg.frames == 0 {
        return Err(FanError::Config("bench needs at least one frame".into()));
    }
    let scene = Scene::new(scenarios::bench(cfg.seed, cfg.dim))?;
    let queries = vec![
        class_query(&scene, scenarios::TARGET, "target")?,
        class_query(&scene, scenarios::BACKGROUND, "background")?,
    ];
    let det = DetectionConfig::coarse(queries.len());
    let tracker = TrackerConfig::default();
    let controller = ControllerConfig::default();
    let step = scene.script().duration / cfg.frames as f64;

    let mut rows = Vec::new();
    for &(w, h) in &cfg.sizes {
        // same world footprint at every size
        let camera = CameraModel {
            view_width: w,
            view_height: h,
            scale: 3.2 / w as f64,
            pose: (0.0, 0.0),
        };
        let mut samples: Vec<StageTimings> = Vec::with_capacity(cfg.frames);
        let mut fields: Vec<DescriptorField> = Vec::with_capacity(cfg.frames);
        for i in 0..cfg.frames {
            let (rendered, ms) = timed(|| scene.render_frame(i as f64 * step, &camera));
            fields.push(rendered?.0);
            samples.push(StageTimings {
                ingest_ms: ms,
                ..Default::default()
            });
        }
        let mut track = None;
        let mut ctl = ControllerState::default();
        for (field, s) in fields.iter().zip(samples.iter_mut()) {
            let (found, ms) = timed(|| coarse_detect(field, &queries, 0, &det));
            s.detection_ms = ms;
            let found = found?;
            let state = match (track.take(), found.first()) {
                (Some(t), _) => t,
                (None, Some(r)) => init_track(r, field)?,
                (None, None) => return Err(FanError::Config("bench scene shows no target".into())),
            };
            let ((next, mask), ms) = timed(|| step_track(&state, field, &tracker));
            s.tracking_ms = ms;
            track = Some(next);
            let (recovered, ms) = timed(|| redetect(&queries[0], field, Candidates::Coarse, &det));
            s.redetection_ms = ms;
            recovered?;
            let centroid = mask.centroid().unwrap_or((w as f64 / 2.0, h as f64 / 2.0));
            let ((_, next), ms) = timed(|| compute_command(&ctl, pixel_error(centroid, (w, h)), &controller));
            s.control_ms = ms;
            ctl = next;
        }
        for (k, stage) in StageTimings::STAGES.iter().enumerate() {
            let ms: Vec<f64> = samples.iter().map(|s| s.values()[k]).collect();
            let mean_ms = mean(&ms).unwrap_or(0.0);
            rows.push(FpsRow {
                stage: stage.to_string(),
                width: w,
                height: h,
                mean_ms,
                fps: fps(mean_ms),
            });
        }
    }
    Ok(rows)
}

fn class_query(scene: &Scene, class: u32, label: &str) -> Result<QueryDescriptor> {
    let base = scene
        .base(class)
        .ok_or_else(|| FanError::Config(format!("scene lacks class {class}")))?;
    QueryDescriptor::new(label, base.to_vec(), QueryKind::Precomputed)
}
