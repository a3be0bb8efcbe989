use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::timing::{timed, StageTimings, TimingStats};
use crate::detection::{
    classify_regions, coarse_detect, region_descriptor, DetectionConfig, ALPHA_COARSE_MULTI, ALPHA_COARSE_SINGLE,
    ALPHA_MASK,
};
use crate::error::{FanError, Result};
use crate::providers::query_from_region;
use crate::providers::GroundTruth;
use crate::redetection::{human_redetect, redetect, Candidates, FeatureMemory, HumanInput, MemoryConfig, RecoveryMode};
use crate::tracking::{init_track, step_track, TrackState, TrackStatus, TrackerConfig};
use crate::types::{cosine_similarity, DescriptorField, LabeledRegion, Mask, QueryDescriptor, QueryKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PipelineMode {
    #[default]
    DetectThenTrack,
    DetectEveryFrame,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorPath {
    /// Match queries against class-agnostic segments supplied with the frame.
    Mask,
    #[default]
    Coarse,
}

impl std::str::FromStr for DetectorPath {
    type Err = FanError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mask" => Ok(Self::Mask),
            "coarse" => Ok(Self::Coarse),
            other => Err(FanError::Config(format!("unknown detector '{other}'"))),
        }
    }
}

impl std::fmt::Display for DetectorPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mask => "mask",
            Self::Coarse => "coarse",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PipelineStatus {
    Active,
    Lost,
    /// No target acquired yet.
    #[default]
    Searching,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    pub detector: DetectorPath,
    /// Detection threshold. Unset picks the path default: 0.35 for masks,
    /// 0.4 for coarse with several queries and 0.6 with one.
    pub alpha: Option<f32>,
    /// Connectivity, component size and aggregation strategy. Its own alpha
    /// is ignored in favor of `alpha`.
    pub detection: DetectionConfig,
    pub tracker: TrackerConfig,
    pub memory: MemoryConfig,
    pub recovery: RecoveryMode,
    /// Re-run detection every n frames while tracking. Off by default.
    pub refresh_interval: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: PipelineMode::DetectThenTrack,
            detector: DetectorPath::Coarse,
            alpha: None,
            detection: DetectionConfig::default(),
            tracker: TrackerConfig::default(),
            memory: MemoryConfig::default(),
            recovery: RecoveryMode::Automatic,
            refresh_interval: None,
        }
    }
}

impl PipelineConfig {
    pub fn alpha_for(&self, num_queries: usize) -> f32 {
        self.alpha.unwrap_or(match self.detector {
            DetectorPath::Mask => ALPHA_MASK,
            DetectorPath::Coarse if num_queries > 1 => ALPHA_COARSE_MULTI,
            DetectorPath::Coarse => ALPHA_COARSE_SINGLE,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.detection.with_alpha(self.alpha_for(1)).validate()?;
        self.tracker.validate()?;
        FeatureMemory::new(self.memory)?;
        if self.refresh_interval == Some(0) {
            return Err(FanError::Config("refresh_interval must be at least 1".into()));
        }
        Ok(())
    }
}

/// One frame handed to the processor.
#[derive(Clone, Debug)]
pub struct Frame {
    pub index: u64,
    pub t: f64,
    pub field: DescriptorField,
    /// Class-agnostic segments for the mask path.
    pub segments: Option<Vec<Mask>>,
    pub truth: Option<GroundTruth>,
}

/// Operator input applied between frames.
#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Click { x: usize, y: usize, label: String },
    Box { x: usize, y: usize, w: usize, h: usize, label: String },
    SetMode(RecoveryMode),
    Redetect,
    SetAlpha(f32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: String,
    pub score: f32,
    pub bbox: [u32; 4],
}

impl Annotation {
    /// Box annotation of a labeled region; `None` when unlabeled or empty.
    pub fn from_region(r: &LabeledRegion) -> Option<Self> {
        let b = r.mask.bbox()?;
        Some(Self {
            label: r.label.clone()?,
            score: r.score,
            bbox: [b.x as u32, b.y as u32, b.w as u32, b.h as u32],
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackEvent {
    Acquired,
    Lost,
    Recovered,
}

#[derive(Clone, Debug)]
pub struct FrameResult {
    pub index: u64,
    pub t: f64,
    pub status: PipelineStatus,
    /// Target mask this frame, from detection, tracking or recovery.
    pub target: Option<LabeledRegion>,
    /// Every target-labeled region produced by detection this frame.
    pub detections: Vec<LabeledRegion>,
    pub annotations: Vec<Annotation>,
    pub timings: StageTimings,
    pub event: Option<TrackEvent>,
    pub command_errors: Vec<String>,
}

/// Single-threaded detection, tracking and recovery state machine.
#[derive(Debug)]
pub struct Processor {
    cfg: PipelineConfig,
    queries: Vec<QueryDescriptor>,
    target: Option<usize>,
    clicks: HashMap<String, (Vec<f64>, usize)>,
    track: Option<TrackState>,
    memory: FeatureMemory,
    status: PipelineStatus,
    pending: Vec<Command>,
    force_redetect: bool,
    stats: TimingStats,
    recoveries: u64,
}

impl Processor {
    /// `target` indexes the query the pipeline follows; the other queries
    /// describe the environment.
    pub fn new(cfg: PipelineConfig, queries: Vec<QueryDescriptor>, target: usize) -> Result<Self> {
        cfg.validate()?;
        if !queries.is_empty() && target >= queries.len() {
            return Err(FanError::Range(format!("target {target} but {} queries", queries.len())));
        }
        if let Some(d) = queries.first().map(QueryDescriptor::dim) {
            if let Some(q) = queries.iter().find(|q| q.dim() != d) {
                return Err(FanError::Dimension { expected: d, got: q.dim() });
            }
        }
        Ok(Self {
            memory: FeatureMemory::new(cfg.memory)?,
            target: (!queries.is_empty()).then_some(target),
            cfg,
            queries,
            clicks: HashMap::new(),
            track: None,
            status: PipelineStatus::Searching,
            pending: Vec::new(),
            force_redetect: false,
            stats: TimingStats::default(),
            recoveries: 0,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn queries(&self) -> &[QueryDescriptor] {
        &self.queries
    }

    pub fn status(&self) -> PipelineStatus {
        self.status
    }

    pub fn memory(&self) -> &FeatureMemory {
        &self.memory
    }

    pub fn recoveries(&self) -> u64 {
        self.recoveries
    }

    pub fn stats(&self) -> &TimingStats {
        &self.stats
    }

    pub fn target_label(&self) -> Option<&str> {
        self.target.map(|k| self.queries[k].label.as_str())
    }

    /// Queues a command for the next frame boundary.
    pub fn submit(&mut self, cmd: Command) {
        self.pending.push(cmd);
    }

    fn detection_cfg(&self, num_queries: usize) -> DetectionConfig {
        self.cfg.detection.with_alpha(self.cfg.alpha_for(num_queries))
    }

    fn candidates<'a>(&self, frame: &'a Frame) -> Result<Candidates<'a>> {
        match self.cfg.detector {
            DetectorPath::Coarse => Ok(Candidates::Coarse),
            DetectorPath::Mask => frame
                .segments
                .as_deref()
                .map(Candidates::Masks)
                .ok_or_else(|| FanError::Config("mask detector needs frame segments".into())),
        }
    }

    /// Target-labeled regions, best first.
    fn detect(&self, frame: &Frame) -> Result<Vec<LabeledRegion>> {
        let Some(target) = self.target else {
            return Ok(Vec::new());
        };
        let cfg = self.detection_cfg(self.queries.len());
        let mut regions: Vec<LabeledRegion> = match self.candidates(frame)? {
            Candidates::Coarse => coarse_detect(&frame.field, &self.queries, target, &cfg)?,
            Candidates::Masks(masks) => classify_regions(&frame.field, masks, &self.queries, &cfg)?
                .into_iter()
                .filter(|r| r.query == Some(target))
                .collect(),
        };
        // stable: equal scores keep candidate order
        regions.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(regions)
    }

    fn recover(&mut self, frame: &Frame) -> Result<Option<LabeledRegion>> {
        let Some(target) = self.target else {
            return Ok(None);
        };
        let original = &self.queries[target];
        let query = match self.memory.recovery_query(original.label.clone()) {
            Ok(q) => q,
            Err(e) => {
                log::debug!("recovery falls back to the original query: {e}");
                original.clone()
            }
        };
        let cfg = self.detection_cfg(1);
        let found = redetect(&query, &frame.field, self.candidates(frame)?, &cfg)?;
        Ok(found.map(|mut r| {
            r.query = Some(target);
            r
        }))
    }

    fn start_track(&mut self, region: &LabeledRegion, frame: &Frame) -> Result<()> {
        let state = init_track(region, &frame.field)?;
        self.memory.maybe_store(frame.index, &frame.field, &region.mask);
        self.track = Some(state);
        self.status = PipelineStatus::Active;
        Ok(())
    }

    fn apply(&mut self, cmd: Command, frame: &Frame) -> Result<Option<LabeledRegion>> {
        let alpha_track = self.cfg.tracker.alpha_track;
        let conn = self.cfg.tracker.connectivity;
        match cmd {
            Command::SetMode(m) => self.cfg.recovery = m,
            Command::SetAlpha(a) => {
                if !(-1.0..=1.0).contains(&a) {
                    return Err(FanError::Range(format!("alpha {a} outside [-1, 1]")));
                }
                self.cfg.alpha = Some(a);
            }
            Command::Redetect => self.force_redetect = true,
            Command::Click { x, y, label } => {
                let region = human_redetect(HumanInput::Click { x, y }, &frame.field, &label, alpha_track, conn)?;
                let entry = self.clicks.entry(label.clone()).or_insert_with(|| (vec![0.0; frame.field.dim()], 0));
                for (s, &v) in entry.0.iter_mut().zip(frame.field.pixel(x, y)) {
                    *s += v as f64;
                }
                entry.1 += 1;
                let n = entry.1 as f64;
                let mean: Vec<f32> = entry.0.iter().map(|s| (s / n) as f32).collect();
                let q = QueryDescriptor::new(label, mean, QueryKind::Click)?;
                self.set_query(q)?;
                return Ok(Some(region));
            }
            Command::Box { x, y, w, h, label } => {
                let input = HumanInput::Box { x, y, w, h };
                let region = human_redetect(input, &frame.field, &label, alpha_track, conn)?;
                let (fh, fw) = frame.field.shape();
                let q = query_from_region(&frame.field, &Mask::from_rect(fh, fw, x, y, w, h), label.clone())?;
                self.clicks.remove(&label);
                self.set_query(q)?;
                return Ok(Some(region));
            }
        }
        Ok(None)
    }

    fn set_query(&mut self, q: QueryDescriptor) -> Result<()> {
        if let Some(first) = self.queries.first() {
            if first.dim() != q.dim() {
                return Err(FanError::Dimension { expected: first.dim(), got: q.dim() });
            }
        }
        let k = match self.queries.iter().position(|e| e.label == q.label) {
            Some(k) => {
                self.queries[k] = q;
                k
            }
            None => {
                self.queries.push(q);
                self.queries.len() - 1
            }
        };
        if self.target != Some(k) {
            self.memory = FeatureMemory::new(self.cfg.memory)?;
        }
        self.target = Some(k);
        Ok(())
    }

    /// Applies queued commands, then detects, tracks or recovers on `frame`.
    pub fn process(&mut self, frame: &Frame) -> Result<FrameResult> {
        let mut timings = StageTimings::default();
        let mut command_errors = Vec::new();
        let mut event = None;
        let mut target: Option<LabeledRegion> = None;
        let mut detections = Vec::new();

        let before = self.status;
        for cmd in std::mem::take(&mut self.pending) {
            let (res, ms) = timed(|| self.apply(cmd.clone(), frame));
            timings.redetection_ms += ms;
            match res {
                Ok(Some(mut region)) => {
                    region.query = self.target;
                    self.start_track(&region, frame)?;
                    target = Some(region);
                }
                Ok(None) => {}
                Err(e) => {
                    log::warn!("command {cmd:?} rejected: {e}");
                    command_errors.push(e.to_string());
                }
            }
        }

        match self.cfg.mode {
            PipelineMode::DetectEveryFrame => {
                let (regions, ms) = timed(|| self.detect(frame));
                timings.detection_ms += ms;
                detections = regions?;
                target = detections.first().cloned();
                self.status = if target.is_some() {
                    PipelineStatus::Active
                } else {
                    PipelineStatus::Searching
                };
            }
            PipelineMode::DetectThenTrack if target.is_none() => {
                let refresh = self
                    .cfg
                    .refresh_interval
                    .is_some_and(|n| self.track.is_some() && frame.index.is_multiple_of(n));
                if self.track.is_none() || refresh {
                    let (regions, ms) = timed(|| self.detect(frame));
                    timings.detection_ms += ms;
                    detections = regions?;
                    if let Some(best) = detections.first().cloned() {
                        self.start_track(&best, frame)?;
                        target = Some(best);
                    }
                }
                if target.is_none() {
                    if let Some(state) = self.track.take() {
                        target = self.track_step(state, frame, &mut timings)?;
                    }
                }
            }
            PipelineMode::DetectThenTrack => {}
        }

        if self.cfg.mode == PipelineMode::DetectThenTrack
            && (self.force_redetect || (self.status == PipelineStatus::Lost && self.cfg.recovery == RecoveryMode::Automatic))
            && target.is_none()
        {
            let (found, ms) = timed(|| self.recover(frame));
            timings.redetection_ms += ms;
            if let Some(region) = found? {
                self.start_track(&region, frame)?;
                target = Some(region);
            }
        }
        self.force_redetect = false;

        if before != self.status {
            event = match (before, self.status) {
                (PipelineStatus::Searching, PipelineStatus::Active) => Some(TrackEvent::Acquired),
                (PipelineStatus::Lost, PipelineStatus::Active) => Some(TrackEvent::Recovered),
                (_, PipelineStatus::Lost) => Some(TrackEvent::Lost),
                _ => None,
            };
        }
        if event == Some(TrackEvent::Recovered) {
            self.recoveries += 1;
        }

        let annotations = if self.cfg.mode == PipelineMode::DetectEveryFrame {
            detections.iter().filter_map(Annotation::from_region).collect()
        } else {
            target.iter().filter_map(Annotation::from_region).collect()
        };
        self.stats.push(timings);
        Ok(FrameResult {
            index: frame.index,
            t: frame.t,
            status: self.status,
            target,
            detections,
            annotations,
            timings,
            event,
            command_errors,
        })
    }

    fn track_step(&mut self, state: TrackState, frame: &Frame, timings: &mut StageTimings) -> Result<Option<LabeledRegion>> {
        let lost_before = state.status == TrackStatus::Lost;
        // a lost track only keeps searching in tracker-led recovery
        if lost_before && self.cfg.recovery != RecoveryMode::TrackerOnly {
            self.track = Some(state);
            return Ok(None);
        }
        let ((next, mask), ms) = timed(|| step_track(&state, &frame.field, &self.cfg.tracker));
        if lost_before {
            timings.redetection_ms += ms;
        } else {
            timings.tracking_ms += ms;
        }
        let out = if mask.is_empty() {
            if next.status == TrackStatus::Lost {
                self.status = PipelineStatus::Lost;
            }
            None
        } else {
            self.memory.maybe_store(frame.index, &frame.field, &mask);
            let score = region_descriptor(&frame.field, &mask)
                .and_then(|r| cosine_similarity(&r, &next.template, self.cfg.detection.similarity.epsilon))
                .unwrap_or(0.0);
            self.status = PipelineStatus::Active;
            Some(LabeledRegion {
                mask,
                label: next.label.clone(),
                query: self.target,
                score,
            })
        };
        self.track = Some(next);
        Ok(out)
    }
}
