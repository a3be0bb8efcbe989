//! Detection rates, mask IoU, trajectory distance and report output.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FanError, Result};
use crate::types::{LabeledRegion, Mask};

pub const DEFAULT_IOU_MIN: f64 = 0.5;

/// Intersection over union. Two empty masks score 1.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(FanError::Shape {
            field_h: a.height(),
            field_w: a.width(),
            mask_h: b.height(),
            mask_w: b.width(),
        });
    }
    let union = a.union_count(b);
    if union == 0 {
        return Ok(1.0);
    }
    Ok(a.intersection_count(b) as f64 / union as f64)
}

/// Ground truth for one frame of an annotated sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedFrame {
    /// Visible part of the target; empty when absent or occluded.
    pub target: Mask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedSequence {
    pub target_label: String,
    pub frames: Vec<AnnotatedFrame>,
}

impl AnnotatedSequence {
    pub fn appearances(&self) -> usize {
        self.frames.iter().filter(|f| !f.target.is_empty()).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRates {
    /// `None` when the target never appears.
    pub tp_rate: Option<f64>,
    pub tp: u64,
    pub fp_count: u64,
    pub appearances: u64,
}

/// Scores per-frame detections against the annotations.
///
/// In each frame the target-labeled detection with the highest IoU is a true
/// positive when the target is visible and the IoU reaches `iou_min`. Every
/// other target-labeled detection in the frame counts as one false positive.
pub fn detection_rates(
    detections: &[Vec<LabeledRegion>],
    annotations: &AnnotatedSequence,
    iou_min: f64,
) -> Result<DetectionRates> {
    if detections.len() != annotations.frames.len() {
        return Err(FanError::Range(format!(
            "{} detection frames for {} annotated frames",
            detections.len(),
            annotations.frames.len()
        )));
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    for (dets, truth) in detections.iter().zip(&annotations.frames) {
        let target: Vec<&LabeledRegion> = dets
            .iter()
            .filter(|r| r.label.as_deref() == Some(annotations.target_label.as_str()))
            .collect();
        if target.is_empty() {
            continue;
        }
        let mut hit = false;
        if !truth.target.is_empty() {
            let best = target
                .iter()
                .map(|r| iou(&r.mask, &truth.target))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            hit = best >= iou_min;
        }
        if hit {
            tp += 1;
            fp += target.len() as u64 - 1;
        } else {
            fp += target.len() as u64;
        }
    }
    let appearances = annotations.appearances() as u64;
    Ok(DetectionRates {
        tp_rate: (appearances > 0).then(|| tp as f64 / appearances as f64),
        tp,
        fp_count: fp,
        appearances,
    })
}

/// Per-frame IoU of a predicted target mask (empty for no detection) against
/// the annotated target.
pub fn per_frame_iou(predicted: &[Mask], annotations: &AnnotatedSequence) -> Result<Vec<f64>> {
    if predicted.len() != annotations.frames.len() {
        return Err(FanError::Range("prediction and annotation lengths differ".into()));
    }
    predicted
        .iter()
        .zip(&annotations.frames)
        .map(|(p, t)| iou(p, &t.target))
        .collect()
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean over follower points of the distance to the closest target point.
pub fn trajectory_distance(follower: &[(f64, f64)], target: &[(f64, f64)]) -> Result<f64> {
    if follower.is_empty() || target.is_empty() {
        return Err(FanError::Range("trajectory_distance needs non-empty trajectories".into()));
    }
    let total: f64 = follower
        .iter()
        .map(|f| {
            target
                .iter()
                .map(|t| (f.0 - t.0).powi(2) + (f.1 - t.1).powi(2))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    Ok(total / follower.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpsRow {
    pub stage: String,
    pub width: usize,
    pub height: usize,
    pub mean_ms: f64,
    pub fps: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: u64,
    pub appearances: u64,
    pub tp_rate: Option<f64>,
    pub fp_count: Option<u64>,
    /// False positives are counted per frame.
    pub fp_unit: String,
    pub miou: Option<f64>,
    pub per_frame_iou: Vec<f64>,
    pub mean_trajectory_distance_m: Option<f64>,
    pub fps: Vec<FpsRow>,
}

pub const REPORT_CSV_HEADER: [&str; 6] =
    ["frames", "appearances", "tp_rate", "fp_count", "miou", "mean_trajectory_distance_m"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub fn new(frames: u64) -> Self {
        Self {
            frames,
            fp_unit: "frame".into(),
            ..Default::default()
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_CSV_HEADER).map_err(csv_err)?;
        w.write_record([
            self.frames.to_string(),
            self.appearances.to_string(),
            opt(self.tp_rate),
            opt(self.fp_count),
            opt(self.miou),
            opt(self.mean_trajectory_distance_m),
        ])
        .map_err(csv_err)?;
        into_string(w)
    }

    pub fn fps_csv(&self) -> Result<String> {
        let mut w = headerless();
        w.write_record(["stage", "width", "height", "mean_ms", "fps"]).map_err(csv_err)?;
        for r in &self.fps {
            w.serialize(r).map_err(csv_err)?;
        }
        into_string(w)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Writes the report in the requested format.
pub fn emit_report(report: &EvalReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => report.to_csv()?,
        ReportFormat::Json => report.to_json()?,
    };
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// One row of the controller/detector trajectory comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryComparisonRow {
    pub controller: String,
    pub detector: String,
    pub mean_distance_m: f64,
}

pub fn trajectory_comparison_csv(rows: &[TrajectoryComparisonRow]) -> Result<String> {
    let mut w = headerless();
    w.write_record(["controller", "detector", "mean_distance_m"]).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    into_string(w)
}

/// Writer whose header is written explicitly, so empty tables keep it.
pub(crate) fn headerless() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new())
}

pub(crate) fn csv_err(e: csv::Error) -> FanError {
    FanError::Io(std::io::Error::other(e))
}

pub(crate) fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| FanError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
