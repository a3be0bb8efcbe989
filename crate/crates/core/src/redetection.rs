//! Feature memory of the tracked object and the three recovery levels used
//! once the tracker loses it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::detection::{coarse_detect, connected_components, region_descriptor, Connectivity, DetectionConfig};
use crate::detection::classify_single;
use crate::error::{FanError, Result};
use crate::types::{
    cosine_similarity_raw, norm, BBox, DescriptorField, LabeledRegion, Mask, QueryDescriptor, QueryKind,
    DEFAULT_EPSILON,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecoveryMode {
    /// The tracker keeps searching around the last known position.
    TrackerOnly,
    /// Wait for an operator click or box.
    Human,
    /// Match the mean of the stored descriptors against fresh candidates.
    #[default]
    Automatic,
}

impl std::str::FromStr for RecoveryMode {
    type Err = FanError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tracker" | "tracker_only" => Ok(Self::TrackerOnly),
            "human" => Ok(Self::Human),
            "auto" | "automatic" => Ok(Self::Automatic),
            other => Err(FanError::Config(format!("unknown recovery mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryConfig {
    pub tau: u64,
    pub capacity: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self { tau: 10, capacity: 64 }
    }
}

/// Ring of object descriptors sampled every `tau` frames while tracking.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMemory {
    tau: u64,
    capacity: usize,
    stored: VecDeque<Vec<f32>>,
    last_frame: Option<u64>,
}

impl FeatureMemory {
    pub fn new(cfg: MemoryConfig) -> Result<Self> {
        if cfg.tau < 1 || cfg.capacity < 1 {
            return Err(FanError::Config("tau and capacity must be at least 1".into()));
        }
        Ok(Self {
            tau: cfg.tau,
            capacity: cfg.capacity,
            stored: VecDeque::with_capacity(cfg.capacity),
            last_frame: None,
        })
    }

    pub fn len(&self) -> usize {
        self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }

    pub fn stored(&self) -> impl Iterator<Item = &[f32]> {
        self.stored.iter().map(Vec::as_slice)
    }

    /// Stores the object's mean descriptor when `frame_index` is a multiple
    /// of tau. Returns whether an entry was added.
    pub fn maybe_store(&mut self, frame_index: u64, field: &DescriptorField, object_mask: &Mask) -> bool {
        if !frame_index.is_multiple_of(self.tau) || self.last_frame == Some(frame_index) {
            return false;
        }
        let v = match region_descriptor(field, object_mask) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("skipping feature store at frame {frame_index}: {e}");
                return false;
            }
        };
        if self.stored.len() == self.capacity {
            self.stored.pop_front();
        }
        self.stored.push_back(v);
        self.last_frame = Some(frame_index);
        true
    }

    /// Mean of the stored descriptors as a query.
    pub fn recovery_query(&self, label: impl Into<String>) -> Result<QueryDescriptor> {
        let first = self.stored.front().ok_or(FanError::NoMemory)?;
        let mut sum = vec![0f64; first.len()];
        for v in &self.stored {
            for (s, &x) in sum.iter_mut().zip(v) {
                *s += x as f64;
            }
        }
        let n = self.stored.len() as f64;
        let mean: Vec<f32> = sum.into_iter().map(|s| (s / n) as f32).collect();
        if norm(&mean) == 0.0 {
            return Err(FanError::DegenerateQuery);
        }
        QueryDescriptor::new(label, mean, QueryKind::Region)
    }
}

/// Where recovery looks for the lost object.
#[derive(Clone, Copy, Debug)]
pub enum Candidates<'a> {
    /// Class-agnostic segments from a segmenter.
    Masks(&'a [Mask]),
    /// Segmenter-free grouping of similar pixels.
    Coarse,
}

/// Best-matching candidate region for `query`, if any clears alpha. Ties keep
/// the earliest candidate.
pub fn redetect(
    query: &QueryDescriptor,
    field: &DescriptorField,
    candidates: Candidates<'_>,
    cfg: &DetectionConfig,
) -> Result<Option<LabeledRegion>> {
    let regions = match candidates {
        Candidates::Masks(masks) => classify_single(field, masks, query, cfg)?,
        Candidates::Coarse => coarse_detect(field, std::slice::from_ref(query), 0, cfg)?,
    };
    let mut best: Option<LabeledRegion> = None;
    for r in regions.into_iter().filter(LabeledRegion::is_labeled) {
        if best.as_ref().is_none_or(|b| r.score > b.score) {
            best = Some(r);
        }
    }
    Ok(best)
}

/// Operator input while the target is lost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HumanInput {
    Click { x: usize, y: usize },
    Box { x: usize, y: usize, w: usize, h: usize },
}

/// Turns an operator click or box into a target region.
///
/// A box is refined to the pixels inside it whose similarity to the
/// descriptor of the box's central half reaches `alpha`, keeping the largest
/// connected part. A click grows the connected region of pixels similar to
/// the clicked descriptor.
pub fn human_redetect(
    input: HumanInput,
    field: &DescriptorField,
    label: impl Into<String>,
    alpha: f32,
    connectivity: Connectivity,
) -> Result<LabeledRegion> {
    let (h, w) = field.shape();
    let label = label.into();
    match input {
        HumanInput::Click { x, y } => {
            if x >= w || y >= h {
                return Err(FanError::Range(format!("click ({x}, {y}) outside {w}x{h} frame")));
            }
            let seed = field.pixel(x, y).to_vec();
            let window = BBox { x: 0, y: 0, w, h };
            let (binary, scores) = similar_pixels(field, &seed, window, alpha);
            let lm = connected_components(&binary, connectivity, 1);
            let id = lm.get(x, y);
            let mask = if id == 0 {
                // the clicked pixel itself fell below alpha (only possible for alpha > 1)
                Mask::from_rect(h, w, x, y, 1, 1)
            } else {
                lm.component(id)
            };
            let score = mean_score(&mask, &scores);
            Ok(LabeledRegion {
                mask,
                label: Some(label),
                query: None,
                score,
            })
        }
        HumanInput::Box { x, y, w: bw, h: bh } => {
            if bw == 0 || bh == 0 {
                return Err(FanError::Range("box must have positive area".into()));
            }
            if x + bw > w || y + bh > h {
                return Err(FanError::Range(format!(
                    "box ({x}, {y}, {bw}, {bh}) exceeds {w}x{h} frame"
                )));
            }
            let bbox = BBox { x, y, w: bw, h: bh };
            let core = BBox {
                x: x + bw / 4,
                y: y + bh / 4,
                w: (bw / 2).max(1),
                h: (bh / 2).max(1),
            };
            let core_mask = Mask::from_rect(h, w, core.x, core.y, core.w, core.h);
            let descriptor = region_descriptor(field, &core_mask)?;
            let (binary, scores) = similar_pixels(field, &descriptor, bbox, alpha);
            let lm = connected_components(&binary, connectivity, 1);
            let mask = if lm.count == 0 {
                log::warn!("box refinement found no similar pixels; using the raw box");
                Mask::from_rect(h, w, x, y, bw, bh)
            } else {
                let areas = lm.areas();
                let best = (0..areas.len()).fold(0, |b, k| if areas[k] > areas[b] { k } else { b });
                lm.component(best as u32 + 1)
            };
            let score = mean_score(&mask, &scores);
            Ok(LabeledRegion {
                mask,
                label: Some(label),
                query: None,
                score,
            })
        }
    }
}

fn similar_pixels(field: &DescriptorField, seed: &[f32], window: BBox, alpha: f32) -> (Mask, Vec<f32>) {
    let (h, w) = field.shape();
    let mut binary = Mask::empty(h, w);
    let mut scores = vec![0f32; h * w];
    for y in window.y..window.y + window.h {
        for x in window.x..window.x + window.w {
            let c = cosine_similarity_raw(field.pixel(x, y), seed, DEFAULT_EPSILON)
                .unwrap_or(0.0)
                .clamp(-1.0, 1.0);
            scores[y * w + x] = c as f32;
            if c >= alpha as f64 {
                binary.set(x, y, true);
            }
        }
    }
    (binary, scores)
}

fn mean_score(mask: &Mask, scores: &[f32]) -> f32 {
    let n = mask.count();
    if n == 0 {
        return 0.0;
    }
    (mask.indices().map(|i| scores[i] as f64).sum::<f64>() / n as f64) as f32
}
