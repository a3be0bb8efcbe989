//! Query matching over segment masks (the mask path) and over raw pixels
//! followed by connected-component grouping (the coarse path).

pub mod components;
pub mod kmeans;

use serde::{Deserialize, Serialize};

use crate::error::{FanError, Result};
use crate::types::{
    cosine_from_parts, norm, validate_shapes, DescriptorField, LabeledRegion, Mask, QueryDescriptor,
    SimilarityConfig,
};

pub use components::{connected_components, Connectivity, LabelMap};

/// Mask-path threshold.
pub const ALPHA_MASK: f32 = 0.35;
/// Coarse-path threshold with several (environment + target) queries.
pub const ALPHA_COARSE_MULTI: f32 = 0.4;
/// Coarse-path threshold with only the target query.
pub const ALPHA_COARSE_SINGLE: f32 = 0.6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    #[default]
    Mean,
    MajorityVote,
    Kmeans { k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    pub similarity: SimilarityConfig,
    pub connectivity: Connectivity,
    pub min_component_area: usize,
    pub strategy: Strategy,
    pub kmeans_seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            similarity: SimilarityConfig::default(),
            connectivity: Connectivity::Eight,
            min_component_area: 9,
            strategy: Strategy::Mean,
            kmeans_seed: 0,
        }
    }
}

impl DetectionConfig {
    pub fn with_alpha(mut self, alpha: f32) -> Self {
        self.similarity.alpha = alpha;
        self
    }

    /// Coarse-path defaults for the given number of queries.
    pub fn coarse(num_queries: usize) -> Self {
        let alpha = if num_queries > 1 {
            ALPHA_COARSE_MULTI
        } else {
            ALPHA_COARSE_SINGLE
        };
        Self::default().with_alpha(alpha)
    }

    pub fn alpha(&self) -> f32 {
        self.similarity.alpha
    }

    pub fn validate(&self) -> Result<()> {
        self.similarity.validate()?;
        if self.min_component_area < 1 {
            return Err(FanError::Config("min_component_area must be at least 1".into()));
        }
        if let Strategy::Kmeans { k } = self.strategy {
            if k < 2 {
                return Err(FanError::Config(format!("k-means needs k >= 2, got {k}")));
            }
        }
        Ok(())
    }
}

/// Mean descriptor under `mask`, accumulated in `f64`.
pub fn region_descriptor(field: &DescriptorField, mask: &Mask) -> Result<Vec<f32>> {
    validate_shapes(field, mask)?;
    let d = field.dim();
    let mut sum = vec![0f64; d];
    let mut n = 0usize;
    for i in mask.indices() {
        for (s, &v) in sum.iter_mut().zip(field.pixel_at(i)) {
            *s += v as f64;
        }
        n += 1;
    }
    if n == 0 {
        return Err(FanError::EmptyRegion);
    }
    Ok(sum.into_iter().map(|s| (s / n as f64) as f32).collect())
}

/// Queries with norms computed once.
struct Prepared<'a> {
    queries: &'a [QueryDescriptor],
    norms: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(queries: &'a [QueryDescriptor], dim: usize) -> Result<Self> {
        if queries.is_empty() {
            return Err(FanError::Config("at least one query is required".into()));
        }
        for q in queries {
            if q.dim() != dim {
                return Err(FanError::Dimension {
                    expected: dim,
                    got: q.dim(),
                });
            }
        }
        Ok(Self {
            queries,
            norms: queries.iter().map(|q| norm(&q.vector)).collect(),
        })
    }

    /// Best query for `v` and its score. Ties go to the lower index.
    fn best(&self, v: &[f32], eps: f64) -> (usize, f64) {
        let nv = norm(v);
        let mut best = (0, f64::NEG_INFINITY);
        for (k, q) in self.queries.iter().enumerate() {
            let d: f64 = crate::types::dot(v, &q.vector);
            let c = cosine_from_parts(d, nv, self.norms[k], eps);
            if c > best.1 {
                best = (k, c);
            }
        }
        best
    }

    /// Per-pixel variant with `f32` dot products.
    #[inline]
    fn best_fast(&self, v: &[f32], eps: f64) -> (usize, f64) {
        let nv = (dot_f32(v, v) as f64).sqrt();
        let mut best = (0, f64::NEG_INFINITY);
        for (k, q) in self.queries.iter().enumerate() {
            let c = cosine_from_parts(dot_f32(v, &q.vector) as f64, nv, self.norms[k], eps);
            if c > best.1 {
                best = (k, c);
            }
        }
        best
    }
}

#[inline]
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut s: f32 = acc.iter().sum();
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Label decision for one region: `Some((query, score))` when labeled.
type Decision = (Option<usize>, f64);

fn decide_mean(prep: &Prepared, field: &DescriptorField, mask: &Mask, sim: &SimilarityConfig) -> Result<Decision> {
    let v = region_descriptor(field, mask)?;
    let (k, score) = prep.best(&v, sim.epsilon);
    Ok(if score >= sim.alpha as f64 {
        (Some(k), score)
    } else {
        (None, score)
    })
}

/// Labels each mask with its most similar query when that similarity reaches
/// alpha. Output order follows `masks`. Empty masks come back unlabeled with
/// score 0.
pub fn classify_regions(
    field: &DescriptorField,
    masks: &[Mask],
    queries: &[QueryDescriptor],
    cfg: &DetectionConfig,
) -> Result<Vec<LabeledRegion>> {
    let prep = Prepared::new(queries, field.dim())?;
    let sim = &cfg.similarity;
    let mut out = Vec::with_capacity(masks.len());
    for (j, mask) in masks.iter().enumerate() {
        validate_shapes(field, mask)?;
        if mask.is_empty() {
            log::warn!("mask {j} is empty; leaving it unlabeled");
            out.push(LabeledRegion {
                mask: mask.clone(),
                label: None,
                query: None,
                score: 0.0,
            });
            continue;
        }
        let (query, score) = match cfg.strategy {
            Strategy::Mean => decide_mean(&prep, field, mask, sim)?,
            Strategy::MajorityVote => match majority(&prep, field, mask, sim)? {
                Some((k, s)) => (Some(k), s),
                None => (None, decide_mean(&prep, field, mask, sim)?.1),
            },
            Strategy::Kmeans { k } => kmeans_decision(&prep, field, mask, k, sim, cfg.kmeans_seed)?,
        };
        out.push(LabeledRegion {
            mask: mask.clone(),
            label: query.map(|k| queries[k].label.clone()),
            query,
            score: score as f32,
        });
    }
    Ok(out)
}

/// Single-query form of [`classify_regions`].
pub fn classify_single(
    field: &DescriptorField,
    masks: &[Mask],
    query: &QueryDescriptor,
    cfg: &DetectionConfig,
) -> Result<Vec<LabeledRegion>> {
    classify_regions(field, masks, std::slice::from_ref(query), cfg)
}

/// Per-pixel winning query, `0` for unlabeled and `k + 1` for query `k`,
/// together with each pixel's best similarity.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelLabels {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
    pub scores: Vec<f32>,
}

impl PixelLabels {
    /// Pixels assigned to query `k`.
    pub fn binary(&self, k: usize) -> Mask {
        let want = k as u32 + 1;
        let values = self.labels.iter().map(|&l| u8::from(l == want)).collect();
        Mask::from_values(self.height, self.width, values).expect("binary by construction")
    }
}

pub fn pixel_label_map(
    field: &DescriptorField,
    queries: &[QueryDescriptor],
    sim: &SimilarityConfig,
) -> Result<PixelLabels> {
    let prep = Prepared::new(queries, field.dim())?;
    let n = field.height() * field.width();
    let mut labels = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    let alpha = sim.alpha as f64;
    for px in field.pixels() {
        let (k, s) = prep.best_fast(px, sim.epsilon);
        labels.push(if s >= alpha { k as u32 + 1 } else { 0 });
        scores.push(s as f32);
    }
    Ok(PixelLabels {
        height: field.height(),
        width: field.width(),
        labels,
        scores,
    })
}

/// Groups pixels labeled with query `target` into connected regions. Each
/// region's score is the mean best-similarity of its pixels.
pub fn coarse_detect(
    field: &DescriptorField,
    queries: &[QueryDescriptor],
    target: usize,
    cfg: &DetectionConfig,
) -> Result<Vec<LabeledRegion>> {
    if target >= queries.len() {
        return Err(FanError::Range(format!(
            "target query {target} but only {} queries",
            queries.len()
        )));
    }
    let pixels = pixel_label_map(field, queries, &cfg.similarity)?;
    Ok(group_pixels(&pixels, queries, target, cfg))
}

pub(crate) fn group_pixels(
    pixels: &PixelLabels,
    queries: &[QueryDescriptor],
    target: usize,
    cfg: &DetectionConfig,
) -> Vec<LabeledRegion> {
    let lm = connected_components(&pixels.binary(target), cfg.connectivity, cfg.min_component_area);
    let mut sums = vec![0f64; lm.count as usize];
    for (i, &l) in lm.labels.iter().enumerate() {
        if l > 0 {
            sums[l as usize - 1] += pixels.scores[i] as f64;
        }
    }
    let areas = lm.areas();
    lm.masks()
        .into_iter()
        .enumerate()
        .map(|(c, mask)| LabeledRegion {
            mask,
            label: Some(queries[target].label.clone()),
            query: Some(target),
            score: (sums[c] / areas[c] as f64) as f32,
        })
        .collect()
}

fn vote(counts: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &c) in counts.iter().enumerate() {
        if c > 0 && best.is_none_or(|b| c > counts[b]) {
            best = Some(k);
        }
    }
    best
}

fn majority(prep: &Prepared, field: &DescriptorField, mask: &Mask, sim: &SimilarityConfig) -> Result<Option<(usize, f64)>> {
    validate_shapes(field, mask)?;
    if mask.is_empty() {
        return Err(FanError::EmptyRegion);
    }
    let m = prep.queries.len();
    let mut counts = vec![0usize; m];
    let mut score_sums = vec![0f64; m];
    for i in mask.indices() {
        let (k, s) = prep.best(field.pixel_at(i), sim.epsilon);
        if s >= sim.alpha as f64 {
            counts[k] += 1;
            score_sums[k] += s;
        }
    }
    Ok(vote(&counts).map(|k| (k, score_sums[k] / counts[k] as f64)))
}

/// Every pixel votes for its most similar query (if above alpha); the mask
/// takes the most frequent vote. Returns the winning query index and the mean
/// similarity of the pixels that voted for it.
pub fn classify_region_majority(
    field: &DescriptorField,
    mask: &Mask,
    queries: &[QueryDescriptor],
    sim: &SimilarityConfig,
) -> Result<Option<(usize, f32)>> {
    let prep = Prepared::new(queries, field.dim())?;
    Ok(majority(&prep, field, mask, sim)?.map(|(k, s)| (k, s as f32)))
}

fn kmeans_decision(
    prep: &Prepared,
    field: &DescriptorField,
    mask: &Mask,
    k: usize,
    sim: &SimilarityConfig,
    seed: u64,
) -> Result<Decision> {
    validate_shapes(field, mask)?;
    let points: Vec<&[f32]> = mask.indices().map(|i| field.pixel_at(i)).collect();
    if points.is_empty() {
        return Err(FanError::EmptyRegion);
    }
    if points.len() < k {
        log::warn!(
            "mask has {} pixels, fewer than k={k}; using the mean descriptor",
            points.len()
        );
        return decide_mean(prep, field, mask, sim);
    }
    let centroids = kmeans::kmeans(&points, k, seed);
    let m = prep.queries.len();
    let mut counts = vec![0usize; m];
    let mut score_sums = vec![0f64; m];
    for c in &centroids {
        let (q, s) = prep.best(c, sim.epsilon);
        if s >= sim.alpha as f64 {
            counts[q] += 1;
            score_sums[q] += s;
        }
    }
    Ok(match vote(&counts) {
        Some(q) => (Some(q), score_sums[q] / counts[q] as f64),
        None => (None, decide_mean(prep, field, mask, sim)?.1),
    })
}

/// Clusters the mask's pixel descriptors into `k` representatives which then
/// vote like pixels do in [`classify_region_majority`]. Masks with fewer than
/// `k` pixels fall back to the mean descriptor.
pub fn classify_region_kmeans(
    field: &DescriptorField,
    mask: &Mask,
    queries: &[QueryDescriptor],
    k: usize,
    sim: &SimilarityConfig,
    seed: u64,
) -> Result<Option<(usize, f32)>> {
    if k < 2 {
        return Err(FanError::Config(format!("k-means needs k >= 2, got {k}")));
    }
    let prep = Prepared::new(queries, field.dim())?;
    let (q, s) = kmeans_decision(&prep, field, mask, k, sim, seed)?;
    Ok(q.map(|q| (q, s as f32)))
}
