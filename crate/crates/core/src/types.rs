//! Shared domain values: descriptor fields, masks, queries and the cosine
//! similarity every matcher is built on.
//!
//! Descriptors are stored as `f32`; dot products, norms and sums over masks
//! accumulate in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{FanError, Result};

/// Default stabilizer added to the product of norms in [`cosine_similarity`].
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Dense `height x width` grid of `dim`-dimensional descriptors, pixel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorField {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorField {
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || dim == 0 {
            return Err(FanError::Range(format!(
                "descriptor field dimensions must be positive, got {height}x{width}x{dim}"
            )));
        }
        let expected = height * width * dim;
        if data.len() != expected {
            return Err(FanError::Dimension {
                expected,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FanError::Range(format!(
                "non-finite descriptor component at element {i}"
            )));
        }
        Ok(Self {
            height,
            width,
            dim,
            data,
        })
    }

    /// Field where every pixel carries `vector`.
    pub fn uniform(height: usize, width: usize, vector: &[f32]) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * vector.len());
        for _ in 0..height * width {
            data.extend_from_slice(vector);
        }
        Self::new(height, width, vector.len(), data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Descriptor at column `x`, row `y`. Panics when out of bounds.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Descriptor by flat pixel index (`y * width + x`).
    #[inline]
    pub fn pixel_at(&self, index: usize) -> &[f32] {
        let start = index * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }
}

/// Binary per-pixel region.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    values: Vec<u8>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![0; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![1; height * width],
        }
    }

    /// Builds a mask from raw values; every value must be 0 or 1.
    pub fn from_values(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != height * width {
            return Err(FanError::Dimension {
                expected: height * width,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|&v| v > 1) {
            return Err(FanError::Range(format!(
                "mask value {} at pixel {i} is not binary",
                values[i]
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(u8::from(f(x, y)));
            }
        }
        Self {
            height,
            width,
            values,
        }
    }

    /// Axis-aligned rectangle `[x, x+w) x [y, y+h)`, clipped to the grid.
    pub fn from_rect(height: usize, width: usize, x: usize, y: usize, w: usize, h: usize) -> Self {
        Self::from_fn(height, width, |px, py| {
            px >= x && px < x + w && py >= y && py < y + h
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.values[y * self.width + x] = u8::from(on);
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    /// Flat indices of set pixels in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i)
    }

    /// Tight bounding box `(x, y, w, h)` or `None` for an empty mask.
    pub fn bbox(&self) -> Option<BBox> {
        let mut min_x = usize::MAX;
        let mut min_y = usize::MAX;
        let mut max_x = 0;
        let mut max_y = 0;
        let mut any = false;
        for i in self.indices() {
            let (x, y) = (i % self.width, i / self.width);
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
            any = true;
        }
        any.then(|| BBox {
            x: min_x,
            y: min_y,
            w: max_x - min_x + 1,
            h: max_y - min_y + 1,
        })
    }

    /// Mean pixel coordinate of the set pixels, in pixel-index units.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0f64, 0.0f64, 0usize);
        for i in self.indices() {
            sx += (i % self.width) as f64;
            sy += (i / self.width) as f64;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(&a, &b)| a != 0 && b != 0)
            .count()
    }

    pub fn union_count(&self, other: &Mask) -> usize {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(&a, &b)| a != 0 || b != 0)
            .count()
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.values
            .iter()
            .zip(&other.values)
            .all(|(&a, &b)| a == 0 || b != 0)
    }

    pub fn and(&self, other: &Mask) -> Mask {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| u8::from(a != 0 && b != 0))
            .collect();
        Mask {
            height: self.height,
            width: self.width,
            values,
        }
    }

    pub fn or(&self, other: &Mask) -> Mask {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| u8::from(a != 0 || b != 0))
            .collect();
        Mask {
            height: self.height,
            width: self.width,
            values,
        }
    }

    pub fn not(&self) -> Mask {
        let values = self.values.iter().map(|&v| u8::from(v == 0)).collect();
        Mask {
            height: self.height,
            width: self.width,
            values,
        }
    }
}

/// Pixel bounding box, `[x, x+w) x [y, y+h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    /// Box scaled by `factor` about its center and clipped to `width x height`.
    pub fn inflate(&self, factor: f64, width: usize, height: usize) -> BBox {
        let cx = self.x as f64 + self.w as f64 / 2.0;
        let cy = self.y as f64 + self.h as f64 / 2.0;
        let hw = self.w as f64 * factor / 2.0;
        let hh = self.h as f64 * factor / 2.0;
        let x0 = (cx - hw).floor().max(0.0) as usize;
        let y0 = (cy - hh).floor().max(0.0) as usize;
        let x1 = ((cx + hw).ceil() as usize).min(width);
        let y1 = ((cy + hh).ceil() as usize).min(height);
        BBox {
            x: x0.min(width),
            y: y0.min(height),
            w: x1.saturating_sub(x0),
            h: y1.saturating_sub(y0),
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Click,
    Region,
    Precomputed,
}

/// Labeled embedding of what the user is looking for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryDescriptor {
    pub label: String,
    pub vector: Vec<f32>,
    pub kind: QueryKind,
}

impl QueryDescriptor {
    /// Rejects empty, non-finite and zero-norm vectors.
    pub fn new(label: impl Into<String>, vector: Vec<f32>, kind: QueryKind) -> Result<Self> {
        if vector.is_empty() {
            return Err(FanError::Dimension {
                expected: 1,
                got: 0,
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(FanError::Range("query vector has non-finite components".into()));
        }
        if norm(&vector) == 0.0 {
            return Err(FanError::DegenerateQuery);
        }
        Ok(Self {
            label: label.into(),
            vector,
            kind,
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// A mask with the query label it matched (or `None` for unlabeled).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRegion {
    pub mask: Mask,
    pub label: Option<String>,
    /// Index into the query list that produced `label`.
    pub query: Option<usize>,
    pub score: f32,
}

impl LabeledRegion {
    pub fn is_labeled(&self) -> bool {
        self.label.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimilarityConfig {
    pub alpha: f32,
    pub epsilon: f64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            alpha: 0.35,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl SimilarityConfig {
    pub fn new(alpha: f32, epsilon: f64) -> Result<Self> {
        let cfg = Self { alpha, epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(FanError::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-3) {
            return Err(FanError::Config(format!(
                "epsilon {} outside (0, 1e-3]",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    // four independent lanes so the f64 adds pipeline
    let mut acc = [0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] as f64 * y[k] as f64;
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(&x, &y)| x as f64 * y as f64).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// `a.b / (|a||b| + eps)` before clamping.
pub fn cosine_similarity_raw(a: &[f32], b: &[f32], epsilon: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(FanError::Dimension {
            expected: a.len().max(b.len()).max(1),
            got: 0,
        });
    }
    if a.len() != b.len() {
        return Err(FanError::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if !(epsilon > 0.0) {
        return Err(FanError::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(dot(a, b) / (norm(a) * norm(b) + epsilon))
}

/// Stabilized cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f32], b: &[f32], epsilon: f64) -> Result<f32> {
    cosine_similarity_raw(a, b, epsilon).map(|c| c.clamp(-1.0, 1.0) as f32)
}

#[inline]
pub(crate) fn cosine_from_parts(dot: f64, norm_a: f64, norm_b: f64, epsilon: f64) -> f64 {
    (dot / (norm_a * norm_b + epsilon)).clamp(-1.0, 1.0)
}

pub fn validate_shapes(field: &DescriptorField, mask: &Mask) -> Result<()> {
    if field.shape() == mask.shape() {
        Ok(())
    } else {
        Err(FanError::Shape {
            field_h: field.height(),
            field_w: field.width(),
            mask_h: mask.height(),
            mask_w: mask.width(),
        })
    }
}

/// L2-normalized copy; zero vectors come back unchanged.
pub fn normalized(v: &[f32]) -> Vec<f32> {
    let n = norm(v);
    if n == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|&x| (x as f64 / n) as f32).collect()
}

/// Row-major run lengths of a mask, alternating runs of 0 and 1 and
/// starting with a (possibly empty) run of 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRle {
    pub height: usize,
    pub width: usize,
    pub counts: Vec<u32>,
}

impl MaskRle {
    pub fn encode(mask: &Mask) -> Self {
        let mut counts = Vec::new();
        let mut current = 0u8;
        let mut run = 0u32;
        for &v in mask.values() {
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
        counts.push(run);
        Self {
            height: mask.height(),
            width: mask.width(),
            counts,
        }
    }

    pub fn decode(&self) -> Result<Mask> {
        let mut values = Vec::with_capacity(self.height * self.width);
        for (k, &c) in self.counts.iter().enumerate() {
            values.extend(std::iter::repeat_n((k % 2) as u8, c as usize));
        }
        if values.len() != self.height * self.width {
            return Err(FanError::Range(format!(
                "run lengths cover {} pixels, expected {}",
                values.len(),
                self.height * self.width
            )));
        }
        Mask::from_values(self.height, self.width, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_cosine(a: &[f32], b: &[f32], eps: f64) -> f64 {
        let mut d = 0.0f64;
        let mut na = 0.0f64;
        let mut nb = 0.0f64;
        for i in 0..a.len() {
            d += a[i] as f64 * b[i] as f64;
            na += a[i] as f64 * a[i] as f64;
            nb += b[i] as f64 * b[i] as f64;
        }
        d / (na.sqrt() * nb.sqrt() + eps)
    }

    #[test]
    fn cosine_identical_unit_vectors() {
        let c = cosine_similarity(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], 1e-8).unwrap();
        assert!((c - 1.0).abs() <= 1e-7);
    }

    #[test]
    fn cosine_orthogonal_is_zero() {
        for eps in [1e-8, 1e-4, 1e-3] {
            assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0], eps).unwrap(), 0.0);
        }
    }

    #[test]
    fn cosine_hand_computed() {
        let a = [1.0, 2.0, 2.0];
        let b = [2.0, 1.0, 2.0];
        let oracle = scalar_cosine(&a, &b, 1e-8);
        assert!((oracle - 8.0 / (9.0 + 1e-8)).abs() < 1e-12);
        let c = cosine_similarity_raw(&a, &b, 1e-8).unwrap();
        assert!((c - oracle).abs() < 1e-12);
        assert!((c - 0.888_889).abs() < 1e-6);
    }

    #[test]
    fn cosine_rejects_bad_dimensions() {
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 2.0], 1e-8),
            Err(FanError::Dimension { .. })
        ));
        assert!(matches!(
            cosine_similarity(&[], &[], 1e-8),
            Err(FanError::Dimension { .. })
        ));
    }

    #[test]
    fn cosine_clamps() {
        // Rounding can push a self-similarity marginally above one.
        let v = [0.1f32; 7];
        let c = cosine_similarity(&v, &v, 1e-300).unwrap();
        assert!(c <= 1.0);
    }

    #[test]
    fn shapes_validate() {
        let f = DescriptorField::uniform(480, 640, &[1.0]).unwrap();
        assert!(validate_shapes(&f, &Mask::empty(480, 640)).is_ok());
        let err = validate_shapes(&f, &Mask::empty(240, 320)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("480x640") && msg.contains("240x320"), "{msg}");
        let tiny = DescriptorField::uniform(1, 1, &[1.0]).unwrap();
        assert!(validate_shapes(&tiny, &Mask::empty(1, 1)).is_ok());
    }

    #[test]
    fn field_rejects_non_finite_and_bad_length() {
        assert!(DescriptorField::new(1, 1, 2, vec![1.0, f32::NAN]).is_err());
        assert!(DescriptorField::new(1, 2, 2, vec![1.0; 3]).is_err());
        assert!(DescriptorField::new(0, 2, 2, vec![]).is_err());
    }

    #[test]
    fn mask_rejects_non_binary() {
        assert!(Mask::from_values(1, 2, vec![0, 2]).is_err());
        assert_eq!(Mask::from_values(1, 2, vec![1, 1]).unwrap().count(), 2);
    }

    #[test]
    fn query_rejects_zero_norm() {
        assert!(matches!(
            QueryDescriptor::new("x", vec![0.0, 0.0], QueryKind::Precomputed),
            Err(FanError::DegenerateQuery)
        ));
    }

    #[test]
    fn similarity_config_bounds() {
        assert!(SimilarityConfig::new(0.5, 1e-8).is_ok());
        assert!(SimilarityConfig::new(1.5, 1e-8).is_err());
        assert!(SimilarityConfig::new(0.5, 0.0).is_err());
        assert!(SimilarityConfig::new(0.5, 1e-2).is_err());
    }

    #[test]
    fn bbox_and_centroid() {
        let m = Mask::from_rect(20, 20, 10, 10, 2, 2);
        assert_eq!(m.bbox(), Some(BBox { x: 10, y: 10, w: 2, h: 2 }));
        assert_eq!(m.centroid(), Some((10.5, 10.5)));
        assert_eq!(Mask::empty(3, 3).bbox(), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec_pair() -> impl Strategy<Value = (Vec<f32>, Vec<f32>)> {
            (1usize..16).prop_flat_map(|d| {
                (
                    proptest::collection::vec(-10.0f32..10.0, d),
                    proptest::collection::vec(-10.0f32..10.0, d),
                )
            })
        }

        proptest! {
            #[test]
            fn symmetric((a, b) in vec_pair()) {
                let ab = cosine_similarity_raw(&a, &b, 1e-8).unwrap();
                let ba = cosine_similarity_raw(&b, &a, 1e-8).unwrap();
                prop_assert_eq!(ab, ba);
            }

            #[test]
            fn positive_scaling_bound((a, b) in vec_pair(), lambda in 0.01f32..100.0) {
                let na = norm(&a);
                let nb = norm(&b);
                prop_assume!(na > 1e-3 && nb > 1e-3);
                let scaled: Vec<f32> = a.iter().map(|x| x * lambda).collect();
                let eps = 1e-8;
                let c0 = cosine_similarity_raw(&a, &b, eps).unwrap();
                let c1 = cosine_similarity_raw(&scaled, &b, eps).unwrap();
                // f32 rounding of the scaled vector adds a few ulps on top of the eps term.
                prop_assert!((c1 - c0).abs() <= 2.0 * eps / (na * nb) + 1e-6);
            }

            #[test]
            fn bounded((a, b) in vec_pair()) {
                let c = cosine_similarity(&a, &b, 1e-8).unwrap();
                prop_assert!((-1.0..=1.0).contains(&c));
            }
        }
    }

    #[test]
    fn rle_round_trip() {
        let m = Mask::from_values(2, 3, vec![1, 1, 0, 0, 0, 1]).unwrap();
        let r = MaskRle::encode(&m);
        assert_eq!(r.counts, vec![0, 2, 3, 1]);
        assert_eq!(r.decode().unwrap(), m);
        assert_eq!(MaskRle::encode(&Mask::empty(2, 2)).counts, vec![4]);
        let bad = MaskRle { height: 2, width: 2, counts: vec![3] };
        assert!(bad.decode().is_err());
    }

    proptest::proptest! {
        #[test]
        fn rle_round_trips(v in proptest::collection::vec(0u8..2, 30)) {
            let m = Mask::from_values(5, 6, v).unwrap();
            proptest::prop_assert_eq!(MaskRle::encode(&m).decode().unwrap(), m);
        }
    }
}
