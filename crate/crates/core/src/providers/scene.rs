//! Procedural top-down scenes rendered straight into descriptor space.
//!
//! Every class owns a unit base vector. A pixel covered by class `k` gets
//! `normalize(base_k + noise)` where the noise is isotropic Gaussian with
//! expected norm `noise_sigma` (per-component standard deviation
//! `noise_sigma / sqrt(dim)`). With `patch_size > 1` the noise-free signal is
//! averaged over a fixed grid of square patches first, which mimics the
//! coarse spatial resolution of patch-based feature extractors.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FanError, Result};
use crate::types::{dot, DescriptorField, Mask};

/// Classes whose base vectors must stay below this pairwise cosine.
pub const MAX_CLASS_COSINE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Disc,
    Rect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub id: u32,
    /// Seed for a random base vector. Ignored when `vector` is given.
    #[serde(default)]
    pub seed: u64,
    /// Explicit base vector; normalized on load and never repelled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f32>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: u32,
    pub class: u32,
    pub shape: Shape,
    /// Diameter for discs, side length for rects, meters.
    pub size: f64,
    pub waypoints: Vec<Waypoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccluderSpec {
    /// `[x, y, w, h]` in world meters, `(x, y)` the minimum corner.
    pub rect: [f64; 4],
    /// Active time interval `[t0, t1]`, inclusive.
    pub active: [f64; 2],
    pub class: u32,
}

/// JSON scene description. See `docs/scene.schema.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneScript {
    pub duration: f64,
    pub frame_rate: f64,
    /// Side of the square world centered on the origin, meters.
    pub world_extent: f64,
    pub background_class: u32,
    pub classes: Vec<ClassSpec>,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub occluders: Vec<OccluderSpec>,
    pub noise_sigma: f64,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    /// Object id the follower is asked to follow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<u32>,
}

fn default_patch_size() -> usize {
    1
}

impl SceneScript {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.frame_rate).floor() as usize + 1
    }

    pub fn object(&self, id: u32) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Class id of the designated target object.
    pub fn target_class(&self) -> Option<u32> {
        self.target.and_then(|id| self.object(id)).map(|o| o.class)
    }
}

/// Downward orthographic camera centered on the follower.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraModel {
    pub view_width: usize,
    pub view_height: usize,
    /// Meters per pixel.
    pub scale: f64,
    pub pose: (f64, f64),
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            view_width: 160,
            view_height: 120,
            scale: 0.02,
            pose: (0.0, 0.0),
        }
    }
}

impl CameraModel {
    pub fn at(self, x: f64, y: f64) -> Self {
        Self {
            pose: (x, y),
            ..self
        }
    }

    /// World coordinates of the center of pixel `(px, py)`.
    #[inline]
    pub fn pixel_to_world(&self, px: f64, py: f64) -> (f64, f64) {
        (
            self.pose.0 + (px + 0.5 - self.view_width as f64 / 2.0) * self.scale,
            self.pose.1 + (py + 0.5 - self.view_height as f64 / 2.0) * self.scale,
        )
    }

    /// Continuous pixel coordinates of a world point (inverse of
    /// [`pixel_to_world`](Self::pixel_to_world)).
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.pose.0) / self.scale + self.view_width as f64 / 2.0 - 0.5,
            (y - self.pose.1) / self.scale + self.view_height as f64 / 2.0 - 0.5,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || self.view_width == 0 || self.view_height == 0 {
            return Err(FanError::Config(format!(
                "camera needs positive scale and view, got {}x{} @ {}",
                self.view_width, self.view_height, self.scale
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectTruth {
    pub object_id: u32,
    pub class_id: u32,
    pub mask: Mask,
}

/// Post-occlusion visibility of every scripted object in one view.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub objects: Vec<ObjectTruth>,
    /// Class id of each pixel, row-major.
    pub class_map: Vec<u32>,
    pub background_class: u32,
    pub width: usize,
    pub height: usize,
}

impl GroundTruth {
    pub fn object(&self, id: u32) -> Option<&ObjectTruth> {
        self.objects.iter().find(|o| o.object_id == id)
    }

    /// Pixels not covered by any visible object (background and occluders).
    pub fn background_mask(&self) -> Mask {
        let mut covered = Mask::empty(self.height, self.width);
        for o in &self.objects {
            covered = covered.or(&o.mask);
        }
        covered.not()
    }

    /// Class-agnostic segmentation: every non-empty object mask, one mask
    /// per visible occluder class, then the remaining background. Stands in
    /// for an instance segmenter.
    pub fn segments(&self) -> Vec<Mask> {
        let mut out: Vec<Mask> = self
            .objects
            .iter()
            .filter(|o| !o.mask.is_empty())
            .map(|o| o.mask.clone())
            .collect();
        let rest = self.background_mask();
        let mut other: Vec<u32> = rest
            .indices()
            .map(|i| self.class_map[i])
            .filter(|&c| c != self.background_class)
            .collect();
        other.sort_unstable();
        other.dedup();
        for class in other {
            out.push(Mask::from_fn(self.height, self.width, |x, y| {
                let i = y * self.width + x;
                rest.values()[i] != 0 && self.class_map[i] == class
            }));
        }
        let bg = Mask::from_fn(self.height, self.width, |x, y| {
            let i = y * self.width + x;
            rest.values()[i] != 0 && self.class_map[i] == self.background_class
        });
        if !bg.is_empty() {
            out.push(bg);
        }
        out
    }
}

/// Validated scene with its class base vectors resolved.
#[derive(Clone, Debug)]
pub struct Scene {
    script: SceneScript,
    class_ids: Vec<u32>,
    bases: Vec<Vec<f32>>,
    /// Standard-normal samples shared by every frame; each pixel reads a
    /// randomly offset window of `dim` values.
    noise: Arc<Vec<f32>>,
}

const NOISE_POOL: usize = 1 << 20;

impl Scene {
    pub fn new(script: SceneScript) -> Result<Self> {
        validate_script(&script)?;
        let bases = resolve_bases(&script)?;
        let class_ids = script.classes.iter().map(|c| c.id).collect();
        let noise = if script.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(script.seed ^ 0x6e6f_6973_6500);
            (0..NOISE_POOL + script.dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            script,
            class_ids,
            bases,
            noise: Arc::new(noise),
        })
    }

    pub fn script(&self) -> &SceneScript {
        &self.script
    }

    pub fn dim(&self) -> usize {
        self.script.dim
    }

    /// Unit base vector of `class`.
    pub fn base(&self, class: u32) -> Option<&[f32]> {
        self.class_index(class).map(|i| self.bases[i].as_slice())
    }

    fn class_index(&self, class: u32) -> Option<usize> {
        self.class_ids.iter().position(|&c| c == class)
    }

    /// Interpolated position of `object_id` at `t`; clamps outside the waypoints.
    pub fn object_position(&self, object_id: u32, t: f64) -> Option<(f64, f64)> {
        self.script.object(object_id).map(|o| interpolate(&o.waypoints, t))
    }

    pub fn target_position(&self, t: f64) -> Option<(f64, f64)> {
        self.script.target.and_then(|id| self.object_position(id, t))
    }

    /// Renders the descriptor field and ground truth seen by `camera` at `t`.
    pub fn render_frame(&self, t: f64, camera: &CameraModel) -> Result<(DescriptorField, GroundTruth)> {
        if !(0.0..=self.script.duration).contains(&t) {
            return Err(FanError::Range(format!(
                "time {t} outside scene duration [0, {}]",
                self.script.duration
            )));
        }
        camera.validate()?;
        let (w, h) = (camera.view_width, camera.view_height);
        let class_map = self.class_map(t, camera);

        let mut objects: Vec<ObjectTruth> = self
            .script
            .objects
            .iter()
            .map(|o| ObjectTruth {
                object_id: o.id,
                class_id: o.class,
                mask: Mask::empty(h, w),
            })
            .collect();
        for (i, owner) in class_map.owner.iter().enumerate() {
            if let Some(o) = owner {
                objects[*o].mask.set(i % w, i / w, true);
            }
        }

        let field = self.descriptors(&class_map.classes, t, w, h);
        Ok((
            field,
            GroundTruth {
                objects,
                class_map: class_map.classes.iter().map(|&c| self.class_ids[c]).collect(),
                background_class: self.script.background_class,
                width: w,
                height: h,
            },
        ))
    }

    fn class_map(&self, t: f64, camera: &CameraModel) -> ClassMap {
        let (w, h) = (camera.view_width, camera.view_height);
        let bg = self.class_index(self.script.background_class).expect("validated");
        let mut classes = vec![bg; w * h];
        let mut owner: Vec<Option<usize>> = vec![None; w * h];

        for (oi, o) in self.script.objects.iter().enumerate() {
            let ci = self.class_index(o.class).expect("validated");
            let (cx, cy) = interpolate(&o.waypoints, t);
            let half = o.size / 2.0;
            // Restrict rasterization to the object's pixel footprint.
            let (px0, py0) = camera.world_to_pixel(cx - half, cy - half);
            let (px1, py1) = camera.world_to_pixel(cx + half, cy + half);
            let Some((x0, x1)) = clip_span(px0, px1, w) else { continue };
            let Some((y0, y1)) = clip_span(py0, py1, h) else { continue };
            for py in y0..=y1 {
                for px in x0..=x1 {
                    let (wx, wy) = camera.pixel_to_world(px as f64, py as f64);
                    let inside = match o.shape {
                        Shape::Disc => (wx - cx).powi(2) + (wy - cy).powi(2) <= half * half,
                        Shape::Rect => (wx - cx).abs() <= half && (wy - cy).abs() <= half,
                    };
                    if inside {
                        classes[py * w + px] = ci;
                        owner[py * w + px] = Some(oi);
                    }
                }
            }
        }

        for occ in &self.script.occluders {
            if t < occ.active[0] || t > occ.active[1] {
                continue;
            }
            let ci = self.class_index(occ.class).expect("validated");
            let [ox, oy, ow, oh] = occ.rect;
            let (px0, py0) = camera.world_to_pixel(ox, oy);
            let (px1, py1) = camera.world_to_pixel(ox + ow, oy + oh);
            let Some((x0, x1)) = clip_span(px0, px1, w) else { continue };
            let Some((y0, y1)) = clip_span(py0, py1, h) else { continue };
            for py in y0..=y1 {
                for px in x0..=x1 {
                    let (wx, wy) = camera.pixel_to_world(px as f64, py as f64);
                    if wx >= ox && wx <= ox + ow && wy >= oy && wy <= oy + oh {
                        classes[py * w + px] = ci;
                        owner[py * w + px] = None;
                    }
                }
            }
        }
        ClassMap { classes, owner }
    }

    fn descriptors(&self, classes: &[usize], t: f64, w: usize, h: usize) -> DescriptorField {
        let d = self.script.dim;
        let mut data = vec![0f32; w * h * d];

        let p = self.script.patch_size.max(1);
        if p == 1 {
            for (i, &c) in classes.iter().enumerate() {
                data[i * d..(i + 1) * d].copy_from_slice(&self.bases[c]);
            }
        } else {
            let mut acc = vec![0f64; d];
            for by in (0..h).step_by(p) {
                for bx in (0..w).step_by(p) {
                    acc.iter_mut().for_each(|a| *a = 0.0);
                    let (ey, ex) = ((by + p).min(h), (bx + p).min(w));
                    let n = ((ey - by) * (ex - bx)) as f64;
                    for y in by..ey {
                        for x in bx..ex {
                            for (a, &b) in acc.iter_mut().zip(&self.bases[classes[y * w + x]]) {
                                *a += b as f64;
                            }
                        }
                    }
                    for y in by..ey {
                        for x in bx..ex {
                            let i = y * w + x;
                            for (dst, a) in data[i * d..(i + 1) * d].iter_mut().zip(&acc) {
                                *dst = (a / n) as f32;
                            }
                        }
                    }
                }
            }
        }

        let sigma = self.script.noise_sigma / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(self.script.seed, t));
        for px in data.chunks_exact_mut(d) {
            if sigma > 0.0 {
                let off = rng.random_range(0..NOISE_POOL);
                let sigma = sigma as f32;
                for (v, &g) in px.iter_mut().zip(&self.noise[off..off + d]) {
                    *v += sigma * g;
                }
            }
            let n = dot(px, px).sqrt();
            // Pure base vectors are already unit length; leave them bit-exact.
            if n > 0.0 && (sigma > 0.0 || (n - 1.0).abs() > 1e-6) {
                let inv = 1.0 / n;
                px.iter_mut().for_each(|v| *v = (*v as f64 * inv) as f32);
            }
        }
        DescriptorField::new(h, w, d, data).expect("rendered field is well formed")
    }
}

struct ClassMap {
    /// Index into `Scene::bases` per pixel.
    classes: Vec<usize>,
    /// Index into the script's object list of the visible object, per pixel.
    owner: Vec<Option<usize>>,
}

/// Free-function form of [`Scene::render_frame`].
pub fn render_frame(scene: &Scene, t: f64, camera: &CameraModel) -> Result<(DescriptorField, GroundTruth)> {
    scene.render_frame(t, camera)
}

fn clip_span(a: f64, b: f64, len: usize) -> Option<(usize, usize)> {
    let lo = a.min(b).floor() - 1.0;
    let hi = a.max(b).ceil() + 1.0;
    if hi < 0.0 || lo >= len as f64 {
        return None;
    }
    Some((lo.max(0.0) as usize, (hi as usize).min(len - 1)))
}

/// Piecewise-linear position along `waypoints` at time `t`.
pub fn interpolate(waypoints: &[Waypoint], t: f64) -> (f64, f64) {
    let first = waypoints[0];
    if t <= first.t {
        return (first.x, first.y);
    }
    for pair in waypoints.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if t <= b.t {
            let s = (t - a.t) / (b.t - a.t);
            return (a.x + s * (b.x - a.x), a.y + s * (b.y - a.y));
        }
    }
    let last = waypoints[waypoints.len() - 1];
    (last.x, last.y)
}

fn frame_seed(seed: u64, t: f64) -> u64 {
    // splitmix64 finalizer over the seed and the frame time bits
    let mut z = seed ^ t.to_bits().rotate_left(17) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn validate_script(s: &SceneScript) -> Result<()> {
    let bad = |msg: String| Err(FanError::Config(msg));
    if !(s.duration >= 0.0) || !(s.frame_rate > 0.0) || !(s.world_extent > 0.0) {
        return bad("duration, frame_rate and world_extent must be positive".into());
    }
    if s.dim == 0 {
        return bad("dim must be at least 1".into());
    }
    if !(s.noise_sigma >= 0.0) || !s.noise_sigma.is_finite() {
        return bad(format!("noise_sigma {} must be non-negative", s.noise_sigma));
    }
    if s.patch_size == 0 {
        return bad("patch_size must be at least 1".into());
    }
    let known = |c: u32| s.classes.iter().any(|k| k.id == c);
    for (i, c) in s.classes.iter().enumerate() {
        if s.classes[..i].iter().any(|k| k.id == c.id) {
            return bad(format!("duplicate class id {}", c.id));
        }
        if let Some(v) = &c.vector {
            if v.len() != s.dim {
                return bad(format!("class {} vector has length {}, dim is {}", c.id, v.len(), s.dim));
            }
        }
    }
    if !known(s.background_class) {
        return bad(format!("background class {} not declared", s.background_class));
    }
    let half = s.world_extent / 2.0;
    for o in &s.objects {
        if !known(o.class) {
            return bad(format!("object {} uses undeclared class {}", o.id, o.class));
        }
        if !(o.size > 0.0) {
            return bad(format!("object {} needs a positive size", o.id));
        }
        if o.waypoints.is_empty() {
            return bad(format!("object {} has no waypoints", o.id));
        }
        for pair in o.waypoints.windows(2) {
            if !(pair[1].t > pair[0].t) {
                return bad(format!("object {} waypoint times must strictly increase", o.id));
            }
        }
        if o.waypoints.iter().any(|p| p.x.abs() > half || p.y.abs() > half) {
            return bad(format!("object {} leaves the world extent", o.id));
        }
    }
    for occ in &s.occluders {
        if !known(occ.class) {
            return bad(format!("occluder uses undeclared class {}", occ.class));
        }
        if s.objects.iter().any(|o| o.class == occ.class) {
            return bad(format!("occluder class {} is also an object class", occ.class));
        }
        if !(occ.rect[2] > 0.0 && occ.rect[3] > 0.0) || occ.active[1] < occ.active[0] {
            return bad("occluder needs a positive rect and an ordered interval".into());
        }
    }
    if let Some(t) = s.target {
        if s.object(t).is_none() {
            return bad(format!("target object {t} not declared"));
        }
    }
    Ok(())
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draws one unit vector per class and removes projections onto earlier
/// classes until every pair is below [`MAX_CLASS_COSINE`].
fn resolve_bases(s: &SceneScript) -> Result<Vec<Vec<f32>>> {
    let d = s.dim;
    let mut fixed = Vec::with_capacity(s.classes.len());
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(s.classes.len());
    for c in &s.classes {
        match &c.vector {
            Some(v) => {
                let v: Vec<f64> = v.iter().map(|&x| x as f64).collect();
                if v.iter().all(|&x| x == 0.0) {
                    return Err(FanError::Config(format!("class {} vector is zero", c.id)));
                }
                vecs.push(unit(v));
                fixed.push(true);
            }
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
                let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                vecs.push(unit(v));
                fixed.push(false);
            }
        }
    }

    for _round in 0..64 {
        let mut clean = true;
        for k in 0..vecs.len() {
            if fixed[k] {
                continue;
            }
            for j in 0..vecs.len() {
                if j == k || (!fixed[j] && j > k) {
                    continue;
                }
                let c = dot64(&vecs[k], &vecs[j]);
                if c >= MAX_CLASS_COSINE {
                    clean = false;
                    let proj: Vec<f64> = vecs[j].iter().map(|x| x * c).collect();
                    let next: Vec<f64> = vecs[k].iter().zip(&proj).map(|(a, p)| a - p).collect();
                    if next.iter().all(|x| x.abs() < 1e-12) {
                        return Err(FanError::Config(format!(
                            "class {} collapses onto class {}",
                            s.classes[k].id, s.classes[j].id
                        )));
                    }
                    vecs[k] = unit(next);
                }
            }
        }
        if clean {
            break;
        }
    }

    for i in 0..vecs.len() {
        for j in 0..i {
            let c = dot64(&vecs[i], &vecs[j]);
            if c >= MAX_CLASS_COSINE {
                return Err(FanError::Config(format!(
                    "classes {} and {} have cosine {c:.3}, need < {MAX_CLASS_COSINE}",
                    s.classes[i].id, s.classes[j].id
                )));
            }
        }
    }
    Ok(vecs
        .into_iter()
        .map(|v| v.into_iter().map(|x| x as f32).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn disc_scene(sigma: f64) -> SceneScript {
        SceneScript {
            duration: 10.0,
            frame_rate: 20.0,
            world_extent: 20.0,
            background_class: 0,
            classes: vec![
                ClassSpec { id: 0, seed: 1, vector: None },
                ClassSpec { id: 1, seed: 2, vector: None },
                ClassSpec { id: 9, seed: 3, vector: None },
            ],
            objects: vec![ObjectSpec {
                id: 7,
                class: 1,
                shape: Shape::Disc,
                size: 0.4,
                waypoints: vec![Waypoint { t: 0.0, x: 0.0, y: 0.0 }],
            }],
            occluders: vec![OccluderSpec {
                rect: [-1.0, -1.0, 2.0, 2.0],
                active: [5.0, 6.0],
                class: 9,
            }],
            noise_sigma: sigma,
            dim: 32,
            seed: 11,
            patch_size: 1,
            target: Some(7),
        }
    }

    #[test]
    fn zero_noise_object_pixels_equal_base() {
        let scene = Scene::new(disc_scene(0.0)).unwrap();
        let cam = CameraModel::default();
        let (field, gt) = scene.render_frame(0.0, &cam).unwrap();
        let mask = &gt.object(7).unwrap().mask;
        assert!(mask.count() > 0);
        let base = scene.base(1).unwrap();
        for i in mask.indices() {
            assert_eq!(field.pixel_at(i), base);
        }
        // rasterized disc oracle: pixel centers within radius 0.2 m of origin
        let oracle = Mask::from_fn(cam.view_height, cam.view_width, |x, y| {
            let (wx, wy) = cam.pixel_to_world(x as f64, y as f64);
            wx * wx + wy * wy <= 0.04
        });
        assert_eq!(mask, &oracle);
    }

    #[test]
    fn occluded_object_has_empty_mask() {
        let scene = Scene::new(disc_scene(0.0)).unwrap();
        let (field, gt) = scene.render_frame(5.5, &CameraModel::default()).unwrap();
        assert_eq!(gt.object(7).unwrap().mask.count(), 0);
        // occluder overwrites with its own class
        let center = field.pixel(80, 60);
        assert_eq!(center, scene.base(9).unwrap());
    }

    #[test]
    fn out_of_range_time() {
        let scene = Scene::new(disc_scene(0.0)).unwrap();
        assert!(matches!(
            scene.render_frame(10.5, &CameraModel::default()),
            Err(FanError::Range(_))
        ));
        assert!(scene.render_frame(-0.1, &CameraModel::default()).is_err());
    }

    #[test]
    fn noise_model_monte_carlo() {
        // Independent oracle: sample the stated noise model directly.
        let d = 32usize;
        let sigma = 0.1f64;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let base: Vec<f64> = unit((0..d).map(|_| rng.sample(StandardNormal)).collect());
        let mut total = 0.0;
        for _ in 0..1000 {
            let v: Vec<f64> = base
                .iter()
                .map(|b| b + sigma / (d as f64).sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            total += dot64(&unit(v), &base);
        }
        let oracle_mean = total / 1000.0;
        assert!(oracle_mean >= 0.95, "oracle {oracle_mean}");

        let scene = Scene::new(disc_scene(0.1)).unwrap();
        let cam = CameraModel::default();
        let mut cosines = Vec::new();
        let base = scene.base(1).unwrap();
        let mut t = 0.0;
        while cosines.len() < 1000 {
            let (field, gt) = scene.render_frame(t, &cam).unwrap();
            for i in gt.object(7).unwrap().mask.indices() {
                cosines.push(crate::types::cosine_similarity(field.pixel_at(i), base, 1e-8).unwrap());
            }
            t += 0.05;
        }
        let mean = cosines[..1000].iter().map(|&c| c as f64).sum::<f64>() / 1000.0;
        assert!(mean >= 0.95, "rendered mean cosine {mean}");
        assert!((mean - oracle_mean).abs() < 0.01);
    }

    #[test]
    fn render_is_deterministic() {
        let scene = Scene::new(disc_scene(0.1)).unwrap();
        let cam = CameraModel::default().at(0.3, -0.2);
        let a = scene.render_frame(1.25, &cam).unwrap();
        let b = scene.render_frame(1.25, &cam).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = scene.render_frame(1.30, &cam).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn bases_are_separable() {
        let mut s = disc_scene(0.0);
        s.dim = 4;
        s.classes = (0..4).map(|i| ClassSpec { id: i, seed: 5 + i as u64, vector: None }).collect();
        s.occluders.clear();
        s.objects[0].class = 1;
        let scene = Scene::new(s).unwrap();
        for i in 0..4 {
            for j in 0..i {
                let c = dot(scene.base(i).unwrap(), scene.base(j).unwrap());
                assert!(c < MAX_CLASS_COSINE, "{i},{j}: {c}");
            }
        }
    }

    #[test]
    fn rejects_close_explicit_vectors() {
        let mut s = disc_scene(0.0);
        s.dim = 2;
        s.occluders.clear();
        s.classes = vec![
            ClassSpec { id: 0, seed: 0, vector: Some(vec![1.0, 0.0]) },
            ClassSpec { id: 1, seed: 0, vector: Some(vec![1.0, 0.2]) },
        ];
        assert!(matches!(Scene::new(s), Err(FanError::Config(_))));
    }

    #[test]
    fn rejects_bad_waypoints() {
        let mut s = disc_scene(0.0);
        s.objects[0].waypoints = vec![
            Waypoint { t: 1.0, x: 0.0, y: 0.0 },
            Waypoint { t: 1.0, x: 1.0, y: 0.0 },
        ];
        assert!(Scene::new(s.clone()).is_err());
        s.objects[0].waypoints = vec![Waypoint { t: 0.0, x: 50.0, y: 0.0 }];
        assert!(Scene::new(s).is_err());
    }

    #[test]
    fn interpolation_is_linear() {
        let w = [Waypoint { t: 0.0, x: 0.0, y: 0.0 }, Waypoint { t: 10.0, x: 10.0, y: 0.0 }];
        assert_eq!(interpolate(&w, 5.0), (5.0, 0.0));
        assert_eq!(interpolate(&w, 20.0), (10.0, 0.0));
    }

    #[test]
    fn patch_grid_blurs_boundaries_only() {
        let mut s = disc_scene(0.0);
        s.patch_size = 8;
        s.objects[0].size = 1.0;
        let scene = Scene::new(s).unwrap();
        let (field, gt) = scene.render_frame(0.0, &CameraModel::default()).unwrap();
        let base = scene.base(1).unwrap();
        let mask = &gt.object(7).unwrap().mask;
        let exact = mask.indices().filter(|&i| field.pixel_at(i) == base).count();
        assert!(exact > 0 && exact < mask.count());
    }

    #[test]
    fn json_round_trip() {
        let s = disc_scene(0.1);
        assert_eq!(SceneScript::from_json(&s.to_json()).unwrap(), s);
        assert!(SceneScript::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
