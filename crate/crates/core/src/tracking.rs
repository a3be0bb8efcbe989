//! Descriptor-correlation mask tracker.
//!
//! Each step searches an inflated window around the previous bounding box,
//! thresholds per-pixel similarity to a running template and keeps the
//! largest connected component.

use serde::{Deserialize, Serialize};

use crate::detection::{connected_components, region_descriptor, Connectivity};
use crate::error::{FanError, Result};
use crate::types::{norm, BBox, DescriptorField, LabeledRegion, Mask, DEFAULT_EPSILON};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrackStatus {
    Active,
    Lost,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    pub search_inflation: f64,
    pub alpha_track: f32,
    /// Weight of the new region descriptor when blending the template.
    pub template_blend: f32,
    pub loss_patience: u32,
    pub min_area: usize,
    pub connectivity: Connectivity,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            search_inflation: 2.0,
            alpha_track: 0.5,
            template_blend: 0.05,
            loss_patience: 5,
            min_area: 9,
            connectivity: Connectivity::Eight,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.search_inflation >= 1.0) {
            return Err(FanError::Config("search_inflation must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.template_blend) {
            return Err(FanError::Config("template_blend must be in [0, 1]".into()));
        }
        if !(-1.0..=1.0).contains(&self.alpha_track) {
            return Err(FanError::Config("alpha_track must be in [-1, 1]".into()));
        }
        if self.loss_patience < 1 || self.min_area < 1 {
            return Err(FanError::Config("loss_patience and min_area must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackState {
    pub template: Vec<f32>,
    /// Most recent matched mask; kept through misses to anchor the search.
    pub last_mask: Mask,
    pub last_centroid: (f64, f64),
    pub frames_since_seen: u32,
    pub status: TrackStatus,
    pub label: Option<String>,
}

impl TrackState {
    pub fn search_window(&self, cfg: &TrackerConfig) -> Option<BBox> {
        self.last_mask
            .bbox()
            .map(|b| b.inflate(cfg.search_inflation, self.last_mask.width(), self.last_mask.height()))
    }
}

pub fn init_track(detection: &LabeledRegion, field: &DescriptorField) -> Result<TrackState> {
    let template = region_descriptor(field, &detection.mask)?;
    let centroid = detection.mask.centroid().ok_or(FanError::EmptyRegion)?;
    Ok(TrackState {
        template,
        last_mask: detection.mask.clone(),
        last_centroid: centroid,
        frames_since_seen: 0,
        status: TrackStatus::Active,
        label: detection.label.clone(),
    })
}

/// Advances the track by one frame. Returns the matched mask, empty on a miss.
pub fn step_track(state: &TrackState, field: &DescriptorField, cfg: &TrackerConfig) -> (TrackState, Mask) {
    let (h, w) = field.shape();
    let mut next = state.clone();
    let matched = state
        .search_window(cfg)
        .filter(|win| win.w > 0 && win.h > 0 && state.last_mask.shape() == (h, w))
        .and_then(|win| match_in_window(&state.template, field, win, cfg));

    match matched {
        Some(mask) => {
            let region = region_descriptor(field, &mask).expect("matched mask is non-empty");
            let mu = cfg.template_blend;
            if mu > 0.0 {
                for (t, r) in next.template.iter_mut().zip(&region) {
                    *t = (1.0 - mu) * *t + mu * r;
                }
            }
            next.last_centroid = mask.centroid().expect("non-empty");
            next.last_mask = mask.clone();
            next.frames_since_seen = 0;
            next.status = TrackStatus::Active;
            (next, mask)
        }
        None => {
            next.frames_since_seen = state.frames_since_seen.saturating_add(1);
            if next.frames_since_seen > cfg.loss_patience {
                next.status = TrackStatus::Lost;
            }
            (next, Mask::empty(h, w))
        }
    }
}

fn match_in_window(template: &[f32], field: &DescriptorField, win: BBox, cfg: &TrackerConfig) -> Option<Mask> {
    let (h, w) = field.shape();
    let tn = norm(template);
    if tn == 0.0 {
        return None;
    }
    let alpha = cfg.alpha_track as f64;
    let mut binary = Mask::empty(h, w);
    for y in win.y..win.y + win.h {
        for x in win.x..win.x + win.w {
            let p = field.pixel(x, y);
            let (mut d, mut pp) = (0f32, 0f32);
            for (a, b) in p.iter().zip(template) {
                d += a * b;
                pp += a * a;
            }
            let c = d as f64 / ((pp as f64).sqrt() * tn + DEFAULT_EPSILON);
            if c >= alpha {
                binary.set(x, y, true);
            }
        }
    }
    let lm = connected_components(&binary, cfg.connectivity, cfg.min_area);
    if lm.count == 0 {
        return None;
    }
    let areas = lm.areas();
    let mut best = 0;
    for (k, &a) in areas.iter().enumerate() {
        if a > areas[best] {
            best = k;
        }
    }
    Some(lm.component(best as u32 + 1))
}

pub fn is_lost(state: &TrackState) -> bool {
    state.status == TrackStatus::Lost
}

#[cfg(test)]
mod tests {
    use super::*;

    const OBJ: [f32; 3] = [1.0, 0.0, 0.0];
    const BG: [f32; 3] = [0.0, 1.0, 0.0];

    fn field_with(mask: &Mask) -> DescriptorField {
        let mut data = Vec::new();
        for v in mask.values() {
            data.extend_from_slice(if *v == 1 { &OBJ } else { &BG });
        }
        DescriptorField::new(mask.height(), mask.width(), 3, data).unwrap()
    }

    fn detection(mask: &Mask) -> LabeledRegion {
        LabeledRegion {
            mask: mask.clone(),
            label: Some("obj".into()),
            query: Some(0),
            score: 1.0,
        }
    }

    #[test]
    fn init_sets_template_and_centroid() {
        let m = Mask::from_rect(40, 40, 10, 10, 2, 2);
        let s = init_track(&detection(&m), &field_with(&m)).unwrap();
        assert_eq!(s.template, OBJ.to_vec());
        assert_eq!(s.last_centroid, (10.5, 10.5));
        assert!(!is_lost(&s));

        let px = Mask::from_rect(40, 40, 7, 3, 1, 1);
        assert_eq!(init_track(&detection(&px), &field_with(&px)).unwrap().last_centroid, (7.0, 3.0));
        assert!(init_track(&detection(&Mask::empty(40, 40)), &field_with(&m)).is_err());
    }

    #[test]
    fn stationary_object_is_a_fixed_point() {
        let m = Mask::from_rect(40, 40, 10, 12, 6, 5);
        let f = field_with(&m);
        let cfg = TrackerConfig::default();
        let mut s = init_track(&detection(&m), &f).unwrap();
        for _ in 0..5 {
            let (n, out) = step_track(&s, &f, &cfg);
            assert_eq!(out, m);
            assert_eq!(n.template, s.template);
            s = n;
        }
    }

    #[test]
    fn follows_a_three_pixel_shift() {
        let m0 = Mask::from_rect(60, 60, 20, 20, 8, 8);
        let m1 = Mask::from_rect(60, 60, 23, 20, 8, 8);
        let cfg = TrackerConfig::default();
        let s = init_track(&detection(&m0), &field_with(&m0)).unwrap();
        let (n, out) = step_track(&s, &field_with(&m1), &cfg);
        assert_eq!(out, m1);
        let truth = m1.centroid().unwrap();
        assert_eq!(n.last_centroid, truth);
        assert!((n.last_centroid.0 - s.last_centroid.0 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn occlusion_past_patience_loses_track() {
        let m = Mask::from_rect(40, 40, 10, 10, 5, 5);
        let cfg = TrackerConfig::default();
        let mut s = init_track(&detection(&m), &field_with(&m)).unwrap();
        let blank = field_with(&Mask::empty(40, 40));
        for i in 0..=cfg.loss_patience {
            let (n, out) = step_track(&s, &blank, &cfg);
            assert!(out.is_empty());
            s = n;
            assert_eq!(is_lost(&s), i + 1 > cfg.loss_patience, "frame {i}");
        }
        assert!(is_lost(&s));
    }

    #[test]
    fn rematch_after_one_miss() {
        let m = Mask::from_rect(40, 40, 10, 10, 5, 5);
        let f = field_with(&m);
        let cfg = TrackerConfig::default();
        let s = init_track(&detection(&m), &f).unwrap();
        let (s, _) = step_track(&s, &field_with(&Mask::empty(40, 40)), &cfg);
        assert_eq!(s.frames_since_seen, 1);
        let (s, out) = step_track(&s, &f, &cfg);
        assert_eq!(out, m);
        assert_eq!(s.frames_since_seen, 0);
        assert!(!is_lost(&s));
    }

    #[test]
    fn zero_blend_freezes_template() {
        let m = Mask::from_rect(40, 40, 10, 10, 6, 6);
        let cfg = TrackerConfig {
            template_blend: 0.0,
            alpha_track: 0.3,
            ..Default::default()
        };
        let s = init_track(&detection(&m), &field_with(&m)).unwrap();
        // a frame whose object descriptor drifted
        let mut data = Vec::new();
        for v in m.values() {
            data.extend_from_slice(if *v == 1 { &[0.8, 0.0, 0.6] } else { &BG });
        }
        let drifted = DescriptorField::new(40, 40, 3, data).unwrap();
        let (n, out) = step_track(&s, &drifted, &cfg);
        assert_eq!(out, m);
        assert_eq!(n.template, s.template);

        let blending = TrackerConfig { template_blend: 0.5, ..cfg };
        let (n, _) = step_track(&s, &drifted, &blending);
        assert_eq!(n.template, vec![0.9, 0.0, 0.3]);
    }

    #[test]
    fn never_emits_outside_window() {
        // a large object whose far side lies beyond the search window
        let small = Mask::from_rect(80, 80, 30, 30, 4, 4);
        let big = Mask::from_rect(80, 80, 0, 0, 80, 80);
        let cfg = TrackerConfig::default();
        let s = init_track(&detection(&small), &field_with(&small)).unwrap();
        let win = s.search_window(&cfg).unwrap();
        let (_, out) = step_track(&s, &field_with(&big), &cfg);
        assert!(!out.is_empty());
        for i in out.indices() {
            assert!(win.contains(i % 80, i / 80));
        }
    }
}
