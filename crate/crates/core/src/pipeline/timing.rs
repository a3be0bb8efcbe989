use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub const ROLLING_WINDOW: usize = 100;

/// Per-frame stage latencies in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub ingest_ms: f64,
    pub detection_ms: f64,
    pub tracking_ms: f64,
    pub redetection_ms: f64,
    pub control_ms: f64,
}

impl StageTimings {
    pub const STAGES: [&'static str; 5] = ["ingest", "detection", "tracking", "redetection", "control"];

    pub fn values(&self) -> [f64; 5] {
        [self.ingest_ms, self.detection_ms, self.tracking_ms, self.redetection_ms, self.control_ms]
    }

    pub fn total_ms(&self) -> f64 {
        self.values().iter().sum()
    }
}

/// Runs `f` and returns its result with the elapsed milliseconds.
pub fn timed<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let start = Instant::now();
    let r = f();
    (r, start.elapsed().as_secs_f64() * 1e3)
}

/// Rolling means over the last [`ROLLING_WINDOW`] frames.
#[derive(Clone, Debug, Default)]
pub struct TimingStats {
    window: VecDeque<StageTimings>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub mean: StageTimings,
    /// Frames per second of each stage when run alone; 0 when unmeasured.
    pub stage_fps: [f64; 5],
    pub end_to_end_fps: f64,
    pub frames: usize,
}

pub(crate) fn fps(ms: f64) -> f64 {
    if ms > 0.0 {
        1e3 / ms
    } else {
        0.0
    }
}

impl TimingStats {
    pub fn push(&mut self, t: StageTimings) {
        if self.window.len() == ROLLING_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back(t);
    }

    pub fn summary(&self) -> TimingSummary {
        let n = self.window.len();
        if n == 0 {
            return TimingSummary::default();
        }
        let mut sum = [0f64; 5];
        for t in &self.window {
            for (s, v) in sum.iter_mut().zip(t.values()) {
                *s += v;
            }
        }
        let m = sum.map(|s| s / n as f64);
        let mean = StageTimings {
            ingest_ms: m[0],
            detection_ms: m[1],
            tracking_ms: m[2],
            redetection_ms: m[3],
            control_ms: m[4],
        };
        TimingSummary {
            mean,
            stage_fps: m.map(fps),
            end_to_end_fps: fps(mean.total_ms()),
            frames: n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rolling_window() {
        let mut s = TimingStats::default();
        assert_eq!(s.summary().frames, 0);
        for i in 0..150 {
            s.push(StageTimings { detection_ms: i as f64, ..Default::default() });
        }
        let sum = s.summary();
        assert_eq!(sum.frames, 100);
        // mean of 50..150
        assert!((sum.mean.detection_ms - 99.5).abs() < 1e-9);
        assert!((sum.stage_fps[1] - 1e3 / 99.5).abs() < 1e-9);
        assert_eq!(sum.stage_fps[0], 0.0);
    }

    #[test]
    fn timed_is_non_negative() {
        let (v, ms) = timed(|| 41 + 1);
        assert_eq!(v, 42);
        assert!(ms >= 0.0);
    }
}
