//! Real-time orchestration: latest-frame buffering, detect-then-track
//! scheduling, stage timing and the console gateway.

pub mod buffer;
pub mod engine;
pub mod gateway;
pub mod protocol;
pub mod source;
pub mod timing;
pub mod viz;

pub use buffer::LatestFrameBuffer;
pub use engine::{
    Annotation, Command, DetectorPath, Frame, FrameResult, PipelineConfig, PipelineMode, PipelineStatus, Processor,
    TrackEvent,
};
pub use gateway::{gateway_serve, ServeHandle};
pub use protocol::{ClientMessage, ErrorCode, Rejection, ServerMessage};
pub use source::{FieldsDirSource, FrameSource, SceneSource};
pub use timing::{StageTimings, TimingStats, TimingSummary};

use crate::error::Result;

/// Runs every frame of `source` through `processor` in order, handing each
/// result to `sink`. Stops after `max_frames` when given. Returns the number
/// of frames processed.
pub fn run_pipeline(
    source: &mut dyn FrameSource,
    processor: &mut Processor,
    max_frames: Option<usize>,
    mut sink: impl FnMut(&Frame, &FrameResult),
) -> Result<usize> {
    let mut n = 0;
    while max_frames.is_none_or(|m| n < m) {
        let (frame, ingest_ms) = timing::timed(|| source.next_frame());
        let Some(frame) = frame? else {
            break;
        };
        let mut result = processor.process(&frame)?;
        result.timings.ingest_ms = ingest_ms;
        sink(&frame, &result);
        n += 1;
    }
    Ok(n)
}
