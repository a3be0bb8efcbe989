use std::path::{Path, PathBuf};
use std::time::Duration;

use super::engine::Frame;
use crate::error::{FanError, Result};
use crate::providers::{load_descriptor_field, load_masks, CameraModel, Scene};

/// Producer side of the pipeline.
pub trait FrameSource: Send {
    /// Next frame, or `None` once exhausted.
    fn next_frame(&mut self) -> Result<Option<Frame>>;

    /// Nominal time between frames.
    fn interval(&self) -> Duration;
}

/// Renders a synthetic scene from a fixed camera.
pub struct SceneSource {
    scene: Scene,
    camera: CameraModel,
    index: u64,
    looping: bool,
}

impl SceneSource {
    pub fn new(scene: Scene, camera: CameraModel, looping: bool) -> Self {
        Self {
            scene,
            camera,
            index: 0,
            looping,
        }
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }
}

impl FrameSource for SceneSource {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        let script = self.scene.script();
        let count = script.frame_count() as u64;
        let mut k = self.index;
        if k >= count {
            if !self.looping {
                return Ok(None);
            }
            k %= count;
        }
        let t = k as f64 / script.frame_rate;
        let (field, truth) = self.scene.render_frame(t, &self.camera)?;
        let frame = Frame {
            index: self.index,
            t,
            field,
            segments: Some(truth.segments()),
            truth: Some(truth),
        };
        self.index += 1;
        Ok(Some(frame))
    }

    fn interval(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.scene.script().frame_rate)
    }
}

/// Replays descriptor field files (`*.fand`) in file-name order. A mask file
/// with the same stem (`*.fanm`) supplies the frame's segments.
pub struct FieldsDirSource {
    files: Vec<PathBuf>,
    position: usize,
    index: u64,
    frame_rate: f64,
    looping: bool,
}

impl FieldsDirSource {
    pub fn open(dir: impl AsRef<Path>, frame_rate: f64, looping: bool) -> Result<Self> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir.as_ref())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "fand"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(FanError::Config(format!("no .fand files in {}", dir.as_ref().display())));
        }
        if !(frame_rate > 0.0) {
            return Err(FanError::Config("frame rate must be positive".into()));
        }
        Ok(Self {
            files,
            position: 0,
            index: 0,
            frame_rate,
            looping,
        })
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }
}

impl FrameSource for FieldsDirSource {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        if self.position == self.files.len() {
            if !self.looping {
                return Ok(None);
            }
            self.position = 0;
        }
        let path = &self.files[self.position];
        let field = load_descriptor_field(path)?;
        let masks_path = path.with_extension("fanm");
        let segments = if masks_path.exists() {
            Some(load_masks(&masks_path)?)
        } else {
            None
        };
        let frame = Frame {
            index: self.index,
            t: self.index as f64 / self.frame_rate,
            field,
            segments,
            truth: None,
        };
        self.position += 1;
        self.index += 1;
        Ok(Some(frame))
    }

    fn interval(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.frame_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::write_descriptor_field;
    use crate::types::DescriptorField;

    #[test]
    fn fields_dir_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        for (name, v) in [("b.fand", 2.0f32), ("a.fand", 1.0), ("c.fand", 3.0)] {
            write_descriptor_field(dir.path().join(name), &DescriptorField::uniform(2, 2, &[v]).unwrap()).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let mut src = FieldsDirSource::open(dir.path(), 10.0, false).unwrap();
        let mut seen = Vec::new();
        while let Some(f) = src.next_frame().unwrap() {
            seen.push(f.field.pixel(0, 0)[0]);
        }
        assert_eq!(seen, vec![1.0, 2.0, 3.0]);

        let mut looped = FieldsDirSource::open(dir.path(), 10.0, true).unwrap();
        let v: Vec<f32> = (0..5).map(|_| looped.next_frame().unwrap().unwrap().field.pixel(0, 0)[0]).collect();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 1.0, 2.0]);
    }

    #[test]
    fn empty_dir_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(FieldsDirSource::open(dir.path(), 10.0, false).is_err());
    }
}
