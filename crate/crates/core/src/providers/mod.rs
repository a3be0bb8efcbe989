//! Sources of descriptor fields, class-agnostic masks and query descriptors.

pub mod files;
pub mod queries;
pub mod scenarios;
pub mod scene;

pub use files::{load_descriptor_field, load_masks, write_descriptor_field, write_masks};
pub use queries::{query_from_click, query_from_region, QuerySpec};
pub use scene::{
    render_frame, CameraModel, ClassSpec, GroundTruth, ObjectSpec, ObjectTruth, OccluderSpec, Scene,
    SceneScript, Shape, Waypoint,
};
