//! Semantic schema, pointcloud and pose data model, on-disk formats and the
//! synthetic scene generator.

mod cloud;
mod formats;
mod pose;
mod schema;
mod synthetic;

use std::path::PathBuf;

use thiserror::Error;

pub use cloud::{LabeledCloud, LabeledPoint};
pub use formats::{
    apply_labels, decode_scan, encode_labels, encode_scan, format_poses, load_labels, load_poses, load_scan,
    load_scan_at, parse_poses, save_labels, save_poses, save_scan, POSE_REJECT_TOLERANCE, SCAN_RECORD_BYTES,
};
pub use pose::{orthogonality_deviation, project_to_rotation, relative_pose, Pose, POSE_TOLERANCE};
pub use schema::{ClassId, SemanticSchema};
pub use synthetic::{
    generate_synthetic_scene, generate_synthetic_sequence, ClassPrimitives, PointOrigin, SceneConfig, Shape,
    SyntheticPair, SyntheticSequence,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scan length {len} is not a multiple of 16 bytes")]
    TruncatedScan { len: usize },
    #[error("non-finite float at byte offset {offset}")]
    NonFinite { offset: usize },
    #[error("intensity {value} outside [0, 1] at byte offset {offset}")]
    IntensityOutOfRange { offset: usize, value: f64 },
    #[error("label length {len} is not a multiple of 4 bytes")]
    TruncatedLabels { len: usize },
    #[error("{labels} labels for {points} points")]
    LabelCountMismatch { labels: usize, points: usize },
    #[error("class id {id} at point {index} is not in the schema")]
    UnknownClass { id: ClassId, index: usize },
    #[error("pose line {line}: {reason}")]
    MalformedPose { line: usize, reason: String },
    #[error("pose line {line}: rotation is not orthonormal (|RᵀR - I| = {deviation:e})")]
    NotARotation { line: usize, deviation: f64 },
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("scene config has no primitives")]
    NoPrimitives,
    #[error("scene: {0}")]
    Scene(String),
}
