//! KITTI Odometry / SemanticKITTI file formats.
//!
//! * scans: little-endian `f32 x, y, z, intensity` per point (16 bytes)
//! * labels: little-endian `u32` per point, semantic class in the low 16 bits
//! * poses: ASCII, 12 reals per line, row-major `[R | t]`

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::pose::orthogonality_deviation;
use super::{DataError, LabeledCloud, LabeledPoint, Pose, SemanticSchema};

pub const SCAN_RECORD_BYTES: usize = 16;

/// Rotations farther than this from SO(3) are rejected rather than repaired.
pub const POSE_REJECT_TOLERANCE: f64 = 1e-3;

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    fs::write(path, bytes).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn decode_scan(bytes: &[u8], timestamp_index: usize) -> Result<LabeledCloud, DataError> {
    if !bytes.len().is_multiple_of(SCAN_RECORD_BYTES) {
        return Err(DataError::TruncatedScan { len: bytes.len() });
    }
    let mut points = Vec::with_capacity(bytes.len() / SCAN_RECORD_BYTES);
    for (record, chunk) in bytes.chunks_exact(SCAN_RECORD_BYTES).enumerate() {
        let mut values = [0f32; 4];
        for (k, value) in values.iter_mut().enumerate() {
            let raw: [u8; 4] = chunk[4 * k..4 * k + 4].try_into().expect("4-byte slice");
            *value = f32::from_le_bytes(raw);
            if !value.is_finite() {
                return Err(DataError::NonFinite {
                    offset: record * SCAN_RECORD_BYTES + 4 * k,
                });
            }
        }
        let [x, y, z, intensity] = values;
        if !(0.0..=1.0).contains(&intensity) {
            return Err(DataError::IntensityOutOfRange {
                offset: record * SCAN_RECORD_BYTES + 12,
                value: intensity as f64,
            });
        }
        points.push(LabeledPoint::unlabeled(
            Vector3::new(x as f64, y as f64, z as f64),
            intensity as f64,
        ));
    }
    Ok(LabeledCloud::new(timestamp_index, points))
}

/// Positions and intensities are narrowed to `f32`.
pub fn encode_scan(cloud: &LabeledCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * SCAN_RECORD_BYTES);
    for p in &cloud.points {
        for v in [p.position.x, p.position.y, p.position.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Reads a `.bin` scan; labels are left unset.
pub fn load_scan(path: &Path) -> Result<LabeledCloud, DataError> {
    load_scan_at(path, 0)
}

pub fn load_scan_at(path: &Path, timestamp_index: usize) -> Result<LabeledCloud, DataError> {
    decode_scan(&read(path)?, timestamp_index)
}

pub fn save_scan(path: &Path, cloud: &LabeledCloud) -> Result<(), DataError> {
    write(path, &encode_scan(cloud))
}

pub fn apply_labels(bytes: &[u8], cloud: &LabeledCloud, schema: &SemanticSchema) -> Result<LabeledCloud, DataError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(DataError::TruncatedLabels { len: bytes.len() });
    }
    let count = bytes.len() / 4;
    if count != cloud.len() {
        return Err(DataError::LabelCountMismatch {
            labels: count,
            points: cloud.len(),
        });
    }
    let mut labeled = cloud.clone();
    for (index, (chunk, point)) in bytes.chunks_exact(4).zip(&mut labeled.points).enumerate() {
        let raw = u32::from_le_bytes(chunk.try_into().expect("4-byte slice"));
        let id = schema.remap((raw & 0xFFFF) as u16);
        if !schema.contains(id) {
            return Err(DataError::UnknownClass { id, index });
        }
        point.label = Some(id);
    }
    Ok(labeled)
}

/// Reads a `.label` file and attaches its class ids to `cloud`.
pub fn load_labels(path: &Path, cloud: &LabeledCloud, schema: &SemanticSchema) -> Result<LabeledCloud, DataError> {
    apply_labels(&read(path)?, cloud, schema)
}

/// Unlabeled points encode as class 0.
pub fn encode_labels(cloud: &LabeledCloud) -> Vec<u8> {
    cloud
        .points
        .iter()
        .flat_map(|p| u32::from(p.label.unwrap_or(0)).to_le_bytes())
        .collect()
}

pub fn save_labels(path: &Path, cloud: &LabeledCloud) -> Result<(), DataError> {
    write(path, &encode_labels(cloud))
}

pub fn parse_poses(text: &str) -> Result<Vec<Pose>, DataError> {
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<Result<_, _>>()
            .map_err(|e| DataError::MalformedPose {
                line: line_no,
                reason: e.to_string(),
            })?;
        if values.len() != 12 {
            return Err(DataError::MalformedPose {
                line: line_no,
                reason: format!("expected 12 values, found {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::MalformedPose {
                line: line_no,
                reason: "non-finite value".into(),
            });
        }
        let rotation = Matrix3::new(
            values[0], values[1], values[2], values[4], values[5], values[6], values[8], values[9], values[10],
        );
        let translation = Vector3::new(values[3], values[7], values[11]);
        let deviation = orthogonality_deviation(&rotation);
        if deviation > POSE_REJECT_TOLERANCE || rotation.determinant() <= 0.0 {
            return Err(DataError::NotARotation {
                line: line_no,
                deviation,
            });
        }
        poses.push(
            Pose::from_projected(rotation, translation).map_err(|e| DataError::MalformedPose {
                line: line_no,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(poses)
}

pub fn load_poses(path: &Path) -> Result<Vec<Pose>, DataError> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| DataError::MalformedPose {
        line: 0,
        reason: e.to_string(),
    })?;
    parse_poses(&text)
}

pub fn format_poses(poses: &[Pose]) -> String {
    let mut out = String::new();
    for pose in poses {
        let r = pose.rotation();
        let t = pose.translation();
        let row = |i: usize| [r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]];
        let fields: Vec<String> = (0..3).flat_map(row).map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "{}", fields.join(" "));
    }
    out
}

pub fn save_poses(path: &Path, poses: &[Pose]) -> Result<(), DataError> {
    write(path, format_poses(poses).as_bytes())
}
