//! End-to-end orchestration: load a sequence, run the vanilla pass, rank
//! classes, apply every masking set in both modes, aggregate and report.

mod config;
mod report;
mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::attention_engine::{load_model_weights, AttentionError, AttentionModel};
use crate::schema_io::{
    generate_synthetic_sequence, load_labels, load_poses, load_scan_at, relative_pose, DataError, LabeledCloud, Pose,
    SemanticSchema,
};

pub use config::{ClassSpec, DataSource, GraphConfig, ModelMode, MotionSpec, RunConfig, SceneSpec};
pub use report::{emit_ranking, emit_reports, parse_cell, read_table, Table, REPORT_FILES};
pub use run::{
    run_perturbations, run_pipeline, run_vanilla, CellResult, MaskMode, PairRecord, PooledRun, RunReport, SequenceRun,
    SetResult, VanillaPair, VanillaRun, VanillaSequence,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("sequence {sequence}: {source}")]
    Data {
        sequence: String,
        #[source]
        source: DataError,
    },
    #[error("sequence {sequence}, frame pair {pair}: {message}")]
    Pair {
        sequence: String,
        pair: usize,
        message: String,
    },
    /// A frame pair offers nothing to register, e.g. no candidate edges.
    #[error("sequence {sequence}, frame pair {pair}: {message}")]
    Estimation {
        sequence: String,
        pair: usize,
        message: String,
    },
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Report { path: PathBuf, message: String },
}

/// Labels accepted by the masking-set filter.
pub const SET_LABELS: [&str; 9] = [
    "none",
    "1st-class",
    "2nd-class",
    "3rd-class",
    "top-3",
    "top-5",
    "random-3",
    "corner",
    "surface",
];

pub fn is_known_set_label(label: &str) -> bool {
    SET_LABELS.contains(&label)
}

/// One sequence's clouds and frame-pair ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceData {
    pub name: String,
    pub clouds: Vec<LabeledCloud>,
    /// `pair_ground_truth[k]` maps cloud `k` coordinates into cloud `k+1`.
    pub pair_ground_truth: Vec<Pose>,
}

impl SequenceData {
    pub fn pair_count(&self) -> usize {
        self.pair_ground_truth.len()
    }
}

pub fn load_schema(config: &RunConfig) -> Result<SemanticSchema, PipelineError> {
    let data_err = |source| PipelineError::Data {
        sequence: "-".into(),
        source,
    };
    if let Some(path) = &config.schema {
        return SemanticSchema::from_file(path).map_err(data_err);
    }
    match &config.data {
        DataSource::Kitti { .. } => Ok(SemanticSchema::semantic_kitti()),
        DataSource::Synthetic { scene, .. } => scene.scene_config()?.schema().map_err(data_err),
    }
}

pub fn load_model(config: &RunConfig) -> Result<AttentionModel, PipelineError> {
    Ok(match &config.model {
        ModelMode::Gat { weights } => AttentionModel::Gat(load_model_weights(weights)?),
        ModelMode::Surrogate { temperature } => AttentionModel::Surrogate {
            temperature: *temperature,
        },
    })
}

/// Sensor poses in the KITTI convention to the pair transforms the
/// registration estimates.
pub fn pair_transforms(sensor_poses: &[Pose]) -> Vec<Pose> {
    sensor_poses
        .windows(2)
        .map(|w| relative_pose(&w[0], &w[1]).inverse())
        .collect()
}

pub fn load_sequences(config: &RunConfig, schema: &SemanticSchema) -> Result<Vec<SequenceData>, PipelineError> {
    match &config.data {
        DataSource::Synthetic {
            frames,
            sequences,
            scene,
        } => {
            let scene = scene.scene_config()?;
            (0..*sequences)
                .map(|s| {
                    let name = format!("syn{s:02}");
                    let generated = generate_synthetic_sequence(&scene, *frames, config.seed.wrapping_add(s as u64))
                        .map_err(|source| PipelineError::Data {
                            sequence: name.clone(),
                            source,
                        })?;
                    Ok(SequenceData {
                        name,
                        clouds: generated.clouds,
                        pair_ground_truth: generated.pair_ground_truth,
                    })
                })
                .collect()
        }
        DataSource::Kitti {
            root,
            sequences,
            max_frames,
        } => sequences
            .iter()
            .map(|name| load_kitti_sequence(root, name, *max_frames, schema))
            .collect(),
    }
}

fn load_kitti_sequence(
    root: &Path,
    name: &str,
    max_frames: Option<usize>,
    schema: &SemanticSchema,
) -> Result<SequenceData, PipelineError> {
    let data_err = |source| PipelineError::Data {
        sequence: name.to_string(),
        source,
    };
    let dir = root.join("sequences").join(name);
    let velodyne = dir.join("velodyne");
    let entries = std::fs::read_dir(&velodyne).map_err(|source| PipelineError::Io {
        path: velodyne.clone(),
        source,
    })?;
    let mut scans: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    scans.sort();
    if let Some(n) = max_frames {
        scans.truncate(n);
    }
    if scans.len() < 2 {
        return Err(PipelineError::Config(format!(
            "sequence {name}: need at least 2 scans, found {}",
            scans.len()
        )));
    }
    let pose_path = [dir.join("poses.txt"), root.join("poses").join(format!("{name}.txt"))]
        .into_iter()
        .find(|p| p.exists())
        .ok_or_else(|| PipelineError::Config(format!("sequence {name}: no poses.txt")))?;
    let poses = load_poses(&pose_path).map_err(data_err)?;
    if poses.len() < scans.len() {
        return Err(PipelineError::Config(format!(
            "sequence {name}: {} poses for {} scans",
            poses.len(),
            scans.len()
        )));
    }
    let clouds = scans
        .iter()
        .enumerate()
        .map(|(k, scan)| {
            let cloud = load_scan_at(scan, k).map_err(data_err)?;
            let stem = scan.file_stem().expect("scan file name");
            let label_path = dir.join("labels").join(stem).with_extension("label");
            load_labels(&label_path, &cloud, schema).map_err(data_err)
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(SequenceData {
        name: name.to_string(),
        pair_ground_truth: pair_transforms(&poses[..clouds.len()]),
        clouds,
    })
}
