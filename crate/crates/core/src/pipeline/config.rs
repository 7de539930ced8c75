use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::graph_builder::{GeometryParams, GraphParams};
use crate::perturbation::RankStatistic;
use crate::schema_io::{ClassId, ClassPrimitives, Pose, SceneConfig, Shape};

/// Full run configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the random masking set and synthetic scenes.
    #[serde(default)]
    pub seed: u64,
    /// Output directory; the command line may override it.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Class-list file; defaults to SemanticKITTI for KITTI data and to the
    /// scene's classes for synthetic data.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub ranking: RankStatistic,
    /// Restricts the masking sets by label; empty keeps all.
    #[serde(default)]
    pub sets: Vec<String>,
    pub data: DataSource,
    #[serde(default)]
    pub graph: GraphConfig,
    pub model: ModelMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// `root/sequences/<seq>/{velodyne,labels}/NNNNNN.{bin,label}` with
    /// `poses.txt` beside them or under `root/poses/<seq>.txt`.
    Kitti {
        root: PathBuf,
        sequences: Vec<String>,
        #[serde(default)]
        max_frames: Option<usize>,
    },
    Synthetic {
        frames: usize,
        #[serde(default = "one")]
        sequences: usize,
        #[serde(default)]
        scene: SceneSpec,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelMode {
    Gat { weights: PathBuf },
    Surrogate { temperature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub k: usize,
    pub line_ratio: f64,
    pub curvature_threshold: f64,
    pub intra_radius: f64,
    pub candidate_fanout: usize,
    pub candidate_max_distance: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        let g = GraphParams::default();
        Self {
            k: g.geometry.k,
            line_ratio: g.geometry.line_ratio,
            curvature_threshold: g.geometry.curvature_threshold,
            intra_radius: g.intra_radius,
            candidate_fanout: g.candidate_fanout,
            candidate_max_distance: g.candidate_max_distance,
        }
    }
}

impl GraphConfig {
    pub fn params(&self) -> GraphParams {
        GraphParams {
            geometry: GeometryParams {
                k: self.k,
                line_ratio: self.line_ratio,
                curvature_threshold: self.curvature_threshold,
            },
            intra_radius: self.intra_radius,
            candidate_fanout: self.candidate_fanout,
            candidate_max_distance: self.candidate_max_distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub id: ClassId,
    pub name: String,
    pub shape: Shape,
    pub count: usize,
    pub size: f64,
    #[serde(default)]
    pub height: f64,
}

/// Per-frame ego motion: rotation by `angle_deg` about `axis`, then
/// `translation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSpec {
    #[serde(default = "z_axis")]
    pub axis: [f64; 3],
    pub angle_deg: f64,
    pub translation: [f64; 3],
}

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl MotionSpec {
    pub fn pose(&self) -> Result<Pose, PipelineError> {
        let axis = Vector3::from(self.axis);
        if self.angle_deg != 0.0 && !(axis.norm() > 0.0) {
            return Err(PipelineError::Config("motion axis must be non-zero".into()));
        }
        let axis = if axis.norm() > 0.0 { axis } else { Vector3::z() };
        Ok(Pose::from_axis_angle(
            axis,
            self.angle_deg.to_radians(),
            Vector3::from(self.translation),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub extent: f64,
    pub clearance: f64,
    pub surface_spacing: f64,
    pub edge_spacing: f64,
    pub noise_sigma: f64,
    pub resample: bool,
    pub motion: MotionSpec,
    pub classes: Vec<ClassSpec>,
}

impl Default for SceneSpec {
    /// Five classes of clearly different size: ground, walls, posts, rails
    /// and small patches.
    fn default() -> Self {
        let class = |id, name: &str, shape, count, size, height| ClassSpec {
            id,
            name: name.into(),
            shape,
            count,
            size,
            height,
        };
        Self {
            extent: 14.0,
            clearance: 0.8,
            surface_spacing: 0.3,
            edge_spacing: 0.1,
            noise_sigma: 0.02,
            resample: false,
            motion: MotionSpec {
                axis: z_axis(),
                angle_deg: 2.0,
                translation: [0.4, 0.1, 0.0],
            },
            classes: vec![
                class(40, "road", Shape::Patch, 4, 5.0, 0.0),
                class(50, "building", Shape::Wall, 5, 4.0, 3.0),
                class(80, "pole", Shape::Post, 10, 0.0, 3.0),
                class(51, "fence", Shape::Rail, 6, 3.0, 1.0),
                class(48, "sidewalk", Shape::Patch, 3, 2.0, 0.0),
            ],
        }
    }
}

impl SceneSpec {
    pub fn scene_config(&self) -> Result<SceneConfig, PipelineError> {
        Ok(SceneConfig {
            classes: self
                .classes
                .iter()
                .map(|c| ClassPrimitives {
                    class_id: c.id,
                    name: c.name.clone(),
                    shape: c.shape,
                    count: c.count,
                    size: c.size,
                    height: c.height,
                })
                .collect(),
            extent: self.extent,
            clearance: self.clearance,
            surface_spacing: self.surface_spacing,
            edge_spacing: self.edge_spacing,
            noise_sigma: self.noise_sigma,
            ground_truth: self.motion.pose()?,
            resample: self.resample,
        })
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.out {
            fix(p);
        }
        if let Some(p) = &mut self.schema {
            fix(p);
        }
        if let DataSource::Kitti { root, .. } = &mut self.data {
            fix(root);
        }
        if let ModelMode::Gat { weights } = &mut self.model {
            fix(weights);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        match &self.data {
            DataSource::Kitti {
                sequences, max_frames, ..
            } => {
                if sequences.is_empty() {
                    return Err(PipelineError::Config("no sequences listed".into()));
                }
                if matches!(max_frames, Some(n) if *n < 2) {
                    return Err(PipelineError::Config("max_frames must be at least 2".into()));
                }
            }
            DataSource::Synthetic { frames, sequences, .. } => {
                if *frames < 2 {
                    return Err(PipelineError::Config(format!("need at least 2 frames, got {frames}")));
                }
                if *sequences == 0 {
                    return Err(PipelineError::Config("sequences must be at least 1".into()));
                }
            }
        }
        if let ModelMode::Surrogate { temperature } = self.model {
            if !(temperature.is_finite() && temperature > 0.0) {
                return Err(PipelineError::Config(format!(
                    "temperature must be positive, got {temperature}"
                )));
            }
        }
        for label in &self.sets {
            if !super::is_known_set_label(label) {
                return Err(PipelineError::Config(format!("unknown masking set {label:?}")));
            }
        }
        Ok(())
    }
}
