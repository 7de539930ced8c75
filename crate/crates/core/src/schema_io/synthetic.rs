//! Desk-scale synthetic scenes built from planar and linear primitives.
//!
//! Every class owns a set of primitives of one [`Shape`]. Surface-like shapes
//! (patches, walls) are sampled on a jittered grid; corner-like shapes (posts,
//! rails) along their axis. Frame `k` of a sequence sees the world through the
//! `k`-fold composition of the per-step ground-truth transform.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ClassId, DataError, LabeledCloud, LabeledPoint, Pose, SemanticSchema};

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Horizontal square of side `size`.
    Patch,
    /// Vertical rectangle, `size` wide and `height` tall.
    Wall,
    /// Vertical segment of length `height`.
    Post,
    /// Horizontal segment of length `size`, raised to `height`.
    Rail,
}

impl Shape {
    pub fn is_surface(self) -> bool {
        matches!(self, Shape::Patch | Shape::Wall)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrimitives {
    pub class_id: ClassId,
    pub name: String,
    pub shape: Shape,
    pub count: usize,
    pub size: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub classes: Vec<ClassPrimitives>,
    /// Primitives are centred in `[-extent, extent]²`.
    pub extent: f64,
    /// Minimum horizontal gap between primitive footprints.
    pub clearance: f64,
    /// Grid spacing on surfaces (m).
    pub surface_spacing: f64,
    /// Sample spacing along posts and rails (m).
    pub edge_spacing: f64,
    pub noise_sigma: f64,
    /// Maps frame-`t` coordinates to frame-`t+1` coordinates.
    pub ground_truth: Pose,
    /// Draw fresh surface samples for every frame.
    pub resample: bool,
}

impl SceneConfig {
    pub fn schema(&self) -> Result<SemanticSchema, DataError> {
        let mut classes: Vec<(ClassId, String)> = Vec::new();
        for c in &self.classes {
            match classes.iter().find(|(id, _)| *id == c.class_id) {
                Some((_, name)) if *name != c.name => {
                    return Err(DataError::Schema(format!(
                        "class {} named both {name:?} and {:?}",
                        c.class_id, c.name
                    )))
                }
                Some(_) => {}
                None => classes.push((c.class_id, c.name.clone())),
            }
        }
        SemanticSchema::new(classes)
    }
}

/// Where a synthetic point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointOrigin {
    pub primitive: usize,
    pub shape: Shape,
    /// Index of the underlying surface sample; equal across frames when
    /// resampling is disabled.
    pub sample: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub cloud_t: LabeledCloud,
    pub cloud_t1: LabeledCloud,
    pub ground_truth: Pose,
    pub origins_t: Vec<PointOrigin>,
    pub origins_t1: Vec<PointOrigin>,
}

impl SyntheticPair {
    pub fn into_parts(self) -> (LabeledCloud, LabeledCloud, Pose) {
        (self.cloud_t, self.cloud_t1, self.ground_truth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub clouds: Vec<LabeledCloud>,
    pub origins: Vec<Vec<PointOrigin>>,
    /// Sensor poses in the KITTI convention (frame `k` to world).
    pub poses: Vec<Pose>,
    /// `pair_ground_truth[k]` maps frame `k` coordinates to frame `k+1`.
    pub pair_ground_truth: Vec<Pose>,
}

#[derive(Debug, Clone)]
struct Primitive {
    class_id: ClassId,
    shape: Shape,
    center: Vector3<f64>,
    /// Unit horizontal direction for walls and rails.
    direction: Vector3<f64>,
    size: f64,
    height: f64,
}

impl Primitive {
    fn footprint_radius(&self) -> f64 {
        match self.shape {
            Shape::Patch => self.size * std::f64::consts::FRAC_1_SQRT_2,
            Shape::Wall | Shape::Rail => self.size / 2.0,
            Shape::Post => 0.0,
        }
    }

    fn sample(&self, config: &SceneConfig, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
        let jitter = |rng: &mut ChaCha8Rng, cell: usize, step: f64| (cell as f64 + rng.random::<f64>()) * step;
        let cells = |length: f64, step: f64| ((length / step).ceil() as usize).max(1);
        let up = Vector3::z();
        let mut out = Vec::new();
        match self.shape {
            Shape::Patch => {
                let n = cells(self.size, config.surface_spacing);
                let step = self.size / n as f64;
                let origin = self.center - Vector3::new(self.size / 2.0, self.size / 2.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let u = jitter(rng, i, step);
                        let v = jitter(rng, j, step);
                        out.push(origin + Vector3::new(u, v, 0.0));
                    }
                }
            }
            Shape::Wall => {
                let nu = cells(self.size, config.surface_spacing);
                let nv = cells(self.height, config.surface_spacing);
                let (su, sv) = (self.size / nu as f64, self.height / nv as f64);
                let origin = self.center - self.direction * (self.size / 2.0);
                for i in 0..nu {
                    for j in 0..nv {
                        let u = jitter(rng, i, su);
                        let v = jitter(rng, j, sv);
                        out.push(origin + self.direction * u + up * v);
                    }
                }
            }
            Shape::Post => {
                let n = cells(self.height, config.edge_spacing);
                let step = self.height / n as f64;
                for i in 0..n {
                    out.push(self.center + up * jitter(rng, i, step));
                }
            }
            Shape::Rail => {
                let n = cells(self.size, config.edge_spacing);
                let step = self.size / n as f64;
                let origin = self.center - self.direction * (self.size / 2.0) + up * self.height;
                for i in 0..n {
                    out.push(origin + self.direction * jitter(rng, i, step));
                }
            }
        }
        out
    }
}

fn validate(config: &SceneConfig) -> Result<(), DataError> {
    if config.classes.iter().map(|c| c.count).sum::<usize>() == 0 {
        return Err(DataError::NoPrimitives);
    }
    let positive = [
        ("extent", config.extent),
        ("surface_spacing", config.surface_spacing),
        ("edge_spacing", config.edge_spacing),
    ];
    for (name, value) in positive {
        if !(value.is_finite() && value > 0.0) {
            return Err(DataError::Scene(format!("{name} must be positive, got {value}")));
        }
    }
    if !(config.noise_sigma.is_finite() && config.noise_sigma >= 0.0) {
        return Err(DataError::Scene(format!(
            "noise_sigma must be non-negative, got {}",
            config.noise_sigma
        )));
    }
    if !(config.clearance.is_finite() && config.clearance >= 0.0) {
        return Err(DataError::Scene("clearance must be non-negative".into()));
    }
    for c in &config.classes {
        let needs_size = c.shape != Shape::Post;
        let needs_height = matches!(c.shape, Shape::Wall | Shape::Post);
        if (needs_size && !(c.size > 0.0)) || (needs_height && !(c.height > 0.0)) || !(c.height >= 0.0) {
            return Err(DataError::Scene(format!(
                "class {} has invalid size {} or height {} for a {:?}",
                c.name, c.size, c.height, c.shape
            )));
        }
    }
    Ok(())
}

fn place_primitives(config: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Primitive>, DataError> {
    let mut placed: Vec<Primitive> = Vec::new();
    for class in &config.classes {
        for _ in 0..class.count {
            let mut attempts = 0;
            loop {
                attempts += 1;
                if attempts > MAX_PLACEMENT_ATTEMPTS {
                    return Err(DataError::Scene(format!(
                        "could not place a {:?} for class {} without overlap; \
                         increase extent or reduce counts",
                        class.shape, class.name
                    )));
                }
                let x = rng.random_range(-config.extent..=config.extent);
                let y = rng.random_range(-config.extent..=config.extent);
                let yaw = rng.random_range(0.0..std::f64::consts::PI);
                let candidate = Primitive {
                    class_id: class.class_id,
                    shape: class.shape,
                    center: Vector3::new(x, y, 0.0),
                    direction: Vector3::new(yaw.cos(), yaw.sin(), 0.0),
                    size: class.size,
                    height: class.height,
                };
                let clear = placed.iter().all(|other| {
                    let gap = (candidate.center - other.center).norm();
                    gap >= candidate.footprint_radius() + other.footprint_radius() + config.clearance
                });
                if clear {
                    placed.push(candidate);
                    break;
                }
            }
        }
    }
    Ok(placed)
}

struct Samples {
    positions: Vec<Vector3<f64>>,
    intensities: Vec<f64>,
    labels: Vec<ClassId>,
    origins: Vec<PointOrigin>,
}

fn sample_world(primitives: &[Primitive], config: &SceneConfig, rng: &mut ChaCha8Rng) -> Samples {
    let mut samples = Samples {
        positions: Vec::new(),
        intensities: Vec::new(),
        labels: Vec::new(),
        origins: Vec::new(),
    };
    for (index, primitive) in primitives.iter().enumerate() {
        for position in primitive.sample(config, rng) {
            let sample = samples.positions.len();
            samples.positions.push(position);
            samples.intensities.push(rng.random::<f64>());
            samples.labels.push(primitive.class_id);
            samples.origins.push(PointOrigin {
                primitive: index,
                shape: primitive.shape,
                sample,
            });
        }
    }
    samples
}

fn observe(
    samples: &Samples,
    frame_pose: &Pose,
    sigma: f64,
    timestamp_index: usize,
    rng: &mut ChaCha8Rng,
) -> LabeledCloud {
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let points = samples
        .positions
        .iter()
        .zip(&samples.intensities)
        .zip(&samples.labels)
        .map(|((p, &intensity), &label)| {
            let mut q = frame_pose.transform_point(p);
            if sigma > 0.0 {
                q += Vector3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
            }
            LabeledPoint::new(q, intensity, label)
        })
        .collect();
    LabeledCloud::new(timestamp_index, points)
}

/// Generates `frames` consecutive clouds of one static synthetic world.
pub fn generate_synthetic_sequence(
    config: &SceneConfig,
    frames: usize,
    seed: u64,
) -> Result<SyntheticSequence, DataError> {
    validate(config)?;
    if frames < 2 {
        return Err(DataError::Scene(format!("need at least 2 frames, got {frames}")));
    }
    let mut layout_rng = ChaCha8Rng::seed_from_u64(seed);
    let primitives = place_primitives(config, &mut layout_rng)?;

    let mut fixed: Option<Samples> = None;
    let mut clouds = Vec::with_capacity(frames);
    let mut origins = Vec::with_capacity(frames);
    let mut poses = Vec::with_capacity(frames);
    let mut world_to_frame = Pose::identity();
    for frame in 0..frames {
        let mut sample_rng = ChaCha8Rng::seed_from_u64(seed);
        sample_rng.set_stream(1 + if config.resample { frame as u64 } else { 0 });
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
        noise_rng.set_stream(1_000_003 + frame as u64);

        let fresh;
        let samples = if config.resample {
            fresh = sample_world(&primitives, config, &mut sample_rng);
            &fresh
        } else {
            fixed.get_or_insert_with(|| sample_world(&primitives, config, &mut sample_rng))
        };
        let cloud = observe(samples, &world_to_frame, config.noise_sigma, frame, &mut noise_rng);
        origins.push(samples.origins.clone());
        clouds.push(cloud);
        poses.push(world_to_frame.inverse());
        world_to_frame = config.ground_truth.compose(&world_to_frame);
    }
    let pair_ground_truth = vec![config.ground_truth; frames - 1];
    Ok(SyntheticSequence {
        clouds,
        origins,
        poses,
        pair_ground_truth,
    })
}

/// Generates one frame pair; `cloud_t1` is `cloud_t`'s world seen through
/// `config.ground_truth`.
pub fn generate_synthetic_scene(config: &SceneConfig, seed: u64) -> Result<SyntheticPair, DataError> {
    let mut sequence = generate_synthetic_sequence(config, 2, seed)?;
    let origins_t1 = sequence.origins.pop().expect("two frames");
    let origins_t = sequence.origins.pop().expect("two frames");
    let cloud_t1 = sequence.clouds.pop().expect("two frames");
    let cloud_t = sequence.clouds.pop().expect("two frames");
    Ok(SyntheticPair {
        cloud_t,
        cloud_t1,
        ground_truth: config.ground_truth,
        origins_t,
        origins_t1,
    })
}
