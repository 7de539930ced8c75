use nalgebra::Vector3;

use super::{ClassId, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub position: Vector3<f64>,
    pub intensity: f64,
    /// `None` until a label file has been applied.
    pub label: Option<ClassId>,
}

impl LabeledPoint {
    pub fn new(position: Vector3<f64>, intensity: f64, label: ClassId) -> Self {
        Self {
            position,
            intensity,
            label: Some(label),
        }
    }

    pub fn unlabeled(position: Vector3<f64>, intensity: f64) -> Self {
        Self {
            position,
            intensity,
            label: None,
        }
    }
}

/// One scan at discrete timestamp `timestamp_index`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledCloud {
    pub timestamp_index: usize,
    pub points: Vec<LabeledPoint>,
}

impl LabeledCloud {
    pub fn new(timestamp_index: usize, points: Vec<LabeledPoint>) -> Self {
        Self {
            timestamp_index,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| p.position).collect()
    }

    /// Copy with every position mapped through `pose`.
    pub fn transformed(&self, pose: &Pose) -> LabeledCloud {
        LabeledCloud {
            timestamp_index: self.timestamp_index,
            points: self
                .points
                .iter()
                .map(|p| LabeledPoint {
                    position: pose.transform_point(&p.position),
                    ..*p
                })
                .collect(),
        }
    }
}
