//! Attention-weighted rigid registration and pose-error metrics.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::attention_engine::AttentionAssignment;
use crate::graph_builder::SemanticGraph;
use crate::schema_io::Pose;

/// Total attention mass at or below this is a confidence loss.
pub const MIN_TOTAL_WEIGHT: f64 = 1e-8;
/// Second singular value of the normalised cross-covariance below this is a
/// degenerate configuration.
pub const MIN_SECOND_SINGULAR_VALUE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("insufficient registration points or confidence loss (total weight {total:e})")]
    ConfidenceLoss { total: f64 },
    #[error("degenerate correspondence geometry (σ₂ = {sigma2:e})")]
    DegenerateGeometry { sigma2: f64 },
    #[error("attention is not aligned with the graph's candidate edges")]
    Misaligned,
    #[error("SVD did not converge")]
    SvdFailed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// Relative rotation error in degrees, within [0, 180].
    pub rre: f64,
    /// Relative translation error in metres.
    pub rte: f64,
}

impl PoseError {
    pub fn between(ground_truth: &Pose, estimate: &Pose) -> Self {
        Self {
            rre: rre(ground_truth, estimate),
            rte: rte(ground_truth, estimate),
        }
    }
}

/// Weighted Kabsch over `(source, target, weight)` triples, estimating the
/// transform with `target ≈ R source + t`.
pub fn weighted_kabsch<I>(correspondences: I) -> Result<Pose, RegistrationError>
where
    I: IntoIterator<Item = (Vector3<f64>, Vector3<f64>, f64)>,
{
    let triples: Vec<_> = correspondences.into_iter().collect();
    let total: f64 = triples.iter().map(|t| t.2).sum();
    if !(total > MIN_TOTAL_WEIGHT) {
        return Err(RegistrationError::ConfidenceLoss { total });
    }
    // normalised weights make the degeneracy threshold scale-free
    let mut mu_s = Vector3::zeros();
    let mut mu_t = Vector3::zeros();
    for (s, t, w) in &triples {
        let w = w / total;
        mu_s += s * w;
        mu_t += t * w;
    }
    let mut h = Matrix3::zeros();
    for (s, t, w) in &triples {
        if *w == 0.0 {
            continue;
        }
        h += ((s - mu_s) * (w / total)) * (t - mu_t).transpose();
    }
    let svd = h.svd(true, true);
    let mut sigma = svd.singular_values;
    sigma.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if sigma[1] < MIN_SECOND_SINGULAR_VALUE {
        return Err(RegistrationError::DegenerateGeometry { sigma2: sigma[1] });
    }
    let u = svd.u.ok_or(RegistrationError::SvdFailed)?;
    let v = svd.v_t.ok_or(RegistrationError::SvdFailed)?.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let translation = mu_t - rotation * mu_s;
    Pose::from_projected(rotation, translation).map_err(|_| RegistrationError::SvdFailed)
}

/// Recovers the relative pose from the candidate edges weighted by attention.
pub fn weighted_svd_pose(graph: &SemanticGraph, attention: &AttentionAssignment) -> Result<Pose, RegistrationError> {
    if !attention.is_aligned_with(graph) {
        return Err(RegistrationError::Misaligned);
    }
    weighted_kabsch(
        graph
            .candidate_edges
            .iter()
            .zip(&attention.weights)
            .map(|(e, &w)| (graph.nodes[e.source].position, graph.nodes[e.target].position, w)),
    )
}

/// Rotation angle of `Rᵀ R̂` in degrees.
///
/// Evaluated as `atan2(½‖vee(M − Mᵀ)‖, ½(tr M − 1))`, which equals
/// `acos(½(tr M − 1))` for rotations but keeps full precision near 0° and
/// 180° where `acos` loses half the significant digits.
pub fn rre(ground_truth: &Pose, estimate: &Pose) -> f64 {
    let m = ground_truth.rotation().transpose() * estimate.rotation();
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let skew = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let sin = skew.norm() / 2.0;
    sin.atan2(cos).to_degrees().clamp(0.0, 180.0)
}

/// `‖τ_gt − τ̂‖₂` in metres.
pub fn rte(ground_truth: &Pose, estimate: &Pose) -> f64 {
    (ground_truth.translation() - estimate.translation()).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cube() -> Vec<Vector3<f64>> {
        let mut pts = Vec::new();
        for x in [-1.0, 0.5, 2.0] {
            for y in [-2.0, 0.0, 1.0] {
                for z in [0.0, 1.5] {
                    pts.push(Vector3::new(x, y, z));
                }
            }
        }
        pts
    }

    #[test]
    fn noiseless_uniform_recovers_transform() {
        let gt = Pose::from_axis_angle(Vector3::new(0.3, -0.2, 1.0), 1.2, Vector3::new(4.0, -1.0, 0.5));
        let est = weighted_kabsch(cube().into_iter().map(|p| (p, gt.transform_point(&p), 1.0))).unwrap();
        assert_relative_eq!(*est.rotation(), *gt.rotation(), epsilon = 1e-9);
        assert_relative_eq!(*est.translation(), *gt.translation(), epsilon = 1e-9);
    }

    #[test]
    fn zero_weight_pairs_are_excluded() {
        let gt = Pose::from_yaw(0.4, Vector3::new(1.0, 2.0, 0.0));
        let good: Vec<_> = cube().into_iter().map(|p| (p, gt.transform_point(&p), 1.0)).collect();
        let mut with_bad = good.clone();
        with_bad.push((Vector3::new(9.0, 9.0, 9.0), Vector3::new(-7.0, 3.0, 1.0), 0.0));
        with_bad.insert(3, (Vector3::new(1.0, 0.0, 5.0), Vector3::new(2.0, 2.0, 2.0), 0.0));
        let a = weighted_kabsch(good).unwrap();
        let b = weighted_kabsch(with_bad).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_zero_weights_are_confidence_loss() {
        let err = weighted_kabsch(cube().into_iter().map(|p| (p, p, 0.0))).unwrap_err();
        assert!(matches!(err, RegistrationError::ConfidenceLoss { .. }));
        assert!(err
            .to_string()
            .contains("insufficient registration points or confidence loss"));
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts: Vec<_> = (0..6).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let err = weighted_kabsch(pts.into_iter().map(|p| (p, p, 1.0))).unwrap_err();
        assert!(matches!(err, RegistrationError::DegenerateGeometry { .. }));
    }

    #[test]
    fn planar_configuration_is_solvable() {
        let gt = Pose::from_yaw(-0.7, Vector3::new(0.0, 3.0, 1.0));
        let pts: Vec<_> = cube().into_iter().filter(|p| p.z == 0.0).collect();
        let est = weighted_kabsch(pts.into_iter().map(|p| (p, gt.transform_point(&p), 1.0))).unwrap();
        assert!(rre(&gt, &est) < 1e-7);
        assert!(est.rotation().determinant() > 0.0);
    }

    #[test]
    fn rre_identity_and_antipodal() {
        let base = Pose::from_axis_angle(Vector3::new(1.0, 2.0, 3.0), 0.8, Vector3::zeros());
        assert_eq!(rre(&base, &base), 0.0);
        let flipped = base.compose(&Pose::from_axis_angle(
            Vector3::new(0.0, 1.0, 1.0),
            std::f64::consts::PI,
            Vector3::zeros(),
        ));
        assert!((rre(&base, &flipped) - 180.0).abs() < 1e-9);
    }

    #[test]
    fn rre_thirty_degree_yaw_matches_trace_formula() {
        let base = Pose::from_axis_angle(Vector3::new(-0.5, 0.1, 0.9), 2.0, Vector3::zeros());
        let est = base.compose(&Pose::from_yaw(30f64.to_radians(), Vector3::zeros()));
        let m = base.rotation().transpose() * est.rotation();
        let by_trace = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees();
        assert!((rre(&base, &est) - 30.0).abs() < 1e-9);
        assert!((rre(&base, &est) - by_trace).abs() < 1e-9);
    }

    #[test]
    fn rte_three_four_five() {
        let a = Pose::identity();
        let b = Pose::from_yaw(0.0, Vector3::new(3.0, 4.0, 0.0));
        assert_eq!(rte(&a, &b), 5.0);
        assert_eq!(rte(&b, &b), 0.0);
    }

    #[test]
    fn metrics_are_symmetric() {
        let a = Pose::from_axis_angle(Vector3::new(0.2, 0.9, -0.1), 0.6, Vector3::new(1.0, -2.0, 0.5));
        let b = Pose::from_axis_angle(Vector3::new(-0.4, 0.3, 0.7), 1.9, Vector3::new(0.0, 4.0, -1.0));
        assert!((rre(&a, &b) - rre(&b, &a)).abs() < 1e-12);
        assert_eq!(rte(&a, &b), rte(&b, &a));
    }
}
