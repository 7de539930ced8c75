//! Divergence and discrepancy metrics over perturbation results.

use std::collections::HashMap;

use thiserror::Error;

use crate::attention_engine::AttentionAssignment;
use crate::graph_builder::EdgeId;
use crate::registration::PoseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("attention mass over the edge universe is zero")]
    ZeroMass,
    #[error("edge {0} is outside the distribution's universe")]
    UnknownEdge(EdgeId),
    #[error("distributions are defined over different edge universes")]
    UniverseMismatch,
    #[error("correlation needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("correlation is undefined: zero variance")]
    ZeroVariance,
    #[error("every frame pair failed ({failures} failures)")]
    AllFailed { failures: usize },
}

/// Probabilities over a fixed, ordered set of candidate-edge ids.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDistribution {
    universe: Vec<EdgeId>,
    probabilities: Vec<f64>,
}

impl AttentionDistribution {
    /// Normalises raw non-negative masses; fails when they sum to zero.
    pub fn from_masses(universe: Vec<EdgeId>, masses: Vec<f64>) -> Result<Self, AnalysisError> {
        assert_eq!(universe.len(), masses.len(), "one mass per universe edge");
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(AnalysisError::ZeroMass);
        }
        let probabilities = masses.into_iter().map(|m| m / total).collect();
        Ok(Self {
            universe,
            probabilities,
        })
    }

    pub fn universe(&self) -> &[EdgeId] {
        &self.universe
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// Projects an assignment onto `universe`. Edges the assignment lacks get
/// probability 0.
pub fn to_distribution(
    attention: &AttentionAssignment,
    universe: &[EdgeId],
) -> Result<AttentionDistribution, AnalysisError> {
    let position: HashMap<EdgeId, usize> = universe.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut masses = vec![0.0; universe.len()];
    for (id, w) in attention.edge_ids.iter().zip(&attention.weights) {
        let &pos = position.get(id).ok_or(AnalysisError::UnknownEdge(*id))?;
        masses[pos] += w;
    }
    AttentionDistribution::from_masses(universe.to_vec(), masses)
}

fn kl_term(p: f64, m: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / m).log2()
    }
}

/// Jensen-Shannon distance with base-2 logarithms, in `[0, 1]`.
pub fn jsd(p: &AttentionDistribution, q: &AttentionDistribution) -> Result<f64, AnalysisError> {
    if p.universe != q.universe {
        return Err(AnalysisError::UniverseMismatch);
    }
    Ok(jsd_probabilities(&p.probabilities, &q.probabilities))
}

/// [`jsd`] over raw aligned probability vectors.
pub fn jsd_probabilities(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "aligned distributions");
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    for (&pe, &qe) in p.iter().zip(q) {
        let m = 0.5 * (pe + qe);
        if m == 0.0 {
            continue;
        }
        kl_p += kl_term(pe, m);
        kl_q += kl_term(qe, m);
    }
    let divergence = (kl_p + kl_q) / 2.0;
    divergence.max(0.0).sqrt().min(1.0)
}

/// Absolute per-metric change between registrations before and after a
/// perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Discrepancy {
    /// Degrees.
    pub rre: f64,
    /// Metres.
    pub rte: f64,
}

pub fn aad_pair(before: &PoseError, after: &PoseError) -> Discrepancy {
    Discrepancy {
        rre: (before.rre - after.rre).abs(),
        rte: (before.rte - after.rte).abs(),
    }
}

/// Sequence aggregate: mean discrepancies over the successful pairs and
/// their sum. The sum adds degrees to metres as the metric is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceAad {
    pub mean_rre: f64,
    pub mean_rte: f64,
    pub combined: f64,
    pub successes: usize,
    pub failures: usize,
}

pub fn aad_sequence(pairs: &[Discrepancy], failures: usize) -> Result<SequenceAad, AnalysisError> {
    if pairs.is_empty() {
        return Err(AnalysisError::AllFailed { failures });
    }
    let n = pairs.len() as f64;
    let mean_rre = pairs.iter().map(|d| d.rre).sum::<f64>() / n;
    let mean_rte = pairs.iter().map(|d| d.rte).sum::<f64>() / n;
    Ok(SequenceAad {
        mean_rre,
        mean_rte,
        combined: mean_rre + mean_rte,
        successes: pairs.len(),
        failures,
    })
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    assert_eq!(xs.len(), ys.len(), "paired samples");
    if xs.len() < 2 {
        return Err(AnalysisError::TooFewPoints(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-pair JSD (`None` where the perturbed attention was undefined) and
/// the mean over defined pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DivergenceReport {
    pub per_pair: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

impl DivergenceReport {
    pub fn from_pairs(per_pair: Vec<Option<f64>>) -> Self {
        let defined: Vec<f64> = per_pair.iter().flatten().copied().collect();
        let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        Self { per_pair, mean }
    }
}

/// Per-pair discrepancies (`None` where masked registration failed) and the
/// sequence aggregate, `None` when every pair failed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiscrepancyReport {
    pub per_pair: Vec<Option<Discrepancy>>,
    pub aggregate: Option<SequenceAad>,
    pub failures: usize,
}

impl DiscrepancyReport {
    pub fn from_pairs(per_pair: Vec<Option<Discrepancy>>) -> Self {
        let ok: Vec<Discrepancy> = per_pair.iter().flatten().copied().collect();
        let failures = per_pair.len() - ok.len();
        let aggregate = aad_sequence(&ok, failures).ok();
        Self {
            per_pair,
            aggregate,
            failures,
        }
    }

    pub fn combined(&self) -> Option<f64> {
        self.aggregate.map(|a| a.combined)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationPoint {
    pub label: String,
    pub single_class: bool,
    pub mean_jsd: f64,
    pub aad: f64,
}

/// Pearson coefficients between per-set mean JSD and AAD; `None` where the
/// coefficient is undefined.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrelationReport {
    pub points: Vec<CorrelationPoint>,
    pub single_class: Option<f64>,
    pub all_sets: Option<f64>,
}

impl CorrelationReport {
    pub fn from_points(points: Vec<CorrelationPoint>) -> Self {
        let coefficient = |filter: &dyn Fn(&CorrelationPoint) -> bool| {
            let (xs, ys): (Vec<f64>, Vec<f64>) =
                points.iter().filter(|p| filter(p)).map(|p| (p.mean_jsd, p.aad)).unzip();
            pearson(&xs, &ys).ok()
        };
        let single_class = coefficient(&|p| p.single_class);
        let all_sets = coefficient(&|_| true);
        Self {
            points,
            single_class,
            all_sets,
        }
    }
}
