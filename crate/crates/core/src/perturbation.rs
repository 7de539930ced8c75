//! Semantic class ranking, masking-set construction, and the two
//! perturbations: node masking of the input graph and edge-attention zeroing
//! after the last layer.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention_engine::AttentionAssignment;
use crate::graph_builder::{EdgeId, GeometricClass, NodeId, SemanticGraph};
use crate::schema_io::ClassId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("attention assignment is empty")]
    EmptyAttention,
    #[error("attention is not aligned with the graph's candidate edges")]
    Misaligned,
    #[error("ranking has {0} classes; masking needs at least 2")]
    TooFewClasses(usize),
    #[error("insufficient registration points: masking removed every candidate edge")]
    InsufficientRegistrationPoints,
    #[error("node id {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("edge id {0} is not in the assignment")]
    UnknownEdge(EdgeId),
}

/// Per-source statistic aggregated into a class score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankStatistic {
    /// Sum of the source's candidate-edge attention.
    Total,
    /// Largest attention among the source's candidate edges.
    #[default]
    Peak,
}

/// Running per-class `(score sum, contributing node count)`; mergeable
/// across frame pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassTally {
    entries: BTreeMap<ClassId, (f64, usize)>,
}

impl ClassTally {
    /// Scores every cloud-`t` node with at least one candidate edge.
    pub fn from_attention(
        attention: &AttentionAssignment,
        graph: &SemanticGraph,
        statistic: RankStatistic,
    ) -> Result<Self, MaskError> {
        if attention.is_empty() {
            return Err(MaskError::EmptyAttention);
        }
        if !attention.is_aligned_with(graph) {
            return Err(MaskError::Misaligned);
        }
        let mut tally = Self::default();
        for (&source, positions) in &graph.candidates_by_source() {
            let weights = positions.iter().map(|&p| attention.weights[p]);
            let score = match statistic {
                RankStatistic::Total => weights.sum(),
                RankStatistic::Peak => weights.fold(0.0, f64::max),
            };
            let entry = tally.entries.entry(graph.nodes[source].class_id).or_insert((0.0, 0));
            entry.0 += score;
            entry.1 += 1;
        }
        Ok(tally)
    }

    pub fn merge(&mut self, other: &ClassTally) {
        for (&class, &(sum, count)) in &other.entries {
            let entry = self.entries.entry(class).or_insert((0.0, 0));
            entry.0 += sum;
            entry.1 += count;
        }
    }

    pub fn ranking(&self) -> ClassRanking {
        ClassRanking::from_averages(
            self.entries
                .iter()
                .filter(|(_, (_, count))| *count > 0)
                .map(|(&class, &(sum, count))| (class, sum / count as f64, count)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedClass {
    pub class_id: ClassId,
    pub average_attention: f64,
    /// Cloud-`t` nodes of this class with at least one candidate edge.
    pub count: usize,
}

/// Classes in descending average attention; equal averages fall back to
/// ascending class id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassRanking {
    pub entries: Vec<RankedClass>,
    /// Adjacent pairs whose order came from the class-id tie-break.
    pub ties: Vec<(ClassId, ClassId)>,
}

impl ClassRanking {
    pub fn from_averages<I>(averages: I) -> Self
    where
        I: IntoIterator<Item = (ClassId, f64, usize)>,
    {
        let mut entries: Vec<RankedClass> = averages
            .into_iter()
            .map(|(class_id, average_attention, count)| RankedClass {
                class_id,
                average_attention,
                count,
            })
            .collect();
        entries.sort_by(|a, b| {
            b.average_attention
                .total_cmp(&a.average_attention)
                .then(a.class_id.cmp(&b.class_id))
        });
        let ties = entries
            .windows(2)
            .filter(|w| w[0].average_attention == w[1].average_attention)
            .map(|w| (w[0].class_id, w[1].class_id))
            .collect();
        Self { entries, ties }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_ids(&self) -> Vec<ClassId> {
        self.entries.iter().map(|e| e.class_id).collect()
    }
}

/// Ranks classes by the summed candidate attention of their cloud-`t` nodes,
/// normalised by the number of such nodes with candidates.
pub fn rank_classes(attention: &AttentionAssignment, graph: &SemanticGraph) -> Result<ClassRanking, MaskError> {
    rank_classes_with(attention, graph, RankStatistic::Total)
}

pub fn rank_classes_with(
    attention: &AttentionAssignment,
    graph: &SemanticGraph,
    statistic: RankStatistic,
) -> Result<ClassRanking, MaskError> {
    Ok(ClassTally::from_attention(attention, graph, statistic)?.ranking())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskKind {
    /// Masks nothing; a reference no-op.
    Empty,
    /// The ranked class at 0-based position `rank`.
    SingleClass {
        rank: usize,
    },
    TopK {
        k: usize,
    },
    RandomK {
        k: usize,
        seed: u64,
    },
    Corner,
    Surface,
}

impl MaskKind {
    pub fn label(&self) -> String {
        match self {
            MaskKind::Empty => "none".into(),
            MaskKind::SingleClass { rank } => {
                let n = rank + 1;
                let suffix = match (n % 10, n % 100) {
                    (1, r) if r != 11 => "st",
                    (2, r) if r != 12 => "nd",
                    (3, r) if r != 13 => "rd",
                    _ => "th",
                };
                format!("{n}{suffix}-class")
            }
            MaskKind::TopK { k } => format!("top-{k}"),
            MaskKind::RandomK { k, .. } => format!("random-{k}"),
            MaskKind::Corner => "corner".into(),
            MaskKind::Surface => "surface".into(),
        }
    }

    pub fn is_single_class(&self) -> bool {
        matches!(self, MaskKind::SingleClass { .. })
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Sequence-level choice of what to mask, before resolution against a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub kind: MaskKind,
    /// Masked classes in ranking order; empty for geometry sets.
    pub classes: Vec<ClassId>,
    pub note: Option<String>,
}

impl MaskSpec {
    pub fn empty() -> Self {
        Self {
            kind: MaskKind::Empty,
            classes: Vec::new(),
            note: None,
        }
    }

    pub fn label(&self) -> String {
        self.kind.label()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaskSelection {
    pub specs: Vec<MaskSpec>,
    /// Human-readable reasons for sets that could not be formed.
    pub omitted: Vec<String>,
}

pub const RANDOM_SET_SIZE: usize = 3;

/// Chooses the masking taxonomy: 1st/2nd/3rd class, top-3, top-5, random-3
/// (drawn from classes outside the top 3), corner and surface.
pub fn select_masks(ranking: &ClassRanking, seed: u64) -> Result<MaskSelection, MaskError> {
    let classes = ranking.class_ids();
    if classes.len() < 2 {
        return Err(MaskError::TooFewClasses(classes.len()));
    }
    let mut selection = MaskSelection::default();
    for rank in 0..3 {
        match classes.get(rank) {
            Some(&class) => selection.specs.push(MaskSpec {
                kind: MaskKind::SingleClass { rank },
                classes: vec![class],
                note: None,
            }),
            None => selection.omitted.push(format!(
                "{}: only {} ranked classes",
                MaskKind::SingleClass { rank },
                classes.len()
            )),
        }
    }
    for k in [3, 5] {
        let kind = MaskKind::TopK { k };
        if classes.len() >= k {
            selection.specs.push(MaskSpec {
                kind,
                classes: classes[..k].to_vec(),
                note: None,
            });
        } else {
            selection
                .omitted
                .push(format!("{kind}: only {} ranked classes", classes.len()));
        }
    }
    let pool = &classes[classes.len().min(3)..];
    let kind = MaskKind::RandomK {
        k: RANDOM_SET_SIZE,
        seed,
    };
    if pool.is_empty() {
        selection
            .omitted
            .push(format!("{kind}: no ranked classes outside the top 3"));
    } else {
        let take = pool.len().min(RANDOM_SET_SIZE);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> = sample(&mut rng, pool.len(), take).into_vec();
        picked.sort_unstable();
        let note = (take < RANDOM_SET_SIZE)
            .then(|| format!("only {take} classes outside the top 3; random set holds all of them"));
        selection.specs.push(MaskSpec {
            kind,
            classes: picked.into_iter().map(|i| pool[i]).collect(),
            note,
        });
    }
    for kind in [MaskKind::Corner, MaskKind::Surface] {
        selection.specs.push(MaskSpec {
            kind,
            classes: Vec::new(),
            note: None,
        });
    }
    Ok(selection)
}

/// A mask resolved against one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskingSet {
    pub kind: MaskKind,
    pub classes: Vec<ClassId>,
    /// Sorted ids of masked nodes in both clouds.
    pub node_ids: Vec<NodeId>,
    /// Sorted ids of candidate edges whose source node is masked.
    pub edge_ids: Vec<EdgeId>,
    pub note: Option<String>,
}

impl MaskingSet {
    pub fn empty() -> Self {
        Self {
            kind: MaskKind::Empty,
            classes: Vec::new(),
            node_ids: Vec::new(),
            edge_ids: Vec::new(),
            note: None,
        }
    }

    pub fn label(&self) -> String {
        self.kind.label()
    }
}

pub fn resolve_mask(spec: &MaskSpec, graph: &SemanticGraph) -> MaskingSet {
    let classes: BTreeSet<ClassId> = spec.classes.iter().copied().collect();
    let masked = |node: &crate::graph_builder::GraphNode| match spec.kind {
        MaskKind::Empty => false,
        MaskKind::Corner => node.geometry == GeometricClass::Corner,
        MaskKind::Surface => node.geometry == GeometricClass::Surface,
        _ => classes.contains(&node.class_id),
    };
    let flags: Vec<bool> = graph.nodes.iter().map(masked).collect();
    let mut node_ids: Vec<NodeId> = graph
        .nodes
        .iter()
        .zip(&flags)
        .filter(|(_, &m)| m)
        .map(|(n, _)| n.id)
        .collect();
    node_ids.sort_unstable();
    let mut edge_ids: Vec<EdgeId> = graph
        .candidate_edges
        .iter()
        .filter(|e| flags[e.source])
        .map(|e| e.id)
        .collect();
    edge_ids.sort_unstable();
    MaskingSet {
        kind: spec.kind,
        classes: spec.classes.clone(),
        node_ids,
        edge_ids,
        note: spec.note.clone(),
    }
}

pub fn build_masking_sets(
    ranking: &ClassRanking,
    graph: &SemanticGraph,
    seed: u64,
) -> Result<Vec<MaskingSet>, MaskError> {
    Ok(select_masks(ranking, seed)?
        .specs
        .iter()
        .map(|spec| resolve_mask(spec, graph))
        .collect())
}

/// Removes the set's nodes and every edge touching them. Surviving nodes and
/// edges keep their ids and relative order.
pub fn apply_node_mask(graph: &SemanticGraph, set: &MaskingSet) -> Result<SemanticGraph, MaskError> {
    let position: HashMap<NodeId, usize> = graph.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let mut removed = vec![false; graph.nodes.len()];
    for id in &set.node_ids {
        let &pos = position.get(id).ok_or(MaskError::UnknownNode(*id))?;
        removed[pos] = true;
    }
    let mut remap = vec![usize::MAX; graph.nodes.len()];
    let mut nodes = Vec::with_capacity(graph.nodes.len() - set.node_ids.len());
    for (old, node) in graph.nodes.iter().enumerate() {
        if !removed[old] {
            remap[old] = nodes.len();
            nodes.push(node.clone());
        }
    }
    let intra_edges = graph
        .intra_edges
        .iter()
        .filter(|(a, b)| !removed[*a] && !removed[*b])
        .map(|&(a, b)| (remap[a], remap[b]))
        .collect();
    let candidate_edges: Vec<_> = graph
        .candidate_edges
        .iter()
        .filter(|e| !removed[e.source] && !removed[e.target])
        .map(|e| crate::graph_builder::CandidateEdge {
            id: e.id,
            source: remap[e.source],
            target: remap[e.target],
        })
        .collect();
    if candidate_edges.is_empty() {
        return Err(MaskError::InsufficientRegistrationPoints);
    }
    Ok(SemanticGraph {
        nodes,
        intra_edges,
        candidate_edges,
    })
}

/// Zeroes `α` on the set's candidate edges without renormalising.
pub fn apply_edge_mask(attention: &AttentionAssignment, set: &MaskingSet) -> Result<AttentionAssignment, MaskError> {
    let mut masked = attention.clone();
    if set.edge_ids.is_empty() {
        return Ok(masked);
    }
    let position: HashMap<EdgeId, usize> = attention.edge_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    for id in &set.edge_ids {
        let &pos = position.get(id).ok_or(MaskError::UnknownEdge(*id))?;
        masked.weights[pos] = 0.0;
    }
    Ok(masked)
}
