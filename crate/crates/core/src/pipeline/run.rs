use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{load_model, load_schema, load_sequences, PipelineError, RunConfig, SequenceData};
use crate::analysis::{
    aad_pair, jsd, to_distribution, AttentionDistribution, CorrelationPoint, CorrelationReport, Discrepancy,
    DiscrepancyReport, DivergenceReport,
};
use crate::attention_engine::{AttentionAssignment, AttentionModel};
use crate::graph_builder::{build_graph, node_features, GraphError, SemanticGraph};
use crate::perturbation::{
    apply_edge_mask, apply_node_mask, resolve_mask, select_masks, ClassRanking, ClassTally, MaskSpec, RankStatistic,
};
use crate::registration::{weighted_svd_pose, PoseError, RegistrationError};
use crate::schema_io::{ClassId, Pose, SemanticSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MaskMode {
    /// Remove the set's nodes from the input graph and re-run attention.
    Node,
    /// Zero the set's last-layer attention and re-register.
    Edge,
}

impl MaskMode {
    pub const BOTH: [MaskMode; 2] = [MaskMode::Node, MaskMode::Edge];

    pub fn label(self) -> &'static str {
        match self {
            MaskMode::Node => "node",
            MaskMode::Edge => "edge",
        }
    }
}

#[derive(Debug, Clone)]
pub struct VanillaPair {
    pub index: usize,
    pub ground_truth: Pose,
    pub graph: SemanticGraph,
    pub attention: AttentionAssignment,
    pub distribution: AttentionDistribution,
    pub estimate: Result<Pose, RegistrationError>,
}

impl VanillaPair {
    pub fn error(&self) -> Option<PoseError> {
        self.estimate
            .as_ref()
            .ok()
            .map(|est| PoseError::between(&self.ground_truth, est))
    }
}

#[derive(Debug, Clone)]
pub struct VanillaSequence {
    pub name: String,
    pub pairs: Vec<VanillaPair>,
    pub tally: ClassTally,
    pub ranking: ClassRanking,
}

#[derive(Debug, Clone)]
pub struct VanillaRun {
    pub schema: SemanticSchema,
    pub model: AttentionModel,
    pub statistic: RankStatistic,
    pub sequences: Vec<VanillaSequence>,
}

impl VanillaRun {
    /// Ranking over every pair of every sequence.
    pub fn pooled_ranking(&self) -> ClassRanking {
        let mut tally = ClassTally::default();
        for seq in &self.sequences {
            tally.merge(&seq.tally);
        }
        tally.ranking()
    }
}

fn vanilla_pair(
    index: usize,
    data: &SequenceData,
    schema: &SemanticSchema,
    model: &AttentionModel,
    config: &RunConfig,
) -> Result<VanillaPair, PipelineError> {
    let pair_err = |message: String| PipelineError::Pair {
        sequence: data.name.clone(),
        pair: index,
        message,
    };
    let graph = build_graph(&data.clouds[index], &data.clouds[index + 1], &config.graph.params()).map_err(|e| {
        if e == GraphError::NoCandidates {
            PipelineError::Estimation {
                sequence: data.name.clone(),
                pair: index,
                message: e.to_string(),
            }
        } else {
            pair_err(e.to_string())
        }
    })?;
    let features = node_features(&graph, schema).map_err(|e| pair_err(e.to_string()))?;
    let attention = model.assign(&graph, &features).map_err(|e| pair_err(e.to_string()))?;
    let distribution = to_distribution(&attention, &graph.edge_ids()).map_err(|e| pair_err(e.to_string()))?;
    let estimate = weighted_svd_pose(&graph, &attention);
    Ok(VanillaPair {
        index,
        ground_truth: data.pair_ground_truth[index],
        graph,
        attention,
        distribution,
        estimate,
    })
}

/// Unperturbed pass over every frame pair plus the sequence-level ranking.
pub fn run_vanilla(config: &RunConfig) -> Result<VanillaRun, PipelineError> {
    config.validate()?;
    let schema = load_schema(config)?;
    let model = load_model(config)?;
    let data = load_sequences(config, &schema)?;
    let sequences = data
        .iter()
        .map(|seq| {
            let pairs = (0..seq.pair_count())
                .into_par_iter()
                .map(|k| vanilla_pair(k, seq, &schema, &model, config))
                .collect::<Result<Vec<_>, _>>()?;
            let mut tally = ClassTally::default();
            for pair in &pairs {
                let t = ClassTally::from_attention(&pair.attention, &pair.graph, config.ranking).map_err(|e| {
                    PipelineError::Pair {
                        sequence: seq.name.clone(),
                        pair: pair.index,
                        message: e.to_string(),
                    }
                })?;
                tally.merge(&t);
            }
            let ranking = tally.ranking();
            Ok(VanillaSequence {
                name: seq.name.clone(),
                pairs,
                tally,
                ranking,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(VanillaRun {
        schema,
        model,
        statistic: config.ranking,
        sequences,
    })
}

/// One `(pair, set, mode)` evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub pair: usize,
    pub set: usize,
    pub mode: MaskMode,
    pub masked_nodes: usize,
    pub masked_edges: usize,
    /// `None` when the perturbed attention has no mass.
    pub jsd: Option<f64>,
    pub outcome: Result<PoseError, String>,
    /// `None` when either registration failed.
    pub discrepancy: Option<Discrepancy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub pair: usize,
    pub candidate_edges: usize,
    pub outcome: Result<PoseError, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetResult {
    pub label: String,
    pub single_class: bool,
    pub classes: Vec<ClassId>,
    pub note: Option<String>,
    pub mode: MaskMode,
    pub divergence: DivergenceReport,
    pub discrepancy: DiscrepancyReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRun {
    pub name: String,
    pub ranking: ClassRanking,
    pub omitted: Vec<String>,
    pub specs: Vec<MaskSpec>,
    pub vanilla: Vec<PairRecord>,
    /// Ordered by pair, then set, then mode.
    pub cells: Vec<CellResult>,
    /// Ordered by set, then mode.
    pub sets: Vec<SetResult>,
    pub correlation: BTreeMap<MaskMode, CorrelationReport>,
}

impl SequenceRun {
    pub fn set(&self, label: &str, mode: MaskMode) -> Option<&SetResult> {
        self.sets.iter().find(|s| s.label == label && s.mode == mode)
    }
}

/// Aggregates over all sequences, keyed by set label.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledRun {
    pub ranking: ClassRanking,
    pub sets: Vec<SetResult>,
    pub correlation: BTreeMap<MaskMode, CorrelationReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub schema: SemanticSchema,
    pub seed: u64,
    pub statistic: RankStatistic,
    pub sequences: Vec<SequenceRun>,
    /// Present when the run covers more than one sequence.
    pub pooled: Option<PooledRun>,
}

impl RunReport {
    /// Every vanilla registration in the run failed.
    pub fn total_failure(&self) -> bool {
        self.sequences
            .iter()
            .flat_map(|s| &s.vanilla)
            .all(|p| p.outcome.is_err())
    }
}

fn filter_specs(selection: Vec<MaskSpec>, filter: &[String]) -> Vec<MaskSpec> {
    if filter.is_empty() {
        return selection;
    }
    let mut specs = Vec::new();
    if filter.iter().any(|l| l == "none") {
        specs.push(MaskSpec::empty());
    }
    specs.extend(selection.into_iter().filter(|s| filter.contains(&s.label())));
    specs
}

fn evaluate_cell(
    pair: &VanillaPair,
    spec: &MaskSpec,
    set: usize,
    mode: MaskMode,
    schema: &SemanticSchema,
    model: &AttentionModel,
) -> CellResult {
    let mask = resolve_mask(spec, &pair.graph);
    let mut cell = CellResult {
        pair: pair.index,
        set,
        mode,
        masked_nodes: mask.node_ids.len(),
        masked_edges: mask.edge_ids.len(),
        jsd: None,
        outcome: Err(String::new()),
        discrepancy: None,
    };
    let perturbed: Result<(SemanticGraph, AttentionAssignment), String> = match mode {
        MaskMode::Node => apply_node_mask(&pair.graph, &mask)
            .map_err(|e| e.to_string())
            .and_then(|graph| {
                let features = node_features(&graph, schema).map_err(|e| e.to_string())?;
                let attention = model.assign(&graph, &features).map_err(|e| e.to_string())?;
                Ok((graph, attention))
            }),
        MaskMode::Edge => apply_edge_mask(&pair.attention, &mask)
            .map(|attention| (pair.graph.clone(), attention))
            .map_err(|e| e.to_string()),
    };
    let (graph, attention) = match perturbed {
        Ok(v) => v,
        Err(message) => {
            cell.outcome = Err(message);
            return cell;
        }
    };
    cell.jsd = to_distribution(&attention, pair.distribution.universe())
        .ok()
        .map(|after| jsd(&pair.distribution, &after).expect("shared universe"));
    cell.outcome = weighted_svd_pose(&graph, &attention)
        .map(|est| PoseError::between(&pair.ground_truth, &est))
        .map_err(|e| e.to_string());
    if let (Ok(after), Some(before)) = (&cell.outcome, pair.error()) {
        cell.discrepancy = Some(aad_pair(&before, after));
    }
    cell
}

fn correlation_of(sets: &[SetResult]) -> BTreeMap<MaskMode, CorrelationReport> {
    MaskMode::BOTH
        .iter()
        .map(|&mode| {
            let points = sets
                .iter()
                .filter(|s| s.mode == mode && s.label != "none")
                .filter_map(|s| {
                    Some(CorrelationPoint {
                        label: s.label.clone(),
                        single_class: s.single_class,
                        mean_jsd: s.divergence.mean?,
                        aad: s.discrepancy.combined()?,
                    })
                })
                .collect();
            (mode, CorrelationReport::from_points(points))
        })
        .collect()
}

fn perturb_sequence(
    vanilla: &VanillaSequence,
    run: &VanillaRun,
    seed: u64,
    filter: &[String],
) -> Result<SequenceRun, PipelineError> {
    let selection = select_masks(&vanilla.ranking, seed).map_err(|e| PipelineError::Pair {
        sequence: vanilla.name.clone(),
        pair: 0,
        message: e.to_string(),
    })?;
    let specs = filter_specs(selection.specs, filter);
    let jobs: Vec<(usize, usize, MaskMode)> = (0..vanilla.pairs.len())
        .flat_map(|p| (0..specs.len()).flat_map(move |s| MaskMode::BOTH.map(|m| (p, s, m))))
        .collect();
    let cells: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(p, s, mode)| evaluate_cell(&vanilla.pairs[p], &specs[s], s, mode, &run.schema, &run.model))
        .collect();

    let mut sets = Vec::new();
    for (s, spec) in specs.iter().enumerate() {
        for mode in MaskMode::BOTH {
            let own: Vec<&CellResult> = cells.iter().filter(|c| c.set == s && c.mode == mode).collect();
            sets.push(SetResult {
                label: spec.label(),
                single_class: spec.kind.is_single_class(),
                classes: spec.classes.clone(),
                note: spec.note.clone(),
                mode,
                divergence: DivergenceReport::from_pairs(own.iter().map(|c| c.jsd).collect()),
                discrepancy: DiscrepancyReport::from_pairs(own.iter().map(|c| c.discrepancy).collect()),
            });
        }
    }
    let vanilla_records = vanilla
        .pairs
        .iter()
        .map(|p| PairRecord {
            pair: p.index,
            candidate_edges: p.graph.candidate_edges.len(),
            outcome: p
                .estimate
                .as_ref()
                .map(|est| PoseError::between(&p.ground_truth, est))
                .map_err(|e| e.to_string()),
        })
        .collect();
    let correlation = correlation_of(&sets);
    Ok(SequenceRun {
        name: vanilla.name.clone(),
        ranking: vanilla.ranking.clone(),
        omitted: selection.omitted,
        specs,
        vanilla: vanilla_records,
        cells,
        sets,
        correlation,
    })
}

fn pool(sequences: &[SequenceRun], ranking: ClassRanking) -> PooledRun {
    let mut order: Vec<(String, MaskMode)> = Vec::new();
    for seq in sequences {
        for set in &seq.sets {
            if !order.contains(&(set.label.clone(), set.mode)) {
                order.push((set.label.clone(), set.mode));
            }
        }
    }
    let sets: Vec<SetResult> = order
        .into_iter()
        .map(|(label, mode)| {
            let members: Vec<&SetResult> = sequences.iter().filter_map(|s| s.set(&label, mode)).collect();
            SetResult {
                single_class: members[0].single_class,
                classes: Vec::new(),
                note: None,
                mode,
                divergence: DivergenceReport::from_pairs(
                    members
                        .iter()
                        .flat_map(|m| m.divergence.per_pair.iter().copied())
                        .collect(),
                ),
                discrepancy: DiscrepancyReport::from_pairs(
                    members
                        .iter()
                        .flat_map(|m| m.discrepancy.per_pair.iter().copied())
                        .collect(),
                ),
                label,
            }
        })
        .collect();
    let correlation = correlation_of(&sets);
    PooledRun {
        ranking,
        sets,
        correlation,
    }
}

/// Applies every masking set to every pair in both modes. `filter` restricts
/// the sets by label; an empty filter keeps all.
pub fn run_perturbations(vanilla: &VanillaRun, seed: u64, filter: &[String]) -> Result<RunReport, PipelineError> {
    let sequences = vanilla
        .sequences
        .iter()
        .map(|seq| perturb_sequence(seq, vanilla, seed, filter))
        .collect::<Result<Vec<_>, _>>()?;
    let pooled = (sequences.len() > 1).then(|| pool(&sequences, vanilla.pooled_ranking()));
    Ok(RunReport {
        schema: vanilla.schema.clone(),
        seed,
        statistic: vanilla.statistic,
        sequences,
        pooled,
    })
}

pub fn run_pipeline(config: &RunConfig) -> Result<RunReport, PipelineError> {
    let vanilla = run_vanilla(config)?;
    run_perturbations(&vanilla, config.seed, &config.sets)
}
