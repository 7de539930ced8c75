use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{MaskMode, PooledRun, RunReport, SetResult, VanillaRun};
use super::PipelineError;
use crate::analysis::CorrelationReport;
use crate::perturbation::ClassRanking;
use crate::schema_io::{ClassId, SemanticSchema};

pub const REPORT_FILES: [&str; 7] = [
    "ranking.csv",
    "aad.csv",
    "jsd.csv",
    "correlation.csv",
    "pairs.csv",
    "aad_table.md",
    "metadata.toml",
];

const NA: &str = "NA";
const POOLED: &str = "all";

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), num)
}

/// Parses a numeric report cell; `NA` reads as `None`.
pub fn parse_cell(cell: &str) -> Result<Option<f64>, std::num::ParseFloatError> {
    if cell == NA {
        Ok(None)
    } else {
        cell.parse().map(Some)
    }
}

fn class_names(schema: &SemanticSchema, classes: &[ClassId]) -> String {
    classes
        .iter()
        .map(|&c| schema.name_of(c).map_or_else(|| c.to_string(), str::to_string))
        .collect::<Vec<_>>()
        .join(";")
}

struct CsvFile {
    path: PathBuf,
    writer: csv::Writer<Vec<u8>>,
}

impl CsvFile {
    fn new(dir: &Path, name: &str, header: &[&str]) -> Result<Self, PipelineError> {
        let mut file = Self {
            path: dir.join(name),
            writer: csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new()),
        };
        file.row(header.iter().map(|s| s.to_string()))?;
        Ok(file)
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) -> Result<(), PipelineError> {
        let record: Vec<String> = cells.into_iter().collect();
        self.writer.write_record(&record).map_err(|e| PipelineError::Report {
            path: self.path.clone(),
            message: e.to_string(),
        })
    }

    fn finish(self) -> Result<(), PipelineError> {
        let bytes = self.writer.into_inner().map_err(|e| PipelineError::Report {
            path: self.path.clone(),
            message: e.to_string(),
        })?;
        write_file(&self.path, &bytes)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    std::fs::write(path, bytes).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Summary rows of one sequence, or of the pooled aggregate.
struct Scope<'a> {
    name: &'a str,
    ranking: &'a ClassRanking,
    sets: &'a [SetResult],
    correlation: &'a BTreeMap<MaskMode, CorrelationReport>,
}

fn scopes(run: &RunReport) -> Vec<Scope<'_>> {
    let mut out: Vec<Scope<'_>> = run
        .sequences
        .iter()
        .map(|s| Scope {
            name: &s.name,
            ranking: &s.ranking,
            sets: &s.sets,
            correlation: &s.correlation,
        })
        .collect();
    if let Some(PooledRun {
        ranking,
        sets,
        correlation,
    }) = &run.pooled
    {
        out.push(Scope {
            name: POOLED,
            ranking,
            sets,
            correlation,
        });
    }
    out
}

#[derive(Serialize)]
struct Metadata<'a> {
    seed: u64,
    rank_statistic: &'a str,
    jsd_log_base: u32,
    node_mode_jsd: &'a str,
    edge_mode_jsd: &'a str,
    aad_units: &'a str,
    failure_cell: &'a str,
    sequences: Vec<SequenceMeta>,
}

#[derive(Serialize)]
struct SequenceMeta {
    name: String,
    pairs: usize,
    vanilla_failures: usize,
    ranking_ties: Vec<String>,
    omitted_sets: Vec<String>,
    set_notes: Vec<String>,
}

fn create_dir(out: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(out).map_err(|source| PipelineError::Io {
        path: out.to_path_buf(),
        source,
    })
}

fn write_ranking<'a>(
    out: &Path,
    schema: &SemanticSchema,
    rankings: impl Iterator<Item = (&'a str, &'a ClassRanking)>,
) -> Result<(), PipelineError> {
    let mut file = CsvFile::new(
        out,
        "ranking.csv",
        &["sequence", "rank", "class_id", "class", "average_attention", "count"],
    )?;
    for (name, ranking) in rankings {
        for (rank, e) in ranking.entries.iter().enumerate() {
            file.row([
                name.to_string(),
                (rank + 1).to_string(),
                e.class_id.to_string(),
                class_names(schema, &[e.class_id]),
                num(e.average_attention),
                e.count.to_string(),
            ])?;
        }
    }
    file.finish()
}

/// Writes only `ranking.csv` for a vanilla pass.
pub fn emit_ranking(vanilla: &VanillaRun, out: &Path) -> Result<(), PipelineError> {
    create_dir(out)?;
    let pooled = (vanilla.sequences.len() > 1).then(|| vanilla.pooled_ranking());
    let rankings = vanilla
        .sequences
        .iter()
        .map(|s| (s.name.as_str(), &s.ranking))
        .chain(pooled.as_ref().map(|r| (POOLED, r)));
    write_ranking(out, &vanilla.schema, rankings)
}

/// Writes every report file into `out`, creating it if needed. Output is a
/// pure function of `run`.
pub fn emit_reports(run: &RunReport, out: &Path) -> Result<(), PipelineError> {
    create_dir(out)?;
    let schema = &run.schema;
    let scopes = scopes(run);

    write_ranking(out, schema, scopes.iter().map(|s| (s.name, s.ranking)))?;

    let mut aad = CsvFile::new(
        out,
        "aad.csv",
        &[
            "sequence",
            "set",
            "mode",
            "classes",
            "aad",
            "mean_rre_deg",
            "mean_rte_m",
            "successes",
            "failures",
        ],
    )?;
    let mut jsd = CsvFile::new(
        out,
        "jsd.csv",
        &[
            "sequence",
            "set",
            "mode",
            "classes",
            "mean_jsd",
            "defined_pairs",
            "pairs",
        ],
    )?;
    for scope in &scopes {
        for set in scope.sets {
            let classes = class_names(schema, &set.classes);
            let agg = set.discrepancy.aggregate;
            aad.row([
                scope.name.to_string(),
                set.label.clone(),
                set.mode.label().to_string(),
                classes.clone(),
                opt(agg.map(|a| a.combined)),
                opt(agg.map(|a| a.mean_rre)),
                opt(agg.map(|a| a.mean_rte)),
                agg.map_or(0, |a| a.successes).to_string(),
                set.discrepancy.failures.to_string(),
            ])?;
            let defined = set.divergence.per_pair.iter().flatten().count();
            jsd.row([
                scope.name.to_string(),
                set.label.clone(),
                set.mode.label().to_string(),
                classes,
                opt(set.divergence.mean),
                defined.to_string(),
                set.divergence.per_pair.len().to_string(),
            ])?;
        }
    }
    aad.finish()?;
    jsd.finish()?;

    let mut correlation = CsvFile::new(
        out,
        "correlation.csv",
        &["sequence", "mode", "scope", "pearson", "points"],
    )?;
    for scope in &scopes {
        for (mode, report) in scope.correlation {
            let singles = report.points.iter().filter(|p| p.single_class).count();
            for (name, r, n) in [
                ("single-class", report.single_class, singles),
                ("all-sets", report.all_sets, report.points.len()),
            ] {
                correlation.row([
                    scope.name.to_string(),
                    mode.label().to_string(),
                    name.to_string(),
                    opt(r),
                    n.to_string(),
                ])?;
            }
        }
    }
    correlation.finish()?;

    let mut pairs = CsvFile::new(
        out,
        "pairs.csv",
        &[
            "sequence",
            "pair",
            "set",
            "mode",
            "masked_nodes",
            "masked_edges",
            "jsd",
            "rre_deg",
            "rte_m",
            "delta_rre_deg",
            "delta_rte_m",
            "status",
        ],
    )?;
    for seq in &run.sequences {
        for record in &seq.vanilla {
            let err = record.outcome.as_ref().ok();
            pairs.row([
                seq.name.clone(),
                record.pair.to_string(),
                "vanilla".into(),
                "none".into(),
                "0".into(),
                "0".into(),
                "0".into(),
                opt(err.map(|e| e.rre)),
                opt(err.map(|e| e.rte)),
                "0".into(),
                "0".into(),
                status(&record.outcome),
            ])?;
        }
        for cell in &seq.cells {
            let err = cell.outcome.as_ref().ok();
            pairs.row([
                seq.name.clone(),
                cell.pair.to_string(),
                seq.specs[cell.set].label(),
                cell.mode.label().to_string(),
                cell.masked_nodes.to_string(),
                cell.masked_edges.to_string(),
                opt(cell.jsd),
                opt(err.map(|e| e.rre)),
                opt(err.map(|e| e.rte)),
                opt(cell.discrepancy.map(|d| d.rre)),
                opt(cell.discrepancy.map(|d| d.rte)),
                status(&cell.outcome),
            ])?;
        }
    }
    pairs.finish()?;

    write_file(&out.join("aad_table.md"), aad_table(&scopes).as_bytes())?;

    let metadata = Metadata {
        seed: run.seed,
        rank_statistic: match run.statistic {
            crate::perturbation::RankStatistic::Total => "total",
            crate::perturbation::RankStatistic::Peak => "peak",
        },
        jsd_log_base: 2,
        node_mode_jsd: "after re-forward on the masked graph, zero-padded onto the vanilla edge universe",
        edge_mode_jsd: "vanilla attention with masked edges zeroed, renormalised over the vanilla edge universe",
        aad_units: "mean |dRRE| in degrees plus mean |dRTE| in metres",
        failure_cell: NA,
        sequences: run
            .sequences
            .iter()
            .map(|s| SequenceMeta {
                name: s.name.clone(),
                pairs: s.vanilla.len(),
                vanilla_failures: s.vanilla.iter().filter(|p| p.outcome.is_err()).count(),
                ranking_ties: s
                    .ranking
                    .ties
                    .iter()
                    .map(|(a, b)| format!("{} = {}", class_names(schema, &[*a]), class_names(schema, &[*b])))
                    .collect(),
                omitted_sets: s.omitted.clone(),
                set_notes: s
                    .specs
                    .iter()
                    .filter_map(|spec| spec.note.as_ref().map(|n| format!("{}: {n}", spec.label())))
                    .collect(),
            })
            .collect(),
    };
    let text = toml::to_string(&metadata).map_err(|e| PipelineError::Report {
        path: out.join("metadata.toml"),
        message: e.to_string(),
    })?;
    write_file(&out.join("metadata.toml"), text.as_bytes())
}

fn status(outcome: &Result<crate::registration::PoseError, String>) -> String {
    match outcome {
        Ok(_) => "ok".into(),
        Err(message) => format!("failed: {message}"),
    }
}

/// Combined AAD per set and sequence, one table per mode; all-fail cells
/// render as an em dash.
fn aad_table(scopes: &[Scope<'_>]) -> String {
    let mut md = String::new();
    for mode in MaskMode::BOTH {
        let _ = writeln!(md, "## {} masking\n", mode.label());
        let _ = write!(md, "| set |");
        for scope in scopes {
            let _ = write!(md, " {} |", scope.name);
        }
        let _ = write!(md, "\n|---|");
        for _ in scopes {
            let _ = write!(md, "---|");
        }
        md.push('\n');
        let mut labels: Vec<&str> = Vec::new();
        for scope in scopes {
            for set in scope.sets.iter().filter(|s| s.mode == mode) {
                if !labels.contains(&set.label.as_str()) {
                    labels.push(&set.label);
                }
            }
        }
        for label in labels {
            let _ = write!(md, "| {label} |");
            for scope in scopes {
                let cell = scope
                    .sets
                    .iter()
                    .find(|s| s.mode == mode && s.label == label)
                    .and_then(|s| s.discrepancy.combined())
                    .map_or_else(|| "\u{2014}".to_string(), |v| format!("{v:.4}"));
                let _ = write!(md, " {cell} |");
            }
            md.push('\n');
        }
        md.push('\n');
    }
    md
}

/// A CSV report read back as text cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Rows whose `key` columns equal the given values.
    pub fn find(&self, key: &[(&str, &str)]) -> Vec<&Vec<String>> {
        let idx: Vec<(usize, &str)> = key
            .iter()
            .map(|(col, v)| (self.column(col).expect("known column"), *v))
            .collect();
        self.rows
            .iter()
            .filter(|row| idx.iter().all(|(i, v)| row[*i] == *v))
            .collect()
    }
}

pub fn read_table(path: &Path) -> Result<Table, PipelineError> {
    let err = |e: csv::Error| PipelineError::Report {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = csv::Reader::from_path(path).map_err(err)?;
    let headers = reader.headers().map_err(err)?.iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(err)?;
    Ok(Table { headers, rows })
}
