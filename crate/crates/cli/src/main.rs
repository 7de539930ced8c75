use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semattn::attention_engine::{save_model_weights, ArchitectureSpec, ModelWeights};
use semattn::graph_builder::NodeFeatures;
use semattn::pipeline::{
    emit_ranking, emit_reports, load_schema, run_perturbations, run_vanilla, ModelMode, PipelineError, RunConfig,
    RunReport, VanillaRun,
};

/// Semantic attention explanations for pointcloud registration.
#[derive(Debug, Parser)]
#[command(name = "semattn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full pipeline: vanilla pass, ranking, every masking set, all reports.
    Run(Common),
    /// Vanilla pass and class ranking only.
    Rank(Common),
    /// Pipeline restricted to the listed masking sets.
    Perturb {
        #[command(flatten)]
        common: Common,
        /// Comma-separated set labels, e.g. `1st-class,top-3,corner`.
        #[arg(long, value_delimiter = ',', required = true)]
        sets: Vec<String>,
    },
    /// Writes randomly initialised attention weights sized for the config's
    /// class list.
    InitWeights {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the config's weights path.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 32)]
        hidden: usize,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Estimation(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Estimation { .. } => Failure::Estimation(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut config = RunConfig::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = Some(out.clone());
    }
    Ok(config)
}

fn out_dir(config: &RunConfig) -> Result<&Path, Failure> {
    config
        .out
        .as_deref()
        .ok_or_else(|| Failure::Config("no output directory: set `out` in the config or pass --out".into()))
}

fn print_ranking(vanilla: &VanillaRun) {
    for seq in &vanilla.sequences {
        println!("sequence {}", seq.name);
        for (rank, e) in seq.ranking.entries.iter().enumerate() {
            let name = vanilla.schema.name_of(e.class_id).unwrap_or("?");
            println!(
                "  {:>2}. {name:<16} {:.4}  ({} nodes)",
                rank + 1,
                e.average_attention,
                e.count
            );
        }
    }
}

fn print_summary(report: &RunReport) {
    for seq in &report.sequences {
        let failed = seq.vanilla.iter().filter(|p| p.outcome.is_err()).count();
        println!(
            "sequence {}: {} pairs, {failed} vanilla failures",
            seq.name,
            seq.vanilla.len()
        );
        for set in &seq.sets {
            let aad = set
                .discrepancy
                .combined()
                .map_or_else(|| "\u{2014}".to_string(), |v| format!("{v:.4}"));
            let jsd = set
                .divergence
                .mean
                .map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
            println!("  {:<10} {:<4} aad {aad:<8} jsd {jsd}", set.label, set.mode.label());
        }
        for (mode, c) in &seq.correlation {
            let r = c
                .single_class
                .map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}"));
            println!("  pearson(jsd, aad) single-class {}: {r}", mode.label());
        }
    }
}

fn pipeline(common: &Common, sets: Option<&[String]>) -> Result<(), Failure> {
    let mut config = load(common)?;
    if let Some(sets) = sets {
        config.sets = sets.to_vec();
        config.validate()?;
    }
    let out = out_dir(&config)?.to_path_buf();
    let vanilla = run_vanilla(&config)?;
    let report = run_perturbations(&vanilla, config.seed, &config.sets)?;
    emit_reports(&report, &out)?;
    print_summary(&report);
    println!("reports written to {}", out.display());
    if report.total_failure() {
        return Err(Failure::Estimation("every frame pair failed registration".into()));
    }
    Ok(())
}

fn rank(common: &Common) -> Result<(), Failure> {
    let config = load(common)?;
    let vanilla = run_vanilla(&config)?;
    print_ranking(&vanilla);
    if let Some(out) = &config.out {
        emit_ranking(&vanilla, out)?;
    }
    Ok(())
}

fn init_weights(config: &Path, output: Option<PathBuf>, seed: u64, arch: ArchitectureSpec) -> Result<(), Failure> {
    let config = RunConfig::from_file(config)?;
    let schema = load_schema(&config)?;
    let output = match (output, &config.model) {
        (Some(path), _) => path,
        (None, ModelMode::Gat { weights }) => weights.clone(),
        (None, ModelMode::Surrogate { .. }) => {
            return Err(Failure::Config(
                "surrogate config has no weights path; pass --output".into(),
            ))
        }
    };
    let weights = ModelWeights::synthesize(NodeFeatures::dim_for(schema.len()), arch, seed)
        .map_err(|e| Failure::Config(e.to_string()))?;
    save_model_weights(&output, &weights).map_err(|e| Failure::Config(e.to_string()))?;
    println!("wrote {}", output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(common) => pipeline(common, None),
        Command::Rank(common) => rank(common),
        Command::Perturb { common, sets } => pipeline(common, Some(sets)),
        Command::InitWeights {
            config,
            output,
            seed,
            layers,
            heads,
            hidden,
        } => init_weights(
            config,
            output.clone(),
            *seed,
            ArchitectureSpec {
                layers: *layers,
                heads: *heads,
                hidden_width: *hidden,
            },
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(Failure::Estimation(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
