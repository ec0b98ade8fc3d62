//! Command-line experiment runner. See `planrag --help`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use planrag::experiment::{
    self, BackendMode, DemoOptions, ExperimentConfig, RescoreOptions,
};

#[derive(Parser)]
#[command(
    name = "planrag",
    version,
    about = "Plan-guided retrieval experiments with attribution evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOverrides {
    /// Override the config's output directory.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Override the config's cache directory.
    #[arg(long, value_name = "PATH")]
    cache_dir: Option<PathBuf>,
    /// Override the config's base seed.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Override the config's worker-pool width.
    #[arg(long, value_name = "INT")]
    concurrency: Option<usize>,
    /// Force deterministic offline backends (the synthetic world),
    /// whatever the config says.
    #[arg(long)]
    offline: bool,
    /// Directory of prompt-template overrides (chat-style wrappers
    /// and the like); missing files fall back to the built-ins.
    #[arg(long, value_name = "PATH")]
    templates: Option<PathBuf>,
}

impl CommonOverrides {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(cache_dir) = &self.cache_dir {
            config.cache_dir = Some(cache_dir.clone());
        }
        if let Some(seed) = self.seed {
            config.base_seed = seed;
        }
        if let Some(concurrency) = self.concurrency {
            config.concurrency = concurrency;
        }
        if self.offline {
            config.backends.mode = BackendMode::Synthetic;
            if config.backends.synthetic.is_none() {
                config.backends.synthetic = Some(Default::default());
            }
        }
        if let Some(templates) = &self.templates {
            config.templates_dir = Some(templates.clone());
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured strategies and write the comparison table.
    Run {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Run the ablation grid (second search, unanswerable marking,
    /// outline, expanded evidence) and write paired tables.
    Ablate {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Rescore existing records against a different evidence set or
    /// NLI threshold, without rerunning generation.
    Score {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Directory of record files written by `run`.
        #[arg(long, value_name = "PATH")]
        records: PathBuf,
        /// Union each record's evidence with the matching record
        /// (same entity and seed) from this directory.
        #[arg(long, value_name = "PATH")]
        union_with: Option<PathBuf>,
        /// Attribution threshold override.
        #[arg(long, value_name = "FLOAT")]
        nli_threshold: Option<f64>,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Offline end-to-end demo on the synthetic world: comparison table
    /// plus the full ablation grid. No network, fully deterministic.
    Demo {
        #[arg(long, value_name = "PATH", default_value = "planrag-demo")]
        out: PathBuf,
        #[arg(long, value_name = "INT", default_value_t = 42)]
        seed: u64,
        #[arg(long, value_name = "INT", default_value_t = 4)]
        concurrency: usize,
        #[arg(long, value_name = "PATH")]
        cache_dir: Option<PathBuf>,
        /// Entities in the synthetic world.
        #[arg(long, value_name = "INT", default_value_t = 8)]
        entities: usize,
        /// Planted facts per entity.
        #[arg(long, value_name = "INT", default_value_t = 6)]
        facts: usize,
        /// How many facts the name-query document covers.
        #[arg(long, value_name = "INT", default_value_t = 2)]
        coverage: usize,
        /// Seeded runs per entity and strategy.
        #[arg(long, value_name = "INT", default_value_t = 3)]
        runs: usize,
    },
}

fn load_config(path: &std::path::Path, overrides: &CommonOverrides) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path)
        .with_context(|| format!("loading config {}", path.display()))?;
    overrides.apply(&mut config);
    Ok(config)
}

fn print_table(path: &std::path::Path) {
    if let Ok(text) = std::fs::read_to_string(path) {
        print!("{text}");
    }
}

fn finish(errors: usize, out_dir: &std::path::Path) -> Result<()> {
    if errors > 0 {
        eprintln!("{errors} trial(s) skipped; see {}", out_dir.join("errors.log").display());
    }
    println!("artifacts written to {}", out_dir.display());
    Ok(())
}

fn real_main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, overrides } => {
            let config = load_config(&config, &overrides)?;
            let summary = experiment::run_experiment(&config)?;
            print_table(&summary.output_dir.join("report.md"));
            finish(summary.errors.len(), &summary.output_dir)
        }
        Command::Ablate { config, overrides } => {
            let config = load_config(&config, &overrides)?;
            let summary = experiment::run_ablations(&config)?;
            for table in ["second_search.md", "unanswerable.md", "outline.md", "evidence_set.md"] {
                print_table(&summary.output_dir.join(table));
            }
            finish(summary.errors.len(), &summary.output_dir)
        }
        Command::Score {
            config,
            records,
            union_with,
            nli_threshold,
            overrides,
        } => {
            let config = load_config(&config, &overrides)?;
            if let Some(threshold) = nli_threshold {
                if !(0.0..=1.0).contains(&threshold) {
                    bail!("--nli-threshold must be in [0, 1]");
                }
            }
            let options = RescoreOptions {
                records_dir: records,
                union_with,
                nli_threshold,
                out_dir: overrides.out.clone().unwrap_or_else(|| config.output_dir.clone()),
            };
            experiment::rescore_records(&config, &options)?;
            print_table(&options.out_dir.join("rescore_report.md"));
            finish(0, &options.out_dir)
        }
        Command::Demo {
            out,
            seed,
            concurrency,
            cache_dir,
            entities,
            facts,
            coverage,
            runs,
        } => {
            let options = DemoOptions {
                out_dir: out,
                seed,
                concurrency,
                cache_dir,
                n_entities: entities,
                facts_per_entity: facts,
                generic_coverage: coverage,
                num_runs: runs,
            };
            let (summary, ablations) = experiment::run_demo(&options)?;
            print_table(&summary.output_dir.join("report.md"));
            finish(
                summary.errors.len() + ablations.errors.len(),
                &summary.output_dir,
            )
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
