use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use proxsel::config::{RunConfig, REPORT_DIR_ENV};
use proxsel::eval::format_report;
use proxsel::features::QueryFeatures;
use proxsel::formats::{format_features, read_features};
use proxsel::pipeline::{self, Inputs};
use proxsel::selector::{label_queries, SelectorModel};
use proxsel::synth::{self, SynthParams};
use proxsel::{PositionalIndex, RankerKind};

#[derive(Parser)]
#[command(name = "proxsel", version, about = "Selective term-proximity ranking")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Run every stage on one thread.
    #[arg(long)]
    sequential: bool,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => {
                RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?
            }
            None => {
                let mut c = RunConfig::default();
                c.apply_env();
                c
            }
        };
        if self.sequential {
            config.parallel = false;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a positional index from a `doc_id<TAB>text` corpus.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Apply Porter stemming to documents and queries.
        #[arg(long)]
        stem: bool,
    },
    /// Write the seeded synthetic collection (corpus, queries, qrels).
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Label queries by proximity benefit and write their feature rows.
    Label {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        ranker: RankerKind,
        /// Feature file to write (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Score features of a labeled feature file with all selection filters.
    Featselect {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 1000)]
        relief_iterations: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train the per-length selector networks from a labeled feature file.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        ranker: RankerKind,
        #[arg(long)]
        features: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Evaluate never / always / predicted / oracle routing on all queries.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        ranker: RankerKind,
        #[arg(short, long)]
        model: Option<PathBuf>,
    },
    /// Grid-search the blend weight of EXP (epsilon) or BM25TP (beta).
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        ranker: RankerKind,
        /// Comma-separated grid; the config grid when omitted.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Run the full protocol and write reports and models.
    Pipeline {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, env = REPORT_DIR_ENV)]
        report_dir: Option<PathBuf>,
    },
    /// Route and run one query against an index.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(short, long)]
        model: Option<PathBuf>,
        #[arg(short, long, default_value = "EXP")]
        ranker: RankerKind,
        #[arg(short, default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        config: ConfigArgs,
        query: String,
    },
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn labeled_rows(
    config: &RunConfig,
    inputs: &Inputs,
    kind: RankerKind,
) -> Vec<proxsel::selector::LabeledQuery> {
    let (labeled, excluded) = label_queries(
        &inputs.index,
        &inputs.queries,
        &inputs.qrels,
        kind,
        &config.scoring_params(),
        &config.lengths(),
        config.eval.ap_depth,
        config.execution(),
    );
    if !excluded.is_empty() {
        eprintln!("{} queries excluded from labeling", excluded.len());
    }
    labeled
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Index {
            corpus,
            output,
            stem,
        } => {
            let s = pipeline::cmd_index(&corpus, &output, stem)
                .with_context(|| format!("indexing {}", corpus.display()))?;
            println!(
                "N={} avg_d={:.4} vocabulary={}",
                s.doc_count, s.avg_doc_length, s.vocabulary_size
            );
        }
        Command::Synth { config, out } => {
            let c = config.load()?;
            let files = synth::generate(&SynthParams::from_config(&c)).write_to(&out)?;
            println!("corpus\t{}", files.corpus.display());
            println!("queries\t{}", files.queries.display());
            println!("qrels\t{}", files.qrels.display());
        }
        Command::Config { config } => print!("{}", config.load()?.to_toml()),
        Command::Label {
            config,
            ranker,
            output,
        } => {
            let c = config.load()?;
            let inputs = pipeline::load_inputs(&c)?;
            let rows: Vec<QueryFeatures> = labeled_rows(&c, &inputs, ranker)
                .into_iter()
                .map(|l| l.features)
                .collect();
            write_or_print(output.as_deref(), &format_features(&rows))?;
        }
        Command::Featselect {
            features,
            relief_iterations,
            seed,
        } => {
            let rows = read_features(&features)?;
            let table = pipeline::feature_report(&rows, relief_iterations, seed)?;
            print!("{}", table.to_tsv());
        }
        Command::Train {
            config,
            ranker,
            features,
            output,
        } => {
            let c = config.load()?;
            let rows = read_features(&features)?;
            let model = pipeline::train_from_config(&c, ranker, &rows)?;
            model.save(&output)?;
            println!(
                "trained {} networks for {ranker} -> {}",
                model.nets.len(),
                output.display()
            );
        }
        Command::Evaluate {
            config,
            ranker,
            model,
        } => {
            let c = config.load()?;
            let inputs = pipeline::load_inputs(&c)?;
            let model = model.map(SelectorModel::load).transpose()?;
            let labels: HashMap<String, u8> = labeled_rows(&c, &inputs, ranker)
                .into_iter()
                .map(|l| (l.query.id, l.label))
                .collect();
            let evals = pipeline::evaluate_policies(
                &inputs,
                &inputs.queries,
                ranker,
                model.as_ref(),
                &labels,
                &c.scoring_params(),
                &c.eval_options(),
                c.execution(),
            );
            let rows: Vec<_> = evals.iter().flat_map(|e| e.rows.iter().cloned()).collect();
            print!("{}", format_report(&rows));
        }
        Command::Sweep {
            config,
            ranker,
            grid,
        } => {
            let c = config.load()?;
            let inputs = pipeline::load_inputs(&c)?;
            let grid = grid.unwrap_or_else(|| c.sweep.grid.clone());
            let Some(result) = pipeline::sweep(
                &inputs,
                ranker,
                &c.scoring_params(),
                &grid,
                &c.eval_options(),
                c.execution(),
            )?
            else {
                bail!("{ranker} has no swept blend weight");
            };
            print!("{}", result.to_tsv());
            println!(
                "best {}={} MAP={:.6}",
                result.parameter, result.best, result.best_map
            );
        }
        Command::Pipeline { config, report_dir } => {
            let mut c = config.load()?;
            if report_dir.is_some() {
                c.paths.report_dir = report_dir;
            }
            let out = pipeline::run_pipeline(&c)?;
            let dir = out.write(&c)?;
            print!("{}", out.reports["report.tsv"]);
            println!("reports written to {}", dir.display());
        }
        Command::Search {
            index,
            model,
            ranker,
            k,
            config,
            query,
        } => {
            let c = config.load()?;
            let index = PositionalIndex::load(&index)
                .with_context(|| format!("loading {}", index.display()))?;
            let model = match model {
                Some(p) => Some(
                    SelectorModel::load(&p).with_context(|| format!("loading {}", p.display()))?,
                ),
                None => None,
            };
            let r = pipeline::search(
                &index,
                model.as_ref(),
                ranker,
                &c.scoring_params(),
                &query,
                k,
            )?;
            println!("decision\t{}", if r.use_tp { "TP" } else { "BASE" });
            match r.probability {
                Some(p) => println!("probability\t{p:.6}"),
                None => println!("probability\t-"),
            }
            for (rank, (doc, score)) in r.hits.iter().enumerate() {
                println!("{}\t{doc}\t{score:.6}", rank + 1);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
