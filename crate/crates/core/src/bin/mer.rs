use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mer_core::embedding::{load_store, StoreKind};
use mer_core::eval::{DocScore, MatchRule};
use mer_core::prompt::{Definitions, PromptBuilder, TemplateSet};
use mer_core::run::{self, InferOptions, RunConfig, RunRecord};
use mer_core::{Corpus, Split};

#[derive(Parser)]
#[command(name = "mer", version, about = "Medical entity recognition evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus file and print its statistics.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Print statistics as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Print corpus statistics as JSON.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "train")]
        split: Split,
    },
    /// Write instruction-tuning pairs for a train corpus.
    ExportTrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        definitions: Option<PathBuf>,
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Rank train sentences for every test sentence by embedding similarity.
    Select {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        store_train: PathBuf,
        #[arg(long)]
        store_test: PathBuf,
        #[arg(long, default_value = "token")]
        method: StoreKind,
        #[arg(long, default_value_t = run::DEFAULT_K)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query the model for every test sentence; resumes an existing record.
    Infer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        selection: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, hide = true)]
        limit: Option<usize>,
    },
    /// Score a run record against the gold corpus.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Directory for report.json, report.txt, docs.jsonl and diagnostics.jsonl.
        #[arg(long)]
        out: PathBuf,
        /// Config used for inference; digests are cross-checked when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = MatchRule::default().offset_tolerance)]
        tolerance: usize,
    },
    /// Wilcoxon signed-rank test over per-document F1 of two evaluations.
    Compare {
        /// docs.jsonl of run A
        a: PathBuf,
        /// docs.jsonl of run B
        b: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn prompt_builder(definitions: Option<&Path>, templates: Option<&Path>) -> Result<PromptBuilder> {
    let templates = match templates {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::shipped(),
    };
    let definitions = match definitions {
        Some(path) => Definitions::load(path)?,
        None => {
            log::warn!("using shipped placeholder entity definitions");
            Definitions::shipped()
        }
    };
    Ok(PromptBuilder::new(templates, definitions))
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { corpus, split, json } => {
            let stats = run::cmd_validate(&corpus, split)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{stats}");
            }
        }
        Command::Stats { corpus, split } => {
            let stats = run::cmd_validate(&corpus, split)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::ExportTrain {
            corpus,
            out,
            definitions,
            templates,
        } => {
            let corpus = Corpus::load(&corpus, Split::Train)?;
            let builder = prompt_builder(definitions.as_deref(), templates.as_deref())?;
            let n = run::cmd_export_train(&corpus, &builder, &out)?;
            eprintln!("wrote {n} pairs to {}", out.display());
        }
        Command::Select {
            corpus,
            store_train,
            store_test,
            method,
            k,
            out,
        } => {
            if k == 0 {
                bail!("--k must be positive");
            }
            let corpus = Corpus::load(&corpus, Split::Test)?;
            let train = load_store(&store_train, method).with_context(|| store_train.display().to_string())?;
            let test = load_store(&store_test, method).with_context(|| store_test.display().to_string())?;
            let records = run::cmd_select(&corpus, &train, &test, k)?;
            run::write_jsonl(&out, &records)?;
            eprintln!("wrote {} selections to {}", records.len(), out.display());
        }
        Command::Infer {
            config,
            selection,
            out,
            limit,
        } => {
            let cfg = RunConfig::load(&config)?;
            let summary = run::cmd_infer(&cfg, selection.as_deref(), &out, &InferOptions { limit })?;
            eprintln!(
                "{} sentences: {} already done, {} inferred, {} failed",
                summary.total,
                summary.skipped,
                summary.inferred,
                summary.failed.len()
            );
            if !summary.failed.is_empty() {
                for (key, err) in &summary.failed {
                    eprintln!("  {key}: {err}");
                }
                return Ok(ExitCode::from(2));
            }
        }
        Command::Eval {
            run: record,
            corpus,
            out,
            config,
            tolerance,
        } => {
            let record = RunRecord::load(&record)?;
            let corpus = Corpus::load(&corpus, Split::Test)?;
            let cfg = config.map(RunConfig::load).transpose()?;
            let rule = MatchRule {
                offset_tolerance: tolerance,
            };
            let evaluation = run::cmd_eval(&record, &corpus, rule, cfg.as_ref())?;
            run::write_evaluation(&evaluation, &out)?;
            print!("{}", evaluation.report);
            let failed = record.failures().count();
            if failed > 0 {
                eprintln!("{failed} sentences had no response and were scored as empty");
            }
        }
        Command::Compare { a, b, json } => {
            let a: Vec<DocScore> = run::read_jsonl(&a)?;
            let b: Vec<DocScore> = run::read_jsonl(&b)?;
            let cmp = run::cmd_compare(&a, &b)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&cmp)?);
            } else {
                println!(
                    "documents={} n={} W={} p={:.6} method={:?} significant(alpha={})={}",
                    cmp.n_docs,
                    cmp.result.n,
                    cmp.result.w,
                    cmp.result.p,
                    cmp.result.method,
                    run::ALPHA,
                    cmp.significant
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
