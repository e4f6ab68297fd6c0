use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand, ValueEnum};
use tempqa_core::eval::{ScoreRecord, Slice, TimeMode};
use tempqa_core::gateway::{Gateway, ResponseCache};
use tempqa_core::interval::QueryRelation;
use tempqa_core::manifest::RunManifest;
use tempqa_core::pipeline::{self, AskOptions, Book, GenerateOptions, Llm, PipelineError, ResponseRecord};
use tempqa_core::qagen::GeneratorMode;

#[derive(Parser)]
#[command(name = "tempqa", version, about = "Time-sensitive QA generation and scoring over temporal tables")]
struct Cli {
    /// Run manifest (JSON).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Overrides the manifest seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Response cache for model calls.
    #[arg(long, global = true, default_value = ".tempqa-cache")]
    cache_dir: PathBuf,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenMode {
    Llm,
    Template,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreMode {
    Deterministic,
    Judge,
}

#[derive(Clone, Copy, ValueEnum)]
enum BookArg {
    Open,
    Closed,
}

#[derive(Subcommand)]
enum Command {
    /// Load every relation and check all dependencies.
    Validate,
    /// Generate QA items as JSONL.
    Generate {
        /// Comma-separated query relations, e.g. `meet,overlap-current`.
        #[arg(long, value_delimiter = ',')]
        relations: Option<Vec<String>>,
        #[arg(long)]
        paraphrases: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<GenMode>,
    },
    /// Ask a provider every question.
    Ask {
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        provider: String,
        /// alignment, reasoning, cot or time_cot.
        #[arg(long, default_value = "reasoning")]
        prompt: String,
        #[arg(long, value_enum, default_value = "closed")]
        book: BookArg,
    },
    /// Score responses and write reports.
    Score {
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ScoreMode>,
        #[arg(long, value_delimiter = ',')]
        slices: Option<Vec<Slice>>,
    },
    /// Re-aggregate existing scores.
    Report {
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_delimiter = ',')]
        slices: Option<Vec<Slice>>,
    },
}

/// Error with its exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 2, error }
    }
}

fn load_manifest(cli: &Cli) -> Result<RunManifest, Failure> {
    let path = cli
        .manifest
        .as_deref()
        .context("this command needs --manifest")?;
    let mut m = RunManifest::load(path).map_err(PipelineError::from)?;
    if let Some(seed) = cli.seed {
        m.seed = seed;
    }
    Ok(m)
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn cache(cli: &Cli) -> Result<ResponseCache, Failure> {
    Ok(ResponseCache::new(&cli.cache_dir).map_err(PipelineError::from)?)
}

fn provider_gateway(m: &RunManifest, name: &str) -> Result<Gateway, Failure> {
    let endpoint = m.provider(name).map_err(PipelineError::from)?;
    Ok(Gateway::http(endpoint.clone()))
}

fn slices_or_all(slices: &Option<Vec<Slice>>) -> Vec<Slice> {
    slices.clone().unwrap_or_else(|| Slice::ALL.to_vec())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Validate => {
            let m = load_manifest(cli)?;
            let report = pipeline::validate(&m)?;
            print!("{}", report.render());
            if !report.ok() {
                return Err(Failure {
                    code: 1,
                    error: anyhow::anyhow!("validation failed"),
                });
            }
        }
        Command::Generate {
            relations,
            paraphrases,
            mode,
        } => {
            let m = load_manifest(cli)?;
            let relations = relations
                .as_ref()
                .map(|rs| rs.iter().map(|r| r.parse::<QueryRelation>()).collect::<Result<Vec<_>, _>>())
                .transpose()
                .context("--relations")?;
            let options = GenerateOptions {
                relations,
                paraphrases: *paraphrases,
                mode: mode.map(|g| match g {
                    GenMode::Llm => GeneratorMode::Llm,
                    GenMode::Template => GeneratorMode::Template,
                }),
            };
            let effective = options.mode.unwrap_or(m.generator.mode);
            let prompts = pipeline::prompts_for(&m)?;
            let (gateway, cache) = if effective == GeneratorMode::Llm {
                let name = m
                    .generator
                    .provider
                    .as_deref()
                    .context("llm mode needs generator.provider in the manifest")?;
                (Some(provider_gateway(&m, name)?), Some(cache(cli)?))
            } else {
                (None, None)
            };
            let llm = gateway.as_ref().map(|g| Llm {
                gateway: g,
                cache: cache.as_ref(),
                prompts: &prompts,
            });
            let outcome = pipeline::generate(&m, &options, llm.as_ref())?;
            let out = out_path(cli, "qa.jsonl");
            pipeline::write_jsonl(&out, &outcome.items)?;
            print!("{}", outcome.summary());
            for (dataset, s) in &outcome.skipped {
                log::info!("skipped {dataset} tuple {} {} ({}): {}", s.tuple, s.relation, s.mode, s.reason);
            }
        }
        Command::Ask {
            qa,
            provider,
            prompt,
            book,
        } => {
            let m = load_manifest(cli)?;
            let items = pipeline::read_items(qa)?;
            let prompts = pipeline::prompts_for(&m)?;
            let gateway = provider_gateway(&m, provider)?;
            let cache = cache(cli)?;
            let llm = Llm {
                gateway: &gateway,
                cache: Some(&cache),
                prompts: &prompts,
            };
            let options = AskOptions {
                prompt: prompt.clone(),
                book: match book {
                    BookArg::Open => Book::Open,
                    BookArg::Closed => Book::Closed,
                },
            };
            let responses = pipeline::ask(&items, &llm, &options)?;
            let out = out_path(cli, "responses.jsonl");
            pipeline::write_jsonl(&out, &responses)?;
            let failed = responses.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} responses, {failed} failed, {} network calls",
                responses.len(),
                gateway.network_calls()
            );
        }
        Command::Score {
            qa,
            responses,
            mode,
            slices,
        } => {
            let m = load_manifest(cli)?;
            let items = pipeline::read_items(qa)?;
            let responses: Vec<ResponseRecord> = pipeline::read_jsonl(responses)?;
            let mut config = m.evaluation.clone();
            if let Some(mode) = mode {
                config.mode = match mode {
                    ScoreMode::Deterministic => TimeMode::Deterministic,
                    ScoreMode::Judge => TimeMode::Judge,
                };
            }
            let prompts = pipeline::prompts_for(&m)?;
            let (gateway, cache) = if config.mode == TimeMode::Judge {
                let name = config.judge.as_deref().context("judge mode needs evaluation.judge in the manifest")?;
                (Some(provider_gateway(&m, name)?), Some(cache(cli)?))
            } else {
                (None, None)
            };
            let judge = gateway.as_ref().map(|g| {
                Llm {
                    gateway: g,
                    cache: cache.as_ref(),
                    prompts: &prompts,
                }
                .judge()
            });
            let outcome = pipeline::score(&items, &responses, &config, judge.as_ref())?;
            let out = out_path(cli, "scores.jsonl");
            pipeline::write_jsonl(&out, &outcome.records)?;
            let report = pipeline::report(&items, &outcome.records, &slices_or_all(slices))?;
            pipeline::write_reports(&out, &report)?;
            print!("{}", report.to_text());
            if !outcome.failed.is_empty() {
                eprintln!("{} responses had no text and were not scored", outcome.failed.len());
            }
        }
        Command::Report { qa, scores, slices } => {
            let items = pipeline::read_items(qa)?;
            let records: Vec<ScoreRecord> = pipeline::read_jsonl(scores)?;
            let report = pipeline::report(&items, &records, &slices_or_all(slices))?;
            if let Some(out) = &cli.out {
                pipeline::write_reports(out, &report)?;
            }
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
