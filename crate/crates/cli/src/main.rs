//! `cot-forge`: one binary for dataset building, scoring, serving, and
//! evaluation, so every workflow shares the same reward and lexicon
//! configuration.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Settings resolve
//! as command-line flag > config file > built-in default.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use cot_forge_client::{ChatClient, EndpointConfig};
use cot_forge_core::dataset::{dataset_stats, render_build_report};
use cot_forge_core::records::{parse_jsonl_numbered, read_jsonl, to_json_line, CandidateRecord};
use cot_forge_core::{
    analyze_response, classify_stratum, default_config_toml, render_report, GenerationConfig,
    LabelSpace, LabelSpaceSet, LabeledEvalResult, MarkerLexicon, RewardConfig, Sample,
    ScoredRecord, TaskKind, DEFAULT_LENGTH_THRESHOLD,
};
use cot_forge_pipeline::{build_sft_dataset, evaluate, BuildOptions, EvalOptions};
use serde::Deserialize;

#[derive(Parser, Debug)]
#[command(
    name = "cot-forge",
    version,
    about = "Reasoning-chain parsing, composite rewards, dataset building, and evaluation"
)]
struct Cli {
    /// Global config file (TOML): reward/lexicon paths, endpoint defaults,
    /// label-space overrides, log level.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Log filter, e.g. error, warn, info, debug, trace.
    #[arg(long, global = true, value_name = "LEVEL")]
    log_level: Option<String>,

    /// Seed for sampled decisions (balanced downsampling).
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a rejection-sampled SFT dataset from prompts and gold labels.
    BuildDataset(BuildDatasetArgs),
    /// Score candidate records from a file or standard input.
    Score(ScoreArgs),
    /// Serve the scoring API over local HTTP.
    Serve(ServeArgs),
    /// Evaluate an endpoint on a labeled test set under the fixed protocol.
    Eval(EvalArgs),
    /// Recompute and render the bookkeeping report for a dataset file.
    Stats(StatsArgs),
    /// Print the built-in default reward configuration.
    PrintDefaultConfig,
}

#[derive(Args, Debug)]
struct BuildDatasetArgs {
    /// Task to build for; samples for other tasks are skipped.
    #[arg(long, value_parser = TaskKind::from_str)]
    task: TaskKind,

    /// Input samples, line-delimited JSON {id, task, prompt_text, gold_label}.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,

    /// Output dataset file; sample ids already present are skipped (resume).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Candidates to request per prompt.
    #[arg(long)]
    n: u32,

    /// Endpoint base URL.
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,

    /// Model name sent to the endpoint.
    #[arg(long, value_name = "NAME")]
    model: Option<String>,

    /// Downsample every stratum to the task's smallest non-empty one.
    #[arg(long)]
    balance: bool,

    /// Token count above which a chain counts as Long.
    #[arg(long, default_value_t = DEFAULT_LENGTH_THRESHOLD)]
    length_threshold: u64,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Candidate records, line-delimited JSON; standard input if omitted.
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,

    /// Output file for scored records; standard output if omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Reward config file; overrides the global config's choice.
    #[arg(long, value_name = "FILE")]
    reward_config: Option<PathBuf>,

    /// Marker lexicon file; overrides the global config's choice.
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,

    /// Token count above which a chain counts as Long.
    #[arg(long, default_value_t = DEFAULT_LENGTH_THRESHOLD)]
    length_threshold: u64,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1:8750")]
    bind: String,

    /// Reward config file; overrides the global config's choice.
    #[arg(long, value_name = "FILE")]
    reward_config: Option<PathBuf>,

    /// Marker lexicon file; overrides the global config's choice.
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Task to evaluate; samples for other tasks are skipped.
    #[arg(long, value_parser = TaskKind::from_str)]
    task: TaskKind,

    /// Labeled test samples, line-delimited JSON.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,

    /// Endpoint base URL.
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,

    /// Model name sent to the endpoint.
    #[arg(long, value_name = "NAME")]
    model: Option<String>,

    /// Permit a generation config that deviates from the protocol.
    #[arg(long)]
    override_protocol: bool,

    /// Sampling temperature (protocol: 0.0).
    #[arg(long, value_name = "T")]
    temperature: Option<f64>,

    /// Output token cap (protocol: 10).
    #[arg(long, value_name = "M")]
    max_tokens: Option<u32>,

    /// Report file; one structured record accumulates per run.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Dataset file to summarize.
    #[arg(value_name = "FILE")]
    dataset: PathBuf,
}

/// Optional settings file named by `--config`. Unknown keys are rejected
/// with the offending key named; referenced files must exist at load.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GlobalConfig {
    reward_config: Option<PathBuf>,
    lexicon: Option<PathBuf>,
    log_level: Option<String>,
    endpoint: Option<EndpointConfig>,
    label_spaces: BTreeMap<TaskKind, Vec<String>>,
}

impl GlobalConfig {
    fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("failed to read config {}", path.display()))?;
        let config: GlobalConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        for file in [&config.reward_config, &config.lexicon].into_iter().flatten() {
            if !file.exists() {
                return Err(AppError::Runtime(anyhow::anyhow!(
                    "config {} references missing file {}",
                    path.display(),
                    file.display()
                )));
            }
        }
        Ok(config)
    }
}

#[derive(Debug)]
enum AppError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for AppError {
    fn from(error: anyhow::Error) -> Self {
        AppError::Runtime(error)
    }
}

/// Reward, lexicon, and label spaces as resolved from flags and config.
struct Scoring {
    reward: RewardConfig,
    lexicon: MarkerLexicon,
    spaces: LabelSpaceSet,
}

fn resolve_scoring(
    reward_flag: Option<&Path>,
    lexicon_flag: Option<&Path>,
    global: &GlobalConfig,
) -> Result<Scoring, AppError> {
    let reward = match reward_flag.or(global.reward_config.as_deref()) {
        Some(path) => RewardConfig::load(path)
            .with_context(|| format!("failed to load reward config {}", path.display()))?,
        None => RewardConfig::default(),
    };
    let lexicon = match lexicon_flag.or(global.lexicon.as_deref()) {
        Some(path) => MarkerLexicon::load(path)
            .with_context(|| format!("failed to load lexicon {}", path.display()))?,
        None => MarkerLexicon::default(),
    };
    let mut spaces = LabelSpaceSet::default();
    for (&task, names) in &global.label_spaces {
        let space = LabelSpace::new(task, names.clone())
            .with_context(|| format!("invalid label-space override for {task}"))?;
        spaces.set(space);
    }
    Ok(Scoring { reward, lexicon, spaces })
}

fn resolve_endpoint(
    endpoint_flag: Option<String>,
    model_flag: Option<String>,
    global: &GlobalConfig,
) -> Result<EndpointConfig, AppError> {
    let mut config = global.endpoint.clone().unwrap_or_default();
    if let Some(url) = endpoint_flag {
        config.base_url = url;
    }
    if let Some(model) = model_flag {
        config.model_name = model;
    }
    if config.base_url.is_empty() {
        return Err(AppError::Usage(
            "--endpoint is required (or set [endpoint] base_url in the config file)".to_string(),
        ));
    }
    if config.model_name.is_empty() {
        return Err(AppError::Usage(
            "--model is required (or set [endpoint] model_name in the config file)".to_string(),
        ));
    }
    config.validate().map_err(|e| AppError::Usage(e.to_string()))?;
    Ok(config)
}

fn resolve_log_level(flag: Option<&str>, global: &GlobalConfig) -> String {
    flag.or(global.log_level.as_deref()).unwrap_or("info").to_string()
}

fn init_logging(level: &str) {
    let filter = tracing_subscriber::EnvFilter::try_new(level)
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn read_samples(path: &Path, task: TaskKind) -> Result<Vec<Sample>, AppError> {
    let samples: Vec<Sample> = read_jsonl(path)
        .with_context(|| format!("failed to read samples {}", path.display()))?;
    Ok(samples.into_iter().filter(|s| s.task == task).collect())
}

async fn cmd_build(
    args: BuildDatasetArgs,
    seed: u64,
    global: &GlobalConfig,
) -> Result<(), AppError> {
    let scoring = resolve_scoring(None, None, global)?;
    let endpoint = resolve_endpoint(args.endpoint, args.model, global)?;
    let client = ChatClient::new(endpoint).map_err(|e| AppError::Usage(e.to_string()))?;
    let samples = read_samples(&args.input, args.task)?;
    let options = BuildOptions {
        gen: GenerationConfig::sampling(args.n),
        length_threshold: args.length_threshold,
        balance: args.balance,
        seed,
        prompt_template: "{text}".to_string(),
        lexicon: scoring.lexicon,
        reward_config: scoring.reward,
        spaces: scoring.spaces,
    };
    let report = build_sft_dataset(&samples, &client, &options, &args.out)
        .await
        .context("dataset build failed")?;
    print!("{}", render_build_report(&report));
    Ok(())
}

fn cmd_score(args: ScoreArgs, global: &GlobalConfig) -> Result<(), AppError> {
    let scoring =
        resolve_scoring(args.reward_config.as_deref(), args.lexicon.as_deref(), global)?;
    let text = match &args.input {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("failed to read {}", path.display()))?,
        None => {
            let mut buffer = String::new();
            std::io::stdin()
                .read_to_string(&mut buffer)
                .context("failed to read standard input")?;
            buffer
        }
    };
    let records: Vec<(CandidateRecord, usize)> =
        parse_jsonl_numbered(&text).context("invalid candidate records")?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(path)
                .with_context(|| format!("failed to create {}", path.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };

    let mut skipped = 0usize;
    for (record, line) in records {
        let space = scoring.spaces.get(record.task);
        match analyze_response(
            &record.text,
            record.gold_label,
            space,
            &scoring.reward,
            &scoring.lexicon,
        ) {
            Ok(analysis) => {
                let scored = ScoredRecord {
                    sample_id: record.sample_id,
                    task: record.task,
                    prompt_text: record.prompt_text,
                    gold_label: record.gold_label,
                    text: record.text,
                    predicted_label: analysis.predicted_label,
                    stratum: classify_stratum(&analysis.chain, args.length_threshold),
                    token_length: analysis.chain.token_length as u64,
                    rewards: analysis.rewards,
                };
                writeln!(out, "{}", to_json_line(&scored))
                    .context("failed to write scored record")?;
            }
            Err(e) => {
                skipped += 1;
                tracing::warn!(line, sample_id = %record.sample_id, error = %e, "skipping unscorable record");
            }
        }
    }
    out.flush().context("failed to flush output")?;
    if skipped > 0 {
        tracing::warn!(skipped, "some records were not scorable");
    }
    Ok(())
}

async fn cmd_serve(args: ServeArgs, global: &GlobalConfig) -> Result<(), AppError> {
    let scoring =
        resolve_scoring(args.reward_config.as_deref(), args.lexicon.as_deref(), global)?;
    cot_forge_service::serve(&args.bind, scoring.reward, scoring.lexicon)
        .await
        .context("service failed")?;
    Ok(())
}

async fn cmd_eval(args: EvalArgs, global: &GlobalConfig) -> Result<(), AppError> {
    let scoring = resolve_scoring(None, None, global)?;
    let endpoint = resolve_endpoint(args.endpoint, args.model, global)?;
    let endpoint_label = format!("{}@{}", endpoint.model_name, endpoint.base_url);
    let client = ChatClient::new(endpoint).map_err(|e| AppError::Usage(e.to_string()))?;
    let samples = read_samples(&args.input, args.task)?;

    let mut gen = GenerationConfig::evaluation();
    if let Some(t) = args.temperature {
        gen.temperature = t;
    }
    if let Some(m) = args.max_tokens {
        gen.max_tokens = m;
    }
    let options = EvalOptions {
        gen,
        override_protocol: args.override_protocol,
        prompt_template: "{text}".to_string(),
        spaces: scoring.spaces,
    };
    let result = evaluate(&samples, &client, &options).await.context("evaluation failed")?;

    let mut results: Vec<LabeledEvalResult> = if args.out.exists() {
        read_jsonl(&args.out)
            .with_context(|| format!("failed to read report {}", args.out.display()))?
    } else {
        Vec::new()
    };
    results.push(LabeledEvalResult { endpoint: endpoint_label, result });
    let mut file = std::fs::File::create(&args.out)
        .with_context(|| format!("failed to write report {}", args.out.display()))?;
    for labeled in &results {
        writeln!(file, "{}", to_json_line(labeled)).context("failed to write report record")?;
    }
    print!("{}", render_report(&results));
    Ok(())
}

fn cmd_stats(args: StatsArgs, global: &GlobalConfig) -> Result<(), AppError> {
    let scoring = resolve_scoring(None, None, global)?;
    let report = dataset_stats(&args.dataset, &scoring.spaces)
        .with_context(|| format!("failed to summarize {}", args.dataset.display()))?;
    print!("{}", render_build_report(&report));
    Ok(())
}

fn run() -> u8 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let is_help = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if is_help { 0 } else { 1 };
        }
    };

    let global = match cli.config.as_deref().map(GlobalConfig::load).transpose() {
        Ok(loaded) => loaded.unwrap_or_default(),
        Err(e) => return report_error(e),
    };
    init_logging(&resolve_log_level(cli.log_level.as_deref(), &global));
    let seed = cli.seed.unwrap_or(0);

    let outcome = match cli.command {
        Command::PrintDefaultConfig => {
            print!("{}", default_config_toml());
            Ok(())
        }
        Command::Score(args) => cmd_score(args, &global),
        Command::Stats(args) => cmd_stats(args, &global),
        command => {
            let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
                Ok(runtime) => runtime,
                Err(e) => {
                    return report_error(AppError::Runtime(
                        anyhow::Error::new(e).context("failed to start async runtime"),
                    ))
                }
            };
            runtime.block_on(async {
                match command {
                    Command::BuildDataset(args) => cmd_build(args, seed, &global).await,
                    Command::Serve(args) => cmd_serve(args, &global).await,
                    Command::Eval(args) => cmd_eval(args, &global).await,
                    Command::PrintDefaultConfig | Command::Score(_) | Command::Stats(_) => {
                        unreachable!("handled synchronously")
                    }
                }
            })
        }
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => report_error(e),
    }
}

fn report_error(error: AppError) -> u8 {
    match error {
        AppError::Usage(message) => {
            eprintln!("error: {message}");
            1
        }
        AppError::Runtime(error) => {
            eprintln!("error: {error:#}");
            2
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run())
}
