//! `curate`: runs the curation stages over a run directory.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use instruct_curation::fewshot::{EndpointConfig, EvalOptions};
use instruct_curation::metrics::{NormalizationPolicy, RougeVariant, ScoringConfig};
use instruct_curation::pipeline::{run_pipeline, RunConfig, StageName, StageStatus};
use instruct_curation::scorer::{read_leaderboard_csv, score_leaderboard, DEFAULT_MWR_FLOOR};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "curate", version, about = "Curate an instruction-tuning mixture from NI tasks and auxiliary datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select NI tasks by policy or allowlist.
    Filter(RunArgs),
    /// Score selected tasks few-shot against the completion endpoint.
    Score(RunArgs),
    /// Draw the NI exact-match and generation pools by difficulty bucket.
    Sample(RunArgs),
    /// Mix all sources, split validation, emit dataset, config and manifest.
    Assemble(RunArgs),
    /// Run filter, score, sample and assemble in order.
    All(RunArgs),
    /// Compute stage and final scores from a leaderboard CSV.
    ScoreLeaderboard(LeaderboardArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Directory holding every stage's artifacts.
    #[arg(long)]
    run_dir: PathBuf,
    /// Master seed; every stage seed derives from it.
    #[arg(long, env = "CURATE_SEED", default_value_t = 0)]
    seed: u64,
    /// Directory of NI task JSON files.
    #[arg(long)]
    ni_dir: Option<PathBuf>,
    /// Filter policy TOML; built-in defaults when omitted.
    #[arg(long)]
    filter_policy: Option<PathBuf>,
    /// Task-id list used as the only selection rule.
    #[arg(long)]
    allowlist: Option<PathBuf>,
    /// `task_id EM|GEN` lines.
    #[arg(long)]
    category_map: Option<PathBuf>,
    /// Bucket scheme TOML for exact-match tasks.
    #[arg(long)]
    em_scheme: Option<PathBuf>,
    /// Bucket scheme TOML for generation examples.
    #[arg(long)]
    gen_scheme: Option<PathBuf>,
    /// Sources TOML listing the non-NI datasets.
    #[arg(long)]
    sources: Option<PathBuf>,
    /// Mixture preset: 200K, 400K or 700K.
    #[arg(long, default_value = "200K")]
    preset: String,
    #[arg(long, default_value_t = 2000)]
    validation_size: usize,

    #[command(flatten)]
    endpoint: EndpointArgs,
    #[command(flatten)]
    eval: EvalArgs,

    /// Print only the run manifest as JSON.
    #[arg(long)]
    manifest_only: bool,
}

#[derive(Args)]
struct EndpointArgs {
    /// Base URL of the completion server.
    #[arg(long = "endpoint-url", env = "CURATE_ENDPOINT_URL", default_value = "http://127.0.0.1:8000")]
    url: String,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 128)]
    max_tokens: u32,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    /// Stop sequence; repeatable. Defaults to a blank line.
    #[arg(long = "stop")]
    stop: Vec<String>,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 8)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long, default_value_t = 250)]
    retry_backoff_ms: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Demonstrations per prompt.
    #[arg(short = 'k', long, default_value_t = 3)]
    k: usize,
    /// Instances scored per task.
    #[arg(long, default_value_t = 100)]
    max_instances: usize,
    /// ROUGE variant for generation tasks: rouge-1, rouge-2 or rouge-l.
    #[arg(long, default_value = "rouge-l", value_parser = parse_rouge)]
    rouge: RougeVariant,
    /// Compare predictions case-sensitively.
    #[arg(long)]
    keep_case: bool,
    /// Keep punctuation when comparing predictions.
    #[arg(long)]
    keep_punctuation: bool,
}

#[derive(Args)]
struct LeaderboardArgs {
    /// CSV with columns stage,scenario,metric,direction,submission,value.
    input: PathBuf,
    /// Lower bound applied to win rates inside the geometric mean.
    #[arg(long, default_value_t = DEFAULT_MWR_FLOOR)]
    floor: f64,
}

fn parse_rouge(s: &str) -> Result<RougeVariant, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown ROUGE variant {s:?}; use rouge-1, rouge-2 or rouge-l"))
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        let e = &self.endpoint;
        let defaults = EndpointConfig::default();
        RunConfig {
            master_seed: self.seed,
            run_dir: self.run_dir.clone(),
            ni_dir: self.ni_dir.clone(),
            filter_policy: self.filter_policy.clone(),
            allowlist: self.allowlist.clone(),
            category_map: self.category_map.clone(),
            em_scheme: self.em_scheme.clone(),
            gen_scheme: self.gen_scheme.clone(),
            sources: self.sources.clone(),
            endpoint: EndpointConfig {
                base_url: e.url.clone(),
                model: e.model.clone(),
                max_tokens: e.max_tokens,
                temperature: e.temperature,
                stop_sequences: if e.stop.is_empty() { defaults.stop_sequences } else { e.stop.clone() },
                timeout_secs: e.timeout_secs,
                max_in_flight: e.max_in_flight,
                retries: e.retries,
                retry_backoff_ms: e.retry_backoff_ms,
            },
            eval: EvalOptions {
                k: self.eval.k,
                max_instances: self.eval.max_instances,
                seed: 0,
                scoring: ScoringConfig {
                    normalization: NormalizationPolicy {
                        case_fold: !self.eval.keep_case,
                        strip_punctuation: !self.eval.keep_punctuation,
                        collapse_whitespace: true,
                    },
                    rouge: self.eval.rouge,
                },
            },
            preset: self.preset.clone(),
            validation_size: self.validation_size,
        }
    }
}

fn run_stages(args: &RunArgs, stages: &[StageName]) -> Result<()> {
    let cfg = args.config();
    let stages: BTreeSet<StageName> = stages.iter().copied().collect();
    let report = run_pipeline(&cfg, &stages)?;
    if args.manifest_only {
        println!("{}", serde_json::to_string_pretty(&report.manifest)?);
        return Ok(());
    }
    for o in &report.outcomes {
        let status = match o.status {
            StageStatus::Ran => "ran",
            StageStatus::Skipped => "up to date",
        };
        println!("{:<9} {status}", o.stage.as_str());
        for a in &o.artifacts {
            println!("          {}", cfg.run_dir.join(a).display());
        }
    }
    println!("{} file(s) written", report.files_written);
    Ok(())
}

fn score_leaderboard_cmd(args: &LeaderboardArgs) -> Result<()> {
    let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let rows = read_leaderboard_csv(file)?;
    let report = score_leaderboard(&rows, args.floor)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Filter(a) => run_stages(a, &[StageName::Filter]),
        Command::Score(a) => run_stages(a, &[StageName::Score]),
        Command::Sample(a) => run_stages(a, &[StageName::Sample]),
        Command::Assemble(a) => run_stages(a, &[StageName::Assemble]),
        Command::All(a) => run_stages(a, &StageName::ALL),
        Command::ScoreLeaderboard(a) => score_leaderboard_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
