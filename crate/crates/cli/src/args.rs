use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sqlreward_core::config::EnvConfig;
use sqlreward_core::Difficulty;

#[derive(Debug, Parser)]
#[command(name = "sqlreward", version, about = "Verifiable rewards and evaluation for NL2SQL reinforcement learning")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML config file (lowest-precedence layer above defaults).
    #[arg(long, global = true, env = "SQLREWARD_CONFIG")]
    pub config: Option<PathBuf>,
    /// Directory holding the SQLite databases.
    #[arg(long, global = true)]
    pub db_root: Option<PathBuf>,
    /// Worker threads for query execution.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter and sample a training corpus, then export prompts.
    PrepareData(PrepareArgs),
    /// Score a file of responses.
    Reward(RewardArgs),
    /// Self-consistency selection over candidate groups.
    Select(SelectArgs),
    /// Execution accuracy report.
    Eval(EvalArgs),
    /// Train the toy policy on the candidate pools.
    Simulate(SimulateArgs),
    /// Run the HTTP reward service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Export {
    /// `{id, prompt}` with the RL template.
    Prompts,
    /// `{id, prompt, completion}` with the SFT template.
    Sft,
    /// The kept samples unchanged.
    Samples,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NullPolicyArg {
    Any,
    Every,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// JSONL training samples.
    #[arg(long)]
    pub samples: PathBuf,
    /// Keep only this difficulty level.
    #[arg(long, value_parser = parse_difficulty)]
    pub level: Option<Difficulty>,
    /// Samples drawn per difficulty level.
    #[arg(long)]
    pub per_level: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the executable, non-empty gold filter.
    #[arg(long)]
    pub no_gold_filter: bool,
    #[arg(long, value_enum, default_value_t = NullPolicyArg::Any)]
    pub null_policy: NullPolicyArg,
    #[arg(long, value_enum, default_value_t = Export::Prompts)]
    pub export: Export,
    /// JSON schema files with column comments.
    #[arg(long)]
    pub schema_dir: Option<PathBuf>,
    /// Leave representative values out of the schema text.
    #[arg(long)]
    pub no_values: bool,
}

#[derive(Debug, Args)]
pub struct CorpusArg {
    /// JSONL task corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RewardArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    /// JSONL of `{task_id, response_text, lengths?}`.
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub max_length: Option<usize>,
    /// Execution limit per query in milliseconds.
    #[arg(long)]
    pub limit_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    /// JSONL of `{task_id, candidates}`.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Candidates are bare SQL rather than full responses.
    #[arg(long)]
    pub sql: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    /// JSONL predictions: `{task_id, sql}` or `{task_id, candidates}`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Use self-consistency on candidate groups (default: first candidate).
    #[arg(long)]
    pub select: bool,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    #[arg(long)]
    pub limit_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long, default_value = "fixtures/sim/pools.json")]
    pub pools: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub group_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    pub updates_per_rollout: usize,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
}

fn parse_difficulty(s: &str) -> Result<Difficulty, String> {
    s.parse()
}

impl Cli {
    /// The flag layer of the configuration.
    pub fn flag_layer(&self) -> EnvConfig {
        let mut c = EnvConfig {
            db_root: self.global.db_root.clone(),
            jobs: self.global.jobs,
            ..EnvConfig::default()
        };
        match &self.command {
            Command::PrepareData(a) => c.schema_dir = a.schema_dir.clone(),
            Command::Reward(a) => {
                c.corpus = a.corpus.corpus.clone();
                c.max_length = a.max_length;
                c.reward_limit_ms = a.limit_ms;
            }
            Command::Select(a) => c.corpus = a.corpus.corpus.clone(),
            Command::Eval(a) => {
                c.corpus = a.corpus.corpus.clone();
                c.eval_limit_ms = a.limit_ms;
            }
            Command::Simulate(a) => {
                c.corpus = a.corpus.corpus.clone();
                c.epsilon = a.epsilon;
                c.beta = a.beta;
            }
            Command::Serve(a) => {
                c.corpus = a.corpus.corpus.clone();
                c.port = a.port;
            }
        }
        c
    }
}
