mod args;

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::Parser;
use serde::Deserialize;
use serde_json::Value;
use sqlreward_core::config::EnvConfig;
use sqlreward_core::corpus::{
    build_prompt, filter_complexity, filter_nonempty_gold, load_schema, read_jsonl, serialize_schema,
    sft_target, stratified_sample, NonNullPolicy, PromptTemplate,
};
use sqlreward_core::eval::{align_predictions, evaluate_groups, EvalConfig, PredictionLine};
use sqlreward_core::select::{select_responses, select_sql};
use sqlreward_core::sim::{score_pools, simulate, PoolFile, SimConfig};
use sqlreward_core::{Corpus, Executor, RewardEngine, TrainingSample};
use sqlreward_service::wire::{RewardItem, RewardItemResult, RewardsRequest};
use sqlreward_service::AppState;

use args::{Cli, Command, Export, NullPolicyArg, ReportFormat};

const DEFAULT_DB_ROOT: &str = "fixtures/db";
const DEFAULT_CORPUS: &str = "fixtures/corpus/tasks.jsonl";

/// Exit status of a subcommand that ran to completion.
enum Status {
    Ok,
    /// Some items in the output carry errors.
    ItemFailures,
}

struct Ctx {
    config: EnvConfig,
    out: Box<dyn Write>,
}

impl Ctx {
    fn db_root(&self) -> PathBuf {
        self.config.db_root.clone().unwrap_or_else(|| DEFAULT_DB_ROOT.into())
    }

    fn corpus_path(&self) -> PathBuf {
        self.config.corpus.clone().unwrap_or_else(|| DEFAULT_CORPUS.into())
    }

    fn executor(&self, limit: std::time::Duration) -> Result<Executor> {
        let root = self.db_root();
        if !root.is_dir() {
            return Err(anyhow!("database root {} is not a directory", root.display()));
        }
        Ok(Executor::new(root, self.config.exec_config(limit)?)?)
    }

    fn corpus(&self, ex: &Executor) -> Result<Corpus> {
        let path = self.corpus_path();
        Corpus::load(&path, ex).with_context(|| format!("loading corpus {}", path.display()))
    }

    fn engine(&self) -> Result<(RewardEngine, Corpus)> {
        let ex = self.executor(self.config.reward_limit())?;
        let corpus = self.corpus(&ex)?;
        Ok((RewardEngine::new(ex, self.config.reward_config()?)?, corpus))
    }

    fn line(&mut self, v: &impl serde::Serialize) -> Result<()> {
        serde_json::to_writer(&mut self.out, v)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }
}

fn with_task_id(task_id: &str, v: impl serde::Serialize) -> Result<Value> {
    let mut v = serde_json::to_value(v)?;
    if let Value::Object(m) = &mut v {
        m.insert("task_id".into(), Value::String(task_id.into()));
    }
    Ok(v)
}

fn prepare_data(ctx: &mut Ctx, a: &args::PrepareArgs) -> Result<Status> {
    let mut samples: Vec<TrainingSample> = read_jsonl(&a.samples)?;
    if let Some(level) = a.level {
        samples = filter_complexity(&samples, level);
    }
    let ex = ctx.executor(ctx.config.eval_limit())?;
    if !a.no_gold_filter {
        let policy = match a.null_policy {
            NullPolicyArg::Any => NonNullPolicy::AnyNonNullCell,
            NullPolicyArg::Every => NonNullPolicy::EveryCellNonNull,
        };
        let report = filter_nonempty_gold(&samples, &ex, policy);
        for r in &report.rejected {
            eprintln!("{}", serde_json::json!({"rejected": r}));
        }
        samples = report.kept;
    }
    if let Some(n) = a.per_level {
        samples = stratified_sample(&samples, n, a.seed);
    }
    let schema_dir = ctx.config.schema_dir.clone();
    let mut schemas = std::collections::HashMap::new();
    for s in &samples {
        let t = &s.task;
        match a.export {
            Export::Samples => ctx.line(s)?,
            Export::Prompts | Export::Sft => {
                if !schemas.contains_key(&t.db_ref) {
                    let spec = load_schema(&t.db_ref, &ex, schema_dir.as_deref())?;
                    let spec = if a.no_values { spec.without_values() } else { spec };
                    schemas.insert(t.db_ref.clone(), serialize_schema(&spec, !a.no_values));
                }
                let schema = &schemas[&t.db_ref];
                if matches!(a.export, Export::Prompts) {
                    let prompt = build_prompt(t, schema, &PromptTemplate::Rl)?;
                    ctx.line(&serde_json::json!({"id": t.id, "prompt": prompt}))?;
                } else {
                    let prompt = build_prompt(t, schema, &PromptTemplate::Sft)?;
                    let think = s.think_trace.as_deref().unwrap_or("");
                    let completion = sft_target(think, &t.gold_sql);
                    ctx.line(&serde_json::json!({"id": t.id, "prompt": prompt, "completion": completion}))?;
                }
            }
        }
    }
    Ok(Status::Ok)
}

fn reward(ctx: &mut Ctx, a: &args::RewardArgs) -> Result<Status> {
    let items: Vec<RewardItem> = read_jsonl(&a.responses)?;
    let (engine, corpus) = ctx.engine()?;
    let state = AppState::new(engine, Some(corpus), ctx.config.grpo_config()?);
    let req = RewardsRequest { items, config: None };
    let results = state
        .score_batch(&req)
        .map_err(|e| anyhow!("{}", e.body.error.message))?;
    let mut status = Status::Ok;
    for (item, r) in req.items.iter().zip(results) {
        if matches!(r, RewardItemResult::Error { .. }) {
            status = Status::ItemFailures;
        }
        ctx.line(&with_task_id(&item.task_id, r)?)?;
    }
    Ok(status)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateLine {
    task_id: String,
    candidates: Vec<String>,
    #[serde(default)]
    #[allow(dead_code)]
    kind: Option<String>,
}

fn select(ctx: &mut Ctx, a: &args::SelectArgs) -> Result<Status> {
    let lines: Vec<CandidateLine> = read_jsonl(&a.candidates)?;
    let (engine, corpus) = ctx.engine()?;
    let cfg = engine.config().clone();
    let ex = engine.executor();
    let mut status = Status::Ok;
    for l in &lines {
        let Some(task) = corpus.get(&l.task_id) else {
            status = Status::ItemFailures;
            ctx.line(&serde_json::json!({"task_id": l.task_id, "error": {"kind": "unknown_task"}}))?;
            continue;
        };
        let result = if a.sql {
            let outcomes: Result<Vec<_>, _> = ex
                .execute_group(&task.db_ref, &l.candidates, cfg.execution_limit)
                .into_iter()
                .collect();
            outcomes
                .map_err(Into::into)
                .and_then(|o| select_sql(&l.candidates, &o, &cfg.compare))
        } else {
            select_responses(ex, &task.db_ref, &l.candidates, cfg.execution_limit, cfg.length_measure, &cfg.compare)
        };
        match result {
            Ok(r) => ctx.line(&with_task_id(&l.task_id, r)?)?,
            Err(e) => {
                status = Status::ItemFailures;
                ctx.line(&serde_json::json!({"task_id": l.task_id, "error": {"kind": "selection", "message": e.to_string()}}))?;
            }
        }
    }
    Ok(status)
}

fn eval(ctx: &mut Ctx, a: &args::EvalArgs) -> Result<Status> {
    let lines: Vec<PredictionLine> = read_jsonl(&a.pred)?;
    let ex = ctx.executor(ctx.config.eval_limit())?;
    let corpus = ctx.corpus(&ex)?;
    let aligned = align_predictions(&corpus, &lines)?;
    for id in &aligned.missing {
        eprintln!("{}", serde_json::json!({"warning": "no prediction", "task_id": id}));
    }
    let groups: Vec<Vec<Option<String>>> = if a.select {
        aligned.groups
    } else {
        aligned.groups.into_iter().map(|g| vec![g[0].clone()]).collect()
    };
    let cfg = EvalConfig {
        limit: ctx.config.eval_limit(),
        ..EvalConfig::default()
    };
    let mut report = evaluate_groups(&ex, &aligned.tasks, &groups, &cfg, a.select)?;
    report.attach_tokens(&aligned.tokens);
    for e in &report.excluded {
        eprintln!("{}", serde_json::json!({"warning": "excluded", "task_id": e.task_id, "reason": e.reason}));
    }
    match a.format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut ctx.out, &report)?;
            ctx.out.write_all(b"\n")?;
        }
        ReportFormat::Table => ctx.out.write_all(report.render_table().as_bytes())?,
    }
    Ok(Status::Ok)
}

fn run_simulate(ctx: &mut Ctx, a: &args::SimulateArgs) -> Result<Status> {
    let (engine, corpus) = ctx.engine()?;
    let pools = PoolFile::load(&a.pools)?;
    let scored = score_pools(&engine, &corpus, &pools)?;
    let cfg = SimConfig {
        steps: a.steps,
        group_size: a.group_size,
        learning_rate: a.learning_rate,
        updates_per_rollout: a.updates_per_rollout,
        seed: a.seed,
        grpo: ctx.config.grpo_config()?,
    };
    let mut write_err: Option<std::io::Error> = None;
    let out = &mut ctx.out;
    let (_, summary) = simulate(&scored, &cfg, |m| {
        if write_err.is_none() {
            let r = serde_json::to_writer(&mut *out, m)
                .map_err(std::io::Error::from)
                .and_then(|()| out.write_all(b"\n"));
            write_err = r.err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    ctx.line(&serde_json::json!({ "summary": summary }))?;
    Ok(Status::Ok)
}

fn serve(ctx: &mut Ctx, a: &args::ServeArgs) -> Result<Status> {
    let ex = ctx.executor(ctx.config.reward_limit())?;
    let corpus = match ctx.corpus(&ex) {
        Ok(c) => Some(c),
        Err(e) => {
            tracing::warn!(error = %format!("{e:#}"), "corpus unavailable, serving degraded");
            None
        }
    };
    let engine = RewardEngine::new(ex, ctx.config.reward_config()?)?;
    let state = AppState::new(engine, corpus, ctx.config.grpo_config()?);
    let addr = std::net::SocketAddr::new(a.host, ctx.config.port());
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(sqlreward_service::serve(addr, state))?;
    Ok(Status::Ok)
}

fn init_logging(serving: bool) {
    let default = if serving { "info" } else { "warn" };
    let filter = tracing_subscriber::EnvFilter::try_from_env("SQLREWARD_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .json()
        .with_writer(std::io::stderr)
        .with_env_filter(filter)
        .try_init();
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn run(cli: &Cli) -> Result<Status> {
    let config = EnvConfig::layered(cli.global.config.as_deref(), EnvConfig::from_env()?, cli.flag_layer())?;
    let mut ctx = Ctx {
        config,
        out: open_out(cli.global.out.as_deref())?,
    };
    let status = match &cli.command {
        Command::PrepareData(a) => prepare_data(&mut ctx, a),
        Command::Reward(a) => reward(&mut ctx, a),
        Command::Select(a) => select(&mut ctx, a),
        Command::Eval(a) => eval(&mut ctx, a),
        Command::Simulate(a) => run_simulate(&mut ctx, a),
        Command::Serve(a) => serve(&mut ctx, a),
    }?;
    ctx.out.flush()?;
    Ok(status)
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let kind = c
            .downcast_ref::<std::io::Error>()
            .map(std::io::Error::kind)
            .or_else(|| c.downcast_ref::<serde_json::Error>().and_then(serde_json::Error::io_error_kind));
        kind == Some(std::io::ErrorKind::BrokenPipe)
    })
}

/// Joins the error chain, skipping causes already quoted by their parent.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(matches!(cli.command, Command::Serve(_)));
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ItemFailures) => ExitCode::from(1),
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::from(2)
        }
    }
}
