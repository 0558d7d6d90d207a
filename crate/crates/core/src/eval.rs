//! Execution accuracy (EX) over a task set with per-difficulty breakdown.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compare::{normalize_with, results_match_with, CompareConfig};
use crate::corpus::{Corpus, Difficulty, Task};
use crate::exec::{ExecStatus, ExecutionOutcome, Executor, DEFAULT_EVAL_LIMIT};
use crate::parse::{parse_response, LengthMeasure};
use crate::select::{select_sql, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    #[serde(with = "crate::exec::duration_ms", rename = "limit_ms")]
    pub limit: Duration,
    pub compare: CompareConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            limit: DEFAULT_EVAL_LIMIT,
            compare: CompareConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{tasks} tasks but {predictions} predictions")]
    LengthMismatch { tasks: usize, predictions: usize },
    #[error("task `{0}` has an empty candidate group")]
    EmptyGroup(String),
    #[error("prediction line {line}: unknown task_id `{task_id}`")]
    UnknownTask { line: usize, task_id: String },
    #[error("prediction line {line}: {reason}")]
    BadPrediction { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub count: usize,
    pub correct: usize,
    pub ex: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub task_id: String,
    pub difficulty: Difficulty,
    #[serde(rename = "match")]
    pub matched: bool,
    /// `success`, `sql_error`, `timeout` or `no_sql`.
    pub status: String,
    pub elapsed_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tokens: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub task_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub total_ms: f64,
    pub mean_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub total: usize,
    pub correct: usize,
    pub ex_overall: f64,
    pub per_difficulty: BTreeMap<Difficulty, LevelStats>,
    pub per_item: Vec<ItemResult>,
    pub excluded_count: usize,
    pub excluded: Vec<Exclusion>,
    pub latency: Latency,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_tokens: Option<u64>,
}

fn pct(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

impl EvaluationReport {
    fn assemble(mut per_item: Vec<ItemResult>, mut excluded: Vec<Exclusion>) -> Self {
        per_item.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        excluded.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        let mut per_difficulty: BTreeMap<Difficulty, LevelStats> = BTreeMap::new();
        for item in &per_item {
            let s = per_difficulty.entry(item.difficulty).or_default();
            s.count += 1;
            s.correct += usize::from(item.matched);
        }
        for s in per_difficulty.values_mut() {
            s.ex = pct(s.correct, s.count);
        }
        let total = per_item.len();
        let correct = per_item.iter().filter(|i| i.matched).count();
        let total_ms: f64 = per_item.iter().map(|i| i.elapsed_ms).sum();
        EvaluationReport {
            total,
            correct,
            ex_overall: pct(correct, total),
            per_difficulty,
            excluded_count: excluded.len(),
            excluded,
            latency: Latency {
                total_ms,
                mean_ms: if total == 0 { 0.0 } else { total_ms / total as f64 },
            },
            per_item,
            total_tokens: None,
        }
    }

    /// Attaches caller-measured token counts keyed by task id.
    pub fn attach_tokens(&mut self, tokens: &HashMap<String, u64>) {
        let mut sum = None;
        for item in &mut self.per_item {
            item.tokens = tokens.get(&item.task_id).copied();
            if let Some(t) = item.tokens {
                *sum.get_or_insert(0) += t;
            }
        }
        self.total_tokens = sum;
    }

    /// Plain-text table: one row per metric, one column per difficulty.
    pub fn render_table(&self) -> String {
        let mut cols: Vec<(String, LevelStats)> = Vec::new();
        for level in [Difficulty::Simple, Difficulty::Moderate, Difficulty::Challenging] {
            cols.push((title(level), self.per_difficulty.get(&level).copied().unwrap_or_default()));
        }
        for level in [Difficulty::Complex, Difficulty::Unknown] {
            if let Some(s) = self.per_difficulty.get(&level) {
                cols.push((title(level), *s));
            }
        }
        cols.push((
            "All".into(),
            LevelStats {
                count: self.total,
                correct: self.correct,
                ex: self.ex_overall,
            },
        ));
        let mut out = String::new();
        let _ = write!(out, "{:<8}", "");
        for (name, _) in &cols {
            let _ = write!(out, "{name:>13}");
        }
        out.push('\n');
        let _ = write!(out, "{:<8}", "Count");
        for (_, s) in &cols {
            let _ = write!(out, "{:>13}", s.count);
        }
        out.push('\n');
        let _ = write!(out, "{:<8}", "EX (%)");
        for (_, s) in &cols {
            let _ = write!(out, "{:>13.1}", s.ex);
        }
        out.push('\n');
        if self.excluded_count > 0 {
            let _ = writeln!(out, "excluded: {}", self.excluded_count);
        }
        out
    }
}

fn title(level: Difficulty) -> String {
    let s = level.as_str();
    s[..1].to_uppercase() + &s[1..]
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

enum Scored {
    Item(ItemResult),
    Excluded(Exclusion),
}

fn score_item(
    executor: &Executor,
    task: &Task,
    group: &[Option<String>],
    config: &EvalConfig,
    with_selection: bool,
) -> Scored {
    let exclude = |reason: String| {
        Scored::Excluded(Exclusion {
            task_id: task.id.clone(),
            reason,
        })
    };
    let gold = match executor.execute(&task.db_ref, &task.gold_sql, config.limit) {
        Err(e) => return exclude(e.to_string()),
        Ok(o) => match o.status {
            ExecStatus::Success { result } if !result.truncated => normalize_with(&result, config.compare.semantics),
            ExecStatus::Success { .. } => return exclude("gold result truncated".into()),
            ExecStatus::SqlError { message } => return exclude(format!("gold sql_error: {message}")),
            ExecStatus::Timeout => return exclude("gold timeout".into()),
        },
    };
    let runnable: Vec<String> = group.iter().flatten().cloned().collect();
    let mut ran = executor.execute_group(&task.db_ref, &runnable, config.limit).into_iter();
    let mut outcomes: Vec<Option<ExecutionOutcome>> = Vec::with_capacity(group.len());
    for sql in group {
        outcomes.push(match sql {
            None => None,
            Some(_) => match ran.next().expect("one outcome per sql") {
                Ok(o) => Some(o),
                Err(e) => return exclude(e.to_string()),
            },
        });
    }
    let elapsed_ms = outcomes.iter().flatten().map(|o| ms(o.elapsed)).sum();
    let (chosen, selection) = if with_selection {
        let sqls: Vec<String> = group.iter().map(|s| s.clone().unwrap_or_default()).collect();
        let as_outcomes: Vec<ExecutionOutcome> = outcomes
            .iter()
            .map(|o| {
                o.clone().unwrap_or(ExecutionOutcome {
                    status: ExecStatus::SqlError {
                        message: "no sql".into(),
                    },
                    elapsed: Duration::ZERO,
                })
            })
            .collect();
        let mut sel = select_sql(&sqls, &as_outcomes, &config.compare).expect("group is non-empty");
        sel.chosen_sql = group[sel.chosen_index].clone();
        (sel.chosen_index, Some(sel))
    } else {
        (0, None)
    };
    let (matched, status) = match &outcomes[chosen] {
        None => (false, "no_sql".to_string()),
        Some(o) => {
            let matched = o.result().is_some_and(|r| {
                results_match_with(&normalize_with(r, config.compare.semantics), &gold, config.compare.epsilon)
            });
            (matched, o.status.label().to_string())
        }
    };
    Scored::Item(ItemResult {
        task_id: task.id.clone(),
        difficulty: task.difficulty,
        matched,
        status,
        elapsed_ms,
        tokens: None,
        selection,
    })
}

fn run(
    executor: &Executor,
    tasks: &[Task],
    groups: &[Vec<Option<String>>],
    config: &EvalConfig,
    with_selection: bool,
) -> Result<EvaluationReport, EvalError> {
    if tasks.len() != groups.len() {
        return Err(EvalError::LengthMismatch {
            tasks: tasks.len(),
            predictions: groups.len(),
        });
    }
    if let Some((t, _)) = tasks.iter().zip(groups).find(|(_, g)| g.is_empty()) {
        return Err(EvalError::EmptyGroup(t.id.clone()));
    }
    let scored: Vec<Scored> = executor.install(|| {
        tasks
            .par_iter()
            .zip(groups.par_iter())
            .map(|(t, g)| score_item(executor, t, g, config, with_selection))
            .collect()
    });
    let mut items = Vec::new();
    let mut excluded = Vec::new();
    for s in scored {
        match s {
            Scored::Item(i) => items.push(i),
            Scored::Excluded(e) => excluded.push(e),
        }
    }
    Ok(EvaluationReport::assemble(items, excluded))
}

/// EX of one predicted SQL per task, aligned by index.
pub fn evaluate(
    executor: &Executor,
    tasks: &[Task],
    predictions: &[String],
    config: &EvalConfig,
) -> Result<EvaluationReport, EvalError> {
    let groups: Vec<Vec<Option<String>>> = predictions.iter().map(|p| vec![Some(p.clone())]).collect();
    run(executor, tasks, &groups, config, false)
}

/// EX after self-consistency selection within each candidate group.
pub fn evaluate_with_selection(
    executor: &Executor,
    tasks: &[Task],
    groups: &[Vec<String>],
    config: &EvalConfig,
) -> Result<EvaluationReport, EvalError> {
    let groups: Vec<Vec<Option<String>>> = groups
        .iter()
        .map(|g| g.iter().cloned().map(Some).collect())
        .collect();
    run(executor, tasks, &groups, config, true)
}

/// [`evaluate_with_selection`] where some candidates have no SQL
/// (e.g. unparsable responses).
pub fn evaluate_groups(
    executor: &Executor,
    tasks: &[Task],
    groups: &[Vec<Option<String>>],
    config: &EvalConfig,
    with_selection: bool,
) -> Result<EvaluationReport, EvalError> {
    run(executor, tasks, groups, config, with_selection)
}

/// One line of a predictions file.
///
/// Exactly one of `sql`, `candidates`, `response`, `responses` is set.
/// `candidates` are SQL strings; `response(s)` are full model outputs whose
/// SQL is extracted. Other fields are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    #[serde(default)]
    pub task_id: Option<String>,
    #[serde(default)]
    pub sql: Option<String>,
    #[serde(default)]
    pub candidates: Option<Vec<String>>,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub responses: Option<Vec<String>>,
    #[serde(default)]
    pub tokens: Option<u64>,
}

impl PredictionLine {
    /// Candidate SQL for this line; `None` entries had no extractable SQL.
    pub fn group(&self, line: usize) -> Result<Vec<Option<String>>, EvalError> {
        let extract = |r: &String| parse_response(r, |s| LengthMeasure::Chars.measure(s)).sql;
        let set = [
            self.sql.is_some(),
            self.candidates.is_some(),
            self.response.is_some(),
            self.responses.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count();
        if set != 1 {
            return Err(EvalError::BadPrediction {
                line,
                reason: "exactly one of sql, candidates, response, responses is required".into(),
            });
        }
        let group = if let Some(s) = &self.sql {
            vec![Some(s.clone())]
        } else if let Some(c) = &self.candidates {
            c.iter().cloned().map(Some).collect()
        } else if let Some(r) = &self.response {
            vec![extract(r)]
        } else {
            self.responses.iter().flatten().map(extract).collect()
        };
        if group.is_empty() {
            return Err(EvalError::BadPrediction {
                line,
                reason: "empty candidate list".into(),
            });
        }
        Ok(group)
    }
}

/// Predictions matched to tasks.
#[derive(Debug, Clone, Default)]
pub struct AlignedPredictions {
    pub tasks: Vec<Task>,
    pub groups: Vec<Vec<Option<String>>>,
    pub tokens: HashMap<String, u64>,
    /// Corpus tasks without a prediction.
    pub missing: Vec<String>,
}

/// Aligns by `task_id` when every line has one, otherwise by position.
pub fn align_predictions(corpus: &Corpus, lines: &[PredictionLine]) -> Result<AlignedPredictions, EvalError> {
    let mut out = AlignedPredictions::default();
    let by_id = !lines.is_empty() && lines.iter().all(|l| l.task_id.is_some());
    if by_id {
        let mut seen = HashMap::new();
        for (i, l) in lines.iter().enumerate() {
            let id = l.task_id.clone().unwrap_or_default();
            let task = corpus.get(&id).ok_or_else(|| EvalError::UnknownTask {
                line: i + 1,
                task_id: id.clone(),
            })?;
            if seen.insert(id.clone(), i).is_some() {
                return Err(EvalError::BadPrediction {
                    line: i + 1,
                    reason: format!("duplicate task_id `{id}`"),
                });
            }
            out.tasks.push(task.clone());
            out.groups.push(l.group(i + 1)?);
            if let Some(t) = l.tokens {
                out.tokens.insert(id, t);
            }
        }
        out.missing = corpus
            .tasks()
            .iter()
            .filter(|t| !seen.contains_key(&t.id))
            .map(|t| t.id.clone())
            .collect();
    } else {
        if lines.len() != corpus.len() {
            return Err(EvalError::LengthMismatch {
                tasks: corpus.len(),
                predictions: lines.len(),
            });
        }
        for (i, (l, t)) in lines.iter().zip(corpus.tasks()).enumerate() {
            out.tasks.push(t.clone());
            out.groups.push(l.group(i + 1)?);
            if let Some(tok) = l.tokens {
                out.tokens.insert(t.id.clone(), tok);
            }
        }
    }
    Ok(out)
}
