//! Gated composite reward: format, execution, result and length terms.
//!
//! | term | values |
//! |------|--------|
//! | format `s_f` | 1 well formed, -1 otherwise |
//! | execution `s_e` | 2 executable, -2 error or timeout, 0 if format failed |
//! | result `s_r` | 3 matches gold, -3 wrong, 0 if format failed or not executable |
//! | length `s_l` | `0.5 * s_tl + s_al` within `max_length`, `0.5 + s_al` beyond it, 0 unless correct |
//!
//! with `s_tl = (len_think + len_answer) / max_length` and
//! `s_al = len_sql / len_answer`. Totals therefore fall in `{-1}`, `{0}` or
//! `(6, 7.5]`.
//!
//! Environment failures (missing database, gold SQL that does not run) are
//! errors, never negative rewards.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::compare::{normalize_with, results_match_with, CanonicalResult, CompareConfig};
use crate::corpus::Task;
use crate::exec::{ExecError, ExecStatus, ExecutionOutcome, Executor, DEFAULT_REWARD_LIMIT};
use crate::parse::{parse_response_with, LengthMeasure, LengthStats, ParseOptions, ParsedResponse};

pub const DEFAULT_MAX_LENGTH: usize = 2048;

/// Length reward for responses longer than `max_length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlongMode {
    /// `0.5 + s_al`.
    #[default]
    AsPrinted,
    /// `s_al` only: the overlong response forfeits the length half.
    StrictPenalty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub max_length: usize,
    #[serde(with = "crate::exec::duration_ms", rename = "execution_limit_ms")]
    pub execution_limit: Duration,
    pub length_measure: LengthMeasure,
    pub overlong: OverlongMode,
    pub strict_format: bool,
    pub compare: CompareConfig,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            max_length: DEFAULT_MAX_LENGTH,
            execution_limit: DEFAULT_REWARD_LIMIT,
            length_measure: LengthMeasure::Chars,
            overlong: OverlongMode::AsPrinted,
            strict_format: false,
            compare: CompareConfig::default(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if self.max_length == 0 {
            return Err(RewardError::InvalidConfig("max_length must be > 0".into()));
        }
        if self.execution_limit.is_zero() {
            return Err(RewardError::InvalidConfig("execution limit must be > 0".into()));
        }
        Ok(())
    }

    /// Applies per-request overrides.
    pub fn with_overrides(&self, o: &RewardOverrides) -> RewardConfig {
        RewardConfig {
            max_length: o.max_length.unwrap_or(self.max_length),
            execution_limit: o
                .execution_limit_ms
                .map_or(self.execution_limit, Duration::from_millis),
            length_measure: o.length_measure.unwrap_or(self.length_measure),
            overlong: o.overlong.unwrap_or(self.overlong),
            strict_format: o.strict_format.unwrap_or(self.strict_format),
            compare: o.compare.unwrap_or(self.compare),
        }
    }
}

/// Optional per-request replacements for [`RewardConfig`] fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardOverrides {
    pub max_length: Option<usize>,
    pub execution_limit_ms: Option<u64>,
    pub length_measure: Option<LengthMeasure>,
    pub overlong: Option<OverlongMode>,
    pub strict_format: Option<bool>,
    pub compare: Option<CompareConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub s_f: i32,
    pub s_e: i32,
    pub s_r: i32,
    pub s_l: f64,
    pub s_tl: f64,
    pub s_al: f64,
    pub total: f64,
}

/// Which band of the reward partition a total falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardBand {
    /// Malformed or unexecutable: total -1.
    Failed,
    /// Executable but wrong: total 0.
    Wrong,
    /// Correct: total in (6, 7.5].
    Correct,
}

impl RewardBreakdown {
    pub fn new(s_f: i32, s_e: i32, s_r: i32, length: LengthTerms) -> Self {
        RewardBreakdown {
            s_f,
            s_e,
            s_r,
            s_l: length.s_l,
            s_tl: length.s_tl,
            s_al: length.s_al,
            total: f64::from(s_f + s_e + s_r) + length.s_l,
        }
    }

    pub fn band(&self) -> Option<RewardBand> {
        if self.total == -1.0 {
            Some(RewardBand::Failed)
        } else if self.total == 0.0 {
            Some(RewardBand::Wrong)
        } else if self.total > 6.0 && self.total <= 7.5 {
            Some(RewardBand::Correct)
        } else {
            None
        }
    }

    /// Checks the gating rules between terms. Returns the first violation.
    pub fn check_gating(&self) -> Result<(), String> {
        if self.total != f64::from(self.s_f + self.s_e + self.s_r) + self.s_l {
            return Err("total is not the component sum".into());
        }
        if !matches!(self.s_f, 1 | -1) || !matches!(self.s_e, 2 | 0 | -2) {
            return Err("s_f/s_e out of range".into());
        }
        if !matches!(self.s_r, 3 | 0 | -3) {
            return Err("s_r out of range".into());
        }
        if (self.s_e == 0) != (self.s_f == -1) {
            return Err("s_e = 0 iff format incorrect".into());
        }
        if (self.s_r == 0) != (self.s_f == -1 || self.s_e == -2) {
            return Err("s_r = 0 iff format incorrect or not executable".into());
        }
        if self.s_r != 0 && self.s_e != 2 {
            return Err("s_r != 0 requires s_e = 2".into());
        }
        if self.s_l != 0.0 && self.s_r != 3 {
            return Err("s_l != 0 requires s_r = 3".into());
        }
        if self.s_l < 0.0 || self.s_tl < 0.0 || !(0.0..=1.0).contains(&self.s_al) {
            return Err("length terms out of range".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LengthTerms {
    pub s_l: f64,
    pub s_tl: f64,
    pub s_al: f64,
}

pub fn format_reward(p: &ParsedResponse) -> i32 {
    if p.format_ok {
        1
    } else {
        -1
    }
}

/// `outcome` is the execution of `p.sql`; `None` when nothing was run.
pub fn execution_reward(p: &ParsedResponse, outcome: Option<&ExecutionOutcome>) -> i32 {
    if !p.format_ok {
        return 0;
    }
    match outcome {
        Some(o) if o.is_success() => 2,
        _ => -2,
    }
}

pub fn result_reward(
    p: &ParsedResponse,
    outcome: Option<&ExecutionOutcome>,
    gold: &CanonicalResult,
    compare: &CompareConfig,
) -> i32 {
    if !p.format_ok {
        return 0;
    }
    match outcome.and_then(ExecutionOutcome::result) {
        None => 0,
        Some(table) => {
            let candidate = normalize_with(table, compare.semantics);
            if results_match_with(&candidate, gold, compare.epsilon) {
                3
            } else {
                -3
            }
        }
    }
}

pub fn length_reward(lengths: &LengthStats, config: &RewardConfig, result_correct: bool) -> LengthTerms {
    if !result_correct {
        return LengthTerms::default();
    }
    let max = config.max_length as f64;
    let s_tl = (lengths.think + lengths.answer) as f64 / max;
    let s_al = if lengths.answer == 0 {
        0.0
    } else {
        lengths.sql as f64 / lengths.answer as f64
    };
    let s_l = if lengths.response <= config.max_length {
        0.5 * s_tl + s_al
    } else {
        match config.overlong {
            OverlongMode::AsPrinted => 0.5 + s_al,
            OverlongMode::StrictPenalty => s_al,
        }
    };
    LengthTerms { s_l, s_tl, s_al }
}

/// Combines the four terms for an already parsed and executed candidate.
pub fn score(
    p: &ParsedResponse,
    outcome: Option<&ExecutionOutcome>,
    gold: &CanonicalResult,
    config: &RewardConfig,
) -> RewardBreakdown {
    let s_f = format_reward(p);
    let s_e = execution_reward(p, outcome);
    let s_r = result_reward(p, outcome, gold, &config.compare);
    let length = length_reward(&p.lengths, config, s_r == 3);
    RewardBreakdown::new(s_f, s_e, s_r, length)
}

/// How the candidate fared, reported next to its reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    FormatError,
    Success,
    SqlError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    #[serde(flatten)]
    pub reward: RewardBreakdown,
    pub status: CandidateStatus,
    pub lengths: LengthStats,
}

#[derive(Debug, thiserror::Error)]
pub enum RewardError {
    /// The environment could not execute; retrying may succeed.
    #[error("infrastructure failure (retryable): {0}")]
    Infrastructure(#[from] ExecError),
    #[error("gold SQL of task `{task_id}` is unusable: {reason}")]
    GoldFailed { task_id: String, reason: String },
    #[error("invalid lengths: {0}")]
    InvalidLengths(String),
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
}

impl RewardError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, RewardError::Infrastructure(_))
    }
}

/// Scores responses against tasks using a shared executor.
#[derive(Debug, Clone)]
pub struct RewardEngine {
    executor: Executor,
    config: RewardConfig,
}

impl RewardEngine {
    pub fn new(executor: Executor, config: RewardConfig) -> Result<Self, RewardError> {
        config.validate()?;
        Ok(RewardEngine { executor, config })
    }

    pub fn config(&self) -> &RewardConfig {
        &self.config
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    pub fn parse(&self, raw: &str, config: &RewardConfig) -> ParsedResponse {
        let measure = config.length_measure;
        parse_response_with(
            raw,
            |s| measure.measure(s),
            ParseOptions {
                strict: config.strict_format,
            },
        )
    }

    /// Canonical gold result. Gold that fails to run is a corpus defect.
    pub fn gold_result(&self, task: &Task, config: &RewardConfig) -> Result<CanonicalResult, RewardError> {
        let outcome = self
            .executor
            .execute(&task.db_ref, &task.gold_sql, config.execution_limit)?;
        let fail = |reason: String| RewardError::GoldFailed {
            task_id: task.id.clone(),
            reason,
        };
        match outcome.status {
            ExecStatus::Success { result } if result.truncated => Err(fail("result truncated".into())),
            ExecStatus::Success { result } => Ok(normalize_with(&result, config.compare.semantics)),
            ExecStatus::SqlError { message } => Err(fail(message)),
            ExecStatus::Timeout => Err(fail("timeout".into())),
        }
    }

    /// Parses, executes and scores one response with the engine's config.
    pub fn compute_reward(&self, raw: &str, task: &Task) -> Result<ScoredResponse, RewardError> {
        self.compute_reward_with(raw, task, &self.config, None)
    }

    /// As [`compute_reward`](Self::compute_reward) with an explicit config
    /// and optional caller-measured lengths (e.g. tokenizer counts).
    pub fn compute_reward_with(
        &self,
        raw: &str,
        task: &Task,
        config: &RewardConfig,
        lengths: Option<LengthStats>,
    ) -> Result<ScoredResponse, RewardError> {
        config.validate()?;
        let parsed = self.parse_with_lengths(raw, config, lengths)?;
        let gold = self.gold_result(task, config)?;
        self.score_parsed(&parsed, task, &gold, config)
    }

    pub fn parse_with_lengths(
        &self,
        raw: &str,
        config: &RewardConfig,
        lengths: Option<LengthStats>,
    ) -> Result<ParsedResponse, RewardError> {
        let mut parsed = self.parse(raw, config);
        if let Some(l) = lengths {
            if !l.is_consistent() {
                return Err(RewardError::InvalidLengths(format!(
                    "need think + answer <= response and sql <= answer, got {l:?}"
                )));
            }
            parsed.lengths = l;
        }
        Ok(parsed)
    }

    /// Executes a parsed candidate and scores it against a known gold result.
    pub fn score_parsed(
        &self,
        parsed: &ParsedResponse,
        task: &Task,
        gold: &CanonicalResult,
        config: &RewardConfig,
    ) -> Result<ScoredResponse, RewardError> {
        let outcome = match (&parsed.sql, parsed.format_ok) {
            (Some(sql), true) => Some(self.executor.execute(&task.db_ref, sql, config.execution_limit)?),
            _ => None,
        };
        let reward = score(parsed, outcome.as_ref(), gold, config);
        let status = match outcome.as_ref().map(|o| &o.status) {
            None => CandidateStatus::FormatError,
            Some(ExecStatus::Success { .. }) => CandidateStatus::Success,
            Some(ExecStatus::SqlError { .. }) => CandidateStatus::SqlError,
            Some(ExecStatus::Timeout) => CandidateStatus::Timeout,
        };
        Ok(ScoredResponse {
            reward,
            status,
            lengths: parsed.lengths,
        })
    }

    /// Scores a group of responses to the same task, executing the gold once
    /// and the candidates in parallel. Order is preserved.
    pub fn score_group(
        &self,
        responses: &[String],
        task: &Task,
        config: &RewardConfig,
    ) -> Result<Vec<ScoredResponse>, RewardError> {
        use rayon::prelude::*;
        config.validate()?;
        let gold = self.gold_result(task, config)?;
        self.executor.install(|| {
            responses
                .par_iter()
                .map(|r| {
                    let parsed = self.parse(r, config);
                    self.score_parsed(&parsed, task, &gold, config)
                })
                .collect()
        })
    }
}
