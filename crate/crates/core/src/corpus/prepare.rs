//! Training-subset construction: per-difficulty sampling, complexity
//! filtering, and removal of samples whose gold SQL yields no usable result.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Difficulty, TrainingSample};
use crate::exec::{ExecStatus, Executor};

/// Picks up to `per_level` samples from each difficulty level present.
///
/// Levels with fewer samples contribute all of them. Each level draws from
/// its own RNG stream derived from `seed`, and the result keeps input order.
pub fn stratified_sample(
    samples: &[TrainingSample],
    per_level: usize,
    seed: u64,
) -> Vec<TrainingSample> {
    let mut by_level: BTreeMap<Difficulty, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_level.entry(s.task.difficulty).or_default().push(i);
    }
    let mut chosen = Vec::new();
    for (level, idx) in by_level {
        if idx.len() <= per_level {
            chosen.extend(idx);
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(level as u64 + 1);
        chosen.extend(
            rand::seq::index::sample(&mut rng, idx.len(), per_level)
                .into_iter()
                .map(|k| idx[k]),
        );
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| samples[i].clone()).collect()
}

/// Samples at exactly `level`, in input order.
pub fn filter_complexity(samples: &[TrainingSample], level: Difficulty) -> Vec<TrainingSample> {
    samples
        .iter()
        .filter(|s| s.task.difficulty == level)
        .cloned()
        .collect()
}

/// What counts as a usable ("non-null") gold result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonNullPolicy {
    /// At least one row with at least one non-NULL cell.
    #[default]
    AnyNonNullCell,
    /// At least one row and no NULL cell anywhere.
    EveryCellNonNull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ExecutionFailure,
    Timeout,
    EmptyResult,
    NullResult,
    Truncated,
    DatabaseUnavailable,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::ExecutionFailure => "execution failure",
            RejectReason::Timeout => "timeout",
            RejectReason::EmptyResult => "empty result",
            RejectReason::NullResult => "null result",
            RejectReason::Truncated => "result truncated",
            RejectReason::DatabaseUnavailable => "database unavailable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoldFilterReport {
    pub kept: Vec<TrainingSample>,
    pub rejected: Vec<Rejection>,
}

/// Keeps samples whose gold SQL runs and returns a usable result.
///
/// Gold queries run in parallel on the executor pool with its default
/// limit. A database that cannot be opened rejects only the affected
/// samples.
pub fn filter_nonempty_gold(
    samples: &[TrainingSample],
    executor: &Executor,
    policy: NonNullPolicy,
) -> GoldFilterReport {
    let jobs: Vec<(&str, &str)> = samples
        .iter()
        .map(|s| (s.task.db_ref.as_str(), s.task.gold_sql.as_str()))
        .collect();
    let outcomes = executor.execute_many(&jobs, executor.default_limit());
    let mut report = GoldFilterReport::default();
    for (sample, outcome) in samples.iter().zip(outcomes) {
        let reject = |reason, detail: String| Rejection {
            id: sample.task.id.clone(),
            reason,
            detail,
        };
        let verdict = match outcome {
            Err(e) => Err(reject(RejectReason::DatabaseUnavailable, e.to_string())),
            Ok(o) => match o.status {
                ExecStatus::SqlError { message } => {
                    Err(reject(RejectReason::ExecutionFailure, message))
                }
                ExecStatus::Timeout => Err(reject(
                    RejectReason::Timeout,
                    format!("exceeded {:?}", executor.default_limit()),
                )),
                ExecStatus::Success { result } => {
                    let cells = || result.rows.iter().flatten();
                    let usable = match policy {
                        NonNullPolicy::AnyNonNullCell => {
                            cells().any(|c| !matches!(c, crate::exec::Cell::Null))
                        }
                        NonNullPolicy::EveryCellNonNull => {
                            cells().all(|c| !matches!(c, crate::exec::Cell::Null))
                        }
                    };
                    if result.truncated {
                        Err(reject(RejectReason::Truncated, "row cap reached".into()))
                    } else if result.rows.is_empty() {
                        Err(reject(RejectReason::EmptyResult, "no rows".into()))
                    } else if !usable || result.columns == 0 {
                        Err(reject(RejectReason::NullResult, "NULL cells only".into()))
                    } else {
                        Ok(())
                    }
                }
            },
        };
        match verdict {
            Ok(()) => report.kept.push(sample.clone()),
            Err(r) => report.rejected.push(r),
        }
    }
    report
}
