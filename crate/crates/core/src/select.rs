//! Self-consistency voting over execution results.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::compare::{normalize_with, results_match_with, CompareConfig};
use crate::exec::{ExecError, ExecutionOutcome, Executor, ResultTable};
use crate::parse::{parse_response_with, LengthMeasure, ParseOptions, ParsedResponse};

/// Candidates sampled per question by default.
pub const DEFAULT_CANDIDATES: usize = 8;
/// Sampling temperature callers usually pair with [`DEFAULT_CANDIDATES`].
pub const DEFAULT_TEMPERATURE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen_index: usize,
    pub chosen_sql: Option<String>,
    pub vote_score: usize,
    pub executable_count: usize,
    pub fallback: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SelectError {
    #[error("no candidates to select from")]
    Empty,
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Outcome of a vote: winning index and its class size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vote {
    pub index: usize,
    pub score: usize,
    pub executable: usize,
}

/// Votes over raw results; `None` marks a candidate that did not execute.
///
/// Each executable candidate scores the number of executable candidates
/// (itself included) whose result matches its own. Highest score wins and
/// ties go to the lowest index. With nothing executable, index 0 wins with
/// score 0.
pub fn vote(results: &[Option<&ResultTable>], config: &CompareConfig) -> Result<Vote, SelectError> {
    if results.is_empty() {
        return Err(SelectError::Empty);
    }
    let canon: Vec<_> = results
        .iter()
        .map(|r| r.map(|t| normalize_with(t, config.semantics)))
        .collect();
    let executable = canon.iter().flatten().count();
    let mut best = Vote {
        index: 0,
        score: 0,
        executable,
    };
    for (i, a) in canon.iter().enumerate() {
        let Some(a) = a else { continue };
        let score = 1 + canon
            .iter()
            .enumerate()
            .filter(|&(j, b)| j != i && b.as_ref().is_some_and(|b| results_match_with(a, b, config.epsilon)))
            .count();
        if score > best.score {
            best = Vote {
                index: i,
                score,
                executable,
            };
        }
    }
    Ok(best)
}

/// Selects among parsed candidates with their execution outcomes.
///
/// A candidate counts as executable only if it is well formed, has SQL and
/// its outcome is a success.
pub fn select(
    candidates: &[(ParsedResponse, Option<ExecutionOutcome>)],
    config: &CompareConfig,
) -> Result<SelectionResult, SelectError> {
    let results: Vec<Option<&ResultTable>> = candidates
        .iter()
        .map(|(p, o)| {
            if p.format_ok && p.sql.is_some() {
                o.as_ref().and_then(ExecutionOutcome::result)
            } else {
                None
            }
        })
        .collect();
    let v = vote(&results, config)?;
    Ok(SelectionResult {
        chosen_index: v.index,
        chosen_sql: candidates[v.index].0.sql.clone(),
        vote_score: v.score,
        executable_count: v.executable,
        fallback: v.executable == 0,
    })
}

/// Selects among bare SQL strings already executed.
pub fn select_sql(
    sqls: &[String],
    outcomes: &[ExecutionOutcome],
    config: &CompareConfig,
) -> Result<SelectionResult, SelectError> {
    let results: Vec<_> = outcomes.iter().map(ExecutionOutcome::result).collect();
    let v = vote(&results, config)?;
    Ok(SelectionResult {
        chosen_index: v.index,
        chosen_sql: sqls.get(v.index).cloned(),
        vote_score: v.score,
        executable_count: v.executable,
        fallback: v.executable == 0,
    })
}

/// Parses and executes full model responses, then selects.
pub fn select_responses(
    executor: &Executor,
    db_ref: &str,
    responses: &[String],
    limit: Duration,
    measure: LengthMeasure,
    config: &CompareConfig,
) -> Result<SelectionResult, SelectError> {
    if responses.is_empty() {
        return Err(SelectError::Empty);
    }
    let parsed: Vec<ParsedResponse> = responses
        .iter()
        .map(|r| parse_response_with(r, |s| measure.measure(s), ParseOptions::default()))
        .collect();
    let runnable: Vec<String> = parsed
        .iter()
        .filter(|p| p.format_ok)
        .filter_map(|p| p.sql.clone())
        .collect();
    let mut outcomes = executor.execute_group(db_ref, &runnable, limit).into_iter();
    let mut candidates = Vec::with_capacity(parsed.len());
    for p in parsed {
        let outcome = if p.format_ok && p.sql.is_some() {
            Some(outcomes.next().expect("one outcome per runnable candidate")?)
        } else {
            None
        };
        candidates.push((p, outcome));
    }
    select(&candidates, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Cell;
    use proptest::prelude::*;

    fn table(v: i64) -> ResultTable {
        ResultTable::new(1, vec![vec![Cell::Integer(v)]]).unwrap()
    }

    /// Brute force over all ordered pairs.
    fn oracle(classes: &[Option<i64>]) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, a) in classes.iter().enumerate() {
            if let Some(a) = a {
                let s = classes.iter().filter(|b| **b == Some(*a)).count();
                if s > best.1 {
                    best = (i, s);
                }
            }
        }
        best
    }

    fn run(classes: &[Option<i64>]) -> Vote {
        let tables: Vec<Option<ResultTable>> = classes.iter().map(|c| c.map(table)).collect();
        let refs: Vec<_> = tables.iter().map(Option::as_ref).collect();
        vote(&refs, &CompareConfig::default()).unwrap()
    }

    #[test]
    fn majority_wins() {
        let v = run(&[Some(1), Some(1), Some(2)]);
        assert_eq!((v.index, v.score), (0, 2));
        let v = run(&[Some(2), Some(1), Some(1)]);
        assert_eq!((v.index, v.score), (1, 2));
    }

    #[test]
    fn fallback_and_single_executable() {
        let v = run(&[None, None, None]);
        assert_eq!((v.index, v.score, v.executable), (0, 0, 0));
        let v = run(&[None, None, None, None, None, Some(3), None, None]);
        assert_eq!((v.index, v.score, v.executable), (5, 1, 1));
        assert!(matches!(vote(&[], &CompareConfig::default()), Err(SelectError::Empty)));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let v = run(&[None, Some(2), Some(1), Some(1), Some(2)]);
        assert_eq!((v.index, v.score), (1, 2));
    }

    #[test]
    fn truncated_results_vote_alone() {
        let mut t = table(1);
        t.truncated = true;
        let plain = table(1);
        let refs = [Some(&t), Some(&t), Some(&plain)];
        let v = vote(&refs, &CompareConfig::default()).unwrap();
        assert_eq!((v.index, v.score), (0, 1));
    }

    #[test]
    fn select_ignores_malformed() {
        let good = |sql: &str| ParsedResponse {
            raw: String::new(),
            think: None,
            answer: None,
            sql: Some(sql.into()),
            format_ok: true,
            lengths: Default::default(),
        };
        let ok = |v| ExecutionOutcome {
            status: crate::exec::ExecStatus::Success { result: table(v) },
            elapsed: Duration::ZERO,
        };
        let mut bad = good("SELECT 2");
        bad.format_ok = false;
        let cands = vec![
            (bad.clone(), Some(ok(2))),
            (bad, Some(ok(2))),
            (good("SELECT 1"), Some(ok(1))),
        ];
        let r = select(&cands, &CompareConfig::default()).unwrap();
        assert_eq!(r.chosen_index, 2);
        assert_eq!(r.chosen_sql.as_deref(), Some("SELECT 1"));
        assert_eq!((r.vote_score, r.executable_count, r.fallback), (1, 1, false));
    }

    proptest! {
        #[test]
        fn agrees_with_oracle(classes in prop::collection::vec(prop::option::of(0i64..4), 1..10)) {
            let v = run(&classes);
            let (idx, score) = oracle(&classes);
            prop_assert_eq!((v.index, v.score), (idx, score));
            let executable = classes.iter().flatten().count();
            prop_assert_eq!(v.executable, executable);
            if executable > 0 {
                prop_assert!(v.score >= 1 && v.score <= executable);
            }
        }

        #[test]
        fn chosen_result_permutation_invariant(
            classes in prop::collection::vec(prop::option::of(0i64..4), 1..10),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let v = run(&classes);
            // a tie between distinct classes is broken by position, so only
            // a unique winning class is permutation invariant
            let winner = classes[v.index];
            let rivals = classes.iter().flatten().filter(|c| Some(**c) != winner)
                .filter(|c| classes.iter().filter(|d| *d == &Some(**c)).count() == v.score)
                .count();
            prop_assume!(rivals == 0);
            let mut shuffled = classes.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let w = run(&shuffled);
            prop_assert_eq!(shuffled[w.index], winner);
        }

        #[test]
        fn single_candidate_is_identity(c in prop::option::of(0i64..4)) {
            let v = run(&[c]);
            prop_assert_eq!(v.index, 0);
        }
    }
}
