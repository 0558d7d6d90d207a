//! Verifiable-reward environment for NL2SQL reinforcement learning.
//!
//! The crate scores model responses with a gated composite reward
//! (format, execution, result and length terms), computes the
//! group-relative advantages and clipped/KL-regularized objective used by
//! GRPO, picks answers by self-consistency voting over execution results,
//! prepares training corpora, and measures execution accuracy.
//!
//! The policy itself lives elsewhere; [`sim`] contains a tabular softmax
//! stand-in used to check that the reward and objective drive learning.

pub mod compare;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod exec;
pub mod grpo;
pub mod parse;
pub mod reward;
pub mod select;
pub mod sim;

pub use compare::{normalize, results_match, CanonicalResult, CompareConfig, RowSemantics};
pub use config::EnvConfig;
pub use corpus::{Corpus, Difficulty, SchemaSpec, Task, TrainingSample};
pub use eval::{evaluate, evaluate_with_selection, EvaluationReport};
pub use exec::{Cell, ExecConfig, ExecError, ExecStatus, ExecutionOutcome, Executor, ResultTable};
pub use grpo::{GrpoBatch, GrpoConfig, GrpoError, GrpoTerms};
pub use parse::{parse_response, LengthMeasure, LengthStats, ParsedResponse};
pub use reward::{RewardBreakdown, RewardConfig, RewardEngine, RewardError};
pub use select::{select, SelectionResult};
