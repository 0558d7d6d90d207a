//! Tasks, schemas, prompt assembly and training-subset construction.

mod prepare;
mod prompt;
mod schema;
mod task;

pub use prepare::{
    filter_complexity, filter_nonempty_gold, stratified_sample, GoldFilterReport, NonNullPolicy,
    RejectReason, Rejection,
};
pub use prompt::{build_prompt, sft_target, PromptTemplate, RL_TEMPLATE, SFT_TEMPLATE};
pub use schema::{
    introspect, load_schema, serialize_schema, ColumnSpec, ForeignKey, SchemaSpec, TableSpec,
    MAX_REPRESENTATIVE_VALUES,
};
pub use task::{read_jsonl, Corpus, Difficulty, Task, TrainingSample};

use std::path::PathBuf;

use crate::exec::ExecError;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("task `{id}`: {reason}")]
    InvalidTask { id: String, reason: String },
    #[error("duplicate task id `{0}`")]
    DuplicateId(String),
    #[error("task `{id}`: database not resolvable: {source}")]
    UnresolvedDatabase {
        id: String,
        #[source]
        source: ExecError,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("schema introspection failed: {0}")]
    Introspection(#[from] rusqlite::Error),
    #[error("no schema available for database `{0}`")]
    SchemaUnavailable(String),
    #[error("unresolved template placeholder `{{{0}}}`")]
    UnresolvedPlaceholder(String),
}
