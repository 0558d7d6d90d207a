//! Sandboxed, time-limited execution of candidate SQL against SQLite files.
//!
//! Every statement runs on a fresh read-only connection owned by a single
//! worker. A progress handler interrupts the running statement once the
//! wall-clock deadline passes, so timeouts stop work instead of abandoning
//! it. Statements that would write are rejected before they are stepped.
//!
//! Failures are split in two: [`ExecStatus::SqlError`] and
//! [`ExecStatus::Timeout`] are the candidate's fault, while [`ExecError`]
//! means the environment could not run the query at all (missing database,
//! unreadable file) and must never be turned into a negative reward.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use rusqlite::types::ValueRef;
use rusqlite::{Connection, ErrorCode, OpenFlags};
use serde::{Deserialize, Serialize};

/// Default per-candidate limit while scoring rewards.
pub const DEFAULT_REWARD_LIMIT: Duration = Duration::from_secs(5);
/// Default per-query limit during evaluation.
pub const DEFAULT_EVAL_LIMIT: Duration = Duration::from_secs(30);
/// Rows materialized before a result is marked truncated.
pub const DEFAULT_ROW_CAP: usize = 10_000;

const PROGRESS_OPS: i32 = 1_000;

/// One value of a result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob { blob: Vec<u8> },
}

impl From<ValueRef<'_>> for Cell {
    fn from(v: ValueRef<'_>) -> Self {
        match v {
            ValueRef::Null => Cell::Null,
            ValueRef::Integer(i) => Cell::Integer(i),
            ValueRef::Real(r) => Cell::Real(r),
            ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Cell::Blob { blob: b.to_vec() },
        }
    }
}

/// Materialized rows of a successful query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: usize,
    #[serde(default)]
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Set when the row cap stopped materialization early.
    #[serde(default)]
    pub truncated: bool,
}

impl ResultTable {
    /// Builds a table, checking that every row has `columns` cells.
    pub fn new(columns: usize, rows: Vec<Vec<Cell>>) -> Option<Self> {
        rows.iter().all(|r| r.len() == columns).then(|| ResultTable {
            columns,
            column_names: Vec::new(),
            rows,
            truncated: false,
        })
    }

    pub fn is_well_formed(&self) -> bool {
        self.rows.iter().all(|r| r.len() == self.columns)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExecStatus {
    Success { result: ResultTable },
    SqlError { message: String },
    Timeout,
}

impl ExecStatus {
    pub fn label(&self) -> &'static str {
        match self {
            ExecStatus::Success { .. } => "success",
            ExecStatus::SqlError { .. } => "sql_error",
            ExecStatus::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    #[serde(flatten)]
    pub status: ExecStatus,
    #[serde(with = "duration_ms", rename = "elapsed_ms")]
    pub elapsed: Duration,
}

impl ExecutionOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self.status, ExecStatus::Success { .. })
    }

    pub fn result(&self) -> Option<&ResultTable> {
        match &self.status {
            ExecStatus::Success { result } => Some(result),
            _ => None,
        }
    }
}

pub(crate) mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1000.0)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(ms.max(0.0) / 1000.0))
    }
}

/// Infrastructure failures. None of these are attributable to a candidate.
#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("database `{db_ref}` not found under {root}")]
    DatabaseNotFound { db_ref: String, root: PathBuf },
    #[error("cannot open database `{db_ref}`: {source}")]
    Open {
        db_ref: String,
        #[source]
        source: rusqlite::Error,
    },
    #[error("cannot configure connection for `{db_ref}`: {source}")]
    Configure {
        db_ref: String,
        #[source]
        source: rusqlite::Error,
    },
    #[error("executor pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    #[serde(with = "duration_ms", rename = "limit_ms")]
    pub limit: Duration,
    pub row_cap: usize,
    /// Worker threads in the execution pool.
    pub jobs: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            limit: DEFAULT_REWARD_LIMIT,
            row_cap: DEFAULT_ROW_CAP,
            jobs: std::thread::available_parallelism().map_or(4, |n| n.get()),
        }
    }
}

/// Snapshot of pool utilisation, reported by the service health check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolStats {
    pub workers: usize,
    pub in_flight: usize,
    pub saturated: bool,
    pub executed: u64,
    pub timeouts: u64,
    pub infra_errors: u64,
}

#[derive(Debug, Default)]
struct Counters {
    in_flight: AtomicUsize,
    executed: AtomicU64,
    timeouts: AtomicU64,
    infra_errors: AtomicU64,
}

struct InFlight<'a>(&'a Counters);

impl<'a> InFlight<'a> {
    fn enter(c: &'a Counters) -> Self {
        c.in_flight.fetch_add(1, Ordering::SeqCst);
        InFlight(c)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Executes SQL against databases found under a root directory.
///
/// Cheap to clone; clones share the worker pool and counters.
#[derive(Clone)]
pub struct Executor {
    root: PathBuf,
    config: ExecConfig,
    pool: Arc<rayon::ThreadPool>,
    counters: Arc<Counters>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("root", &self.root)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Executor {
    pub fn new(root: impl Into<PathBuf>, config: ExecConfig) -> Result<Self, ExecError> {
        let jobs = config.jobs.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .thread_name(|i| format!("sql-exec-{i}"))
            .build()
            .map_err(|e| ExecError::Pool(e.to_string()))?;
        Ok(Executor {
            root: root.into(),
            config: ExecConfig { jobs, ..config },
            pool: Arc::new(pool),
            counters: Arc::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &ExecConfig {
        &self.config
    }

    pub fn default_limit(&self) -> Duration {
        self.config.limit
    }

    pub fn stats(&self) -> PoolStats {
        let in_flight = self.counters.in_flight.load(Ordering::SeqCst);
        PoolStats {
            workers: self.config.jobs,
            in_flight,
            saturated: in_flight >= self.config.jobs,
            executed: self.counters.executed.load(Ordering::SeqCst),
            timeouts: self.counters.timeouts.load(Ordering::SeqCst),
            infra_errors: self.counters.infra_errors.load(Ordering::SeqCst),
        }
    }

    /// Maps a database reference to a file.
    ///
    /// Tried in order: `<ref>` itself when it names an existing file,
    /// `<root>/<ref>.sqlite`, `<root>/<ref>.db`, `<root>/<ref>/<ref>.sqlite`.
    pub fn resolve(&self, db_ref: &str) -> Result<PathBuf, ExecError> {
        let direct = Path::new(db_ref);
        let mut candidates = Vec::with_capacity(5);
        if direct.extension().is_some() {
            candidates.push(self.root.join(direct));
        }
        candidates.push(self.root.join(format!("{db_ref}.sqlite")));
        candidates.push(self.root.join(format!("{db_ref}.db")));
        candidates.push(self.root.join(db_ref).join(format!("{db_ref}.sqlite")));
        candidates
            .into_iter()
            .find(|p| p.is_file())
            .ok_or_else(|| ExecError::DatabaseNotFound {
                db_ref: db_ref.to_string(),
                root: self.root.clone(),
            })
    }

    /// Opens a read-only connection; used by schema introspection too.
    pub fn open(&self, db_ref: &str) -> Result<Connection, ExecError> {
        let path = self.resolve(db_ref)?;
        open_read_only(&path).map_err(|source| ExecError::Open {
            db_ref: db_ref.to_string(),
            source,
        })
    }

    /// Runs one statement on the calling thread.
    pub fn execute(
        &self,
        db_ref: &str,
        sql: &str,
        limit: Duration,
    ) -> Result<ExecutionOutcome, ExecError> {
        let _guard = InFlight::enter(&self.counters);
        let res = self.execute_inner(db_ref, sql, limit);
        match &res {
            Ok(o) => {
                self.counters.executed.fetch_add(1, Ordering::Relaxed);
                if matches!(o.status, ExecStatus::Timeout) {
                    self.counters.timeouts.fetch_add(1, Ordering::Relaxed);
                }
            }
            Err(_) => {
                self.counters.infra_errors.fetch_add(1, Ordering::Relaxed);
            }
        }
        res
    }

    fn execute_inner(
        &self,
        db_ref: &str,
        sql: &str,
        limit: Duration,
    ) -> Result<ExecutionOutcome, ExecError> {
        let start = Instant::now();
        let conn = self.open(db_ref)?;
        let deadline = start + limit;
        conn.progress_handler(PROGRESS_OPS, Some(move || Instant::now() >= deadline))
            .map_err(|source| ExecError::Configure {
                db_ref: db_ref.to_string(),
                source,
            })?;
        let status = run_statement(&conn, sql, self.config.row_cap, deadline);
        let elapsed = start.elapsed();
        let status = match status {
            // Finished, but only after the limit: same verdict as an interrupt.
            ExecStatus::Success { .. } if elapsed >= limit => ExecStatus::Timeout,
            s => s,
        };
        Ok(ExecutionOutcome { status, elapsed })
    }

    /// Runs a group of statements on the pool. Output order matches input.
    pub fn execute_group(
        &self,
        db_ref: &str,
        sqls: &[String],
        limit: Duration,
    ) -> Vec<Result<ExecutionOutcome, ExecError>> {
        self.pool.install(|| {
            sqls.par_iter()
                .map(|sql| self.execute(db_ref, sql, limit))
                .collect()
        })
    }

    /// Runs `(db_ref, sql)` jobs on the pool. Output order matches input.
    pub fn execute_many<S: AsRef<str> + Sync>(
        &self,
        jobs: &[(S, S)],
        limit: Duration,
    ) -> Vec<Result<ExecutionOutcome, ExecError>> {
        self.pool.install(|| {
            jobs.par_iter()
                .map(|(db, sql)| self.execute(db.as_ref(), sql.as_ref(), limit))
                .collect()
        })
    }

    /// Runs an arbitrary closure on the execution pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

fn open_read_only(path: &Path) -> rusqlite::Result<Connection> {
    let conn = Connection::open_with_flags(
        path,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
    )?;
    conn.pragma_update(None, "query_only", true)?;
    conn.authorizer(Some(|ctx: rusqlite::hooks::AuthContext<'_>| {
        use rusqlite::hooks::{AuthAction, Authorization};
        match ctx.action {
            AuthAction::Attach { .. } | AuthAction::Detach { .. } => Authorization::Deny,
            _ => Authorization::Allow,
        }
    }))?;
    Ok(conn)
}

fn run_statement(conn: &Connection, sql: &str, row_cap: usize, deadline: Instant) -> ExecStatus {
    let classify = |e: rusqlite::Error| -> ExecStatus {
        let interrupted = matches!(
            e.sqlite_error_code(),
            Some(ErrorCode::OperationInterrupted)
        );
        if interrupted && Instant::now() >= deadline {
            ExecStatus::Timeout
        } else {
            ExecStatus::SqlError {
                message: e.to_string(),
            }
        }
    };

    let mut stmt = match conn.prepare(sql) {
        Ok(s) => s,
        Err(e) => return classify(e),
    };
    if !stmt.readonly() {
        return ExecStatus::SqlError {
            message: "statement would modify the database; only read-only queries are allowed"
                .into(),
        };
    }
    let columns = stmt.column_count();
    let column_names = stmt.column_names().into_iter().map(String::from).collect();
    let mut rows_iter = match stmt.query([]) {
        Ok(r) => r,
        Err(e) => return classify(e),
    };
    let mut rows = Vec::new();
    let mut truncated = false;
    loop {
        match rows_iter.next() {
            Ok(Some(row)) => {
                if rows.len() == row_cap {
                    truncated = true;
                    break;
                }
                let mut cells = Vec::with_capacity(columns);
                for i in 0..columns {
                    match row.get_ref(i) {
                        Ok(v) => cells.push(Cell::from(v)),
                        Err(e) => return classify(e),
                    }
                }
                rows.push(cells);
            }
            Ok(None) => break,
            Err(e) => return classify(e),
        }
    }
    ExecStatus::Success {
        result: ResultTable {
            columns,
            column_names,
            rows,
            truncated,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_db() -> (tempfile::TempDir, Executor) {
        let dir = tempfile::tempdir().unwrap();
        let conn = Connection::open(dir.path().join("t.sqlite")).unwrap();
        conn.execute_batch(
            "CREATE TABLE t(id INTEGER PRIMARY KEY, name TEXT);
             INSERT INTO t VALUES (1,'a'),(2,'b'),(3,NULL);",
        )
        .unwrap();
        drop(conn);
        let exec = Executor::new(
            dir.path(),
            ExecConfig {
                limit: Duration::from_secs(5),
                row_cap: 2,
                jobs: 2,
            },
        )
        .unwrap();
        (dir, exec)
    }

    #[test]
    fn select_one() {
        let (_d, ex) = fixture_db();
        let out = ex.execute("t", "SELECT 1", ex.default_limit()).unwrap();
        let table = out.result().unwrap();
        assert_eq!(table.columns, 1);
        assert_eq!(table.rows, vec![vec![Cell::Integer(1)]]);
    }

    #[test]
    fn syntax_error_is_candidate_fault() {
        let (_d, ex) = fixture_db();
        let out = ex.execute("t", "SELEC 1", ex.default_limit()).unwrap();
        assert_eq!(out.status.label(), "sql_error");
    }

    #[test]
    fn missing_database_is_infrastructure() {
        let (_d, ex) = fixture_db();
        let err = ex.execute("nope", "SELECT 1", ex.default_limit()).unwrap_err();
        assert!(matches!(err, ExecError::DatabaseNotFound { .. }));
    }

    #[test]
    fn row_cap_truncates() {
        let (_d, ex) = fixture_db();
        let out = ex.execute("t", "SELECT * FROM t", ex.default_limit()).unwrap();
        let table = out.result().unwrap();
        assert!(table.truncated);
        assert_eq!(table.rows.len(), 2);
    }

    #[test]
    fn writes_and_multi_statements_rejected() {
        let (_d, ex) = fixture_db();
        for sql in [
            "INSERT INTO t VALUES (9,'z')",
            "DELETE FROM t",
            "SELECT 1; DROP TABLE t",
            "ATTACH DATABASE 'other.sqlite' AS o",
            "VACUUM INTO 'copy.sqlite'",
        ] {
            let out = ex.execute("t", sql, ex.default_limit()).unwrap();
            assert_eq!(out.status.label(), "sql_error", "{sql}");
        }
    }

    #[test]
    fn trailing_semicolon_accepted() {
        let (_d, ex) = fixture_db();
        let out = ex.execute("t", "SELECT 1;\n", ex.default_limit()).unwrap();
        assert!(out.is_success());
    }

    #[test]
    fn group_preserves_order() {
        let (_d, ex) = fixture_db();
        let sqls = vec!["SELECT 1".to_string(), "SELEC".to_string()];
        let out = ex.execute_group("t", &sqls, ex.default_limit());
        let labels: Vec<_> = out.iter().map(|o| o.as_ref().unwrap().status.label()).collect();
        assert_eq!(labels, ["success", "sql_error"]);
        assert!(ex.execute_group("t", &[], ex.default_limit()).is_empty());
    }

    #[test]
    fn outcome_json_shape() {
        let o = ExecutionOutcome {
            status: ExecStatus::SqlError {
                message: "x".into(),
            },
            elapsed: Duration::from_millis(3),
        };
        let v = serde_json::to_value(&o).unwrap();
        assert_eq!(v["status"], "sql_error");
        assert_eq!(v["elapsed_ms"], 3.0);
        let back: ExecutionOutcome = serde_json::from_value(v).unwrap();
        assert_eq!(back.status, o.status);
    }
}
