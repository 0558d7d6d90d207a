mod common;

use std::time::{Duration, Instant};

use sqlreward_core::{ExecConfig, ExecStatus, Executor};

fn snapshot() -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(common::fixtures().join("db"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.display().to_string(), std::fs::read(&p).unwrap()))
        .collect()
}

const HOSTILE: &[(&str, &str)] = &[
    ("shop", "INSERT INTO customers VALUES (99, 'Mallory', 'Oslo', NULL)"),
    ("shop", "UPDATE products SET price = 0"),
    ("shop", "DELETE FROM orders"),
    ("shop", "DROP TABLE customers"),
    ("school", "CREATE TABLE x(a)"),
    ("school", "ALTER TABLE students ADD COLUMN y"),
    ("flights", "REPLACE INTO airports VALUES ('XXX', 'x', 'y')"),
    ("flights", "PRAGMA journal_mode = DELETE"),
    ("flights", "ATTACH DATABASE 'other.sqlite' AS o"),
    ("shop", "SELECT 1; DROP TABLE customers"),
    ("shop", "VACUUM"),
    ("school", "CREATE INDEX i ON students(name)"),
];

#[test]
fn writes_fail_and_files_unchanged() {
    let before = snapshot();
    let ex = common::executor();
    for (db, sql) in HOSTILE {
        let o = ex.execute(db, sql, Duration::from_secs(5)).unwrap();
        assert!(matches!(o.status, ExecStatus::SqlError { .. }), "{sql}: {:?}", o.status);
    }
    assert_eq!(snapshot(), before);
}

#[test]
fn recursive_cte_times_out() {
    let ex = Executor::new(
        common::fixtures().join("db"),
        ExecConfig {
            limit: Duration::from_millis(300),
            ..ExecConfig::default()
        },
    )
    .unwrap();
    let sql = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT count(*) FROM c";
    let start = Instant::now();
    let o = ex.execute("shop", sql, Duration::from_millis(300)).unwrap();
    let wall = start.elapsed();
    assert!(matches!(o.status, ExecStatus::Timeout));
    assert!(wall < Duration::from_millis(800), "{wall:?}");
    assert_eq!(ex.stats().timeouts, 1);
}
