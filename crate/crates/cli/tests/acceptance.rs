//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/common/mutate.rs"]
mod mutate;

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};
use sqlreward_core::compare::{normalize, results_match};
use sqlreward_core::corpus::{read_jsonl, sft_target};
use sqlreward_core::eval::EvalConfig;
use sqlreward_core::exec::DEFAULT_REWARD_LIMIT;
use sqlreward_core::grpo::{clipped_surrogate, group_advantages, kl_penalty, GrpoConfig};
use sqlreward_core::reward::{
    execution_reward, format_reward, length_reward, result_reward, LengthTerms, RewardBand,
};
use sqlreward_core::sim::{group_objective, log_softmax, score_pools, PoolFile};
use sqlreward_core::{
    evaluate, evaluate_with_selection, CompareConfig, Corpus, Difficulty, ExecConfig, ExecStatus,
    ExecutionOutcome, Executor, LengthStats, ParsedResponse, RewardConfig, RewardEngine, Task,
};
use sqlreward_service::{router, AppState};
use tower::ServiceExt;

// Tolerances and limits.
const WORKED_EXAMPLE_TOL: f64 = 1e-9;
const FORMULA_BUDGET: Duration = Duration::from_secs(1);
const FUZZ_CASES: usize = 1000;
const FUZZ_BUDGET: Duration = Duration::from_secs(60);
const ADVANTAGE_TOL: f64 = 1e-9;
const ADVANTAGE_VECTORS: usize = 100;
const KL_PAIRS: usize = 10_000;
const KL_LN2: f64 = 0.30685;
const KL_LN2_TOL: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
const SIM_BUDGET: Duration = Duration::from_secs(60);
const SIM_MIN_REWARD: f64 = 6.0;
const SIM_MIN_CORRECT_PROB: f64 = 0.9;
const SELECTION_MIN_GAIN_PP: f64 = 15.0;
const WIRE_BATCH: usize = 64;
const TIMEOUT_SLACK: Duration = Duration::from_millis(500);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn executor() -> Executor {
    Executor::new(fixtures().join("db"), ExecConfig::default()).unwrap()
}

fn corpus(ex: &Executor) -> Corpus {
    Corpus::load(&fixtures().join("corpus/tasks.jsonl"), ex).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn parsed(format_ok: bool) -> ParsedResponse {
    ParsedResponse {
        raw: String::new(),
        think: None,
        answer: None,
        sql: format_ok.then(|| "SELECT 1".to_string()),
        format_ok,
        lengths: LengthStats::default(),
    }
}

fn success(v: i64) -> ExecutionOutcome {
    ExecutionOutcome {
        status: ExecStatus::Success {
            result: sqlreward_core::ResultTable::new(1, vec![vec![sqlreward_core::Cell::Integer(v)]]).unwrap(),
        },
        elapsed: Duration::ZERO,
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let gold = normalize(&success(1).result().unwrap().clone());
    let cmp = CompareConfig::default();
    let ok = parsed(true);
    let bad = parsed(false);
    let err = ExecutionOutcome {
        status: ExecStatus::SqlError { message: "no such table".into() },
        elapsed: Duration::ZERO,
    };
    let timeout = ExecutionOutcome {
        status: ExecStatus::Timeout,
        elapsed: DEFAULT_REWARD_LIMIT,
    };
    // (name, got, expected)
    let branches: Vec<(&str, i32, i32)> = vec![
        ("S_f well formed", format_reward(&ok), 1),
        ("S_f malformed", format_reward(&bad), -1),
        ("S_e executable", execution_reward(&ok, Some(&success(1))), 2),
        ("S_e error", execution_reward(&ok, Some(&err)), -2),
        ("S_e format failed", execution_reward(&bad, None), 0),
        ("S_r correct", result_reward(&ok, Some(&success(1)), &gold, &cmp), 3),
        ("S_r wrong", result_reward(&ok, Some(&success(2)), &gold, &cmp), -3),
        ("S_r format failed", result_reward(&bad, None, &gold, &cmp), 0),
        ("S_r not executable", result_reward(&ok, Some(&timeout), &gold, &cmp), 0),
    ];
    for (name, got, want) in &branches {
        ensure(got == want, || format!("{name}: got {got}, want {want}"))?;
    }
    let cfg = RewardConfig::default();
    let within = LengthStats { response: 1000, think: 800, answer: 200, sql: 150 };
    let t = length_reward(&within, &cfg, true);
    let s_tl = 1000.0 / 2048.0;
    let s_al = 150.0 / 200.0;
    ensure(t.s_tl == s_tl && t.s_al == s_al && t.s_l == 0.5 * s_tl + s_al, || format!("S_l within: {t:?}"))?;
    let over = LengthStats { response: 3000, think: 2600, answer: 300, sql: 120 };
    let t = length_reward(&over, &cfg, true);
    ensure(t.s_l == 0.5 + 120.0 / 300.0, || format!("S_l overlong: {t:?}"))?;
    ensure(length_reward(&within, &cfg, false) == LengthTerms::default(), || "S_l not gated".into())?;

    // worked example end to end through the engine with caller lengths
    let ex = executor();
    let c = corpus(&ex);
    let engine = RewardEngine::new(ex, cfg.clone()).unwrap();
    let task = c.get("t01").unwrap();
    let response = sft_target("Count the rows.", &task.gold_sql);
    let scored = engine.compute_reward_with(&response, task, &cfg, Some(within)).map_err(|e| e.to_string())?;
    let expected = 6.0 + 0.5 * (1000.0 / 2048.0) + 150.0 / 200.0;
    let total = scored.reward.total;
    ensure((total - expected).abs() <= WORKED_EXAMPLE_TOL, || format!("worked example {total} vs {expected}"))?;
    ensure(format!("{total:.5}") == "6.99414", || format!("worked example rounds to {total:.5}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < FORMULA_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "9 branches + 2 S_l cases exact; worked example total {total} (|err| <= {WORKED_EXAMPLE_TOL:e}); {elapsed:.2?}"
    ))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let ex = executor();
    let c = corpus(&ex);
    let engine = RewardEngine::new(ex, RewardConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut bands: HashMap<RewardBand, usize> = HashMap::new();
    for i in 0..FUZZ_CASES {
        let task = &c.tasks()[rng.gen_range(0..c.len())];
        let base = sft_target("Work out the tables and filters.", &task.gold_sql);
        let response = mutate::mutate(&base, &mut rng);
        let s = engine.compute_reward(&response, task).map_err(|e| format!("case {i}: {e}"))?;
        let band = s.reward.band().ok_or_else(|| format!("case {i}: total {} outside partition", s.reward.total))?;
        s.reward.check_gating().map_err(|e| format!("case {i}: {e}: {:?}", s.reward))?;
        *bands.entry(band).or_default() += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < FUZZ_BUDGET, || format!("took {elapsed:?}"))?;
    let n = |b| bands.get(&b).copied().unwrap_or(0);
    ensure(
        n(RewardBand::Failed) > 0 && n(RewardBand::Wrong) > 0 && n(RewardBand::Correct) > 0,
        || format!("a band was never reached: {bands:?}"),
    )?;
    Ok(format!(
        "{FUZZ_CASES} mutated responses: {} at -1, {} at 0, {} in (6, 7.5]; gating intact; {elapsed:.2?}",
        n(RewardBand::Failed),
        n(RewardBand::Wrong),
        n(RewardBand::Correct)
    ))
}

#[derive(Deserialize)]
struct OraclePair {
    id: String,
    db_ref: String,
    gold_sql: String,
    prediction: String,
    label: bool,
    case: String,
}

fn criterion_3() -> Outcome {
    let ex = executor();
    let pairs: Vec<OraclePair> = read_jsonl(&fixtures().join("corpus/ex_oracle.jsonl")).map_err(|e| e.to_string())?;
    ensure(pairs.len() == 20, || format!("{} pairs", pairs.len()))?;
    let tasks: Vec<Task> = pairs
        .iter()
        .map(|p| Task {
            id: p.id.clone(),
            question: p.case.clone(),
            external_knowledge: None,
            db_ref: p.db_ref.clone(),
            gold_sql: p.gold_sql.clone(),
            difficulty: Difficulty::Unknown,
        })
        .collect();
    let preds: Vec<String> = pairs.iter().map(|p| p.prediction.clone()).collect();
    let report = evaluate(&ex, &tasks, &preds, &EvalConfig::default()).map_err(|e| e.to_string())?;
    ensure(report.excluded_count == 0, || format!("{} excluded", report.excluded_count))?;
    let got: HashMap<_, _> = report.per_item.iter().map(|i| (i.task_id.clone(), i.matched)).collect();
    let agree = pairs.iter().filter(|p| got.get(&p.id) == Some(&p.label)).count();
    let wrong: Vec<_> = pairs.iter().filter(|p| got.get(&p.id) != Some(&p.label)).map(|p| p.id.as_str()).collect();
    ensure(agree == 20, || format!("{agree}/20 agree; disagree: {wrong:?}"))?;
    let cases = ["reorder", "duplicate", "real", "NULL"];
    for c in cases {
        ensure(pairs.iter().any(|p| p.case.contains(c)), || format!("no `{c}` case in fixture"))?;
    }
    Ok("20/20 labels reproduced (reorder, duplicate, integer vs real, NULL vs empty text included)".into())
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_sum: f64 = 0.0;
    let mut worst_std: f64 = 0.0;
    for _ in 0..ADVANTAGE_VECTORS {
        let n = rng.gen_range(2..=16);
        let mut r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..7.5)).collect();
        r[0] = -1.0;
        r[1] = 7.0;
        let a = group_advantages(&r).map_err(|e| e.to_string())?;
        let m = a.len() as f64;
        let sum: f64 = a.iter().sum();
        let std = (a.iter().map(|x| (x - sum / m).powi(2)).sum::<f64>() / m).sqrt();
        worst_sum = worst_sum.max(sum.abs());
        worst_std = worst_std.max((std - 1.0).abs());
    }
    ensure(worst_sum <= ADVANTAGE_TOL && worst_std <= ADVANTAGE_TOL, || {
        format!("max |sum A| {worst_sum:e}, max |std A - 1| {worst_std:e}")
    })?;

    let a = clipped_surrogate(1.3, 1.0, 0.2);
    let b = clipped_surrogate(0.5, -1.0, 0.2);
    ensure(a == 1.2 && b == -0.8, || format!("surrogate cases gave {a}, {b}"))?;

    let mut min_kl = f64::INFINITY;
    for _ in 0..KL_PAIRS {
        let new = rng.gen_range(-30.0..0.0);
        let rf = rng.gen_range(-30.0..0.0);
        min_kl = min_kl.min(kl_penalty(new, rf));
    }
    ensure(min_kl >= 0.0, || format!("negative KL {min_kl}"))?;
    let kl = kl_penalty(0.0, 2f64.ln());
    ensure((kl - KL_LN2).abs() <= KL_LN2_TOL, || format!("ln 2 case gave {kl}"))?;

    // 3-action softmax toy
    let theta = [0.4, -0.2, 0.1];
    let reference = [0.0, 0.0, 0.0];
    let actions = [0, 1, 2, 0, 2, 1, 0, 0];
    let rewards = [7.1, -1.0, 0.0, 6.8, 0.0, -1.0, 7.1, 6.8];
    let old_lp = log_softmax(&[0.35, -0.15, 0.12]);
    let old: Vec<f64> = actions.iter().map(|&a| old_lp[a]).collect();
    let cfg = GrpoConfig { beta: 0.04, ..GrpoConfig::default() };
    let f = |t: &[f64]| group_objective(t, &reference, &actions, &old, &rewards, &cfg).map(|x| x.0);
    let (_, grad) = group_objective(&theta, &reference, &actions, &old, &rewards, &cfg).map_err(|e| e.to_string())?;
    let mut worst_rel: f64 = 0.0;
    for k in 0..3 {
        let mut p = theta;
        p[k] += FD_STEP;
        let mut m = theta;
        m[k] -= FD_STEP;
        let fd = (f(&p).unwrap() - f(&m).unwrap()) / (2.0 * FD_STEP);
        let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs());
        worst_rel = worst_rel.max(rel);
    }
    ensure(worst_rel <= FD_REL_TOL, || format!("finite-difference relative error {worst_rel:e}"))?;
    Ok(format!(
        "advantages |sum| {worst_sum:.1e}, |std-1| {worst_std:.1e}; surrogates 1.2/-0.8 exact; min KL {min_kl:.1e}, ln2 KL {kl:.6}; FD rel err {worst_rel:.1e}"
    ))
}

fn criterion_5() -> Outcome {
    // pool structure
    let ex = executor();
    let c = corpus(&ex);
    let engine = RewardEngine::new(ex, RewardConfig::default()).unwrap();
    let pools = PoolFile::load(&fixtures().join("sim/pools.json")).map_err(|e| e.to_string())?;
    let scored = score_pools(&engine, &c, &pools).map_err(|e| e.to_string())?;
    ensure(scored.len() == 5, || format!("{} tasks", scored.len()))?;
    for p in &scored {
        ensure(p.rewards.len() == 6 && p.correct().len() == 1, || format!("pool {}: {:?}", p.task_id, p.rewards))?;
    }

    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_sqlreward"))
        .current_dir(fixtures().join(".."))
        .args(["simulate", "--steps", "500", "--seed", "7", "--group-size", "8"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    ensure(lines.len() == 501, || format!("{} output lines", lines.len()))?;
    let summary: Value = serde_json::from_str(lines[500]).map_err(|e| e.to_string())?;
    let s = &summary["summary"];
    let last = s["last_window_mean"].as_f64().unwrap_or(f64::NAN);
    let first = s["first_window_mean"].as_f64().unwrap_or(f64::NAN);
    let expected = s["final_expected_reward"].as_f64().unwrap_or(f64::NAN);
    let probs = s["final_correct_prob"].as_object().ok_or("no probabilities")?;
    let min_p = probs.values().filter_map(Value::as_f64).fold(f64::INFINITY, f64::min);
    ensure(last > SIM_MIN_REWARD && expected > SIM_MIN_REWARD, || {
        format!("mean reward last-50 {last}, expected {expected}")
    })?;
    ensure(probs.len() == 5 && min_p >= SIM_MIN_CORRECT_PROB, || format!("correct probabilities {probs:?}"))?;
    ensure(last > first, || format!("no improvement: first {first}, last {last}"))?;
    ensure(elapsed < SIM_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "mean reward last 50 steps {last:.4} (first 50: {first:.4}), policy expectation {expected:.4}, min P(correct) {min_p:.4}; {elapsed:.2?}"
    ))
}

#[derive(Deserialize)]
struct CandidateLine {
    task_id: String,
    candidates: Vec<String>,
}

fn criterion_6() -> Outcome {
    let ex = executor();
    let c = corpus(&ex);
    let lines: Vec<CandidateLine> = read_jsonl(&fixtures().join("selection/candidates.jsonl")).map_err(|e| e.to_string())?;
    let tasks: Vec<Task> = lines.iter().map(|l| c.get(&l.task_id).unwrap().clone()).collect();
    let groups: Vec<Vec<String>> = lines.iter().map(|l| l.candidates.clone()).collect();

    // brute-force oracle: execute everything, vote over all pairs
    let mut majority = 0;
    let mut wrong_first = 0;
    let mut oracle_sel = 0;
    let mut oracle_first = 0;
    for (t, g) in tasks.iter().zip(&groups) {
        let gold = match ex.execute(&t.db_ref, &t.gold_sql, DEFAULT_REWARD_LIMIT).map_err(|e| e.to_string())?.status {
            ExecStatus::Success { result } => normalize(&result),
            other => return Err(format!("gold for {} failed: {other:?}", t.id)),
        };
        let results: Vec<_> = g
            .iter()
            .map(|sql| match ex.execute(&t.db_ref, sql, DEFAULT_REWARD_LIMIT).unwrap().status {
                ExecStatus::Success { result } => Some(normalize(&result)),
                _ => None,
            })
            .collect();
        let correct: Vec<bool> = results.iter().map(|r| r.as_ref().is_some_and(|r| results_match(r, &gold))).collect();
        majority += usize::from(correct.iter().filter(|&&x| x).count() * 2 > g.len());
        wrong_first += usize::from(!correct[0]);
        oracle_first += usize::from(correct[0]);
        let mut best = (0usize, 0usize);
        for i in 0..results.len() {
            if let Some(a) = &results[i] {
                let votes = results.iter().filter(|b| b.as_ref().is_some_and(|b| results_match(a, b))).count();
                if votes > best.1 {
                    best = (i, votes);
                }
            }
        }
        oracle_sel += usize::from(correct[best.0]);
    }
    let n = tasks.len();
    ensure(majority * 10 == n * 7 && wrong_first * 10 == n * 4, || {
        format!("corpus construction: {majority}/{n} correct-majority, {wrong_first}/{n} wrong-first")
    })?;
    let cfg = EvalConfig::default();
    let first: Vec<String> = groups.iter().map(|g| g[0].clone()).collect();
    let ex_first = evaluate(&ex, &tasks, &first, &cfg).map_err(|e| e.to_string())?.ex_overall;
    let ex_sel = evaluate_with_selection(&ex, &tasks, &groups, &cfg).map_err(|e| e.to_string())?.ex_overall;
    let oracle_first = 100.0 * oracle_first as f64 / n as f64;
    let oracle_sel = 100.0 * oracle_sel as f64 / n as f64;
    ensure(ex_first == oracle_first && ex_sel == oracle_sel, || {
        format!("harness {ex_first}/{ex_sel} vs oracle {oracle_first}/{oracle_sel}")
    })?;
    let gain = ex_sel - ex_first;
    ensure(gain >= SELECTION_MIN_GAIN_PP, || format!("gain {gain} pp"))?;
    Ok(format!("first-candidate EX {ex_first:.1}, selection EX {ex_sel:.1}, gain {gain:.1} pp (oracle agrees)"))
}

fn criterion_7() -> Outcome {
    let ex = executor();
    let c = corpus(&ex);
    let engine = RewardEngine::new(ex, RewardConfig::default()).unwrap();
    let state = AppState::new(engine.clone(), Some(c.clone()), GrpoConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut items = Vec::with_capacity(WIRE_BATCH);
    for i in 0..WIRE_BATCH {
        let t = &c.tasks()[i % c.len()];
        let good = sft_target("Plan the query.", &t.gold_sql);
        let response = match i % 4 {
            0 => good,
            1 => mutate::mutate(&good, &mut rng),
            2 => sft_target("Plan.", "SELECT * FROM nowhere"),
            _ => format!("```sql\n{}\n```", t.gold_sql),
        };
        let lengths = (i % 8 == 0).then_some(LengthStats { response: 900, think: 500, answer: 300, sql: 120 });
        items.push((t.clone(), response, lengths));
    }
    let body = json!({
        "items": items.iter().map(|(t, r, l)| json!({"task_id": t.id, "response_text": r, "lengths": l})).collect::<Vec<_>>()
    })
    .to_string();

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let post = |body: String| {
        let app = router(state.clone());
        rt.block_on(async move {
            let req = Request::builder()
                .method("POST")
                .uri("/v1/rewards")
                .header("content-type", "application/json")
                .body(Body::from(body))
                .unwrap();
            let resp = app.oneshot(req).await.unwrap();
            let status = resp.status();
            let bytes = resp.into_body().collect().await.unwrap().to_bytes();
            (status, serde_json::from_slice::<Value>(&bytes).unwrap())
        })
    };
    let (s1, first) = post(body.clone());
    let (s2, second) = post(body);
    ensure(s1.is_success() && s2.is_success(), || format!("status {s1} / {s2}"))?;
    let wire = first["items"].as_array().ok_or("no items")?;
    ensure(wire.len() == WIRE_BATCH, || format!("{} items back", wire.len()))?;
    let cfg = engine.config().clone();
    let mut bands = HashMap::new();
    for (i, ((t, r, l), w)) in items.iter().zip(wire).enumerate() {
        let lib = engine.compute_reward_with(r, t, &cfg, *l).map_err(|e| e.to_string())?;
        let lib = serde_json::to_value(&lib).unwrap();
        ensure(&lib == w, || format!("item {i}: wire {w} vs library {lib}"))?;
        *bands.entry(w["status"].as_str().unwrap_or("").to_string()).or_insert(0) += 1;
    }
    ensure(first["items"] == second["items"], || "second post differs".into())?;
    ensure(bands.len() >= 3, || format!("batch not mixed: {bands:?}"))?;
    Ok(format!("{WIRE_BATCH} items field-identical to library calls, repeat post identical; statuses {bands:?}"))
}

fn digest(bytes: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    bytes.hash(&mut h);
    h.finish()
}

fn criterion_8() -> Outcome {
    let dbs = ["shop", "school", "flights"];
    let read = |db: &str| std::fs::read(fixtures().join(format!("db/{db}.sqlite"))).unwrap();
    let before: Vec<(Vec<u8>, u64)> = dbs.iter().map(|d| read(d)).map(|b| { let h = digest(&b); (b, h) }).collect();
    let ex = executor();
    let hostile = [
        ("shop", "INSERT INTO customers (id, name) VALUES (100, 'Mallory')"),
        ("shop", "INSERT INTO orders SELECT * FROM orders"),
        ("shop", "UPDATE products SET price = price * 2"),
        ("shop", "UPDATE customers SET email = NULL"),
        ("shop", "DROP TABLE orders"),
        ("school", "DROP TABLE IF EXISTS students"),
        ("school", "DELETE FROM enrollments"),
        ("school", "INSERT OR REPLACE INTO courses VALUES (1, 'x', 0)"),
        ("flights", "UPDATE flights SET distance = 0 WHERE id = 1"),
        ("flights", "DROP VIEW IF EXISTS v"),
        ("flights", "CREATE TABLE evil (x)"),
        ("shop", "SELECT 1; DELETE FROM customers"),
    ];
    for (db, sql) in hostile {
        let o = ex.execute(db, sql, DEFAULT_REWARD_LIMIT).map_err(|e| e.to_string())?;
        ensure(matches!(o.status, ExecStatus::SqlError { .. }), || format!("`{sql}` gave {}", o.status.label()))?;
    }
    for (d, (bytes, h)) in dbs.iter().zip(&before) {
        let now = read(d);
        ensure(&now == bytes && digest(&now) == *h, || format!("{d} changed"))?;
    }

    let limit = DEFAULT_REWARD_LIMIT;
    let sql = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT max(x) FROM c";
    let start = Instant::now();
    let o = ex.execute("shop", sql, limit).map_err(|e| e.to_string())?;
    let wall = start.elapsed();
    ensure(matches!(o.status, ExecStatus::Timeout), || format!("recursive CTE gave {}", o.status.label()))?;
    ensure(wall <= limit + TIMEOUT_SLACK, || format!("timeout after {wall:?} (limit {limit:?})"))?;
    Ok(format!(
        "{} write/DDL statements rejected, {} database files byte-identical; recursive CTE timed out after {wall:.2?} (limit {limit:?} + {TIMEOUT_SLACK:?})",
        hostile.len(),
        dbs.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("reward formula suite", criterion_1),
        ("reward partition fuzz", criterion_2),
        ("EX oracle fixture", criterion_3),
        ("GRPO math checks", criterion_4),
        ("closed-loop simulation", criterion_5),
        ("self-consistency gain", criterion_6),
        ("wire/library equivalence", criterion_7),
        ("sandbox safety", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("acceptance {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("acceptance {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
