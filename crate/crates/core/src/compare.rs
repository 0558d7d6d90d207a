//! Execution-accuracy equivalence between two query results.
//!
//! Results are reduced to a canonical row collection: integers and reals
//! that are numerically equal collapse to one value, text is compared byte
//! for byte, and NULL stays distinct from the empty string. Column order
//! within a row matters; row order never does.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::exec::{Cell, ResultTable};

/// How duplicate rows are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSemantics {
    /// Duplicates collapse.
    #[default]
    Set,
    /// Row multiplicities must agree.
    Bag,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompareConfig {
    #[serde(default)]
    pub semantics: RowSemantics,
    /// Absolute tolerance for numeric cells. `None` means exact.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

/// A normalized cell. Numerically integral reals become `Int`.
#[derive(Debug, Clone)]
pub enum CanonCell {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl CanonCell {
    fn rank(&self) -> u8 {
        match self {
            CanonCell::Null => 0,
            CanonCell::Int(_) | CanonCell::Real(_) => 1,
            CanonCell::Text(_) => 2,
            CanonCell::Blob(_) => 3,
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match *self {
            CanonCell::Int(i) => Some(i as f64),
            CanonCell::Real(r) => Some(r),
            _ => None,
        }
    }

    fn close_to(&self, other: &CanonCell, eps: f64) -> bool {
        match (self.as_f64(), other.as_f64()) {
            (Some(a), Some(b)) => self == other || (a - b).abs() <= eps,
            _ => self == other,
        }
    }
}

impl From<&Cell> for CanonCell {
    fn from(c: &Cell) -> Self {
        match c {
            Cell::Null => CanonCell::Null,
            Cell::Integer(i) => CanonCell::Int(*i),
            Cell::Real(r) => canon_real(*r),
            Cell::Text(t) => CanonCell::Text(t.clone()),
            Cell::Blob { blob } => CanonCell::Blob(blob.clone()),
        }
    }
}

fn canon_real(r: f64) -> CanonCell {
    // 2^63 is exactly representable; anything below it with no fractional
    // part fits an i64.
    const LIMIT: f64 = 9_223_372_036_854_775_808.0;
    if r.is_finite() && r.fract() == 0.0 && (-LIMIT..LIMIT).contains(&r) {
        CanonCell::Int(r as i64)
    } else {
        CanonCell::Real(r)
    }
}

impl Ord for CanonCell {
    fn cmp(&self, other: &Self) -> Ordering {
        use CanonCell::*;
        match (self, other) {
            (Int(a), Int(b)) => a.cmp(b),
            (Real(a), Real(b)) => a.total_cmp(b),
            // Never equal: an integral real would have been canonicalized.
            (Int(a), Real(b)) => (*a as f64).total_cmp(b).then(Ordering::Less),
            (Real(a), Int(b)) => a.total_cmp(&(*b as f64)).then(Ordering::Greater),
            (Text(a), Text(b)) => a.as_bytes().cmp(b.as_bytes()),
            (Blob(a), Blob(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for CanonCell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for CanonCell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for CanonCell {}

impl From<&CanonCell> for Cell {
    fn from(c: &CanonCell) -> Self {
        match c {
            CanonCell::Null => Cell::Null,
            CanonCell::Int(i) => Cell::Integer(*i),
            CanonCell::Real(r) => Cell::Real(*r),
            CanonCell::Text(t) => Cell::Text(t.clone()),
            CanonCell::Blob(b) => Cell::Blob { blob: b.clone() },
        }
    }
}

pub type CanonRow = Vec<CanonCell>;

/// Canonical form of a [`ResultTable`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalResult {
    pub columns: usize,
    /// Distinct rows with their multiplicity (always 1 under set semantics).
    pub rows: BTreeMap<CanonRow, usize>,
    pub truncated: bool,
    pub semantics: RowSemantics,
}

impl CanonicalResult {
    pub fn distinct_rows(&self) -> usize {
        self.rows.len()
    }

    /// Expands back into a table, rows in canonical order.
    pub fn to_table(&self) -> ResultTable {
        let rows = self
            .rows
            .iter()
            .flat_map(|(row, &n)| std::iter::repeat_n(row.iter().map(Cell::from).collect(), n))
            .collect();
        ResultTable {
            columns: self.columns,
            column_names: Vec::new(),
            rows,
            truncated: self.truncated,
        }
    }
}

/// Set-semantics canonicalization.
pub fn normalize(result: &ResultTable) -> CanonicalResult {
    normalize_with(result, RowSemantics::Set)
}

pub fn normalize_with(result: &ResultTable, semantics: RowSemantics) -> CanonicalResult {
    let mut rows = BTreeMap::new();
    for row in &result.rows {
        let key: CanonRow = row.iter().map(CanonCell::from).collect();
        let n = rows.entry(key).or_insert(0);
        match semantics {
            RowSemantics::Set => *n = 1,
            RowSemantics::Bag => *n += 1,
        }
    }
    CanonicalResult {
        columns: result.columns,
        rows,
        truncated: result.truncated,
        semantics,
    }
}

/// Exact EX predicate. Truncated results never match.
pub fn results_match(a: &CanonicalResult, b: &CanonicalResult) -> bool {
    results_match_with(a, b, None)
}

/// EX predicate with an optional absolute numeric tolerance.
///
/// When the two sides were normalized with different semantics, the
/// comparison falls back to set semantics.
pub fn results_match_with(a: &CanonicalResult, b: &CanonicalResult, epsilon: Option<f64>) -> bool {
    if a.truncated || b.truncated || a.columns != b.columns {
        return false;
    }
    let bag = a.semantics == RowSemantics::Bag && b.semantics == RowSemantics::Bag;
    match epsilon {
        None if bag => a.rows == b.rows,
        None => a.rows.len() == b.rows.len() && a.rows.keys().eq(b.rows.keys()),
        Some(eps) if bag => bag_match_eps(a, b, eps),
        Some(eps) => covers(a, b, eps) && covers(b, a, eps),
    }
}

fn rows_close(x: &CanonRow, y: &CanonRow, eps: f64) -> bool {
    x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.close_to(q, eps))
}

fn covers(a: &CanonicalResult, b: &CanonicalResult, eps: f64) -> bool {
    a.rows
        .keys()
        .all(|x| b.rows.contains_key(x) || b.rows.keys().any(|y| rows_close(x, y, eps)))
}

fn bag_match_eps(a: &CanonicalResult, b: &CanonicalResult, eps: f64) -> bool {
    let expand = |c: &CanonicalResult| -> Vec<CanonRow> {
        c.rows
            .iter()
            .flat_map(|(r, &n)| std::iter::repeat_n(r.clone(), n))
            .collect()
    };
    let left = expand(a);
    let mut right: Vec<Option<CanonRow>> = expand(b).into_iter().map(Some).collect();
    if left.len() != right.len() {
        return false;
    }
    'outer: for x in &left {
        for slot in right.iter_mut() {
            if slot.as_ref().is_some_and(|y| rows_close(x, y, eps)) {
                *slot = None;
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Canonicalizes per `config` and compares.
pub fn tables_match(a: &ResultTable, b: &ResultTable, config: &CompareConfig) -> bool {
    results_match_with(
        &normalize_with(a, config.semantics),
        &normalize_with(b, config.semantics),
        config.epsilon,
    )
}
