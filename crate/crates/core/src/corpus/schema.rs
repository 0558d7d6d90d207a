//! Database schemas and their `CREATE TABLE` prompt rendering.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::exec::{Cell, Executor};

/// Representative values rendered per column when values are enabled.
pub const MAX_REPRESENTATIVE_VALUES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(default)]
    pub declared_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representative_values: Option<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub ref_table: String,
    pub ref_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub primary_key: Vec<String>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
}

impl TableSpec {
    fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Deserialize)]
struct RawSchema {
    tables: Vec<TableSpec>,
}

/// A validated schema: unique table names, unique column names per table,
/// and keys that refer to existing columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct SchemaSpec {
    tables: Vec<TableSpec>,
}

impl TryFrom<RawSchema> for SchemaSpec {
    type Error = CorpusError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        SchemaSpec::new(raw.tables)
    }
}

impl SchemaSpec {
    pub fn new(tables: Vec<TableSpec>) -> Result<Self, CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSchema(m));
        let mut names = HashSet::new();
        for t in &tables {
            if !names.insert(t.name.to_ascii_lowercase()) {
                return bad(format!("duplicate table `{}`", t.name));
            }
            let mut cols = HashSet::new();
            for c in &t.columns {
                if !cols.insert(c.name.to_ascii_lowercase()) {
                    return bad(format!("duplicate column `{}.{}`", t.name, c.name));
                }
            }
            for k in &t.primary_key {
                if t.column(k).is_none() {
                    return bad(format!("primary key column `{}.{k}` does not exist", t.name));
                }
            }
        }
        for t in &tables {
            for fk in &t.foreign_keys {
                if t.column(&fk.column).is_none() {
                    return bad(format!("foreign key column `{}.{}` does not exist", t.name, fk.column));
                }
                let target = tables
                    .iter()
                    .find(|r| r.name.eq_ignore_ascii_case(&fk.ref_table));
                if !target.is_some_and(|r| r.column(&fk.ref_column).is_some()) {
                    return bad(format!(
                        "foreign key `{}.{}` references missing `{}.{}`",
                        t.name, fk.column, fk.ref_table, fk.ref_column
                    ));
                }
            }
        }
        Ok(SchemaSpec { tables })
    }

    pub fn tables(&self) -> &[TableSpec] {
        &self.tables
    }

    pub fn from_json_file(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CorpusError::Json {
            path: path.to_path_buf(),
            line: source.line(),
            source,
        })
    }

    /// Copies comments from `other` onto matching columns that have none.
    pub fn merge_comments(&mut self, other: &SchemaSpec) {
        for t in &mut self.tables {
            let Some(src) = other
                .tables
                .iter()
                .find(|o| o.name.eq_ignore_ascii_case(&t.name))
            else {
                continue;
            };
            for c in &mut t.columns {
                if c.comment.is_none() {
                    c.comment = src.column(&c.name).and_then(|s| s.comment.clone());
                }
            }
        }
    }

    /// Drops every representative value.
    pub fn without_values(mut self) -> Self {
        for t in &mut self.tables {
            for c in &mut t.columns {
                c.representative_values = None;
            }
        }
        self
    }
}

fn quote_ident(name: &str) -> String {
    let plain = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('"', "\"\""))
    }
}

fn literal(cell: &Cell) -> Option<String> {
    match cell {
        Cell::Null => None,
        Cell::Integer(i) => Some(i.to_string()),
        Cell::Real(r) => Some(format!("{r:?}")),
        Cell::Text(t) => Some(format!("'{}'", t.replace('\'', "''"))),
        Cell::Blob { blob } => Some(format!(
            "X'{}'",
            blob.iter().map(|b| format!("{b:02X}")).collect::<String>()
        )),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Renders one `CREATE TABLE` statement per table, in order.
///
/// Column comments become trailing `--` comments. With `include_values`,
/// up to [`MAX_REPRESENTATIVE_VALUES`] non-NULL values are appended to the
/// comment; without it no values appear at all.
pub fn serialize_schema(schema: &SchemaSpec, include_values: bool) -> String {
    let mut out = String::new();
    for (ti, table) in schema.tables.iter().enumerate() {
        if ti > 0 {
            out.push('\n');
        }
        let mut lines: Vec<(String, Option<String>)> = Vec::new();
        for col in &table.columns {
            let mut def = quote_ident(&col.name);
            if !col.declared_type.trim().is_empty() {
                def.push(' ');
                def.push_str(col.declared_type.trim());
            }
            let mut notes = Vec::new();
            if let Some(c) = col.comment.as_deref().map(one_line).filter(|c| !c.is_empty()) {
                notes.push(c);
            }
            if include_values {
                let vals: Vec<String> = col
                    .representative_values
                    .iter()
                    .flatten()
                    .filter_map(literal)
                    .take(MAX_REPRESENTATIVE_VALUES)
                    .map(|v| one_line(&v))
                    .collect();
                if !vals.is_empty() {
                    notes.push(format!("example values: {}", vals.join(", ")));
                }
            }
            let note = (!notes.is_empty()).then(|| notes.join("; "));
            lines.push((def, note));
        }
        if !table.primary_key.is_empty() {
            let cols: Vec<_> = table.primary_key.iter().map(|c| quote_ident(c)).collect();
            lines.push((format!("PRIMARY KEY ({})", cols.join(", ")), None));
        }
        for fk in &table.foreign_keys {
            lines.push((
                format!(
                    "FOREIGN KEY ({}) REFERENCES {}({})",
                    quote_ident(&fk.column),
                    quote_ident(&fk.ref_table),
                    quote_ident(&fk.ref_column)
                ),
                None,
            ));
        }
        let _ = writeln!(out, "CREATE TABLE {} (", quote_ident(&table.name));
        let last = lines.len().saturating_sub(1);
        for (i, (def, note)) in lines.iter().enumerate() {
            let comma = if i < last { "," } else { "" };
            match note {
                Some(n) => {
                    let _ = writeln!(out, "  {def}{comma} -- {n}");
                }
                None => {
                    let _ = writeln!(out, "  {def}{comma}");
                }
            }
        }
        out.push_str(");\n");
    }
    out
}

/// Reads the schema, including up to three representative values per
/// column, from an open SQLite connection.
pub fn introspect(conn: &Connection) -> Result<SchemaSpec, CorpusError> {
    let mut names_stmt = conn.prepare(
        "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid",
    )?;
    let names: Vec<String> = names_stmt
        .query_map([], |r| r.get(0))?
        .collect::<Result<_, _>>()?;
    let mut tables = Vec::with_capacity(names.len());
    for name in &names {
        let q = quote_ident(name);
        let mut info = conn.prepare(&format!("PRAGMA table_info({q})"))?;
        let mut pk: Vec<(i64, String)> = Vec::new();
        let mut columns = Vec::new();
        let rows = info.query_map([], |r| {
            Ok((
                r.get::<_, String>(1)?,
                r.get::<_, Option<String>>(2)?.unwrap_or_default(),
                r.get::<_, i64>(5)?,
            ))
        })?;
        for row in rows {
            let (col, ty, pk_pos) = row?;
            if pk_pos > 0 {
                pk.push((pk_pos, col.clone()));
            }
            let mut vals = conn.prepare(&format!(
                "SELECT DISTINCT {c} FROM {q} WHERE {c} IS NOT NULL LIMIT {MAX_REPRESENTATIVE_VALUES}",
                c = quote_ident(&col)
            ))?;
            let values: Vec<Cell> = vals
                .query_map([], |r| Ok(Cell::from(r.get_ref(0)?)))?
                .collect::<Result<_, _>>()?;
            columns.push(ColumnSpec {
                name: col,
                declared_type: ty,
                comment: None,
                representative_values: Some(values),
            });
        }
        pk.sort();
        let mut fk_stmt = conn.prepare(&format!("PRAGMA foreign_key_list({q})"))?;
        let fks: Vec<(String, String, Option<String>)> = fk_stmt
            .query_map([], |r| Ok((r.get(3)?, r.get(2)?, r.get(4)?)))?
            .collect::<Result<_, _>>()?;
        tables.push((
            TableSpec {
                name: name.clone(),
                columns,
                primary_key: pk.into_iter().map(|(_, c)| c).collect(),
                foreign_keys: Vec::new(),
            },
            fks,
        ));
    }
    // A foreign key without a target column refers to the target's primary key.
    let resolved: Vec<Vec<ForeignKey>> = tables
        .iter()
        .map(|(_, fks)| {
            fks.iter()
                .filter_map(|(from, to_table, to_col)| {
                    let ref_column = match to_col {
                        Some(c) => c.clone(),
                        None => tables
                            .iter()
                            .find(|(t, _)| t.name.eq_ignore_ascii_case(to_table))
                            .and_then(|(t, _)| t.primary_key.first().cloned())?,
                    };
                    Some(ForeignKey {
                        column: from.clone(),
                        ref_table: to_table.clone(),
                        ref_column,
                    })
                })
                .collect()
        })
        .collect();
    let tables = tables
        .into_iter()
        .zip(resolved)
        .map(|((mut t, _), fks)| {
            t.foreign_keys = fks;
            t
        })
        .collect();
    SchemaSpec::new(tables)
}

/// Schema for `db_ref`: introspected from the database when it exists, with
/// comments merged from `<schema_dir>/<db_ref>.json`; the JSON file alone
/// otherwise.
pub fn load_schema(
    db_ref: &str,
    executor: &Executor,
    schema_dir: Option<&Path>,
) -> Result<SchemaSpec, CorpusError> {
    let json = schema_dir
        .map(|d| d.join(format!("{db_ref}.json")))
        .filter(|p| p.is_file())
        .map(|p| SchemaSpec::from_json_file(&p))
        .transpose()?;
    match executor.open(db_ref) {
        Ok(conn) => {
            let mut spec = introspect(&conn)?;
            if let Some(j) = &json {
                spec.merge_comments(j);
            }
            Ok(spec)
        }
        Err(_) => json.ok_or_else(|| CorpusError::SchemaUnavailable(db_ref.to_string())),
    }
}
