use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};

use super::CorpusError;
use crate::exec::Executor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Simple,
    Moderate,
    Challenging,
    Complex,
    #[default]
    Unknown,
}

impl Difficulty {
    pub const ALL: [Difficulty; 5] = [
        Difficulty::Simple,
        Difficulty::Moderate,
        Difficulty::Challenging,
        Difficulty::Complex,
        Difficulty::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Simple => "simple",
            Difficulty::Moderate => "moderate",
            Difficulty::Challenging => "challenging",
            Difficulty::Complex => "complex",
            Difficulty::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simple" | "easy" => Ok(Difficulty::Simple),
            "moderate" | "medium" => Ok(Difficulty::Moderate),
            "challenging" | "challenge" | "hard" => Ok(Difficulty::Challenging),
            "complex" | "extra" | "extra hard" => Ok(Difficulty::Complex),
            "" | "unknown" => Ok(Difficulty::Unknown),
            other => Err(format!("unknown difficulty `{other}`")),
        }
    }
}

impl<'de> Deserialize<'de> for Difficulty {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        s.as_deref()
            .unwrap_or("")
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// One NL2SQL problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub external_knowledge: Option<String>,
    pub db_ref: String,
    pub gold_sql: String,
    #[serde(default)]
    pub difficulty: Difficulty,
}

impl Task {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: &str| CorpusError::InvalidTask {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.trim().is_empty() {
            return Err(invalid("empty id"));
        }
        if self.question.trim().is_empty() {
            return Err(invalid("empty question"));
        }
        if self.gold_sql.trim().is_empty() {
            return Err(invalid("empty gold_sql"));
        }
        if self.db_ref.trim().is_empty() {
            return Err(invalid("empty db_ref"));
        }
        Ok(())
    }

    /// External knowledge, or `None` when absent or blank.
    pub fn knowledge(&self) -> Option<&str> {
        self.external_knowledge
            .as_deref()
            .filter(|k| !k.trim().is_empty())
    }
}

/// A task plus an optional reasoning trace for cold-start SFT export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    #[serde(flatten)]
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub think_trace: Option<String>,
}

impl From<Task> for TrainingSample {
    fn from(task: Task) -> Self {
        TrainingSample {
            task,
            think_trace: None,
        }
    }
}

/// Reads a JSON Lines file. Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|source| CorpusError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Validated, id-indexed task collection. Read-only after construction.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    tasks: Vec<Task>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(tasks: Vec<Task>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(tasks.len());
        for (i, t) in tasks.iter().enumerate() {
            t.validate()?;
            if index.insert(t.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(t.id.clone()));
            }
        }
        Ok(Corpus { tasks, index })
    }

    /// Loads a JSONL task file and checks every `db_ref` resolves.
    pub fn load(path: &Path, executor: &Executor) -> Result<Self, CorpusError> {
        let corpus = Corpus::new(read_jsonl(path)?)?;
        corpus.check_databases(executor)?;
        Ok(corpus)
    }

    pub fn check_databases(&self, executor: &Executor) -> Result<(), CorpusError> {
        for t in &self.tasks {
            executor
                .resolve(&t.db_ref)
                .map_err(|source| CorpusError::UnresolvedDatabase {
                    id: t.id.clone(),
                    source,
                })?;
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Task> {
        self.index.get(id).map(|&i| &self.tasks[i])
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difficulty_parsing() {
        let t: Task = serde_json::from_str(
            r#"{"id":"a","question":"q","db_ref":"d","gold_sql":"SELECT 1","difficulty":"Challenge"}"#,
        )
        .unwrap();
        assert_eq!(t.difficulty, Difficulty::Challenging);
        let t: Task =
            serde_json::from_str(r#"{"id":"a","question":"q","db_ref":"d","gold_sql":"SELECT 1"}"#)
                .unwrap();
        assert_eq!(t.difficulty, Difficulty::Unknown);
    }

    #[test]
    fn rejects_blank_question_and_duplicates() {
        let t = Task {
            id: "a".into(),
            question: " ".into(),
            external_knowledge: None,
            db_ref: "d".into(),
            gold_sql: "SELECT 1".into(),
            difficulty: Difficulty::Simple,
        };
        assert!(Corpus::new(vec![t.clone()]).is_err());
        let ok = Task {
            question: "q".into(),
            ..t
        };
        assert!(matches!(
            Corpus::new(vec![ok.clone(), ok]),
            Err(CorpusError::DuplicateId(_))
        ));
    }

    #[test]
    fn sample_flattens_task() {
        let s: TrainingSample = serde_json::from_str(
            r#"{"id":"a","question":"q","db_ref":"d","gold_sql":"SELECT 1","think_trace":"t"}"#,
        )
        .unwrap();
        assert_eq!(s.task.id, "a");
        assert_eq!(s.think_trace.as_deref(), Some("t"));
    }
}
