#![allow(dead_code)]

use std::path::PathBuf;

use sqlreward_core::{Corpus, ExecConfig, Executor};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn executor() -> Executor {
    Executor::new(fixtures().join("db"), ExecConfig::default()).unwrap()
}

pub fn corpus(ex: &Executor) -> Corpus {
    Corpus::load(&fixtures().join("corpus/tasks.jsonl"), ex).unwrap()
}
