//! Task corpus ingestion and selection.

mod category;
mod filter;
mod records;
mod task;

pub use category::{categorize_tasks, CategoryMap, TaskKind};
pub use filter::{apply_filter_policy, load_allowlist, FilterOutcome, FilterPolicy, RejectReason};
pub use records::{
    load_instruction_file, FieldMapping, InstructionRecord, LoadedRecords, Source,
};
pub use task::{
    load_ni_corpus, parse_ni_task, parse_ni_task_str, Instance, PositiveExample, TaskDefinition,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("missing field: {0}")]
    MissingField(String),
    #[error("field {field} has the wrong type, expected {expected}")]
    FieldType { field: String, expected: &'static str },
    #[error("task {task_id}: {problem}")]
    Structure { task_id: String, problem: String },
    #[error("duplicate task id {0}")]
    DuplicateTask(String),
    #[error("category map does not cover tasks: {}", .0.join(", "))]
    UncoveredTasks(Vec<String>),
    #[error("{path}:{line}: {problem}")]
    Syntax {
        path: PathBuf,
        line: usize,
        problem: String,
    },
    #[error("schema: {0}")]
    Schema(String),
    #[error("policy: {0}")]
    Policy(String),
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}
