use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, TaskDefinition};

/// NI categories removed by the default policy.
pub const DEFAULT_EXCLUDED_CATEGORIES: &[&str] = &[
    "Question Generation",
    "Question Understanding",
    "Wrong Candidate Generation",
    "Mathematics",
    "Pos Tagging",
    "Keyword Tagging",
    "Named Entity Recognition",
    "Coreference Resolution",
    "Word Semantics",
    "Linguistic Probing",
    "Paraphrasing",
];

/// Task-id fragments removed by the default policy (the MMLU-derived tasks).
pub const DEFAULT_EXCLUDED_TASK_PATTERNS: &[&str] = &["mmmlu"];

/// Which tasks survive selection. When `explicit_allowlist` is set it is the
/// only rule consulted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterPolicy {
    pub allowed_languages: BTreeSet<String>,
    pub excluded_categories: BTreeSet<String>,
    pub excluded_task_ids: BTreeSet<String>,
    /// Substrings; a task whose id contains any of them is excluded.
    pub excluded_task_patterns: BTreeSet<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explicit_allowlist: Option<Vec<String>>,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            allowed_languages: BTreeSet::from(["English".to_string()]),
            excluded_categories: DEFAULT_EXCLUDED_CATEGORIES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            excluded_task_ids: BTreeSet::new(),
            excluded_task_patterns: DEFAULT_EXCLUDED_TASK_PATTERNS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            explicit_allowlist: None,
        }
    }
}

impl FilterPolicy {
    pub fn from_toml_str(text: &str) -> Result<Self, CorpusError> {
        toml::from_str(text).map_err(|e| CorpusError::Policy(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("policy serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// The first rule rejecting `task`, with the matching detail.
    pub fn first_rejection(&self, task: &TaskDefinition) -> Option<(RejectReason, String)> {
        if let Some(allow) = &self.explicit_allowlist {
            return if allow.contains(&task.task_id) {
                None
            } else {
                Some((RejectReason::NotInAllowlist, task.task_id.clone()))
            };
        }
        if self.excluded_task_ids.contains(&task.task_id) {
            return Some((RejectReason::ExcludedTaskId, task.task_id.clone()));
        }
        if let Some(pattern) = self
            .excluded_task_patterns
            .iter()
            .find(|p| task.task_id.contains(p.as_str()))
        {
            return Some((RejectReason::ExcludedTaskId, pattern.clone()));
        }
        if let Some(lang) = task
            .input_language
            .iter()
            .chain(&task.output_language)
            .map(|l| l.trim())
            .find(|l| !self.allowed_languages.contains(*l))
        {
            return Some((RejectReason::DisallowedLanguage, lang.to_string()));
        }
        if let Some(cat) = task
            .categories
            .iter()
            .find(|c| self.excluded_categories.contains(c.trim()))
        {
            return Some((RejectReason::ExcludedCategory, cat.clone()));
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NotInAllowlist,
    ExcludedTaskId,
    DisallowedLanguage,
    ExcludedCategory,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::NotInAllowlist => "not in allowlist",
            RejectReason::ExcludedTaskId => "excluded task id",
            RejectReason::DisallowedLanguage => "non-English",
            RejectReason::ExcludedCategory => "excluded category",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub task_id: String,
    pub reason: RejectReason,
    /// The value that triggered the rule (language, category, pattern).
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub selected: Vec<TaskDefinition>,
    pub rejected: Vec<Rejection>,
}

/// Partitions `tasks` into selected and rejected, preserving input order.
pub fn apply_filter_policy(tasks: Vec<TaskDefinition>, policy: &FilterPolicy) -> FilterOutcome {
    let mut outcome = FilterOutcome::default();
    for task in tasks {
        match policy.first_rejection(&task) {
            None => outcome.selected.push(task),
            Some((reason, detail)) => outcome.rejected.push(Rejection {
                task_id: task.task_id,
                reason,
                detail,
            }),
        }
    }
    outcome
}

/// Reads a task-id list: one id per line, `#` comments, blank lines ignored,
/// an optional `.json` suffix stripped.
pub fn load_allowlist(path: &Path) -> Result<Vec<String>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut seen = BTreeSet::new();
    let mut ids = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let id = line.strip_suffix(".json").unwrap_or(line).to_string();
        if seen.insert(id.clone()) {
            ids.push(id);
        }
    }
    Ok(ids)
}
