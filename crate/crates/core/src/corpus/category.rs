use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CorpusError, TaskDefinition};

/// How a task's outputs are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    ExactMatch,
    Generation,
}

impl TaskKind {
    pub fn short(self) -> &'static str {
        match self {
            TaskKind::ExactMatch => "EM",
            TaskKind::Generation => "GEN",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "EM" | "ExactMatch" | "exact_match" => Ok(TaskKind::ExactMatch),
            "GEN" | "Generation" | "generation" => Ok(TaskKind::Generation),
            other => Err(format!("unknown task kind {other:?} (expected EM or GEN)")),
        }
    }
}

/// Hand-maintained task → kind assignment.
///
/// Text form: one `task_id<whitespace>EM|GEN` pair per line, `#` comments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryMap {
    kinds: BTreeMap<String, TaskKind>,
}

impl CategoryMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, task_id: impl Into<String>, kind: TaskKind) {
        self.kinds.insert(task_id.into(), kind);
    }

    pub fn get(&self, task_id: &str) -> Option<TaskKind> {
        self.kinds.get(task_id).copied()
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self, CorpusError> {
        let mut map = CategoryMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |problem: String| CorpusError::Syntax {
                path: origin.to_path_buf(),
                line: idx + 1,
                problem,
            };
            let mut parts = line.split_whitespace();
            let (Some(id), Some(kind), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(syntax("expected `task_id KIND`".into()));
            };
            let kind = kind.parse::<TaskKind>().map_err(syntax)?;
            if map.kinds.insert(id.to_string(), kind).is_some() {
                return Err(syntax(format!("task {id} listed twice")));
            }
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        self.kinds
            .iter()
            .map(|(id, kind)| format!("{id}\t{kind}\n"))
            .collect()
    }
}

/// Splits selected tasks into (exact-match, generation), preserving order.
pub fn categorize_tasks(
    selected: Vec<TaskDefinition>,
    map: &CategoryMap,
) -> Result<(Vec<TaskDefinition>, Vec<TaskDefinition>), CorpusError> {
    let missing: Vec<String> = selected
        .iter()
        .filter(|t| map.get(&t.task_id).is_none())
        .map(|t| t.task_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(CorpusError::UncoveredTasks(missing));
    }
    Ok(selected
        .into_iter()
        .partition(|t| map.get(&t.task_id) == Some(TaskKind::ExactMatch)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Instance;

    fn task(id: &str) -> TaskDefinition {
        TaskDefinition {
            task_id: id.into(),
            definition: vec![],
            categories: vec![],
            domains: vec![],
            input_language: vec![],
            output_language: vec![],
            positive_examples: vec![],
            instances: vec![Instance {
                id: "i".into(),
                input: String::new(),
                output: vec!["o".into()],
            }],
        }
    }

    #[test]
    fn partitions_three_and_two() {
        let map = CategoryMap::parse("a EM\nb EM\nc EM\nd GEN\ne GEN\n", Path::new("m")).unwrap();
        let tasks = ["a", "d", "b", "e", "c"].map(task).to_vec();
        let (em, gen) = categorize_tasks(tasks, &map).unwrap();
        assert_eq!((em.len(), gen.len()), (3, 2));
        assert_eq!(em[1].task_id, "b");
    }

    #[test]
    fn missing_id_is_named() {
        let map = CategoryMap::parse("a EM\n", Path::new("m")).unwrap();
        let err = categorize_tasks(vec![task("a"), task("zz")], &map).unwrap_err();
        assert!(err.to_string().contains("zz"));
        assert!(matches!(err, CorpusError::UncoveredTasks(ids) if ids == ["zz"]));
    }

    #[test]
    fn empty_selection() {
        let (em, gen) = categorize_tasks(vec![], &CategoryMap::new()).unwrap();
        assert!(em.is_empty() && gen.is_empty());
    }

    #[test]
    fn text_round_trip_and_errors() {
        let map = CategoryMap::parse("# kinds\nb GEN\na EM  # trailing\n", Path::new("m")).unwrap();
        assert_eq!(CategoryMap::parse(&map.to_text(), Path::new("m")).unwrap(), map);
        assert!(CategoryMap::parse("a MAYBE\n", Path::new("m")).is_err());
        assert!(CategoryMap::parse("a EM\na GEN\n", Path::new("m")).is_err());
    }
}
