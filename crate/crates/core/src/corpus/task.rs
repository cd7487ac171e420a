use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::CorpusError;

/// A demonstration shipped with a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PositiveExample {
    pub input: String,
    pub output: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Instance {
    pub id: String,
    pub input: String,
    /// Reference outputs; never empty.
    pub output: Vec<String>,
}

/// One Natural-Instructions task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskDefinition {
    pub task_id: String,
    pub definition: Vec<String>,
    pub categories: Vec<String>,
    pub domains: Vec<String>,
    pub input_language: Vec<String>,
    pub output_language: Vec<String>,
    pub positive_examples: Vec<PositiveExample>,
    pub instances: Vec<Instance>,
}

// Field order of the canonical serialized form.
#[derive(Serialize)]
struct NiDocument<'a> {
    #[serde(rename = "Definition")]
    definition: &'a [String],
    #[serde(rename = "Categories")]
    categories: &'a [String],
    #[serde(rename = "Domains")]
    domains: &'a [String],
    #[serde(rename = "Input_language")]
    input_language: &'a [String],
    #[serde(rename = "Output_language")]
    output_language: &'a [String],
    #[serde(rename = "Positive Examples")]
    positive_examples: &'a [PositiveExample],
    #[serde(rename = "Instances")]
    instances: &'a [Instance],
}

impl TaskDefinition {
    /// Definition paragraphs joined with newlines.
    pub fn definition_text(&self) -> String {
        self.definition.join("\n")
    }

    /// Canonical NI layout: 4-space indented JSON with a trailing newline.
    pub fn to_ni_json(&self) -> String {
        let doc = NiDocument {
            definition: &self.definition,
            categories: &self.categories,
            domains: &self.domains,
            input_language: &self.input_language,
            output_language: &self.output_language,
            positive_examples: &self.positive_examples,
            instances: &self.instances,
        };
        let mut out = Vec::new();
        let formatter = serde_json::ser::PrettyFormatter::with_indent(b"    ");
        let mut ser = serde_json::Serializer::with_formatter(&mut out, formatter);
        doc.serialize(&mut ser).expect("in-memory serialization");
        out.push(b'\n');
        String::from_utf8(out).expect("serde_json emits UTF-8")
    }

    pub fn instance(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }
}

fn field<'a>(doc: &'a serde_json::Map<String, Value>, name: &str) -> Result<&'a Value, CorpusError> {
    doc.get(name)
        .ok_or_else(|| CorpusError::MissingField(name.to_string()))
}

fn as_str(value: &Value, name: &str) -> Result<String, CorpusError> {
    value
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| CorpusError::FieldType {
            field: name.to_string(),
            expected: "string",
        })
}

/// A list of strings; a bare string is accepted as a one-element list.
fn string_list(value: &Value, name: &str) -> Result<Vec<String>, CorpusError> {
    match value {
        Value::String(s) => Ok(vec![s.clone()]),
        Value::Array(items) => items.iter().map(|v| as_str(v, name)).collect(),
        _ => Err(CorpusError::FieldType {
            field: name.to_string(),
            expected: "list of strings",
        }),
    }
}

fn object_list<'a>(
    value: &'a Value,
    name: &str,
) -> Result<Vec<&'a serde_json::Map<String, Value>>, CorpusError> {
    let err = || CorpusError::FieldType {
        field: name.to_string(),
        expected: "list of objects",
    };
    value
        .as_array()
        .ok_or_else(err)?
        .iter()
        .map(|v| v.as_object().ok_or_else(err))
        .collect()
}

/// Parses one task document. `task_id` is normally the file stem.
pub fn parse_ni_task_str(task_id: &str, text: &str) -> Result<TaskDefinition, CorpusError> {
    let value: Value = serde_json::from_str(text).map_err(|source| CorpusError::Json {
        path: task_id.into(),
        source,
    })?;
    let doc = value.as_object().ok_or_else(|| CorpusError::FieldType {
        field: "<document>".into(),
        expected: "object",
    })?;
    if task_id.trim().is_empty() {
        return Err(CorpusError::Structure {
            task_id: task_id.to_string(),
            problem: "empty task id".into(),
        });
    }

    let definition = string_list(field(doc, "Definition")?, "Definition")?;
    let categories = string_list(field(doc, "Categories")?, "Categories")?;
    let domains = string_list(field(doc, "Domains")?, "Domains")?;
    let input_language = string_list(field(doc, "Input_language")?, "Input_language")?;
    let output_language = string_list(field(doc, "Output_language")?, "Output_language")?;

    let positive_examples = object_list(field(doc, "Positive Examples")?, "Positive Examples")?
        .into_iter()
        .map(|ex| {
            Ok(PositiveExample {
                input: as_str(field(ex, "input")?, "Positive Examples.input")?,
                output: as_str(field(ex, "output")?, "Positive Examples.output")?,
                explanation: match ex.get("explanation") {
                    Some(v) => Some(as_str(v, "Positive Examples.explanation")?),
                    None => None,
                },
            })
        })
        .collect::<Result<Vec<_>, CorpusError>>()?;

    let instances = object_list(field(doc, "Instances")?, "Instances")?
        .into_iter()
        .map(|inst| {
            Ok(Instance {
                id: as_str(field(inst, "id")?, "Instances.id")?,
                input: as_str(field(inst, "input")?, "Instances.input")?,
                output: string_list(field(inst, "output")?, "Instances.output")?,
            })
        })
        .collect::<Result<Vec<_>, CorpusError>>()?;

    let structure = |problem: String| CorpusError::Structure {
        task_id: task_id.to_string(),
        problem,
    };
    if instances.is_empty() {
        return Err(structure("instances list is empty".into()));
    }
    let mut seen = BTreeSet::new();
    for inst in &instances {
        if inst.output.is_empty() {
            return Err(structure(format!("instance {} has no reference output", inst.id)));
        }
        if !seen.insert(inst.id.as_str()) {
            return Err(structure(format!("duplicate instance id {}", inst.id)));
        }
    }

    Ok(TaskDefinition {
        task_id: task_id.to_string(),
        definition,
        categories,
        domains,
        input_language,
        output_language,
        positive_examples,
        instances,
    })
}

/// Parses a task file; the task id is the file stem.
pub fn parse_ni_task(path: &Path) -> Result<TaskDefinition, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let task_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_ni_task_str(&task_id, &text).map_err(|e| match e {
        CorpusError::Json { source, .. } => CorpusError::Json {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Loads every `*.json` task in `dir`, sorted by task id.
pub fn load_ni_corpus(dir: &Path) -> Result<Vec<TaskDefinition>, CorpusError> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CorpusError::io(dir, e))? {
        let path = entry.map_err(|e| CorpusError::io(dir, e))?.path();
        if path.extension().is_some_and(|ext| ext == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    let mut tasks = paths
        .iter()
        .map(|p| parse_ni_task(p))
        .collect::<Result<Vec<_>, _>>()?;
    tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    for pair in tasks.windows(2) {
        if pair[0].task_id == pair[1].task_id {
            return Err(CorpusError::DuplicateTask(pair[0].task_id.clone()));
        }
    }
    Ok(tasks)
}
