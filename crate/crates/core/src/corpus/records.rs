use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CorpusError;
use crate::hashing::content_hash;

/// Where a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "LIMA")]
    Lima,
    OpenPlatypus,
    #[serde(rename = "NI")]
    Ni,
    OpenbookQA,
    #[serde(rename = "QUAC")]
    Quac,
    #[serde(rename = "CNNDailyMail")]
    CnnDailyMail,
    MathInstruct,
    Other,
}

impl Source {
    pub const ALL: [Source; 8] = [
        Source::Lima,
        Source::OpenPlatypus,
        Source::Ni,
        Source::OpenbookQA,
        Source::Quac,
        Source::CnnDailyMail,
        Source::MathInstruct,
        Source::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Lima => "LIMA",
            Source::OpenPlatypus => "OpenPlatypus",
            Source::Ni => "NI",
            Source::OpenbookQA => "OpenbookQA",
            Source::Quac => "QUAC",
            Source::CnnDailyMail => "CNNDailyMail",
            Source::MathInstruct => "MathInstruct",
            Source::Other => "Other",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Source::ALL
            .into_iter()
            .find(|src| src.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown source {s:?}"))
    }
}

/// One instruction/input/output triple. Serialized field order is the
/// dataset file format; the content hash is recomputed on read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RecordFields")]
pub struct InstructionRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub source: Source,
    pub origin_id: String,
    #[serde(skip_serializing)]
    pub content_hash: u64,
}

#[derive(Deserialize)]
struct RecordFields {
    instruction: String,
    #[serde(default)]
    input: String,
    output: String,
    source: Source,
    origin_id: String,
}

impl From<RecordFields> for InstructionRecord {
    fn from(f: RecordFields) -> Self {
        InstructionRecord::new(f.instruction, f.input, f.output, f.source, f.origin_id)
    }
}

impl InstructionRecord {
    pub fn new(
        instruction: impl Into<String>,
        input: impl Into<String>,
        output: impl Into<String>,
        source: Source,
        origin_id: impl Into<String>,
    ) -> Self {
        let (instruction, input, output) = (instruction.into(), input.into(), output.into());
        let content_hash = content_hash(&instruction, &input, &output);
        Self {
            instruction,
            input,
            output,
            source,
            origin_id: origin_id.into(),
            content_hash,
        }
    }
}

/// Names of the JSON fields holding instruction, input and output.
///
/// A name starting with `/` is a JSON pointer into nested records
/// (e.g. `/conversations/0`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMapping {
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    pub output: String,
}

impl Default for FieldMapping {
    fn default() -> Self {
        Self {
            instruction: "instruction".into(),
            input: Some("input".into()),
            output: "output".into(),
        }
    }
}

impl FieldMapping {
    fn lookup<'a>(record: &'a Value, name: &str) -> Option<&'a Value> {
        if name.starts_with('/') {
            record.pointer(name)
        } else {
            record.get(name)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadedRecords {
    pub records: Vec<InstructionRecord>,
    /// Rows skipped because their output was empty.
    pub dropped_empty_output: usize,
}

/// Loads a JSONL file into records, dropping (and counting) rows whose
/// output is empty after trimming.
pub fn load_instruction_file(
    path: &Path,
    source: Source,
    mapping: &FieldMapping,
) -> Result<LoadedRecords, CorpusError> {
    if mapping.instruction.is_empty() || mapping.output.is_empty() {
        return Err(CorpusError::Schema(
            "instruction and output field names must be non-empty".into(),
        ));
    }
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let file_label = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut loaded = LoadedRecords::default();

    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let value: Value = serde_json::from_str(&line).map_err(|e| CorpusError::Syntax {
            path: path.to_path_buf(),
            line: lineno,
            problem: e.to_string(),
        })?;
        let get = |name: &str| -> Result<String, CorpusError> {
            match FieldMapping::lookup(&value, name) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(Value::Null) => Ok(String::new()),
                Some(_) => Err(CorpusError::Schema(format!(
                    "{}:{lineno}: field {name:?} is not a string",
                    path.display()
                ))),
                None => Err(CorpusError::Schema(format!(
                    "{}:{lineno}: mapped field {name:?} not present",
                    path.display()
                ))),
            }
        };
        let instruction = get(&mapping.instruction)?;
        let input = match &mapping.input {
            Some(name) => get(name)?,
            None => String::new(),
        };
        let output = get(&mapping.output)?;
        if output.trim().is_empty() {
            loaded.dropped_empty_output += 1;
            continue;
        }
        loaded.records.push(InstructionRecord::new(
            instruction,
            input,
            output,
            source,
            format!("{file_label}:{lineno}"),
        ));
    }
    Ok(loaded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_lines(lines: &[String]) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(file, "{line}").unwrap();
        }
        file
    }

    #[test]
    fn drops_and_counts_empty_outputs() {
        let lines: Vec<String> = (0..10)
            .map(|i| {
                let out = if i == 4 { String::new() } else { format!("answer {i}") };
                serde_json::json!({"instruction": format!("q{i}"), "input": "", "output": out})
                    .to_string()
            })
            .collect();
        let file = write_lines(&lines);
        let loaded = load_instruction_file(file.path(), Source::Lima, &FieldMapping::default()).unwrap();
        assert_eq!(loaded.records.len(), 9);
        assert_eq!(loaded.dropped_empty_output, 1);
        assert!(loaded.records.iter().all(|r| r.source == Source::Lima));
    }

    #[test]
    fn identical_loads_hash_identically() {
        let lines: Vec<String> = (0..5)
            .map(|i| serde_json::json!({"prompt": format!("p{i}"), "completion": "c"}).to_string())
            .collect();
        let file = write_lines(&lines);
        let mapping = FieldMapping {
            instruction: "prompt".into(),
            input: None,
            output: "completion".into(),
        };
        let a = load_instruction_file(file.path(), Source::Other, &mapping).unwrap();
        let b = load_instruction_file(file.path(), Source::Other, &mapping).unwrap();
        let hashes = |l: &LoadedRecords| {
            let mut h: Vec<u64> = l.records.iter().map(|r| r.content_hash).collect();
            h.sort();
            h
        };
        assert_eq!(hashes(&a), hashes(&b));
    }

    #[test]
    fn unmappable_field_is_a_schema_error() {
        let file = write_lines(&[r#"{"question": "q", "answer": "a"}"#.to_string()]);
        let err = load_instruction_file(file.path(), Source::Other, &FieldMapping::default()).unwrap_err();
        assert!(matches!(err, CorpusError::Schema(_)), "{err}");
    }

    #[test]
    fn json_pointer_mapping() {
        let file = write_lines(&[r#"{"conversations": ["hi there", "hello"]}"#.to_string()]);
        let mapping = FieldMapping {
            instruction: "/conversations/0".into(),
            input: None,
            output: "/conversations/1".into(),
        };
        let loaded = load_instruction_file(file.path(), Source::Lima, &mapping).unwrap();
        assert_eq!(loaded.records[0].instruction, "hi there");
        assert_eq!(loaded.records[0].output, "hello");
    }

    #[test]
    fn record_json_has_stable_key_order_and_rehashes() {
        let rec = InstructionRecord::new("i", "x", "o", Source::Ni, "t/1");
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            line,
            r#"{"instruction":"i","input":"x","output":"o","source":"NI","origin_id":"t/1"}"#
        );
        let back: InstructionRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
    }
}
