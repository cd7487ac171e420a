use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::TaskKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub instance_id: String,
    pub score: f64,
}

/// Few-shot difficulty of one task. Field order is the report line format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScoreReport {
    pub task_id: String,
    pub kind: TaskKind,
    pub n_evaluated: usize,
    /// Instances whose completion failed after retries; not in `per_example`.
    pub n_failed: usize,
    /// Mean of `per_example` for exact-match tasks.
    pub accuracy: Option<f64>,
    pub per_example: Vec<ExampleScore>,
    pub prompt_fingerprint: String,
}

impl TaskScoreReport {
    pub fn new(
        task_id: String,
        kind: TaskKind,
        per_example: Vec<ExampleScore>,
        n_failed: usize,
        prompt_fingerprint: String,
    ) -> Self {
        let accuracy = (kind == TaskKind::ExactMatch && !per_example.is_empty()).then(|| {
            per_example.iter().map(|e| e.score).sum::<f64>() / per_example.len() as f64
        });
        Self {
            task_id,
            kind,
            n_evaluated: per_example.len(),
            n_failed,
            accuracy,
            per_example,
            prompt_fingerprint,
        }
    }
}

pub fn write_reports(reports: &[TaskScoreReport]) -> Vec<u8> {
    crate::io::to_jsonl(reports).expect("reports serialize")
}

pub fn read_reports(path: &Path) -> std::io::Result<Vec<TaskScoreReport>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
}

impl Quantiles {
    /// Linear-interpolation quantiles; `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Some(Quantiles {
            min: sorted[0],
            p25: at(0.25),
            median: at(0.5),
            p75: at(0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task_id: String,
    pub kind: TaskKind,
    pub n_evaluated: usize,
    pub accuracy: Option<f64>,
    pub quantiles: Option<Quantiles>,
}

/// One row per report: accuracy for exact-match tasks, score quantiles for
/// generation tasks.
pub fn summarize_reports(reports: &[TaskScoreReport]) -> Vec<SummaryRow> {
    reports
        .iter()
        .map(|r| {
            let scores: Vec<f64> = r.per_example.iter().map(|e| e.score).collect();
            SummaryRow {
                task_id: r.task_id.clone(),
                kind: r.kind,
                n_evaluated: r.n_evaluated,
                accuracy: r.accuracy,
                quantiles: match r.kind {
                    TaskKind::Generation => Quantiles::of(&scores),
                    TaskKind::ExactMatch => None,
                },
            }
        })
        .collect()
}
