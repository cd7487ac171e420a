use std::collections::BTreeMap;

use crate::corpus::TaskKind;
use crate::fewshot::TaskScoreReport;

use super::BucketScheme;

/// Generation examples keyed by `(task_id, bucket index)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenBuckets {
    pub buckets: BTreeMap<(String, usize), Vec<String>>,
    /// Examples discarded by `drop_above` or outside every interval.
    pub dropped: usize,
}

impl GenBuckets {
    pub fn bucketed(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }
}

/// Exact-match task ids keyed by bucket index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmBuckets {
    pub buckets: BTreeMap<usize, Vec<String>>,
    /// Tasks below the accuracy cutoff, without accuracy, or outside
    /// every interval.
    pub dropped: Vec<String>,
}

impl EmBuckets {
    pub fn bucketed(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }
}

/// Places every scored generation example in its ROUGE bucket.
pub fn bucket_generation_examples(
    reports: &[TaskScoreReport],
    scheme: &BucketScheme,
) -> GenBuckets {
    let mut out = GenBuckets::default();
    for report in reports.iter().filter(|r| r.kind == TaskKind::Generation) {
        for ex in &report.per_example {
            match scheme.locate(ex.score) {
                Some(b) => out
                    .buckets
                    .entry((report.task_id.clone(), b))
                    .or_default()
                    .push(ex.instance_id.clone()),
                None => out.dropped += 1,
            }
        }
    }
    out
}

/// Removes low-accuracy tasks, then buckets the rest by accuracy.
pub fn bucket_em_tasks(reports: &[TaskScoreReport], scheme: &BucketScheme) -> EmBuckets {
    let mut out = EmBuckets::default();
    for report in reports.iter().filter(|r| r.kind == TaskKind::ExactMatch) {
        let slot = report
            .accuracy
            .filter(|&acc| acc >= scheme.drop_below_task_accuracy)
            .and_then(|acc| scheme.locate(acc));
        match slot {
            Some(b) => out.buckets.entry(b).or_default().push(report.task_id.clone()),
            None => out.dropped.push(report.task_id.clone()),
        }
    }
    if out.buckets.is_empty() && !out.dropped.is_empty() {
        tracing::warn!(dropped = out.dropped.len(), "every exact-match task was dropped");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fewshot::ExampleScore;

    fn gen_report(task: &str, scores: &[f64]) -> TaskScoreReport {
        let per_example = scores
            .iter()
            .enumerate()
            .map(|(i, &score)| ExampleScore { instance_id: format!("{task}-{i}"), score })
            .collect();
        TaskScoreReport::new(task.into(), TaskKind::Generation, per_example, 0, String::new())
    }

    fn em_report(task: &str, correct: usize, total: usize) -> TaskScoreReport {
        let per_example = (0..total)
            .map(|i| ExampleScore {
                instance_id: format!("{task}-{i}"),
                score: if i < correct { 1.0 } else { 0.0 },
            })
            .collect();
        TaskScoreReport::new(task.into(), TaskKind::ExactMatch, per_example, 0, String::new())
    }

    #[test]
    fn generation_partition() {
        let scheme = BucketScheme::generation_default();
        let b = bucket_generation_examples(&[gen_report("g", &[0.75, 0.2, 0.85, 0.1, 0.19999])], &scheme);
        assert_eq!(b.buckets[&("g".to_string(), 6)], vec!["g-0"]);
        assert_eq!(b.buckets[&("g".to_string(), 1)], vec!["g-1"]);
        assert_eq!(b.buckets[&("g".to_string(), 0)], vec!["g-3", "g-4"]);
        assert_eq!(b.dropped, 1);
        assert_eq!(b.bucketed() + b.dropped, 5);
    }

    #[test]
    fn em_cutoff_and_buckets() {
        let scheme = BucketScheme::exact_match_default();
        let reports = [em_report("low", 3, 100), em_report("a", 15, 100), em_report("b", 55, 100)];
        let b = bucket_em_tasks(&reports, &scheme);
        assert_eq!(b.dropped, vec!["low"]);
        assert_eq!(b.buckets.len(), 2);
        assert_eq!(b.bucketed(), 2);
    }

    #[test]
    fn all_em_dropped() {
        let scheme = BucketScheme::exact_match_default();
        let b = bucket_em_tasks(&[em_report("x", 0, 10), em_report("y", 0, 10)], &scheme);
        assert!(b.buckets.is_empty());
        assert_eq!(b.dropped.len(), 2);
    }
}
