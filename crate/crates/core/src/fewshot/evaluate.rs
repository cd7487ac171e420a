use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::client::{CompletionClient, CompletionTransport, EndpointError};
use super::prompt::{build_fewshot_prompt, prompt_fingerprint, PromptError};
use super::report::{ExampleScore, TaskScoreReport};
use crate::corpus::{TaskDefinition, TaskKind};
use crate::hashing::rng_for;
use crate::metrics::{score_prediction, MetricsError, ScoringConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Demonstrations per prompt.
    pub k: usize,
    pub max_instances: usize,
    pub seed: u64,
    pub scoring: ScoringConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k: 3,
            max_instances: 100,
            seed: 0,
            scoring: ScoringConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("max_instances must be >= 1")]
    NoInstancesRequested,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("task {task_id}: all {failed} completions failed, last error: {last}")]
    AllCompletionsFailed {
        task_id: String,
        failed: usize,
        last: EndpointError,
    },
}

/// A task excluded from sampling, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task_id: String,
    pub reason: String,
}

/// Scores `min(max_instances, |instances|)` seeded instances of `task`.
///
/// Up to `max_in_flight` completions are outstanding at once. Results are
/// merged by instance position, so the report does not depend on completion
/// order.
pub fn evaluate_task<T: CompletionTransport>(
    task: &TaskDefinition,
    kind: TaskKind,
    client: &CompletionClient<T>,
    opts: &EvalOptions,
) -> Result<TaskScoreReport, EvalError> {
    if opts.max_instances == 0 {
        return Err(EvalError::NoInstancesRequested);
    }
    let n = task.instances.len();
    let mut rng = rng_for(opts.seed, &["instances", &task.task_id]);
    let mut chosen = index::sample(&mut rng, n, opts.max_instances.min(n)).into_vec();
    chosen.sort_unstable();

    // Prompt errors are task-level and surface before any request is sent.
    let prompts = chosen
        .iter()
        .map(|&i| build_fewshot_prompt(task, i, opts.k, opts.seed))
        .collect::<Result<Vec<_>, _>>()?;

    let results: Mutex<Vec<Option<Result<String, EndpointError>>>> =
        Mutex::new(vec![None; prompts.len()]);
    let next = AtomicUsize::new(0);
    let workers = client.config().max_in_flight.min(prompts.len()).max(1);
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let slot = next.fetch_add(1, Ordering::Relaxed);
                let Some(prompt) = prompts.get(slot) else { break };
                let outcome = client.complete(prompt).map(|c| c.text);
                results.lock().expect("results lock")[slot] = Some(outcome);
            });
        }
    });

    let mut per_example = Vec::with_capacity(chosen.len());
    let mut failed = 0;
    let mut last_error = None;
    for (&idx, outcome) in chosen.iter().zip(results.into_inner().expect("results lock")) {
        let inst = &task.instances[idx];
        match outcome.expect("every slot is filled") {
            Ok(text) => per_example.push(ExampleScore {
                instance_id: inst.id.clone(),
                score: score_prediction(kind, &text, &inst.output, &opts.scoring)?,
            }),
            Err(e) => {
                failed += 1;
                last_error = Some(e);
            }
        }
    }
    if per_example.is_empty() {
        return Err(EvalError::AllCompletionsFailed {
            task_id: task.task_id.clone(),
            failed,
            last: last_error.expect("at least one failure"),
        });
    }
    if failed > 0 {
        tracing::warn!(task = %task.task_id, failed, "some completions failed; instances skipped");
    }
    Ok(TaskScoreReport::new(
        task.task_id.clone(),
        kind,
        per_example,
        failed,
        prompt_fingerprint(opts.k, opts.seed),
    ))
}

/// Evaluates tasks in order. Tasks that cannot be scored are returned as
/// failures instead of being scored zero.
pub fn evaluate_tasks<T: CompletionTransport>(
    tasks: &[(&TaskDefinition, TaskKind)],
    client: &CompletionClient<T>,
    opts: &EvalOptions,
) -> (Vec<TaskScoreReport>, Vec<TaskFailure>) {
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (task, kind) in tasks {
        match evaluate_task(task, *kind, client, opts) {
            Ok(report) => reports.push(report),
            Err(e) => {
                tracing::warn!(task = %task.task_id, error = %e, "task excluded from sampling");
                failures.push(TaskFailure {
                    task_id: task.task_id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    (reports, failures)
}
