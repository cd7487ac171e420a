//! Few-shot difficulty scoring against a text-completion endpoint.

mod client;
mod evaluate;
mod prompt;
mod report;

pub use client::{
    complete, Completion, CompletionClient, CompletionRequest, CompletionResponse,
    CompletionTransport, EndpointConfig, EndpointError, HttpTransport, TransportError,
};
pub use evaluate::{evaluate_task, evaluate_tasks, EvalError, EvalOptions, TaskFailure};
pub use prompt::{build_fewshot_prompt, prompt_fingerprint, PromptError, PROMPT_TEMPLATE_VERSION};
pub use report::{
    read_reports, summarize_reports, write_reports, ExampleScore, Quantiles, SummaryRow,
    TaskScoreReport,
};
