//! Deterministic curation of instruction-tuning data.
//!
//! The crate covers the whole curation path for a mixed instruction dataset:
//!
//! - [`corpus`]: Natural-Instructions task parsing, the task filter policy,
//!   the exact-match/generation category map and generic JSONL ingestion.
//! - [`metrics`]: text normalization, exact match, ROUGE-N and ROUGE-L.
//! - [`fewshot`]: few-shot prompt construction, an HTTP completion client with
//!   bounded concurrency and retries, and per-task difficulty reports.
//! - [`sampler`]: difficulty buckets and rate-based pool sampling.
//! - [`assembler`]: mixture presets, dedupe, validation split, dataset files,
//!   the audit manifest and the fine-tuning config preset.
//! - [`scorer`]: mean win rates, geometric-mean stage scores, threshold
//!   elimination and the weighted final score.
//! - [`pipeline`]: the stage runner used by the `curate` binary.
//!
//! Every random choice is driven by a seed derived from a single master seed,
//! so identical inputs give byte-identical outputs.

pub mod assembler;
pub mod corpus;
pub mod fewshot;
pub mod hashing;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod sampler;
pub mod scorer;

#[cfg(feature = "mock-endpoint")]
pub mod testing;
