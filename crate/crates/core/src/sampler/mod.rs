//! Difficulty-bucketed sampling of exact-match and generation pools.
//!
//! Generation examples are bucketed individually by their ROUGE score;
//! exact-match tasks are bucketed as a whole by accuracy. Each unit draws
//! `floor(rate * size)` items without replacement, and the aggregate is
//! truncated uniformly to the pool target.

mod buckets;
mod pool;
mod scheme;

pub use buckets::{bucket_em_tasks, bucket_generation_examples, EmBuckets, GenBuckets};
pub use pool::{
    sample_em_pool, sample_generation_pool, truncate_pool, ExampleRef, PoolSelection, Quota,
    SamplePlan,
};
pub use scheme::{Bucket, BucketScheme};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplerError {
    #[error("invalid bucket scheme: {0}")]
    InvalidScheme(String),
    #[error("exact-match rates must not increase with accuracy: bucket {lower} rate {lower_rate} < bucket {higher} rate {higher_rate}")]
    NonMonotoneRates {
        lower: String,
        lower_rate: f64,
        higher: String,
        higher_rate: f64,
    },
    #[error("no instance list for task {0}")]
    UnknownTask(String),
}
