use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{BucketScheme, EmBuckets, GenBuckets, SamplerError};
use crate::hashing::{derive_seed, rng_for};

/// A single NI example.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExampleRef {
    pub task_id: String,
    pub instance_id: String,
}

/// Draw size of one sampling unit: an EM task, or a `(task, bucket)` pair
/// for generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quota {
    pub task_id: String,
    pub bucket: String,
    pub available: usize,
    pub rate: f64,
    pub quota: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub seed: u64,
    pub target_total: usize,
    pub quotas: Vec<Quota>,
    /// Sum of quotas before truncation.
    pub aggregate: usize,
    /// True when the aggregate could not reach the target.
    pub short: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSelection {
    pub plan: SamplePlan,
    /// Sorted, duplicate-free.
    pub selected: Vec<ExampleRef>,
    pub shortfall: usize,
}

/// Uniform sample of `min(target, |ids|)` items without replacement,
/// returned sorted. The result depends only on the set of ids and the seed.
pub fn truncate_pool<T: Ord + Clone>(ids: &[T], target: usize, seed: u64) -> Vec<T> {
    let mut sorted = ids.to_vec();
    sorted.sort();
    if target >= sorted.len() {
        return sorted;
    }
    let mut rng = rng_for(seed, &["truncate"]);
    let mut picked: Vec<T> = index::sample(&mut rng, sorted.len(), target)
        .into_iter()
        .map(|i| sorted[i].clone())
        .collect();
    picked.sort();
    picked
}

fn draw(ids: &[String], quota: usize, seed: u64, labels: &[&str]) -> Vec<String> {
    let mut rng = rng_for(seed, labels);
    index::sample(&mut rng, ids.len(), quota.min(ids.len()))
        .into_iter()
        .map(|i| ids[i].clone())
        .collect()
}

fn finish(quotas: Vec<Quota>, pool: Vec<ExampleRef>, target_total: usize, seed: u64) -> PoolSelection {
    let aggregate = pool.len();
    let shortfall = target_total.saturating_sub(aggregate);
    if shortfall > 0 {
        tracing::warn!(aggregate, target_total, "pool is short of its target");
    }
    let selected = truncate_pool(&pool, target_total, derive_seed(seed, &["pool"]));
    PoolSelection {
        plan: SamplePlan {
            seed,
            target_total,
            quotas,
            aggregate,
            short: shortfall > 0,
        },
        selected,
        shortfall,
    }
}

/// Draws `floor(rate * |bucket|)` examples from every `(task, bucket)` unit,
/// then truncates the aggregate to `target_total`.
pub fn sample_generation_pool(
    buckets: &GenBuckets,
    scheme: &BucketScheme,
    target_total: usize,
    seed: u64,
) -> Result<PoolSelection, SamplerError> {
    scheme.validate()?;
    let mut quotas = Vec::new();
    let mut pool = Vec::new();
    for ((task_id, b), ids) in &buckets.buckets {
        let bucket = scheme
            .buckets
            .get(*b)
            .ok_or_else(|| SamplerError::InvalidScheme(format!("no bucket with index {b}")))?;
        let label = bucket.label();
        let quota = bucket.quota(ids.len());
        pool.extend(
            draw(ids, quota, seed, &["gen", task_id, &label])
                .into_iter()
                .map(|instance_id| ExampleRef {
                    task_id: task_id.clone(),
                    instance_id,
                }),
        );
        quotas.push(Quota {
            task_id: task_id.clone(),
            bucket: label,
            available: ids.len(),
            rate: bucket.rate,
            quota,
        });
    }
    Ok(finish(quotas, pool, target_total, seed))
}

/// Draws `floor(rate(bucket) * |instances|)` examples from every bucketed
/// exact-match task, then truncates the aggregate to `target_total`.
pub fn sample_em_pool(
    buckets: &EmBuckets,
    instances: &BTreeMap<String, Vec<String>>,
    scheme: &BucketScheme,
    target_total: usize,
    seed: u64,
) -> Result<PoolSelection, SamplerError> {
    scheme.validate()?;
    scheme.check_non_increasing_rates()?;
    let mut quotas = Vec::new();
    let mut pool = Vec::new();
    for (b, task_ids) in &buckets.buckets {
        let bucket = scheme
            .buckets
            .get(*b)
            .ok_or_else(|| SamplerError::InvalidScheme(format!("no bucket with index {b}")))?;
        let label = bucket.label();
        let mut task_ids = task_ids.clone();
        task_ids.sort();
        for task_id in task_ids {
            let ids = instances
                .get(&task_id)
                .ok_or_else(|| SamplerError::UnknownTask(task_id.clone()))?;
            let quota = bucket.quota(ids.len());
            pool.extend(
                draw(ids, quota, seed, &["em", &task_id])
                    .into_iter()
                    .map(|instance_id| ExampleRef {
                        task_id: task_id.clone(),
                        instance_id,
                    }),
            );
            quotas.push(Quota {
                task_id,
                bucket: label.clone(),
                available: ids.len(),
                rate: bucket.rate,
                quota,
            });
        }
    }
    Ok(finish(quotas, pool, target_total, seed))
}
