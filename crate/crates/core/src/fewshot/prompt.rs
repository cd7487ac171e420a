use rand::seq::index;

use crate::corpus::TaskDefinition;
use crate::hashing::{rng_for, sha256_hex};

/// Bumped whenever the prompt layout changes; part of every fingerprint.
pub const PROMPT_TEMPLATE_VERSION: &str = "definition/input-output/v1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("task {task_id}: no instance at index {index}")]
    NoSuchInstance { task_id: String, index: usize },
    #[error("task {task_id}: {k} demonstrations requested but only {available} available")]
    NotEnoughDemonstrations {
        task_id: String,
        k: usize,
        available: usize,
    },
}

/// Identifies the prompt template, demonstration count and seed.
pub fn prompt_fingerprint(k: usize, seed: u64) -> String {
    let mut hex = sha256_hex(format!("{PROMPT_TEMPLATE_VERSION}|k={k}|seed={seed}").as_bytes());
    hex.truncate(16);
    hex
}

/// Builds the prompt for `task.instances[target]`.
///
/// Layout: the definition, `k` demonstrations as `Input: …\nOutput: …`
/// separated by blank lines, then `Input: <target>\nOutput:`.
/// Demonstrations come from the task's positive examples; when there are
/// fewer than `k`, the remainder is drawn from the other instances. The
/// target itself, and any instance with an identical input, is never used.
pub fn build_fewshot_prompt(
    task: &TaskDefinition,
    target: usize,
    k: usize,
    seed: u64,
) -> Result<String, PromptError> {
    let target_inst = task
        .instances
        .get(target)
        .ok_or_else(|| PromptError::NoSuchInstance {
            task_id: task.task_id.clone(),
            index: target,
        })?;
    let mut rng = rng_for(seed, &["demos", &task.task_id, &target_inst.id]);

    let positives: Vec<(&str, &str)> = task
        .positive_examples
        .iter()
        .filter(|ex| ex.input != target_inst.input)
        .map(|ex| (ex.input.as_str(), ex.output.as_str()))
        .collect();

    let demos: Vec<(&str, &str)> = if positives.len() >= k {
        index::sample(&mut rng, positives.len(), k)
            .into_iter()
            .map(|i| positives[i])
            .collect()
    } else {
        let fallback: Vec<(&str, &str)> = task
            .instances
            .iter()
            .enumerate()
            .filter(|(i, inst)| *i != target && inst.input != target_inst.input)
            .map(|(_, inst)| (inst.input.as_str(), inst.output[0].as_str()))
            .collect();
        let needed = k - positives.len();
        if needed > fallback.len() {
            return Err(PromptError::NotEnoughDemonstrations {
                task_id: task.task_id.clone(),
                k,
                available: positives.len() + fallback.len(),
            });
        }
        let mut demos = positives;
        demos.extend(
            index::sample(&mut rng, fallback.len(), needed)
                .into_iter()
                .map(|i| fallback[i]),
        );
        demos
    };

    let mut prompt = task.definition_text();
    prompt.push_str("\n\n");
    for (input, output) in demos {
        prompt.push_str("Input: ");
        prompt.push_str(input);
        prompt.push_str("\nOutput: ");
        prompt.push_str(output);
        prompt.push_str("\n\n");
    }
    prompt.push_str("Input: ");
    prompt.push_str(&target_inst.input);
    prompt.push_str("\nOutput:");
    Ok(prompt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Instance, PositiveExample};
    use proptest::prelude::*;

    fn task(n_pos: usize, n_inst: usize) -> TaskDefinition {
        TaskDefinition {
            task_id: "task1_demo".into(),
            definition: vec!["Answer the question.".into()],
            categories: vec![],
            domains: vec![],
            input_language: vec!["English".into()],
            output_language: vec!["English".into()],
            positive_examples: (0..n_pos)
                .map(|i| PositiveExample {
                    input: format!("demo-in-{i}"),
                    output: format!("demo-out-{i}"),
                    explanation: None,
                })
                .collect(),
            instances: (0..n_inst)
                .map(|i| Instance {
                    id: format!("inst-{i}"),
                    input: format!("inst-in-{i}"),
                    output: vec![format!("inst-out-{i}")],
                })
                .collect(),
        }
    }

    #[test]
    fn zero_shot_is_definition_plus_target() {
        let p = build_fewshot_prompt(&task(3, 2), 1, 0, 7).unwrap();
        assert_eq!(p, "Answer the question.\n\nInput: inst-in-1\nOutput:");
    }

    #[test]
    fn demonstrations_are_deterministic() {
        let t = task(3, 5);
        let a = build_fewshot_prompt(&t, 0, 2, 11).unwrap();
        let b = build_fewshot_prompt(&t, 0, 2, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matches("Input: ").count(), 3);
        assert_eq!(a.matches("demo-out-").count(), 2);
    }

    #[test]
    fn falls_back_to_other_instances() {
        let t = task(1, 4);
        let p = build_fewshot_prompt(&t, 2, 3, 5).unwrap();
        assert!(p.contains("demo-out-0"));
        assert_eq!(p.matches("inst-out-").count(), 2);
        assert!(!p.contains("inst-out-2"));
    }

    #[test]
    fn too_many_demonstrations_is_an_error() {
        let err = build_fewshot_prompt(&task(1, 3), 0, 4, 5).unwrap_err();
        assert!(matches!(err, PromptError::NotEnoughDemonstrations { available: 3, .. }));
        assert!(build_fewshot_prompt(&task(1, 3), 0, 3, 5).is_ok());
    }

    #[test]
    fn fingerprint_tracks_k_and_seed() {
        assert_eq!(prompt_fingerprint(3, 1), prompt_fingerprint(3, 1));
        assert_ne!(prompt_fingerprint(3, 1), prompt_fingerprint(2, 1));
        assert_ne!(prompt_fingerprint(3, 1), prompt_fingerprint(3, 2));
    }

    proptest! {
        #[test]
        fn target_output_never_leaks(n_pos in 0usize..5, n_inst in 2usize..10,
                                     target_sel in 0usize..100, k in 0usize..6, seed: u64) {
            let t = task(n_pos, n_inst);
            let target = target_sel % n_inst;
            if let Ok(p) = build_fewshot_prompt(&t, target, k, seed) {
                let body = p.strip_suffix("Output:").unwrap();
                let gold = format!("inst-out-{target}");
                let leaked = format!("{}\n", gold);
                let tail = format!("Input: inst-in-{}\nOutput:", target);
                prop_assert!(!body.contains(&leaked));
                prop_assert!(p.ends_with(&tail));
                prop_assert_eq!(p.matches("Input: ").count(), k + 1);
            } else {
                prop_assert!(k > n_pos + n_inst - 1);
            }
        }
    }
}
