//! Text normalization, exact match and ROUGE.
//!
//! ROUGE here works on whitespace tokens with no stemming or stopword
//! removal. Multi-reference scoring takes the maximum over references.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::TaskKind;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("reference list is empty")]
    EmptyReferences,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationPolicy {
    pub case_fold: bool,
    pub strip_punctuation: bool,
    pub collapse_whitespace: bool,
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        Self {
            case_fold: true,
            strip_punctuation: true,
            collapse_whitespace: true,
        }
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{3001}'..='\u{3003}')
        || matches!(c, '¡' | '¿' | '«' | '»' | '§' | '¶' | '·')
}

pub fn normalize_text(s: &str, policy: &NormalizationPolicy) -> String {
    let mut out = if policy.case_fold {
        s.to_lowercase()
    } else {
        s.to_string()
    };
    if policy.strip_punctuation {
        out.retain(|c| !is_punctuation(c));
    }
    if policy.collapse_whitespace {
        out = out.split_whitespace().collect::<Vec<_>>().join(" ");
    }
    out
}

/// True iff the normalized prediction equals some normalized reference.
pub fn exact_match(
    pred: &str,
    refs: &[impl AsRef<str>],
    policy: &NormalizationPolicy,
) -> Result<bool, MetricsError> {
    if refs.is_empty() {
        return Err(MetricsError::EmptyReferences);
    }
    let pred = normalize_text(pred, policy);
    Ok(refs
        .iter()
        .any(|r| normalize_text(r.as_ref(), policy) == pred))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub const ZERO: RougeScore = RougeScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    /// Builds a score from an overlap count and the two totals. Empty totals
    /// give zero components.
    pub fn from_counts(overlap: usize, pred_total: usize, ref_total: usize) -> Self {
        let ratio = |total: usize| {
            if total == 0 {
                0.0
            } else {
                overlap as f64 / total as f64
            }
        };
        let precision = ratio(pred_total);
        let recall = ratio(ref_total);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        RougeScore {
            precision,
            recall,
            f1,
        }
    }
}

pub fn tokenize(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N over token slices with clipped n-gram counts.
///
/// Panics if `n == 0`.
pub fn rouge_n_tokens<T: Eq + Hash>(pred: &[T], reference: &[T], n: usize) -> RougeScore {
    assert!(n >= 1, "ROUGE-N needs n >= 1");
    let pred_counts = ngram_counts(pred, n);
    let ref_counts = ngram_counts(reference, n);
    let overlap = pred_counts
        .iter()
        .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    let total = |len: usize| if len >= n { len - n + 1 } else { 0 };
    RougeScore::from_counts(overlap, total(pred.len()), total(reference.len()))
}

pub fn rouge_n(pred: &str, reference: &str, n: usize) -> RougeScore {
    rouge_n_tokens(&tokenize(pred), &tokenize(reference), n)
}

/// Length of the longest common subsequence.
///
/// Uses the bit-vector recurrence `V = (V + U) | (V - U)`, `U = V & match`
/// when the shorter side fits in a machine word, and a single-row dynamic
/// programme otherwise.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    if short.len() <= 64 {
        lcs_len_bits(long, short)
    } else {
        lcs_len_dp(long, short)
    }
}

fn lcs_len_bits<T: Eq>(long: &[T], short: &[T]) -> usize {
    let mut v = u64::MAX;
    for x in long {
        let mut matches = 0u64;
        for (j, y) in short.iter().enumerate() {
            matches |= u64::from(x == y) << j;
        }
        let u = v & matches;
        v = v.wrapping_add(u) | v.wrapping_sub(u);
    }
    let used = if short.len() == 64 { u64::MAX } else { (1u64 << short.len()) - 1 };
    (!v & used).count_ones() as usize
}

fn lcs_len_dp<T: Eq>(long: &[T], short: &[T]) -> usize {
    let mut row = vec![0usize; short.len()];
    for x in long {
        let (mut diag, mut left) = (0, 0);
        for (y, cell) in short.iter().zip(row.iter_mut()) {
            let up = *cell;
            left = if x == y { diag + 1 } else { left.max(up) };
            *cell = left;
            diag = up;
        }
    }
    row[short.len() - 1]
}

pub fn rouge_l_tokens<T: Eq>(pred: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(lcs_len(pred, reference), pred.len(), reference.len())
}

pub fn rouge_l(pred: &str, reference: &str) -> RougeScore {
    rouge_l_tokens(&tokenize(pred), &tokenize(reference))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum RougeVariant {
    #[serde(rename = "rouge-1")]
    Rouge1,
    #[serde(rename = "rouge-2")]
    Rouge2,
    #[default]
    #[serde(rename = "rouge-l")]
    RougeL,
}

impl RougeVariant {
    pub fn score(self, pred: &str, reference: &str) -> RougeScore {
        match self {
            RougeVariant::Rouge1 => rouge_n(pred, reference, 1),
            RougeVariant::Rouge2 => rouge_n(pred, reference, 2),
            RougeVariant::RougeL => rouge_l(pred, reference),
        }
    }
}

impl fmt::Display for RougeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RougeVariant::Rouge1 => "rouge-1",
            RougeVariant::Rouge2 => "rouge-2",
            RougeVariant::RougeL => "rouge-l",
        })
    }
}

impl FromStr for RougeVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rouge-1" | "rouge1" => Ok(RougeVariant::Rouge1),
            "rouge-2" | "rouge2" => Ok(RougeVariant::Rouge2),
            "rouge-l" | "rougel" => Ok(RougeVariant::RougeL),
            other => Err(format!("unknown ROUGE variant {other:?}")),
        }
    }
}

/// How predictions are turned into a [0,1] score.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub normalization: NormalizationPolicy,
    pub rouge: RougeVariant,
}

/// Exact match for EM tasks; best ROUGE f1 over references for generation
/// tasks. Both sides are normalized first.
pub fn score_prediction(
    kind: TaskKind,
    pred: &str,
    refs: &[impl AsRef<str>],
    cfg: &ScoringConfig,
) -> Result<f64, MetricsError> {
    if refs.is_empty() {
        return Err(MetricsError::EmptyReferences);
    }
    match kind {
        TaskKind::ExactMatch => {
            Ok(if exact_match(pred, refs, &cfg.normalization)? { 1.0 } else { 0.0 })
        }
        TaskKind::Generation => {
            let pred = normalize_text(pred, &cfg.normalization);
            Ok(refs
                .iter()
                .map(|r| {
                    cfg.rouge
                        .score(&pred, &normalize_text(r.as_ref(), &cfg.normalization))
                        .f1
                })
                .fold(0.0, f64::max))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Longest common subsequence by enumerating every subsequence of `a`.
    fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
        fn is_subsequence(x: &[u8], of: &[u8]) -> bool {
            let mut it = of.iter();
            x.iter().all(|c| it.any(|d| d == c))
        }
        (0u32..(1 << a.len()))
            .filter_map(|mask| {
                let sub: Vec<u8> = (0..a.len())
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| a[i])
                    .collect();
                is_subsequence(&sub, b).then_some(sub.len())
            })
            .max()
            .unwrap_or(0)
    }

    /// Clipped n-gram overlap by nested loops with a used-flag per ref gram.
    fn naive_overlap(pred: &[u8], reference: &[u8], n: usize) -> (usize, usize, usize) {
        let grams = |t: &[u8]| -> Vec<Vec<u8>> {
            if t.len() < n {
                vec![]
            } else {
                (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
            }
        };
        let (p, r) = (grams(pred), grams(reference));
        let mut used = vec![false; r.len()];
        let mut overlap = 0;
        for g in &p {
            if let Some(j) = (0..r.len()).find(|&j| !used[j] && r[j] == *g) {
                used[j] = true;
                overlap += 1;
            }
        }
        (overlap, p.len(), r.len())
    }

    #[test]
    fn normalize_examples() {
        let p = NormalizationPolicy::default();
        assert_eq!(normalize_text("  The  CAT. ", &p), "the cat");
        assert_eq!(normalize_text("", &p), "");
        let keep_case = NormalizationPolicy {
            case_fold: false,
            ..p
        };
        assert_eq!(normalize_text("Hello, World!", &keep_case), "Hello World");
    }

    #[test]
    fn exact_match_examples() {
        let p = NormalizationPolicy::default();
        assert!(exact_match("Positive", &["positive"], &p).unwrap());
        assert!(!exact_match("positive", &["negative"], &p).unwrap());
        assert!(exact_match("yes.", &["no", "yes"], &p).unwrap());
        let empty: [&str; 0] = [];
        assert_eq!(exact_match("x", &empty, &p), Err(MetricsError::EmptyReferences));
    }

    #[test]
    fn rouge_n_examples() {
        assert_eq!(rouge_n("a b c", "a b c", 2).f1, 1.0);
        // Bigrams {ab, bc, cd} vs {ab, bx, xd}: overlap 1 of 3 each.
        let (overlap, np, nr) = naive_overlap(b"abcd", b"abxd", 2);
        assert_eq!((overlap, np, nr), (1, 3, 3));
        let s = rouge_n("a b c d", "a b x d", 2);
        assert!((s.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.recall - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.f1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_n("x", "a b", 2), RougeScore::ZERO);
    }

    #[test]
    fn rouge_n_clips_repeated_grams() {
        let s = rouge_n("the the the", "the cat", 1);
        assert!((s.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rouge_l_examples() {
        assert_eq!(rouge_l("a b c", "a b c").f1, 1.0);
        assert_eq!(brute_lcs(b"tc", b"tcsom"), 2);
        let s = rouge_l("the cat", "the cat sat on mat");
        assert_eq!(s.precision, 1.0);
        assert!((s.recall - 0.4).abs() < 1e-12);
        assert!((s.f1 - 0.571_428_571_428_571_4).abs() < 1e-9);
        assert_eq!(rouge_l("a b", "c d").f1, 0.0);
        assert_eq!(rouge_l("", "").f1, 0.0);
    }

    #[test]
    fn score_prediction_examples() {
        let cfg = ScoringConfig::default();
        assert_eq!(score_prediction(TaskKind::ExactMatch, "A", &["A"], &cfg).unwrap(), 1.0);
        assert_eq!(
            score_prediction(TaskKind::Generation, "second ref", &["first ref text", "second ref"], &cfg)
                .unwrap(),
            1.0
        );
        let s = score_prediction(TaskKind::Generation, "the cat", &["the cat sat on mat"], &cfg).unwrap();
        assert!((s - 4.0 / 7.0).abs() < 1e-12);
        let rouge2 = ScoringConfig {
            rouge: RougeVariant::Rouge2,
            ..cfg
        };
        assert_eq!(
            score_prediction(TaskKind::Generation, "x y", &["x y"], &rouge2).unwrap(),
            1.0
        );
    }

    #[test]
    fn variant_parses() {
        assert_eq!("ROUGE-L".parse::<RougeVariant>(), Ok(RougeVariant::RougeL));
        assert!("rouge-w".parse::<RougeVariant>().is_err());
    }

    fn tokens() -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..3, 0..=8)
    }

    #[test]
    fn word_and_row_lcs_agree_near_word_size() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(64);
        for _ in 0..500 {
            let la = rng.random_range(0..=80);
            let lb = rng.random_range(58..=70);
            let a: Vec<u8> = (0..la).map(|_| rng.random_range(0..4)).collect();
            let b: Vec<u8> = (0..lb).map(|_| rng.random_range(0..4)).collect();
            let (long, short) = if a.len() >= b.len() { (&a, &b) } else { (&b, &a) };
            if short.is_empty() {
                assert_eq!(lcs_len(&a, &b), 0);
                continue;
            }
            let dp = lcs_len_dp(long, short);
            if short.len() <= 64 {
                assert_eq!(lcs_len_bits(long, short), dp, "{a:?} {b:?}");
            }
            assert_eq!(lcs_len(&a, &b), dp, "{a:?} {b:?}");
        }
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in "\\PC{0,40}") {
            let p = NormalizationPolicy::default();
            let once = normalize_text(&s, &p);
            prop_assert_eq!(normalize_text(&once, &p), once);
        }

        #[test]
        fn lcs_matches_brute_force(a in tokens(), b in tokens()) {
            prop_assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b));
        }

        #[test]
        fn rouge_n_matches_naive(a in prop::collection::vec(0u8..4, 0..12),
                                 b in prop::collection::vec(0u8..4, 0..12),
                                 n in 1usize..4) {
            let (overlap, np, nr) = naive_overlap(&a, &b, n);
            prop_assert_eq!(rouge_n_tokens(&a, &b, n), RougeScore::from_counts(overlap, np, nr));
        }

        #[test]
        fn rouge_l_self_is_one(a in prop::collection::vec(0u8..5, 1..20)) {
            prop_assert_eq!(rouge_l_tokens(&a, &a).f1, 1.0);
        }

        #[test]
        fn scores_are_bounded(a in prop::collection::vec(0u8..3, 0..15),
                              b in prop::collection::vec(0u8..3, 0..15)) {
            for s in [rouge_l_tokens(&a, &b), rouge_n_tokens(&a, &b, 1), rouge_n_tokens(&a, &b, 2)] {
                for v in [s.precision, s.recall, s.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn shared_suffix_never_lowers_f1(a in prop::collection::vec(0u8..3, 1..8),
                                         b in prop::collection::vec(0u8..3, 1..8),
                                         k in 1usize..6) {
            // Appending a fresh token to both sides grows LCS and both
            // lengths by exactly one each step.
            let mut pa = a.clone();
            let mut pb = b.clone();
            let mut last = rouge_l_tokens(&pa, &pb).f1;
            for _ in 0..k {
                pa.push(9);
                pb.push(9);
                let next = rouge_l_tokens(&pa, &pb).f1;
                prop_assert!(next + 1e-12 >= last, "{} < {}", next, last);
                last = next;
            }
        }
    }
}
