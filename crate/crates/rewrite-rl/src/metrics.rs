//! Text-overlap metrics and the feedback signals built on top of them.
//!
//! ROUGE-1/2/L, BLEU, and a METEOR variant operate on whitespace/punctuation
//! tokenized lowercase text (see [`crate::text::tokenize`]). The feedback
//! metrics combine these with embedding cosine similarities to score a query
//! rewrite from four angles: closeness to the gold document, rank-weighted
//! retrieval quality, generation quality, and agreement with a manual
//! rewrite.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::embedding::{cosine, EmbeddingVector};
use crate::text::tokenize;

/// Precision / recall / F1 triple as produced by the ROUGE family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl OverlapScore {
    pub const ZERO: OverlapScore = OverlapScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.join("\u{1f}")).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_overlap(cand: &HashMap<String, usize>, reference: &HashMap<String, usize>) -> usize {
    cand.iter()
        .map(|(gram, c)| (*c).min(reference.get(gram).copied().unwrap_or(0)))
        .sum()
}

/// ROUGE-N with clipped n-gram counts.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> OverlapScore {
    assert!(n >= 1, "n-gram order must be at least 1");
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    let cand_counts = ngram_counts(&cand, n);
    let ref_counts = ngram_counts(&refr, n);
    let cand_total: usize = cand_counts.values().sum();
    let ref_total: usize = ref_counts.values().sum();
    if cand_total == 0 || ref_total == 0 {
        return OverlapScore::ZERO;
    }
    let overlap = clipped_overlap(&cand_counts, &ref_counts) as f64;
    OverlapScore::from_pr(overlap / cand_total as f64, overlap / ref_total as f64)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L from the length of the longest common subsequence.
pub fn rouge_l(candidate: &str, reference: &str) -> OverlapScore {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return OverlapScore::ZERO;
    }
    let lcs = lcs_len(&cand, &refr) as f64;
    OverlapScore::from_pr(lcs / cand.len() as f64, lcs / refr.len() as f64)
}

/// Sentence-level BLEU over 1..=4-grams with uniform weights.
///
/// Add-1 smoothing applies only to orders n >= 2 whose raw clipped count is
/// zero; a zero unigram overlap yields a hard 0. The brevity penalty
/// exp(1 - |ref|/|cand|) kicks in only when the candidate is strictly
/// shorter than the reference.
pub fn bleu(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4usize {
        let cand_counts = ngram_counts(&cand, n);
        let ref_counts = ngram_counts(&refr, n);
        let total: usize = cand_counts.values().sum();
        let overlap = clipped_overlap(&cand_counts, &ref_counts);
        let p = if overlap > 0 {
            overlap as f64 / total as f64
        } else if n >= 2 {
            1.0 / (total as f64 + 1.0)
        } else {
            return 0.0;
        };
        log_sum += 0.25 * p.ln();
    }
    let bp = if cand.len() < refr.len() {
        (1.0 - refr.len() as f64 / cand.len() as f64).exp()
    } else {
        1.0
    };
    bp * log_sum.exp()
}

/// Exact-match METEOR: greedy left-to-right one-to-one alignment, harmonic
/// mean weighted toward recall, and a cubic fragmentation penalty.
pub fn meteor_lite(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    // alignment[i] = matched reference position for candidate token i
    let mut used = vec![false; refr.len()];
    let mut alignment: Vec<Option<usize>> = Vec::with_capacity(cand.len());
    for token in &cand {
        let hit = refr
            .iter()
            .enumerate()
            .position(|(j, r)| !used[j] && r == token);
        if let Some(j) = hit {
            used[j] = true;
        }
        alignment.push(hit);
    }
    let m = alignment.iter().flatten().count();
    if m == 0 {
        return 0.0;
    }
    let mut chunks = 0usize;
    let mut prev: Option<usize> = None;
    for slot in &alignment {
        match (*slot, prev) {
            (Some(j), Some(p)) if j == p + 1 => {}
            (Some(_), _) => chunks += 1,
            (None, _) => {}
        }
        prev = *slot;
    }
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / refr.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    f_mean * (1.0 - penalty)
}

/// Which ROUGE flavor backs the generation and rewrite feedback metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RougeVariant {
    Rouge1,
    Rouge2,
    #[default]
    RougeL,
}

impl RougeVariant {
    pub fn score(&self, candidate: &str, reference: &str) -> OverlapScore {
        match self {
            RougeVariant::Rouge1 => rouge_n(candidate, reference, 1),
            RougeVariant::Rouge2 => rouge_n(candidate, reference, 2),
            RougeVariant::RougeL => rouge_l(candidate, reference),
        }
    }
}

impl FromStr for RougeVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rouge1" | "rouge-1" => Ok(RougeVariant::Rouge1),
            "rouge2" | "rouge-2" => Ok(RougeVariant::Rouge2),
            "rougel" | "rouge-l" => Ok(RougeVariant::RougeL),
            other => Err(format!("unknown rouge variant: {other}")),
        }
    }
}

impl fmt::Display for RougeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RougeVariant::Rouge1 => write!(f, "rouge1"),
            RougeVariant::Rouge2 => write!(f, "rouge2"),
            RougeVariant::RougeL => write!(f, "rougel"),
        }
    }
}

/// Mean cosine similarity between the rewrite embedding and the gold
/// document embeddings (usually a single document).
pub fn metric_d_plus(rewrite: &EmbeddingVector, gold_docs: &[EmbeddingVector]) -> f64 {
    if gold_docs.is_empty() {
        return 0.0;
    }
    let sum: f64 = gold_docs
        .iter()
        .map(|d| cosine(rewrite, d).expect("gold document embedding dimension"))
        .sum();
    sum / gold_docs.len() as f64
}

/// Rank-weighted similarity between the ground-truth answer embedding and
/// the ranked retrieval list: sum over ranks i of CS(answer, doc_i) / i.
pub fn metric_rank_weighted(answer: &EmbeddingVector, ranked_docs: &[EmbeddingVector]) -> f64 {
    ranked_docs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            cosine(answer, d).expect("ranked document embedding dimension") / (i + 1) as f64
        })
        .sum()
}

/// Overlap between the generated answer and the ground-truth answer.
pub fn metric_generation(generated: &str, ground_truth: &str, variant: RougeVariant) -> f64 {
    variant.score(generated, ground_truth).f1
}

/// Overlap between the policy rewrite and the manual rewrite.
pub fn metric_rewrite_ref(rewrite: &str, manual: &str, variant: RougeVariant) -> f64 {
    variant.score(rewrite, manual).f1
}

/// The four feedback metrics for one example, plus their weighted
/// combination used as the scalar RL reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValues {
    pub d_plus: f64,
    pub rank_weighted: f64,
    pub generation: f64,
    pub rewrite: f64,
}

impl MetricValues {
    pub fn combine(&self, lambda: [f64; 3], mu: f64) -> f64 {
        lambda[0] * self.d_plus
            + lambda[1] * self.rank_weighted
            + lambda[2] * self.generation
            + mu * self.rewrite
    }
}
