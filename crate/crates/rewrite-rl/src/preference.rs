//! Preference pairs over candidate rewrites and Bradley-Terry reward models.
//!
//! Each training example yields up to three candidate rewrites (the manual
//! one plus a greedy and a sampled decode from the initialized policy). The
//! real pipeline measures every candidate, and strict metric differences
//! become (chosen, rejected) pairs — one pair set per retrieval/generation
//! metric, one reward model per set. A trained reward model then stands in
//! for the expensive metric during RL, squashed to (0, 1).

use rand::Rng;

use crate::corpus::{build_input_sequence, DialogueExample, Document};
use crate::gensim::{generate_extractive, ExtractiveAnswer, GenerationInput};
use crate::metrics::{
    metric_d_plus, metric_generation, metric_rank_weighted, metric_rewrite_ref, MetricValues,
    RougeVariant,
};
use crate::nn::graph::{Graph, NodeId};
use crate::nn::model::{RewriterPolicy, ScorerModel};
use crate::nn::params::{clip_grad_norm, Adam, Gradients, Real};
use crate::nn::vocab::{Vocab, EOS};
use crate::retrieval::{RankedList, RetrievalIndex};
use crate::stage_rng;

/// Strict-preference index pairs: every `(i, j)` with `values[i] > values[j]`,
/// in ascending `(min, max)` position order. Ties never produce a pair.
pub fn preference_pairs(values: &[f64]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            if values[i] > values[j] {
                pairs.push((i, j));
            } else if values[j] > values[i] {
                pairs.push((j, i));
            }
        }
    }
    pairs
}

/// Numerically stable `-ln σ(diff) = ln(1 + exp(-diff))`.
pub fn bt_loss(diff: f64) -> f64 {
    if diff > 0.0 {
        (-diff).exp().ln_1p()
    } else {
        -diff + diff.exp().ln_1p()
    }
}

/// Everything the pipeline knows about one rewrite: retrieval list, the
/// extractive answer, and the four feedback metrics.
#[derive(Debug, Clone)]
pub struct MeasuredRewrite {
    pub metrics: MetricValues,
    pub ranked: RankedList,
    pub answer: ExtractiveAnswer,
}

/// Shared measurement path used by preference building, PPO rewards, and
/// evaluation: embed the rewrite, retrieve, generate, compute metrics.
pub struct RewriteScorer<'a> {
    pub index: &'a RetrievalIndex,
    pub documents: &'a [Document],
    pub top_l: usize,
    pub context_weight: f64,
    pub rouge: RougeVariant,
}

impl RewriteScorer<'_> {
    pub fn measure(&self, example: &DialogueExample, rewrite: &str) -> MeasuredRewrite {
        let embedder = self.index.embedder();
        let rewrite_vec = embedder.embed(rewrite);
        let ranked = self.index.search_vector(&rewrite_vec, self.top_l);

        let gold = self
            .index
            .vector_for_id(example.gold_doc_id)
            .expect("gold document is indexed");
        let d_plus = metric_d_plus(&rewrite_vec, std::slice::from_ref(gold));

        let answer_vec = embedder.embed(&example.ground_truth);
        let ranked_vecs: Vec<_> = ranked
            .hits
            .iter()
            .map(|h| {
                self.index
                    .vector_for_id(h.doc_id)
                    .expect("ranked document is indexed")
                    .clone()
            })
            .collect();
        let rank_weighted = metric_rank_weighted(&answer_vec, &ranked_vecs);

        let recent = example
            .history
            .last()
            .map(|t| format!("{} {}", t.query, t.answer));
        let input = match recent {
            Some(context) => GenerationInput::with_context(rewrite, context),
            None => GenerationInput::new(rewrite),
        };
        let ranked_docs: Vec<&Document> = ranked
            .hits
            .iter()
            .map(|h| &self.documents[h.doc_id])
            .collect();
        let answer = generate_extractive(&input, &ranked_docs, self.context_weight);

        let metrics = MetricValues {
            d_plus,
            rank_weighted,
            generation: metric_generation(&answer.text, &example.ground_truth, self.rouge),
            rewrite: metric_rewrite_ref(rewrite, &example.manual_rewrite, self.rouge),
        };
        MeasuredRewrite {
            metrics,
            ranked,
            answer,
        }
    }
}

/// Manual rewrite plus a greedy and a tempered sample from the policy.
pub fn candidate_rewrites<T: Real>(
    policy: &RewriterPolicy<T>,
    context_ids: &[usize],
    manual: &str,
    temperature: f64,
    rng: &mut impl Rng,
) -> Vec<String> {
    let greedy = policy.decode_greedy(context_ids);
    let sampled = policy.decode_sample(context_ids, temperature, rng);
    vec![
        manual.to_string(),
        greedy.text(&policy.vocab),
        sampled.text(&policy.vocab),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub example_id: usize,
    /// Flattened dialogue the rewrites answer, as fed to the scorer.
    pub context: String,
    pub chosen: String,
    pub rejected: String,
    pub chosen_value: f64,
    pub rejected_value: f64,
}

/// One pair list per reward-model metric.
#[derive(Debug, Clone, Default)]
pub struct PreferenceSets {
    pub d_plus: Vec<PreferencePair>,
    pub rank_weighted: Vec<PreferencePair>,
    pub generation: Vec<PreferencePair>,
}

impl PreferenceSets {
    pub fn by_metric(&self, metric: RewardMetric) -> &[PreferencePair] {
        match metric {
            RewardMetric::DPlus => &self.d_plus,
            RewardMetric::RankWeighted => &self.rank_weighted,
            RewardMetric::Generation => &self.generation,
        }
    }

    pub fn len(&self) -> usize {
        self.d_plus.len() + self.rank_weighted.len() + self.generation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The three metrics approximated by reward models during RL.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMetric {
    DPlus,
    RankWeighted,
    Generation,
}

impl RewardMetric {
    pub const ALL: [RewardMetric; 3] = [
        RewardMetric::DPlus,
        RewardMetric::RankWeighted,
        RewardMetric::Generation,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            RewardMetric::DPlus => "d_plus",
            RewardMetric::RankWeighted => "D",
            RewardMetric::Generation => "G",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "d_plus" => Some(RewardMetric::DPlus),
            "D" => Some(RewardMetric::RankWeighted),
            "G" => Some(RewardMetric::Generation),
            _ => None,
        }
    }

    fn value(&self, metrics: &MetricValues) -> f64 {
        match self {
            RewardMetric::DPlus => metrics.d_plus,
            RewardMetric::RankWeighted => metrics.rank_weighted,
            RewardMetric::Generation => metrics.generation,
        }
    }
}

/// Builds all three pair sets for the given example indices.
///
/// `min_margin` drops pairs whose value difference is below the threshold:
/// near-ties carry more metric noise than preference signal (for m_G the
/// label of a garbage-vs-garbage pair is decided by which off-topic sentence
/// the generator happened to extract). Zero keeps every strict ordering.
pub fn build_preference_sets<T: Real>(
    examples: &[DialogueExample],
    policy: &RewriterPolicy<T>,
    scorer: &RewriteScorer,
    temperature: f64,
    min_margin: f64,
    seed: u64,
) -> PreferenceSets {
    let mut sets = PreferenceSets::default();
    for example in examples {
        let context = build_input_sequence(example);
        let context_ids = policy.vocab.encode(&context);
        let mut rng = stage_rng(seed, "pref-sample", example.id as u64);
        let candidates = candidate_rewrites(
            policy,
            &context_ids,
            &example.manual_rewrite,
            temperature,
            &mut rng,
        );
        let measured: Vec<MetricValues> = candidates
            .iter()
            .map(|c| scorer.measure(example, c).metrics)
            .collect();
        for metric in RewardMetric::ALL {
            let values: Vec<f64> = measured.iter().map(|m| metric.value(m)).collect();
            let dst = match metric {
                RewardMetric::DPlus => &mut sets.d_plus,
                RewardMetric::RankWeighted => &mut sets.rank_weighted,
                RewardMetric::Generation => &mut sets.generation,
            };
            for (chosen, rejected) in preference_pairs(&values) {
                if candidates[chosen] == candidates[rejected] {
                    continue;
                }
                if values[chosen] - values[rejected] < min_margin {
                    continue;
                }
                dst.push(PreferencePair {
                    example_id: example.id,
                    context: context.clone(),
                    chosen: candidates[chosen].clone(),
                    rejected: candidates[rejected].clone(),
                    chosen_value: values[chosen],
                    rejected_value: values[rejected],
                });
            }
        }
    }
    sets
}

/// Splits pairs into train/held-out by dialogue: the first `train_frac` of
/// the distinct contexts (in first-appearance order) train, the rest
/// evaluate, so no example leaks across the split.
pub fn split_by_example(
    pairs: &[PreferencePair],
    train_frac: f64,
) -> (Vec<&PreferencePair>, Vec<&PreferencePair>) {
    assert!((0.0..=1.0).contains(&train_frac), "train_frac in [0, 1]");
    let mut contexts: Vec<&str> = Vec::new();
    for pair in pairs {
        if !contexts.contains(&pair.context.as_str()) {
            contexts.push(&pair.context);
        }
    }
    let cut = ((contexts.len() as f64) * train_frac).ceil() as usize;
    let train_contexts = &contexts[..cut.min(contexts.len())];
    pairs
        .iter()
        .partition(|p| train_contexts.contains(&p.context.as_str()))
}

/// Scorer input for a rewrite in its dialogue: flattened history, then the
/// rewrite tokens, closed with `[EOS]`.
pub fn rm_input(vocab: &Vocab, context: &str, rewrite: &str) -> Vec<usize> {
    let mut ids = vocab.encode(context);
    ids.extend(vocab.encode(rewrite));
    ids.push(EOS);
    ids
}

fn bt_loss_node<T: Real>(g: &mut Graph<T>, chosen: NodeId, rejected: NodeId) -> NodeId {
    // -ln σ(d) = -log_softmax([d, 0])[0], which inherits logsumexp stability
    let diff = g.sub(chosen, rejected);
    let zero = g.scalar_input(T::zero());
    let stacked = g.stack_scalars(vec![diff, zero]);
    let logp = g.log_softmax(stacked);
    let picked = g.pick(logp, 0);
    g.neg(picked)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub grad_clip: f64,
}

impl Default for RmTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 6,
            lr: 5e-4,
            batch_size: 16,
            grad_clip: 1.0,
        }
    }
}

impl RmTrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err("rm.epochs and rm.batch_size must be positive".into());
        }
        if !(self.lr > 0.0) || !(self.grad_clip > 0.0) {
            return Err("rm.lr and rm.grad_clip must be positive".into());
        }
        Ok(())
    }
}

/// Pairs resolved to token ids, ready for scoring.
pub struct EncodedPair {
    pub chosen: Vec<usize>,
    pub rejected: Vec<usize>,
}

pub fn encode_pairs(vocab: &Vocab, pairs: &[&PreferencePair]) -> Vec<EncodedPair> {
    pairs
        .iter()
        .map(|pair| EncodedPair {
            chosen: rm_input(vocab, &pair.context, &pair.chosen),
            rejected: rm_input(vocab, &pair.context, &pair.rejected),
        })
        .collect()
}

/// Bradley-Terry training; returns the mean loss of every batch. An
/// untrained zero-head scorer starts at exactly ln 2. Aborts if any batch
/// loss stops being finite.
pub fn train_reward_model<T: Real>(
    scorer: &mut ScorerModel<T>,
    pairs: &[EncodedPair],
    config: &RmTrainConfig,
    seed: u64,
) -> Result<Vec<f64>, String> {
    config.validate().expect("valid reward-model config");
    assert!(!pairs.is_empty(), "no preference pairs");
    let mut adam = Adam::new(T::of(config.lr));
    let mut losses = Vec::new();
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut stage_rng(seed, "rm-train", epoch as u64));
        for chunk in order.chunks(config.batch_size) {
            let mut grads = Gradients::new();
            let mut loss_sum = 0.0;
            for &idx in chunk {
                let pair = &pairs[idx];
                let mut g = Graph::new(&scorer.params);
                let chosen = scorer.score_node(&mut g, &pair.chosen);
                let rejected = scorer.score_node(&mut g, &pair.rejected);
                let loss = bt_loss_node(&mut g, chosen, rejected);
                loss_sum += g.scalar(loss).as_f64();
                grads.add_scaled(&g.backward(loss), T::one());
            }
            let mean = loss_sum / chunk.len() as f64;
            if !mean.is_finite() {
                return Err(format!(
                    "non-finite reward-model loss {mean} at epoch {epoch}, batch {}",
                    losses.len()
                ));
            }
            grads.scale(T::of(1.0 / chunk.len() as f64));
            clip_grad_norm(&mut grads, T::of(config.grad_clip));
            adam.step(&mut scorer.params, &grads);
            losses.push(mean);
        }
    }
    Ok(losses)
}

/// The three trained reward models, one per approximated metric.
#[derive(Debug, Clone)]
pub struct RewardModels<T> {
    pub d_plus: ScorerModel<T>,
    pub rank_weighted: ScorerModel<T>,
    pub generation: ScorerModel<T>,
}

impl<T: Real> RewardModels<T> {
    pub fn get(&self, metric: RewardMetric) -> &ScorerModel<T> {
        match metric {
            RewardMetric::DPlus => &self.d_plus,
            RewardMetric::RankWeighted => &self.rank_weighted,
            RewardMetric::Generation => &self.generation,
        }
    }

    /// `[r_d+, r_D, r_G]`, each squashed to (0, 1) by the logistic.
    pub fn score_scaled_all(&self, example: &DialogueExample, rewrite: &str) -> [f64; 3] {
        let context = build_input_sequence(example);
        let ids = rm_input(&self.d_plus.vocab, &context, rewrite);
        [
            self.d_plus.score_scaled(&ids),
            self.rank_weighted.score_scaled(&ids),
            self.generation.score_scaled(&ids),
        ]
    }
}

/// Fraction of pairs the scorer ranks correctly; ties count as wrong.
pub fn rm_accuracy<T: Real>(scorer: &ScorerModel<T>, pairs: &[EncodedPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let correct = pairs
        .iter()
        .filter(|p| scorer.score(&p.chosen) > scorer.score(&p.rejected))
        .count();
    correct as f64 / pairs.len() as f64
}
