//! Supervised initialization of the rewriter on manual rewrites.

use crate::corpus::{build_input_sequence, DialogueExample};
use crate::nn::graph::Graph;
use crate::nn::model::RewriterPolicy;
use crate::nn::params::{clip_grad_norm, Adam, Gradients, Real};
use crate::nn::vocab::{Vocab, EOS};
use crate::stage_rng;

use rand::seq::SliceRandom;

#[derive(Debug, Clone, PartialEq)]
pub struct InitTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub grad_clip: f64,
}

impl Default for InitTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            lr: 5e-4,
            batch_size: 16,
            grad_clip: 1.0,
        }
    }
}

impl InitTrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epochs == 0 {
            return Err("init.epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return Err("init.batch_size must be positive".into());
        }
        if !(self.lr > 0.0) {
            return Err("init.lr must be positive".into());
        }
        if !(self.grad_clip > 0.0) {
            return Err("init.grad_clip must be positive".into());
        }
        Ok(())
    }
}

/// Encodes one example into (context ids, target ids): the flattened
/// dialogue on the input side, the manual rewrite plus `[EOS]` as target.
pub fn rewrite_training_pair(vocab: &Vocab, example: &DialogueExample) -> (Vec<usize>, Vec<usize>) {
    let context = vocab.encode(&build_input_sequence(example));
    let mut target = vocab.encode(&example.manual_rewrite);
    target.push(EOS);
    (context, target)
}

/// Cross-entropy training loop. Returns the mean per-token NLL of every
/// batch in order; with a zero-initialized output layer the first entry is
/// exactly ln |V|.
pub fn init_train<T: Real>(
    policy: &mut RewriterPolicy<T>,
    pairs: &[(Vec<usize>, Vec<usize>)],
    config: &InitTrainConfig,
    seed: u64,
) -> Vec<f64> {
    config.validate().expect("valid init-train config");
    assert!(!pairs.is_empty(), "no training pairs");
    let mut adam = Adam::new(T::of(config.lr));
    let mut losses = Vec::new();
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut stage_rng(seed, "init-train", epoch as u64));
        for chunk in order.chunks(config.batch_size) {
            let mut grads = Gradients::new();
            let mut nll_sum = 0.0;
            let mut token_count = 0usize;
            for &idx in chunk {
                let (context, target) = &pairs[idx];
                let mut g = Graph::new(&policy.params);
                let picked = policy.forced_logp_nodes(&mut g, context, target);
                let total = g.sum_nodes(picked);
                let loss = g.neg(total);
                nll_sum += g.scalar(loss).as_f64();
                token_count += target.len();
                grads.add_scaled(&g.backward(loss), T::one());
            }
            grads.scale(T::of(1.0 / token_count as f64));
            clip_grad_norm(&mut grads, T::of(config.grad_clip));
            adam.step(&mut policy.params, &grads);
            losses.push(nll_sum / token_count as f64);
        }
    }
    losses
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::ModelConfig;
    use crate::nn::vocab::Vocab;

    fn toy_setup() -> (RewriterPolicy<f32>, Vec<(Vec<usize>, Vec<usize>)>) {
        let vocab = Vocab::build([
            "what is the height of it",
            "what is the height of the old harbor",
            "the height of the old harbor is 12 meters",
        ]);
        let config = ModelConfig {
            embed_dim: 12,
            hidden_dim: 16,
            attn_dim: 8,
            max_len: 12,
        };
        let policy = RewriterPolicy::new(config, vocab.clone(), &mut stage_rng(5, "test", 0));
        let contexts = [
            "[CLS] what is the height of it [SEP] the height of the old harbor is 12 meters [SEP]",
            "[CLS] what is it [SEP] the old harbor is 12 meters [SEP]",
            "[CLS] how is the height [SEP] the harbor is old [SEP]",
            "[CLS] what of it [SEP] the height is 12 [SEP]",
        ];
        let pairs = contexts
            .iter()
            .map(|c| {
                let mut target = vocab.encode("what is the height of the old harbor");
                target.push(EOS);
                (vocab.encode(c), target)
            })
            .collect();
        (policy, pairs)
    }

    #[test]
    fn first_batch_loss_is_ln_vocab() {
        let (mut policy, pairs) = toy_setup();
        let v = policy.vocab.len() as f64;
        let config = InitTrainConfig {
            epochs: 1,
            batch_size: pairs.len(),
            ..InitTrainConfig::default()
        };
        let losses = init_train(&mut policy, &pairs, &config, 7);
        assert_eq!(losses.len(), 1);
        assert!(
            (losses[0] - v.ln()).abs() < 1e-5,
            "expected ln|V| = {}, got {}",
            v.ln(),
            losses[0]
        );
    }

    #[test]
    fn loss_falls_and_policy_learns_the_target() {
        let (mut policy, pairs) = toy_setup();
        let config = InitTrainConfig {
            epochs: 300,
            lr: 5e-3,
            batch_size: pairs.len(),
            grad_clip: 1.0,
        };
        let losses = init_train(&mut policy, &pairs, &config, 7);
        let first = losses[0];
        let last = *losses.last().unwrap();
        assert!(
            last < 0.5 * first,
            "loss did not fall enough: {first} -> {last}"
        );
        let decoded = policy.decode_greedy(&pairs[0].0);
        assert_eq!(
            decoded.text(&policy.vocab),
            "what is the height of the old harbor"
        );
        assert_eq!(decoded.tokens.last(), Some(&EOS));
    }

    #[test]
    fn training_is_deterministic() {
        let (mut a, pairs) = toy_setup();
        let (mut b, _) = toy_setup();
        let config = InitTrainConfig {
            epochs: 3,
            batch_size: 2,
            ..InitTrainConfig::default()
        };
        let la = init_train(&mut a, &pairs, &config, 11);
        let lb = init_train(&mut b, &pairs, &config, 11);
        assert_eq!(la, lb);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn training_pair_encodes_context_and_eos_target() {
        let vocab = Vocab::build(["what is the height of the old harbor it"]);
        let example = DialogueExample {
            id: 0,
            history: vec![crate::corpus::DialogueTurn {
                query: "what is the height of the old harbor".into(),
                answer: "it is 12".into(),
            }],
            query: "what is it".into(),
            manual_rewrite: "what is the height of the old harbor".into(),
            ground_truth: String::new(),
            gold_doc_id: 0,
        };
        let (context, target) = rewrite_training_pair(&vocab, &example);
        assert_eq!(context[0], crate::nn::vocab::CLS);
        assert_eq!(target.last(), Some(&EOS));
        assert_eq!(target.len(), 8 + 1);
        // "12" is out of vocabulary and must become [UNK], not an error
        assert!(context.contains(&crate::nn::vocab::UNK));
    }
}
