//! Clipped-surrogate PPO over the rewriter policy.
//!
//! Each step samples a batch of rewrites from the current policy, prices
//! them with the reward models plus the directly-computed rewrite metric,
//! and applies a per-token KL penalty against the frozen initialized
//! policy. The terminal reward is the weighted combination
//! `λ1·r_d+ + λ2·r_D + λ3·r_G + μ·m_q`; every token additionally pays
//! `η · (ln π(a|s) - ln π⁰(a|s))`.

use rand::Rng;

use crate::corpus::{build_input_sequence, DialogueExample};
use crate::metrics::metric_rewrite_ref;
use crate::metrics::RougeVariant;
use crate::nn::graph::{Graph, NodeId};
use crate::nn::model::{RewriterPolicy, ScorerModel};
use crate::nn::params::{clip_grad_norm, Adam, Gradients, Real};
use crate::preference::RewardModels;
use crate::stage_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    /// Weights for the three reward-model outputs, in metric order
    /// `[d_plus, rank_weighted, generation]`.
    pub lambda: [f64; 3],
    /// Weight of the directly-computed rewrite metric `m_q`.
    pub mu: f64,
    /// Per-token KL penalty coefficient against the frozen policy.
    pub eta: f64,
    /// Return discount; token steps within one rewrite are undiscounted.
    pub gamma: f64,
    /// Surrogate clip range ε.
    pub clip: f64,
    /// Optimization epochs over each rollout batch.
    pub epochs: usize,
    /// Rollouts sampled per step.
    pub batch_size: usize,
    pub lr: f64,
    pub value_lr: f64,
    pub grad_clip: f64,
    /// Sampling temperature during rollouts.
    pub temperature: f64,
    pub total_steps: usize,
    pub checkpoint_every: usize,
    /// ROUGE flavor behind `m_q`.
    pub rouge: RougeVariant,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lambda: [0.04, 0.01, 0.35],
            mu: 0.6,
            eta: 0.05,
            gamma: 1.0,
            clip: 0.2,
            epochs: 4,
            batch_size: 32,
            lr: 1.41e-4,
            value_lr: 1e-3,
            grad_clip: 1.0,
            temperature: 1.0,
            total_steps: 80,
            checkpoint_every: 20,
            rouge: RougeVariant::RougeL,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epochs == 0 || self.batch_size == 0 || self.total_steps == 0 {
            return Err("ppo.epochs, ppo.batch_size and ppo.total_steps must be positive".into());
        }
        if self.checkpoint_every == 0 {
            return Err("ppo.checkpoint_every must be positive".into());
        }
        if !(self.lr > 0.0) || !(self.value_lr > 0.0) || !(self.grad_clip > 0.0) {
            return Err("ppo.lr, ppo.value_lr and ppo.grad_clip must be positive".into());
        }
        if !(self.temperature > 0.0) {
            return Err("ppo.temperature must be positive".into());
        }
        if self.clip < 0.0 || self.eta < 0.0 || self.mu < 0.0 {
            return Err("ppo.clip, ppo.eta and ppo.mu must not be negative".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err("ppo.gamma must lie in (0, 1]".into());
        }
        if self.lambda.iter().any(|l| *l < 0.0) {
            return Err("ppo.lambda weights must not be negative".into());
        }
        Ok(())
    }
}

/// Reward pieces for one sampled rewrite. The three `r_*` values come from
/// the reward models (already squashed to (0, 1)); `m_q` is computed
/// directly against the manual rewrite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBundle {
    pub r_d_plus: f64,
    pub r_rank_weighted: f64,
    pub r_generation: f64,
    pub m_q: f64,
    pub r_rl: f64,
}

impl RewardBundle {
    pub fn combine(scaled: [f64; 3], m_q: f64, lambda: [f64; 3], mu: f64) -> Self {
        let r_rl = lambda[0] * scaled[0] + lambda[1] * scaled[1] + lambda[2] * scaled[2] + mu * m_q;
        Self {
            r_d_plus: scaled[0],
            r_rank_weighted: scaled[1],
            r_generation: scaled[2],
            m_q,
            r_rl,
        }
    }
}

/// One sampled trajectory: the emitted tokens with their log probabilities
/// under the sampling policy and under the frozen reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub example_idx: usize,
    pub context_ids: Vec<usize>,
    pub tokens: Vec<usize>,
    pub rewrite: String,
    pub logp_cur: Vec<f64>,
    pub logp_ref: Vec<f64>,
    pub bundle: RewardBundle,
}

impl Rollout {
    /// Sum of per-token `ln π(a|s) - ln π⁰(a|s)`, the single-sample KL
    /// estimate for the whole sequence.
    pub fn kl_total(&self) -> f64 {
        self.logp_cur
            .iter()
            .zip(&self.logp_ref)
            .map(|(c, r)| c - r)
            .sum()
    }

    /// Per-token rewards: each token pays the KL penalty, the last one also
    /// collects the terminal combined reward.
    pub fn rewards(&self, eta: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .logp_cur
            .iter()
            .zip(&self.logp_ref)
            .map(|(c, r)| -eta * (c - r))
            .collect();
        *out.last_mut().expect("non-empty rollout") += self.bundle.r_rl;
        out
    }

    /// Discounted returns-to-go over [`Self::rewards`].
    pub fn returns(&self, eta: f64, gamma: f64) -> Vec<f64> {
        let mut out = self.rewards(eta);
        let mut acc = 0.0;
        for r in out.iter_mut().rev() {
            acc = *r + gamma * acc;
            *r = acc;
        }
        out
    }
}

/// Batch means logged once per PPO step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoStepStats {
    pub step: usize,
    pub mean_r_rl: f64,
    pub mean_kl: f64,
    pub mean_m_q: f64,
    pub mean_r_d_plus: f64,
    pub mean_r_rank_weighted: f64,
    pub mean_r_generation: f64,
}

impl PpoStepStats {
    pub fn from_rollouts(step: usize, rollouts: &[Rollout]) -> Self {
        let n = rollouts.len() as f64;
        let mean = |f: &dyn Fn(&Rollout) -> f64| rollouts.iter().map(f).sum::<f64>() / n;
        Self {
            step,
            mean_r_rl: mean(&|r| r.bundle.r_rl),
            mean_kl: mean(&Rollout::kl_total),
            mean_m_q: mean(&|r| r.bundle.m_q),
            mean_r_d_plus: mean(&|r| r.bundle.r_d_plus),
            mean_r_rank_weighted: mean(&|r| r.bundle.r_rank_weighted),
            mean_r_generation: mean(&|r| r.bundle.r_generation),
        }
    }
}

/// Normalizes advantages to zero mean and unit variance in place. Returns
/// false — leaving the values untouched — when they carry no signal.
pub fn normalize_advantages(advantages: &mut [Vec<f64>]) -> bool {
    let flat: Vec<f64> = advantages.iter().flatten().copied().collect();
    if flat.is_empty() {
        return false;
    }
    let n = flat.len() as f64;
    let mean = flat.iter().sum::<f64>() / n;
    let var = flat.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-6 {
        return false;
    }
    for seq in advantages.iter_mut() {
        for a in seq.iter_mut() {
            *a = (*a - mean) / std;
        }
    }
    true
}

fn value_positions(rollout: &Rollout) -> std::ops::Range<usize> {
    let c = rollout.context_ids.len();
    c - 1..c - 1 + rollout.tokens.len()
}

fn value_input(rollout: &Rollout) -> Vec<usize> {
    let mut ids = rollout.context_ids.clone();
    ids.extend(&rollout.tokens);
    ids
}

/// Current value estimates V(s_t) for every decode step of the rollout.
pub fn value_estimates<T: Real>(value: &ScorerModel<T>, rollout: &Rollout) -> Vec<f64> {
    let mut g = Graph::new(&value.params);
    let nodes = value.value_nodes(&mut g, &value_input(rollout));
    value_positions(rollout)
        .map(|p| g.scalar(nodes[p]).as_f64())
        .collect()
}

/// Negated clipped surrogate for one rollout, summed over tokens (caller
/// scales by the batch token count).
fn policy_loss_node<T: Real>(
    g: &mut Graph<T>,
    policy: &RewriterPolicy<T>,
    rollout: &Rollout,
    advantages: &[f64],
    clip: f64,
) -> NodeId {
    let logps = policy.forced_logp_nodes(g, &rollout.context_ids, &rollout.tokens);
    let lo = T::of(1.0 - clip);
    let hi = T::of(1.0 + clip);
    let mut terms = Vec::with_capacity(logps.len());
    for (t, logp) in logps.into_iter().enumerate() {
        let old = g.scalar_input(T::of(rollout.logp_cur[t]));
        let diff = g.sub(logp, old);
        let ratio = g.exp(diff);
        let adv = T::of(advantages[t]);
        let unclipped = g.scale_add(ratio, adv, T::zero());
        let clipped_ratio = g.clamp(ratio, lo, hi);
        let clipped = g.scale_add(clipped_ratio, adv, T::zero());
        terms.push(g.min(unclipped, clipped));
    }
    let objective = g.sum_nodes(terms);
    g.neg(objective)
}

/// Squared-error value loss for one rollout, summed over tokens.
fn value_loss_node<T: Real>(
    g: &mut Graph<T>,
    value: &ScorerModel<T>,
    rollout: &Rollout,
    returns: &[f64],
) -> NodeId {
    let nodes = value.value_nodes(g, &value_input(rollout));
    let mut terms = Vec::with_capacity(returns.len());
    for (p, ret) in value_positions(rollout).zip(returns) {
        let target = g.scalar_input(T::of(*ret));
        let d = g.sub(nodes[p], target);
        terms.push(g.mul(d, d));
    }
    g.sum_nodes(terms)
}

/// Runs `config.epochs` clipped-surrogate updates of the policy and value
/// network on one rollout batch. Advantages come from the pre-update value
/// estimates and stay fixed across epochs.
pub fn ppo_update<T: Real>(
    policy: &mut RewriterPolicy<T>,
    value: &mut ScorerModel<T>,
    rollouts: &[Rollout],
    config: &PpoConfig,
    adam_policy: &mut Adam<T>,
    adam_value: &mut Adam<T>,
) {
    assert!(!rollouts.is_empty(), "empty rollout batch");
    let returns: Vec<Vec<f64>> = rollouts
        .iter()
        .map(|r| r.returns(config.eta, config.gamma))
        .collect();
    let mut advantages: Vec<Vec<f64>> = rollouts
        .iter()
        .zip(&returns)
        .map(|(r, ret)| {
            let v = value_estimates(value, r);
            ret.iter().zip(v).map(|(g, v)| g - v).collect()
        })
        .collect();
    let update_policy = normalize_advantages(&mut advantages);
    let total_tokens: usize = rollouts.iter().map(|r| r.tokens.len()).sum();
    let inv = T::of(1.0 / total_tokens as f64);

    for _ in 0..config.epochs {
        if update_policy {
            let mut grads = Gradients::new();
            for (rollout, adv) in rollouts.iter().zip(&advantages) {
                let mut g = Graph::new(&policy.params);
                let loss = policy_loss_node(&mut g, policy, rollout, adv, config.clip);
                grads.add_scaled(&g.backward(loss), T::one());
            }
            grads.scale(inv);
            clip_grad_norm(&mut grads, T::of(config.grad_clip));
            adam_policy.step(&mut policy.params, &grads);
        }

        let mut grads = Gradients::new();
        for (rollout, ret) in rollouts.iter().zip(&returns) {
            let mut g = Graph::new(&value.params);
            let loss = value_loss_node(&mut g, value, rollout, ret);
            grads.add_scaled(&g.backward(loss), T::one());
        }
        grads.scale(inv);
        clip_grad_norm(&mut grads, T::of(config.grad_clip));
        adam_value.step(&mut value.params, &grads);
    }
}

/// Owns the training loop state: the evolving policy, its frozen starting
/// copy, the value network, and the two optimizers.
pub struct PpoTrainer<'a, T: Real> {
    pub policy: RewriterPolicy<T>,
    pub reference: RewriterPolicy<T>,
    pub value: ScorerModel<T>,
    pub config: PpoConfig,
    pub step: usize,
    reward_models: &'a RewardModels<T>,
    examples: &'a [DialogueExample],
    adam_policy: Adam<T>,
    adam_value: Adam<T>,
    seed: u64,
}

impl<'a, T: Real> PpoTrainer<'a, T> {
    pub fn new(
        policy: RewriterPolicy<T>,
        value: ScorerModel<T>,
        reward_models: &'a RewardModels<T>,
        examples: &'a [DialogueExample],
        config: PpoConfig,
        seed: u64,
    ) -> Self {
        config.validate().expect("valid ppo config");
        assert!(!examples.is_empty(), "no training examples");
        let adam_policy = Adam::new(T::of(config.lr));
        let adam_value = Adam::new(T::of(config.value_lr));
        Self {
            reference: policy.clone(),
            policy,
            value,
            config,
            step: 0,
            reward_models,
            examples,
            adam_policy,
            adam_value,
            seed,
        }
    }

    /// Samples one rollout for the given example under the current policy.
    pub fn rollout(&self, example_idx: usize, rng: &mut impl Rng) -> Rollout {
        let example = &self.examples[example_idx];
        let context_ids = self.policy.vocab.encode(&build_input_sequence(example));
        let decoded = self
            .policy
            .decode_sample(&context_ids, self.config.temperature, rng);
        let rewrite = decoded.text(&self.policy.vocab);
        let logp_ref = self.reference.log_probs(&context_ids, &decoded.tokens);
        let m_q = metric_rewrite_ref(&rewrite, &example.manual_rewrite, self.config.rouge);
        let scaled = self.reward_models.score_scaled_all(example, &rewrite);
        let bundle = RewardBundle::combine(scaled, m_q, self.config.lambda, self.config.mu);
        Rollout {
            example_idx,
            context_ids,
            tokens: decoded.tokens,
            rewrite,
            logp_cur: decoded.logps,
            logp_ref,
            bundle,
        }
    }

    /// One PPO iteration: sample a batch, update, report batch means.
    pub fn run_step(&mut self) -> PpoStepStats {
        let mut rng = stage_rng(self.seed, "ppo", self.step as u64);
        let rollouts: Vec<Rollout> = (0..self.config.batch_size)
            .map(|_| {
                let idx = rng.gen_range(0..self.examples.len());
                self.rollout(idx, &mut rng)
            })
            .collect();
        let stats = PpoStepStats::from_rollouts(self.step, &rollouts);
        ppo_update(
            &mut self.policy,
            &mut self.value,
            &rollouts,
            &self.config,
            &mut self.adam_policy,
            &mut self.adam_value,
        );
        self.step += 1;
        stats
    }
}
