//! The rewriter policy (GRU encoder-decoder with additive attention) and the
//! scorer model (shared encoder plus a scalar head) used for reward and
//! value estimation.
//!
//! Both models build their computation on [`Graph`], so the same code path
//! serves sampling, likelihood evaluation, and training. Decoding and
//! teacher forcing construct identical op sequences, which makes the log
//! probability recorded during a rollout bitwise equal to the one recomputed
//! by the first PPO epoch.

use rand::Rng;

use crate::nn::graph::{Graph, NodeId};
use crate::nn::params::{Init, ParamStore, Real};
use crate::nn::vocab::{Vocab, BOS, EOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    /// Hard cap on generated tokens per rewrite.
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            hidden_dim: 128,
            attn_dim: 64,
            max_len: 32,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("model.embed_dim", self.embed_dim),
            ("model.hidden_dim", self.hidden_dim),
            ("model.attn_dim", self.attn_dim),
            ("model.max_len", self.max_len),
        ] {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        Ok(())
    }
}

const INIT_RANGE: f64 = 0.08;

fn insert_gru<T: Real>(
    store: &mut ParamStore<T>,
    prefix: &str,
    input_dim: usize,
    hidden_dim: usize,
    rng: &mut impl Rng,
) {
    for gate in ["z", "r", "n"] {
        store.insert(
            &format!("{prefix}.w{gate}"),
            hidden_dim,
            input_dim,
            Init::Uniform(INIT_RANGE),
            rng,
        );
        store.insert(
            &format!("{prefix}.u{gate}"),
            hidden_dim,
            hidden_dim,
            Init::Uniform(INIT_RANGE),
            rng,
        );
        store.insert(
            &format!("{prefix}.b{gate}"),
            hidden_dim,
            1,
            Init::Zeros,
            rng,
        );
    }
}

fn gru_cell<T: Real>(g: &mut Graph<T>, prefix: &str, x: NodeId, h: NodeId) -> NodeId {
    let gate = |g: &mut Graph<T>, name: &str| {
        let w = g.param(&format!("{prefix}.w{name}"));
        let u = g.param(&format!("{prefix}.u{name}"));
        let b = g.param(&format!("{prefix}.b{name}"));
        (w, u, b)
    };
    let (wz, uz, bz) = gate(g, "z");
    let wzx = g.matvec(wz, x);
    let uzh = g.matvec(uz, h);
    let zs = g.add(wzx, uzh);
    let zp = g.add(zs, bz);
    let z = g.sigmoid(zp);

    let (wr, ur, br) = gate(g, "r");
    let wrx = g.matvec(wr, x);
    let urh = g.matvec(ur, h);
    let rs = g.add(wrx, urh);
    let rp = g.add(rs, br);
    let r = g.sigmoid(rp);

    let (wn, un, bn) = gate(g, "n");
    let rh = g.mul(r, h);
    let wnx = g.matvec(wn, x);
    let unrh = g.matvec(un, rh);
    let ns = g.add(wnx, unrh);
    let np = g.add(ns, bn);
    let n = g.tanh(np);

    let zc = g.one_minus(z);
    let keep = g.mul(zc, h);
    let update = g.mul(z, n);
    g.add(keep, update)
}

/// Runs the shared encoder; returns one state per input token.
fn encode_states<T: Real>(g: &mut Graph<T>, hidden_dim: usize, ids: &[usize]) -> Vec<NodeId> {
    let mut h = g.zeros(hidden_dim);
    let mut states = Vec::with_capacity(ids.len());
    for &id in ids {
        let x = g.param_row("embed", id);
        h = gru_cell(g, "enc", x, h);
        states.push(h);
    }
    states
}

/// Encoder states with their attention keys precomputed once per sequence.
struct Attended {
    states: Vec<NodeId>,
    keys: Vec<NodeId>,
    last: NodeId,
}

fn attend_setup<T: Real>(g: &mut Graph<T>, states: Vec<NodeId>) -> Attended {
    assert!(!states.is_empty(), "cannot attend over an empty context");
    let wk = g.param("att.wk");
    let keys = states.iter().map(|s| g.matvec(wk, *s)).collect();
    let last = *states.last().expect("non-empty context");
    Attended { states, keys, last }
}

fn attend<T: Real>(g: &mut Graph<T>, attended: &Attended, query: NodeId) -> NodeId {
    let wq = g.param("att.wq");
    let v = g.param("att.v");
    let q = g.matvec(wq, query);
    let mut scores = Vec::with_capacity(attended.keys.len());
    for key in &attended.keys {
        let sum = g.add(q, *key);
        let t = g.tanh(sum);
        scores.push(g.dot(v, t));
    }
    let stacked = g.stack_scalars(scores);
    let alpha = g.softmax(stacked);
    g.weighted_sum(alpha, attended.states.clone())
}

/// One decoder step: attend with the previous state, feed the previous
/// token, emit log probabilities over the vocabulary.
fn decoder_step<T: Real>(
    g: &mut Graph<T>,
    attended: &Attended,
    prev_token: usize,
    state: NodeId,
) -> (NodeId, NodeId) {
    let context = attend(g, attended, state);
    let emb = g.param_row("embed", prev_token);
    let x = g.concat(emb, context);
    let next = gru_cell(g, "dec", x, state);
    let features = g.concat(next, context);
    let w = g.param("out.w");
    let b = g.param("out.b");
    let wx = g.matvec(w, features);
    let logits = g.add(wx, b);
    let logp = g.log_softmax(logits);
    (next, logp)
}

/// Tokens produced by one decode, with the (untempered) log probability of
/// each chosen token. `tokens` includes the terminating `[EOS]` when the
/// model emitted one within the length budget.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub tokens: Vec<usize>,
    pub logps: Vec<f64>,
}

impl DecodeResult {
    pub fn text(&self, vocab: &Vocab) -> String {
        vocab.decode(&self.tokens)
    }
}

/// Sequence-to-sequence query rewriter.
#[derive(Debug, Clone, PartialEq)]
pub struct RewriterPolicy<T> {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore<T>,
}

impl<T: Real> RewriterPolicy<T> {
    /// Fresh policy. Recurrent and attention weights start uniform in
    /// ±0.08; the output projection starts at zero so the first decode step
    /// is exactly uniform over the vocabulary.
    pub fn new(config: ModelConfig, vocab: Vocab, rng: &mut impl Rng) -> Self {
        config.validate().expect("valid model config");
        let v = vocab.len();
        let (e, h, a) = (config.embed_dim, config.hidden_dim, config.attn_dim);
        let mut params = ParamStore::new();
        params.insert("embed", v, e, Init::Uniform(INIT_RANGE), rng);
        insert_gru(&mut params, "enc", e, h, rng);
        insert_gru(&mut params, "dec", e + h, h, rng);
        params.insert("att.wq", a, h, Init::Uniform(INIT_RANGE), rng);
        params.insert("att.wk", a, h, Init::Uniform(INIT_RANGE), rng);
        params.insert("att.v", a, 1, Init::Uniform(INIT_RANGE), rng);
        params.insert("out.w", v, 2 * h, Init::Zeros, rng);
        params.insert("out.b", v, 1, Init::Zeros, rng);
        Self {
            config,
            vocab,
            params,
        }
    }

    /// Teacher-forced log probabilities of `targets` given `context_ids`;
    /// returns one picked scalar node per target token.
    pub fn forced_logp_nodes(
        &self,
        g: &mut Graph<T>,
        context_ids: &[usize],
        targets: &[usize],
    ) -> Vec<NodeId> {
        assert!(!targets.is_empty(), "empty target sequence");
        let states = encode_states(g, self.config.hidden_dim, context_ids);
        let attended = attend_setup(g, states);
        let mut state = attended.last;
        let mut picked = Vec::with_capacity(targets.len());
        let mut prev = BOS;
        for &target in targets {
            let (next, logp) = decoder_step(g, &attended, prev, state);
            picked.push(g.pick(logp, target));
            state = next;
            prev = target;
        }
        picked
    }

    /// Forward-only per-token log probabilities of a fixed action sequence.
    pub fn log_probs(&self, context_ids: &[usize], targets: &[usize]) -> Vec<f64> {
        let mut g = Graph::new(&self.params);
        let picked = self.forced_logp_nodes(&mut g, context_ids, targets);
        picked.iter().map(|id| g.scalar(*id).as_f64()).collect()
    }

    pub fn decode_greedy(&self, context_ids: &[usize]) -> DecodeResult {
        self.decode(context_ids, |logp, _| argmax(logp))
    }

    /// Temperature sampling; `temperature` must be positive.
    pub fn decode_sample(
        &self,
        context_ids: &[usize],
        temperature: f64,
        rng: &mut impl Rng,
    ) -> DecodeResult {
        assert!(temperature > 0.0, "temperature must be positive");
        self.decode(context_ids, |logp, rng_draw| {
            sample_tempered(logp, temperature, rng_draw(rng))
        })
    }

    fn decode(
        &self,
        context_ids: &[usize],
        mut choose: impl FnMut(&[f64], &mut dyn FnMut(&mut dyn rand::RngCore) -> f64) -> usize,
    ) -> DecodeResult {
        let mut g = Graph::new(&self.params);
        let states = encode_states(&mut g, self.config.hidden_dim, context_ids);
        let attended = attend_setup(&mut g, states);
        let mut state = attended.last;
        let mut prev = BOS;
        let mut result = DecodeResult {
            tokens: Vec::new(),
            logps: Vec::new(),
        };
        for _ in 0..self.config.max_len {
            let (next, logp) = decoder_step(&mut g, &attended, prev, state);
            let values: Vec<f64> = g.value(logp).iter().map(|v| v.as_f64()).collect();
            let token = choose(&values, &mut |rng| rng.gen::<f64>());
            result.tokens.push(token);
            result.logps.push(values[token]);
            if token == EOS {
                break;
            }
            state = next;
            prev = token;
        }
        result
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn sample_tempered(logp: &[f64], temperature: f64, draw: f64) -> usize {
    let scaled: Vec<f64> = logp.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut acc = 0.0;
    for (i, e) in exps.iter().enumerate() {
        acc += e / total;
        if draw < acc {
            return i;
        }
    }
    logp.len() - 1
}

/// Encoder plus scalar head: reward models score a whole sequence, the PPO
/// value network reads the head at every position.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel<T> {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore<T>,
}

impl<T: Real> ScorerModel<T> {
    pub fn new(config: ModelConfig, vocab: Vocab, rng: &mut impl Rng) -> Self {
        config.validate().expect("valid model config");
        let mut params = ParamStore::new();
        params.insert(
            "embed",
            vocab.len(),
            config.embed_dim,
            Init::Uniform(INIT_RANGE),
            rng,
        );
        insert_gru(&mut params, "enc", config.embed_dim, config.hidden_dim, rng);
        Self::with_head(config, vocab, params, rng)
    }

    /// Clones the encoder (and embeddings) of an existing policy and adds a
    /// zero head, so scoring starts from the policy's learned representation
    /// with a neutral output.
    pub fn from_encoder(policy: &RewriterPolicy<T>) -> Self {
        let params = policy
            .params
            .subset(|name| name == "embed" || name.starts_with("enc."));
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        Self::with_head(policy.config, policy.vocab.clone(), params, &mut rng)
    }

    fn with_head(
        config: ModelConfig,
        vocab: Vocab,
        mut params: ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Self {
        params.insert("head.w", config.hidden_dim, 1, Init::Zeros, rng);
        params.insert("head.b", 1, 1, Init::Zeros, rng);
        Self {
            config,
            vocab,
            params,
        }
    }

    /// Raw score node for a token sequence (head applied to the final
    /// encoder state; empty input scores the zero state).
    pub fn score_node(&self, g: &mut Graph<T>, ids: &[usize]) -> NodeId {
        let states = encode_states(g, self.config.hidden_dim, ids);
        let last = states
            .last()
            .copied()
            .unwrap_or_else(|| g.zeros(self.config.hidden_dim));
        self.head(g, last)
    }

    /// Head output at every position, for per-step value estimates.
    pub fn value_nodes(&self, g: &mut Graph<T>, ids: &[usize]) -> Vec<NodeId> {
        let states = encode_states(g, self.config.hidden_dim, ids);
        states.into_iter().map(|s| self.head(g, s)).collect()
    }

    fn head(&self, g: &mut Graph<T>, state: NodeId) -> NodeId {
        let w = g.param("head.w");
        let b = g.param("head.b");
        let wx = g.dot(w, state);
        g.add(wx, b)
    }

    /// Raw (unbounded) score.
    pub fn score(&self, ids: &[usize]) -> f64 {
        let mut g = Graph::new(&self.params);
        let node = self.score_node(&mut g, ids);
        g.scalar(node).as_f64()
    }

    /// Score squashed to (0, 1).
    pub fn score_scaled(&self, ids: &[usize]) -> f64 {
        sigmoid(self.score(ids))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
