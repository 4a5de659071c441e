//! A short PPO run against the combined reward, watched step by step.
//!
//! The rewriter samples rollouts, three frozen reward models plus the live
//! m_q metric score them, and the policy takes clipped-surrogate updates
//! with a per-token KL penalty toward its frozen starting point. At step 0
//! the policy equals the reference, so the measured KL is exactly zero.
//!
//! ```sh
//! cargo run --example ppo_loop
//! ```

use rewrite_rl::corpus::{generate_synthetic, SynthConfig};
use rewrite_rl::harness::corpus_vocab;
use rewrite_rl::nn::{
    init_train, rewrite_training_pair, InitTrainConfig, ModelConfig, ScorerModel,
};
use rewrite_rl::preference::{
    build_preference_sets, encode_pairs, split_by_example, train_reward_model, RewardMetric,
    RewardModels, RewriteScorer, RmTrainConfig,
};
use rewrite_rl::{
    stage_rng, HashingEmbedder, PpoConfig, PpoTrainer, RetrievalIndex, RewriterPolicy, RougeVariant,
};

fn main() {
    let corpus = generate_synthetic(&SynthConfig {
        seed: 17,
        num_examples: 120,
        max_history_turns: 3,
    })
    .expect("valid config");
    let vocab = corpus_vocab(&corpus);

    // Initialize the policy on manual rewrites.
    let pairs: Vec<_> = corpus
        .examples
        .iter()
        .map(|example| rewrite_training_pair(&vocab, example))
        .collect();
    let mut policy = RewriterPolicy::<f32>::new(
        ModelConfig::default(),
        vocab,
        &mut stage_rng(17, "init-model", 0),
    );
    init_train(&mut policy, &pairs, &InitTrainConfig::default(), 17);

    // Train the three reward models on preference pairs.
    let index = RetrievalIndex::build(HashingEmbedder::default(), &corpus.documents);
    let scorer = RewriteScorer {
        index: &index,
        documents: &corpus.documents,
        top_l: 5,
        context_weight: 0.1,
        rouge: RougeVariant::RougeL,
    };
    let sets = build_preference_sets(&corpus.examples, &policy, &scorer, 1.2, 0.2, 17);
    let mut train_rm = |metric: RewardMetric| {
        let (train, _) = split_by_example(sets.by_metric(metric), 0.8);
        let mut model = ScorerModel::from_encoder(&policy);
        let encoded = encode_pairs(&policy.vocab, &train);
        train_reward_model(&mut model, &encoded, &RmTrainConfig::default(), 17).unwrap();
        model
    };
    let reward_models = RewardModels {
        d_plus: train_rm(RewardMetric::DPlus),
        rank_weighted: train_rm(RewardMetric::RankWeighted),
        generation: train_rm(RewardMetric::Generation),
    };

    // Six PPO steps, printing the running statistics.
    let config = PpoConfig {
        total_steps: 6,
        batch_size: 16,
        ..PpoConfig::default()
    };
    let value = ScorerModel::from_encoder(&policy);
    let mut trainer = PpoTrainer::new(policy, value, &reward_models, &corpus.examples, config, 17);
    println!("step  mean_r_RL  mean_kl   mean_m_q");
    for _ in 0..6 {
        let stats = trainer.run_step();
        println!(
            "{:4}  {:9.4}  {:8.5}  {:8.4}",
            stats.step, stats.mean_r_rl, stats.mean_kl, stats.mean_m_q
        );
    }
}
