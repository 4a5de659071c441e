//! Supervised initialization of the rewriter: teacher-forced cross-entropy
//! toward the manual rewrites, then greedy decoding before and after.
//!
//! ```sh
//! cargo run --example train_rewriter
//! ```

use rewrite_rl::corpus::{build_input_sequence, generate_synthetic, SynthConfig};
use rewrite_rl::harness::corpus_vocab;
use rewrite_rl::metrics::metric_rewrite_ref;
use rewrite_rl::nn::{init_train, rewrite_training_pair, InitTrainConfig, ModelConfig};
use rewrite_rl::{stage_rng, RewriterPolicy, RougeVariant};

fn main() {
    let corpus = generate_synthetic(&SynthConfig {
        seed: 13,
        num_examples: 150,
        max_history_turns: 3,
    })
    .expect("valid config");
    let vocab = corpus_vocab(&corpus);
    println!("vocabulary: {} tokens", vocab.len());

    let pairs: Vec<_> = corpus
        .examples
        .iter()
        .map(|example| rewrite_training_pair(&vocab, example))
        .collect();

    let mut policy = RewriterPolicy::<f32>::new(
        ModelConfig::default(),
        vocab,
        &mut stage_rng(13, "init-model", 0),
    );

    let probe = &corpus.examples[7];
    let decode = |policy: &RewriterPolicy<f32>| {
        let ids = policy.vocab.encode(&build_input_sequence(probe));
        policy.decode_greedy(&ids).text(&policy.vocab)
    };
    println!("\nbefore training: {:?}", decode(&policy));

    let config = InitTrainConfig {
        epochs: 3,
        ..InitTrainConfig::default()
    };
    let losses = init_train(&mut policy, &pairs, &config, 13);
    let per_epoch = losses.len() / config.epochs;
    for (epoch, chunk) in losses.chunks(per_epoch).enumerate() {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        println!("epoch {epoch}: mean NLL {mean:.4}");
    }

    let rewrite = decode(&policy);
    println!("\nafter training:  {rewrite:?}");
    println!("manual rewrite:  {:?}", probe.manual_rewrite);
    println!(
        "m_q (ROUGE-L to manual): {:.4}",
        metric_rewrite_ref(&rewrite, &probe.manual_rewrite, RougeVariant::RougeL)
    );
}
