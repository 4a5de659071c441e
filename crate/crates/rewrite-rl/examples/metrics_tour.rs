//! Tour of the text-overlap metrics and the four rewrite feedback metrics.
//!
//! The overlap family (ROUGE-1/2/L, BLEU, METEOR-lite) scores a candidate
//! string against a reference. The feedback metrics score a *rewrite* by
//! what it causes downstream: retrieval of the gold document (m_d+), rank
//! placement of answer-bearing documents (m_D), extractive answer quality
//! (m_G), and similarity to the manual rewrite (m_q).
//!
//! ```sh
//! cargo run --example metrics_tour
//! ```

use rewrite_rl::corpus::{generate_synthetic, SynthConfig};
use rewrite_rl::metrics::{
    bleu, meteor_lite, metric_d_plus, metric_generation, metric_rank_weighted, metric_rewrite_ref,
    rouge_l, rouge_n,
};
use rewrite_rl::{GenerationInput, HashingEmbedder, RetrievalIndex, RougeVariant};

fn main() {
    let candidate = "the old harbor is 25 meters tall";
    let reference = "the height of the old harbor is 25 meters";
    println!("candidate: {candidate:?}");
    println!("reference: {reference:?}");
    println!("  rouge-1 f1: {:.4}", rouge_n(candidate, reference, 1).f1);
    println!("  rouge-2 f1: {:.4}", rouge_n(candidate, reference, 2).f1);
    println!("  rouge-l f1: {:.4}", rouge_l(candidate, reference).f1);
    println!("  bleu:       {:.4}", bleu(candidate, reference));
    println!("  meteor:     {:.4}", meteor_lite(candidate, reference));

    // Feedback metrics need a corpus, an embedder, and a generator run.
    let corpus = generate_synthetic(&SynthConfig {
        seed: 5,
        num_examples: 80,
        max_history_turns: 3,
    })
    .expect("valid config");
    let index = RetrievalIndex::build(HashingEmbedder::default(), &corpus.documents);
    let example = &corpus.examples[3];
    let gold_vec = index
        .vector_for_id(example.gold_doc_id)
        .expect("gold doc is indexed")
        .clone();

    println!(
        "\nelliptical query vs manual rewrite on example {}:",
        example.id
    );
    for (label, rewrite) in [
        ("elliptical", &example.query),
        ("manual", &example.manual_rewrite),
    ] {
        let ranked = index.search(rewrite, 5);
        let ranked_docs: Vec<_> = ranked
            .doc_ids()
            .iter()
            .map(|&id| &corpus.documents[id])
            .collect();
        let ranked_vecs: Vec<_> = ranked
            .doc_ids()
            .iter()
            .map(|&id| {
                index
                    .vector_for_id(id)
                    .expect("ranked doc is indexed")
                    .clone()
            })
            .collect();
        let answer_vec = index.embedder().embed(&example.ground_truth);
        let answer = rewrite_rl::gensim::generate_extractive(
            &GenerationInput::new(rewrite.clone()),
            &ranked_docs,
            0.1,
        );
        println!("  {label}: {rewrite:?}");
        println!(
            "    m_d+ = {:.4}  m_D = {:.4}  m_G = {:.4}  m_q = {:.4}",
            metric_d_plus(
                &index.embedder().embed(rewrite),
                std::slice::from_ref(&gold_vec)
            ),
            metric_rank_weighted(&answer_vec, &ranked_vecs),
            metric_generation(&answer.text, &example.ground_truth, RougeVariant::RougeL),
            metric_rewrite_ref(rewrite, &example.manual_rewrite, RougeVariant::RougeL),
        );
    }
}
