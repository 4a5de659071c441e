//! Synthetic multi-turn dialogue corpus with elliptical follow-up queries.
//!
//! Every example revolves around one named entity (an adjective/place pair
//! such as "the silver harbor") with a handful of numeric attributes. Each
//! attribute gets its own document whose first sentence states the fact; the
//! dialogue asks about several attributes in a row, and the final query drops
//! the entity mention ("what is its depth"), so resolving it requires the
//! history. The manual rewrite restores the full form, and the gold document
//! is the one holding the asked-for fact.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stage_rng;

pub const ADJECTIVES: [&str; 12] = [
    "old", "new", "grand", "little", "silver", "golden", "quiet", "busy", "ancient", "modern",
    "northern", "southern",
];

pub const PLACES: [&str; 12] = [
    "harbor",
    "valley",
    "bridge",
    "museum",
    "garden",
    "tower",
    "market",
    "library",
    "station",
    "castle",
    "lighthouse",
    "plaza",
];

/// Attribute name paired with its unit word.
pub const ATTRIBUTES: [(&str, &str); 12] = [
    ("height", "meters"),
    ("width", "meters"),
    ("length", "meters"),
    ("depth", "meters"),
    ("age", "years"),
    ("population", "residents"),
    ("area", "hectares"),
    ("temperature", "degrees"),
    ("weight", "tons"),
    ("capacity", "liters"),
    ("elevation", "feet"),
    ("distance", "miles"),
];

const VALUES: [u32; 24] = [
    3, 7, 12, 19, 25, 31, 40, 48, 56, 63, 72, 88, 95, 110, 125, 140, 160, 180, 220, 260, 300, 340,
    420, 480,
];

const FILLER_TEMPLATES: usize = 6;

// Second sentence of each document. Echoing the attribute and entity keeps
// the gold document separable from its same-entity and same-attribute
// distractors even under feature-hashing noise.
fn filler_sentence(pick: usize, attr: &str, entity: &str) -> String {
    match pick % FILLER_TEMPLATES {
        0 => format!("visitors frequently ask about the {attr} of the {entity}"),
        1 => format!("local guides often mention the {attr} of the {entity}"),
        2 => format!("official records list the {attr} of the {entity}"),
        3 => format!("the {attr} of the {entity} was confirmed by two independent checks"),
        4 => format!("the latest survey verified the {attr} of the {entity}"),
        _ => format!("the {attr} of the {entity} has not changed in years"),
    }
}

const ELLIPTIC_TEMPLATES: usize = 4;

fn elliptic_query(attr: &str, pick: usize) -> String {
    match pick % ELLIPTIC_TEMPLATES {
        0 => format!("what is the {attr} of it"),
        1 => format!("what is its {attr}"),
        2 => format!("and what about its {attr}"),
        _ => format!("how about the {attr}"),
    }
}

fn full_query(attr: &str, entity: &str) -> String {
    format!("what is the {attr} of the {entity}")
}

fn fact_sentence(attr: &str, entity: &str, value: u32, unit: &str) -> String {
    format!("the {attr} of the {entity} is {value} {unit}")
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid corpus: {0}")]
    Validation(String),
}

/// One retrievable passage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: usize,
    pub text: String,
}

/// A completed query/answer exchange earlier in the dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub query: String,
    pub answer: String,
}

/// One training example: the dialogue so far, the elliptical current query,
/// and the supervision targets (manual rewrite, answer, gold document).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueExample {
    pub id: usize,
    pub history: Vec<DialogueTurn>,
    pub query: String,
    pub manual_rewrite: String,
    pub ground_truth: String,
    pub gold_doc_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub documents: Vec<Document>,
    pub examples: Vec<DialogueExample>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_examples: usize,
    /// Upper bound on completed turns before the current query (1..=4).
    pub max_history_turns: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            num_examples: 500,
            max_history_turns: 3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.num_examples == 0 {
            return Err(CorpusError::Validation(
                "synth.num_examples must be at least 1".into(),
            ));
        }
        if !(1..=4).contains(&self.max_history_turns) {
            return Err(CorpusError::Validation(format!(
                "synth.max_history_turns must be in 1..=4, got {}",
                self.max_history_turns
            )));
        }
        Ok(())
    }
}

/// Generates the corpus; each example owns one entity and 4-6 attribute
/// documents, all deterministic in `config.seed`.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticCorpus, CorpusError> {
    config.validate()?;
    let mut documents = Vec::new();
    let mut examples = Vec::with_capacity(config.num_examples);
    for i in 0..config.num_examples {
        let mut rng = stage_rng(config.seed, "synth", i as u64);
        let combo = i % (ADJECTIVES.len() * PLACES.len());
        let round = i / (ADJECTIVES.len() * PLACES.len());
        let mut entity = format!("{} {}", ADJECTIVES[combo / 12], PLACES[combo % 12]);
        if round > 0 {
            entity.push_str(&format!(" {}", round + 1));
        }

        let mut attr_order: Vec<usize> = (0..ATTRIBUTES.len()).collect();
        attr_order.shuffle(&mut rng);
        let attr_count = rng.gen_range(4..=6);
        let mut fact_sentences = Vec::with_capacity(attr_count);
        let mut doc_ids = Vec::with_capacity(attr_count);
        for &attr_idx in attr_order.iter().take(attr_count) {
            let (attr, unit) = ATTRIBUTES[attr_idx];
            let value = VALUES[rng.gen_range(0..VALUES.len())];
            let filler = filler_sentence(rng.gen_range(0..FILLER_TEMPLATES), attr, &entity);
            let fact = fact_sentence(attr, &entity, value, unit);
            doc_ids.push(documents.len());
            documents.push(Document {
                id: documents.len(),
                text: format!("{fact}. {filler}."),
            });
            fact_sentences.push(fact);
        }

        // Slot 0 is the current question; slots 1.. feed the history in
        // conversation order, so the earliest turn names the entity in full.
        let history_len = rng.gen_range(1..=config.max_history_turns.min(attr_count - 1));
        let mut history = Vec::with_capacity(history_len);
        for t in 0..history_len {
            let slot = history_len - t;
            let (attr, _) = ATTRIBUTES[attr_order[slot]];
            let query = if t == 0 || rng.gen_bool(0.5) {
                full_query(attr, &entity)
            } else {
                elliptic_query(attr, rng.gen_range(0..ELLIPTIC_TEMPLATES))
            };
            history.push(DialogueTurn {
                query,
                answer: fact_sentences[slot].clone(),
            });
        }

        let (attr, _) = ATTRIBUTES[attr_order[0]];
        examples.push(DialogueExample {
            id: i,
            history,
            query: elliptic_query(attr, rng.gen_range(0..ELLIPTIC_TEMPLATES)),
            manual_rewrite: full_query(attr, &entity),
            ground_truth: fact_sentences[0].clone(),
            gold_doc_id: doc_ids[0],
        });
    }
    Ok(SyntheticCorpus {
        documents,
        examples,
    })
}

/// Flattens an example into the rewriter input sequence, newest turn first:
/// `[CLS] q_k [SEP] a_{k-1} [SEP] q_{k-1} ... [SEP] q_1 [SEP]`.
pub fn build_input_sequence(example: &DialogueExample) -> String {
    let mut out = String::from("[CLS] ");
    out.push_str(&example.query);
    out.push_str(" [SEP]");
    for turn in example.history.iter().rev() {
        out.push_str(" ");
        out.push_str(&turn.answer);
        out.push_str(" [SEP] ");
        out.push_str(&turn.query);
        out.push_str(" [SEP]");
    }
    out
}

/// File names used by [`save_corpus`] / [`load_corpus`] inside the corpus
/// directory.
pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const EXAMPLES_FILE: &str = "examples.jsonl";

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    let display = path.display().to_string();
    let io_err = |source| CorpusError::Io {
        path: display.clone(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    for item in items {
        let line = serde_json::to_string(item).expect("corpus types serialize");
        writeln!(file, "{line}").map_err(io_err)?;
    }
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let display = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let mut items = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: display.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Writes `documents.jsonl` and `examples.jsonl` under `dir`.
pub fn save_corpus(dir: &Path, corpus: &SyntheticCorpus) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_jsonl(&dir.join(DOCUMENTS_FILE), &corpus.documents)?;
    write_jsonl(&dir.join(EXAMPLES_FILE), &corpus.examples)
}

/// Loads a corpus saved by [`save_corpus`], validating document references.
pub fn load_corpus(dir: &Path) -> Result<SyntheticCorpus, CorpusError> {
    let documents: Vec<Document> = read_jsonl(&dir.join(DOCUMENTS_FILE))?;
    let examples: Vec<DialogueExample> = read_jsonl(&dir.join(EXAMPLES_FILE))?;
    for example in &examples {
        if example.gold_doc_id >= documents.len() {
            return Err(CorpusError::Validation(format!(
                "example {} references unknown document {}",
                example.id, example.gold_doc_id
            )));
        }
    }
    Ok(SyntheticCorpus {
        documents,
        examples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine, HashingEmbedder};
    use crate::text::split_whitespace;

    fn small_corpus() -> SyntheticCorpus {
        generate_synthetic(&SynthConfig {
            seed: 7,
            num_examples: 200,
            max_history_turns: 3,
        })
        .unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        let config = SynthConfig::default();
        let a = generate_synthetic(&config).unwrap();
        let b = generate_synthetic(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut config = SynthConfig::default();
        config.num_examples = 0;
        assert!(config.validate().is_err());
        config.num_examples = 10;
        config.max_history_turns = 0;
        assert!(config.validate().is_err());
        config.max_history_turns = 5;
        assert!(config.validate().is_err());
    }

    #[test]
    fn examples_have_consistent_shape() {
        let corpus = small_corpus();
        for ex in &corpus.examples {
            assert!(!ex.history.is_empty() && ex.history.len() <= 3);
            let gold = &corpus.documents[ex.gold_doc_id];
            assert!(gold.text.starts_with(&ex.ground_truth));
            // the current query is elliptical: it never names the place
            let place = ex.manual_rewrite.split_whitespace().last().unwrap();
            if place.chars().all(|c| c.is_ascii_alphabetic()) {
                assert!(
                    !ex.query.contains(place),
                    "query {:?} leaks entity {:?}",
                    ex.query,
                    place
                );
            }
            // the earliest turn provides the full referent
            assert!(ex
                .history
                .first()
                .unwrap()
                .query
                .contains(place.trim_end_matches(char::is_numeric).trim()));
        }
    }

    #[test]
    fn input_sequence_without_history_is_single_segment() {
        let ex = DialogueExample {
            id: 0,
            history: vec![],
            query: "what is the height of it".into(),
            manual_rewrite: String::new(),
            ground_truth: String::new(),
            gold_doc_id: 0,
        };
        assert_eq!(
            build_input_sequence(&ex),
            "[CLS] what is the height of it [SEP]"
        );
    }

    #[test]
    fn input_sequence_orders_history_newest_first() {
        let ex = DialogueExample {
            id: 0,
            history: vec![
                DialogueTurn {
                    query: "q1".into(),
                    answer: "a1".into(),
                },
                DialogueTurn {
                    query: "q2".into(),
                    answer: "a2".into(),
                },
            ],
            query: "q3".into(),
            manual_rewrite: String::new(),
            ground_truth: String::new(),
            gold_doc_id: 0,
        };
        assert_eq!(
            build_input_sequence(&ex),
            "[CLS] q3 [SEP] a2 [SEP] q2 [SEP] a1 [SEP] q1 [SEP]"
        );
    }

    #[test]
    fn input_sequence_separator_count_tracks_history() {
        let corpus = small_corpus();
        for ex in corpus.examples.iter().take(50) {
            let seq = build_input_sequence(ex);
            let tokens = split_whitespace(&seq);
            assert_eq!(tokens.first().map(String::as_str), Some("[CLS]"));
            assert_eq!(tokens.last().map(String::as_str), Some("[SEP]"));
            let seps = tokens.iter().filter(|t| *t == "[SEP]").count();
            assert_eq!(seps, 1 + 2 * ex.history.len());
        }
    }

    #[test]
    fn manual_rewrite_retrieves_gold_at_rank_one() {
        // End-to-end sanity for the corpus design: ranking every document by
        // cosine against the manual rewrite must put the gold document first
        // almost always, otherwise the retrieval feedback is meaningless.
        let corpus = small_corpus();
        let embedder = HashingEmbedder::default();
        let doc_vecs: Vec<_> = corpus
            .documents
            .iter()
            .map(|d| embedder.embed(&d.text))
            .collect();
        let mut hits = 0usize;
        for ex in &corpus.examples {
            let q = embedder.embed(&ex.manual_rewrite);
            let gold_score = cosine(&q, &doc_vecs[ex.gold_doc_id]).unwrap();
            let beaten = doc_vecs
                .iter()
                .enumerate()
                .any(|(id, v)| id != ex.gold_doc_id && cosine(&q, v).unwrap() >= gold_score);
            if !beaten {
                hits += 1;
            }
        }
        let rate = hits as f64 / corpus.examples.len() as f64;
        assert!(rate >= 0.95, "gold rank-1 rate {rate:.3} below 0.95");
    }

    #[test]
    fn jsonl_round_trip_preserves_corpus() {
        let corpus = generate_synthetic(&SynthConfig {
            seed: 3,
            num_examples: 12,
            max_history_turns: 2,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(dir.path(), &corpus).unwrap();
        let loaded = load_corpus(dir.path()).unwrap();
        assert_eq!(corpus, loaded);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_synthetic(&SynthConfig {
            seed: 3,
            num_examples: 2,
            max_history_turns: 2,
        })
        .unwrap();
        save_corpus(dir.path(), &corpus).unwrap();
        let examples_path = dir.path().join(EXAMPLES_FILE);
        let mut text = fs::read_to_string(&examples_path).unwrap();
        text.push_str("{\"id\": not json}\n");
        fs::write(&examples_path, text).unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        match err {
            CorpusError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }
}
