//! Exact top-l retrieval over hashed document embeddings.
//!
//! The index embeds every document once; a search embeds the query, scores
//! all documents by cosine similarity, and returns the l best with fully
//! deterministic ordering (ties broken by ascending document id).

use std::collections::HashMap;

use crate::corpus::Document;
use crate::embedding::{cosine, EmbeddingVector, HashingEmbedder};

/// One search hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedDoc {
    pub doc_id: usize,
    pub score: f64,
}

/// Search hits in rank order (best first).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub hits: Vec<RankedDoc>,
}

impl RankedList {
    /// 1-based rank of `doc_id`, if present.
    pub fn rank_of(&self, doc_id: usize) -> Option<usize> {
        self.hits
            .iter()
            .position(|h| h.doc_id == doc_id)
            .map(|p| p + 1)
    }

    /// Reciprocal rank of `doc_id`: 1/rank inside the list, 0 outside.
    pub fn reciprocal_rank(&self, doc_id: usize) -> f64 {
        self.rank_of(doc_id).map_or(0.0, |r| 1.0 / r as f64)
    }

    pub fn doc_ids(&self) -> Vec<usize> {
        self.hits.iter().map(|h| h.doc_id).collect()
    }
}

/// Brute-force cosine index.
pub struct RetrievalIndex {
    embedder: HashingEmbedder,
    doc_ids: Vec<usize>,
    doc_vecs: Vec<EmbeddingVector>,
    positions: HashMap<usize, usize>,
}

impl RetrievalIndex {
    /// Embeds `documents` with `embedder`. Documents are scored in the given
    /// order, so equal ids must not occur twice.
    pub fn build(embedder: HashingEmbedder, documents: &[Document]) -> Self {
        let doc_ids: Vec<usize> = documents.iter().map(|d| d.id).collect();
        let doc_vecs = documents.iter().map(|d| embedder.embed(&d.text)).collect();
        let positions = doc_ids.iter().enumerate().map(|(p, id)| (*id, p)).collect();
        Self {
            embedder,
            doc_ids,
            doc_vecs,
            positions,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn embedder(&self) -> &HashingEmbedder {
        &self.embedder
    }

    /// Embedding of the document at index `pos` (build order).
    pub fn doc_vector(&self, pos: usize) -> &EmbeddingVector {
        &self.doc_vecs[pos]
    }

    /// Embedding of the document with the given id, if indexed.
    pub fn vector_for_id(&self, doc_id: usize) -> Option<&EmbeddingVector> {
        self.positions.get(&doc_id).map(|pos| &self.doc_vecs[*pos])
    }

    pub fn search(&self, query: &str, top_l: usize) -> RankedList {
        self.search_vector(&self.embedder.embed(query), top_l)
    }

    /// Searches with a precomputed query embedding (saves re-embedding the
    /// same rewrite for metrics and retrieval).
    pub fn search_vector(&self, query: &EmbeddingVector, top_l: usize) -> RankedList {
        let mut hits: Vec<RankedDoc> = self
            .doc_vecs
            .iter()
            .zip(&self.doc_ids)
            .map(|(vec, id)| RankedDoc {
                doc_id: *id,
                score: cosine(query, vec).expect("index and query dimensions match"),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });
        hits.truncate(top_l);
        RankedList { hits }
    }
}
