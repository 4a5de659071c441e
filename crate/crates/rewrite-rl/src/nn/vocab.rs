//! Closed token vocabulary shared by the rewriter and the scorer models.

use indexmap::IndexMap;

use crate::text::{split_whitespace, tokenize};

pub const PAD: usize = 0;
pub const CLS: usize = 1;
pub const SEP: usize = 2;
pub const BOS: usize = 3;
pub const EOS: usize = 4;
pub const UNK: usize = 5;

const SPECIALS: [&str; 6] = ["[PAD]", "[CLS]", "[SEP]", "[BOS]", "[EOS]", "[UNK]"];

/// Token table with the six specials pinned to ids 0..=5 and the remaining
/// tokens sorted, so a vocabulary is a pure function of its token set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: IndexMap<String, usize>,
}

impl Vocab {
    /// Builds from raw texts; every non-special token is lowercased and
    /// stripped of punctuation before entering the table.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut words: Vec<String> = Vec::new();
        for text in texts {
            for token in tokenize(text) {
                words.push(token);
            }
        }
        words.sort();
        words.dedup();
        words.retain(|w| !SPECIALS.contains(&w.as_str()));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(words);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        assert!(
            tokens.len() >= SPECIALS.len() && SPECIALS.iter().zip(&tokens).all(|(s, t)| s == t),
            "vocabulary must start with the special tokens"
        );
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Encodes text to ids. `[CLS]`-style markers map to their specials;
    /// anything out of vocabulary becomes `[UNK]`, never an error.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        for raw in split_whitespace(text) {
            if let Some(id) = self.index.get(&raw) {
                ids.push(*id);
                continue;
            }
            for token in tokenize(&raw) {
                ids.push(self.id(&token).unwrap_or(UNK));
            }
        }
        ids
    }

    /// Renders generated ids as text, dropping structural specials.
    pub fn decode(&self, ids: &[usize]) -> String {
        let words: Vec<&str> = ids
            .iter()
            .filter(|id| !matches!(**id, PAD | CLS | SEP | BOS | EOS))
            .map(|id| self.token(*id))
            .collect();
        words.join(" ")
    }

    /// FNV-1a over all tokens in id order; checkpoints store this to refuse
    /// weights built for a different vocabulary.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for token in &self.tokens {
            for b in token.as_bytes() {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
            h ^= 0xff; // token boundary
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vocab {
        Vocab::build(["the cat sat", "what is the height of it"])
    }

    #[test]
    fn specials_occupy_fixed_ids() {
        let v = sample();
        assert_eq!(v.token(PAD), "[PAD]");
        assert_eq!(v.token(CLS), "[CLS]");
        assert_eq!(v.token(SEP), "[SEP]");
        assert_eq!(v.token(BOS), "[BOS]");
        assert_eq!(v.token(EOS), "[EOS]");
        assert_eq!(v.token(UNK), "[UNK]");
    }

    #[test]
    fn build_is_order_insensitive() {
        let a = Vocab::build(["b a", "c"]);
        let b = Vocab::build(["c b", "a"]);
        assert_eq!(a, b);
    }

    #[test]
    fn encode_maps_markers_and_unknowns() {
        let v = sample();
        let ids = v.encode("[CLS] the zebra [SEP]");
        assert_eq!(ids[0], CLS);
        assert_eq!(ids[1], v.id("the").unwrap());
        assert_eq!(ids[2], UNK);
        assert_eq!(ids[3], SEP);
    }

    #[test]
    fn encode_normalizes_case_and_punctuation() {
        let v = sample();
        assert_eq!(v.encode("The CAT."), v.encode("the cat"));
    }

    #[test]
    fn decode_skips_structural_specials() {
        let v = sample();
        let the = v.id("the").unwrap();
        let cat = v.id("cat").unwrap();
        assert_eq!(v.decode(&[BOS, the, cat, EOS, PAD]), "the cat");
        assert_eq!(v.decode(&[BOS, EOS]), "");
    }

    #[test]
    fn unknown_token_round_trips_as_unk_text() {
        let v = sample();
        let ids = v.encode("zebra");
        assert_eq!(v.decode(&ids), "[UNK]");
    }

    #[test]
    fn fingerprint_tracks_token_set() {
        let a = sample();
        let b = Vocab::build(["the cat sat", "what is the height of it"]);
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = Vocab::build(["the cat sat on a mat"]);
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn from_tokens_round_trip() {
        let v = sample();
        let rebuilt = Vocab::from_tokens(v.tokens().to_vec());
        assert_eq!(v, rebuilt);
    }

    #[test]
    #[should_panic(expected = "special tokens")]
    fn from_tokens_rejects_missing_specials() {
        Vocab::from_tokens(vec!["a".into(), "b".into()]);
    }
}
