//! Canonical text tokenization shared by the metrics and the embedder.
//!
//! One tokenizer everywhere keeps overlap metrics and embedding features
//! consistent: lowercase, strip punctuation to spaces, split on whitespace.

/// Tokenizes text: lowercase, replace non-alphanumeric characters with
/// spaces, split on whitespace. Empty input yields an empty list.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Splits a token-string on whitespace without normalization, preserving
/// special markers like `[CLS]` verbatim.
pub fn split_whitespace(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_strips_punctuation() {
        assert_eq!(tokenize("Old San Juan!"), vec!["old", "san", "juan"]);
        assert_eq!(tokenize("don't stop"), vec!["don", "t", "stop"]);
    }

    #[test]
    fn empty_and_punctuation_only() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("?!.,").is_empty());
    }

    #[test]
    fn keeps_digits() {
        assert_eq!(tokenize("route 66"), vec!["route", "66"]);
    }

    #[test]
    fn split_preserves_markers() {
        assert_eq!(
            split_whitespace("[CLS] q2 [SEP]"),
            vec!["[CLS]", "q2", "[SEP]"]
        );
    }
}
