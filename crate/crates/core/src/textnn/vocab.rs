use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token to index mapping; index 0 is padding and 1 is the unknown token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_frequency: usize,
}

impl Vocabulary {
    /// Counts tokens and keeps those seen at least `min_frequency` times, most
    /// frequent first, ties in lexicographic order.
    pub fn build<I, T, S>(token_lists: I, min_frequency: usize) -> Self
    where
        I: IntoIterator<Item = T>,
        T: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for list in token_lists {
            for t in list {
                let t = t.as_ref();
                if let Some(c) = counts.get_mut(t) {
                    *c += 1;
                } else {
                    counts.insert(t.to_string(), 1);
                }
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_frequency.max(1) && t != PAD_TOKEN && t != UNK_TOKEN)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t), min_frequency)
    }

    /// Rebuilds a vocabulary from its non-reserved tokens in index order.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>, min_frequency: usize) -> Self {
        let mut all = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        all.extend(tokens);
        let index = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            tokens: all,
            index,
            min_frequency,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_frequency(&self) -> usize {
        self.min_frequency
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    /// Tokens after the two reserved entries, in index order.
    pub fn learned_tokens(&self) -> &[String] {
        &self.tokens[2..]
    }

    /// Maps tokens to indices, truncating at `max_len` and right-padding to
    /// exactly `max_len`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], max_len: usize) -> Vec<usize> {
        let mut out: Vec<usize> = tokens
            .iter()
            .take(max_len)
            .map(|t| self.get(t.as_ref()).unwrap_or(UNK))
            .collect();
        out.resize(max_len, PAD);
        out
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct VocabularyFile {
    pub tokens: Vec<String>,
    pub min_frequency: usize,
}

impl From<&Vocabulary> for VocabularyFile {
    fn from(v: &Vocabulary) -> Self {
        VocabularyFile {
            tokens: v.learned_tokens().to_vec(),
            min_frequency: v.min_frequency,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_then_lexicographic() {
        let v = Vocabulary::build([vec!["a", "a", "b"]], 1);
        assert_eq!(v.len(), 4);
        assert_eq!(v.get(PAD_TOKEN), Some(0));
        assert_eq!(v.get(UNK_TOKEN), Some(1));
        assert_eq!(v.get("a"), Some(2));
        assert_eq!(v.get("b"), Some(3));

        let v = Vocabulary::build([vec!["zz", "yy", "xx", "yy"]], 1);
        assert_eq!(v.learned_tokens(), ["yy", "xx", "zz"]);
    }

    #[test]
    fn min_frequency_filters() {
        let v = Vocabulary::build([vec!["a", "a", "b"]], 2);
        assert_eq!(v.get("b"), None);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn builds_are_deterministic() {
        let corpus = vec![vec!["q", "w", "e", "w"], vec!["e", "r"]];
        assert_eq!(Vocabulary::build(corpus.clone(), 1), Vocabulary::build(corpus, 1));
    }

    #[test]
    fn encode_pads_truncates_and_maps_unknowns() {
        let v = Vocabulary::build([vec!["a"]], 1);
        assert_eq!(v.encode::<&str>(&[], 8), vec![PAD; 8]);
        let long: Vec<String> = (0..200).map(|_| "a".to_string()).collect();
        let e = v.encode(&long, 128);
        assert_eq!(e.len(), 128);
        assert!(e.iter().all(|&i| i == 2));
        assert_eq!(v.encode(&["a", "zzz"], 6), vec![2, UNK, PAD, PAD, PAD, PAD]);
    }
}
