use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Snippet;

/// Id of the unknown-token entry.
pub const UNK: usize = 0;
const UNK_TEXT: &str = "<unk>";

/// Dense token-text to id map with `0 = UNK`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    texts: Vec<String>,
    index: HashMap<String, usize>,
    min_count: usize,
}

/// Builds a vocabulary over every token text whose corpus frequency reaches
/// `min_count`. Ids follow descending frequency, ties broken
/// lexicographically, so corpus order never matters.
pub fn build_vocab(snippets: &[Snippet], min_count: usize) -> Vocab {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in snippets.iter().flat_map(|s| &s.tokens) {
        *counts.entry(t.text.as_str()).or_default() += 1;
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocab::from_texts(kept.into_iter().map(|(t, _)| t.to_string()), min_count)
}

impl Vocab {
    fn from_texts(texts: impl IntoIterator<Item = String>, min_count: usize) -> Self {
        let mut all = vec![UNK_TEXT.to_string()];
        all.extend(texts);
        let index = all
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            texts: all,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn id(&self, text: &str) -> usize {
        self.index.get(text).copied().unwrap_or(UNK)
    }

    pub fn text(&self, id: usize) -> Option<&str> {
        self.texts.get(id).map(String::as_str)
    }

    /// Writes vocabulary ids into every token of `snippet`.
    pub fn assign(&self, snippet: &mut Snippet) {
        for t in &mut snippet.tokens {
            t.vocab_id = self.id(&t.text);
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    min_count: usize,
    /// Token texts in id order, starting after UNK.
    tokens: Vec<String>,
}

impl Serialize for Vocab {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        VocabRepr {
            min_count: self.min_count,
            tokens: self.texts[1..].to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = VocabRepr::deserialize(d)?;
        let mut seen = std::collections::HashSet::new();
        for t in &repr.tokens {
            if t == UNK_TEXT || !seen.insert(t) {
                return Err(serde::de::Error::custom(format!(
                    "duplicate vocab entry `{t}`"
                )));
            }
        }
        Ok(Vocab::from_texts(repr.tokens, repr.min_count))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code_model::{tokenize, LexerConfig};

    fn corpus(sources: &[&str]) -> Vec<Snippet> {
        sources
            .iter()
            .map(|s| tokenize(s, &LexerConfig::default()).unwrap())
            .collect()
    }

    #[test]
    fn frequency_then_lexicographic() {
        let v = build_vocab(&corpus(&["a a b"]), 1);
        assert_eq!(v.len(), 3);
        assert_eq!((v.id("a"), v.id("b")), (1, 2));
        assert_eq!(v.id("zzz"), UNK);

        let v = build_vocab(&corpus(&["c b a"]), 1);
        assert_eq!((v.id("a"), v.id("b"), v.id("c")), (1, 2, 3));
    }

    #[test]
    fn threshold_can_leave_only_unk() {
        let v = build_vocab(&corpus(&["a b"]), 5);
        assert_eq!(v.len(), 1);
        assert_eq!(v.text(UNK), Some("<unk>"));
    }

    #[test]
    fn corpus_order_does_not_matter() {
        let a = build_vocab(&corpus(&["x y y", "z x q"]), 1);
        let b = build_vocab(&corpus(&["z x q", "x y y"]), 1);
        assert_eq!(a, b);
    }

    #[test]
    fn serde_round_trip() {
        let v = build_vocab(&corpus(&["let x = y ;", "x"]), 1);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
    }
}
