use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::udrl::ControlToken;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

pub const DEFAULT_VOCAB_CAP: usize = 1024;

/// Specials followed by every control token.
pub fn default_specials() -> Vec<String> {
    [PAD, BOS, EOS, UNK]
        .into_iter()
        .chain(ControlToken::ALL.iter().map(|t| t.text()))
        .map(str::to_string)
        .collect()
}

/// Dense token ↔ id map. Serialized as the ordered token list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;
    fn try_from(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Vocab(format!("duplicate token `{t}`")));
            }
        }
        for s in [PAD, BOS, EOS, UNK] {
            if !index.contains_key(s) {
                return Err(Error::Vocab(format!("missing special token `{s}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pad(&self) -> usize {
        self.index[PAD]
    }
    pub fn bos(&self) -> usize {
        self.index[BOS]
    }
    pub fn eos(&self) -> usize {
        self.index[EOS]
    }
    pub fn unk(&self) -> usize {
        self.index[UNK]
    }

    /// Ids, mapping unknown tokens to UNK.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let unk = self.unk();
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(unk))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(UNK).to_string())
            .collect()
    }

    /// Ids that are never emitted as caption content.
    pub fn non_content_ids(&self) -> Vec<usize> {
        let mut ids = vec![self.pad(), self.bos(), self.unk()];
        ids.extend(ControlToken::ALL.iter().filter_map(|t| self.id(t.text())));
        ids
    }
}

/// Specials first in the given order, then corpus tokens by descending frequency
/// with ties broken lexicographically.
pub fn build_vocab_from<'a, I>(captions: I, specials: &[String], cap: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut any = false;
    for caption in captions {
        any = true;
        for t in caption {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    if !any {
        return Err(Error::Empty("cannot build a vocabulary from an empty dataset".into()));
    }
    let mut corpus: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, _)| !specials.iter().any(|s| s == t))
        .collect();
    corpus.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let total = specials.len() + corpus.len();
    if total > cap {
        return Err(Error::Vocab(format!(
            "vocabulary needs {total} entries but the cap is {cap}; raise the cap"
        )));
    }
    let tokens: Vec<String> = specials
        .iter()
        .cloned()
        .chain(corpus.into_iter().map(|(t, _)| t.to_string()))
        .collect();
    Vocabulary::try_from(tokens)
}

/// Vocabulary over every caption in the dataset.
pub fn build_vocab(ds: &Dataset, specials: &[String]) -> Result<Vocabulary> {
    build_vocab_from(
        ds.all_records().map(|r| r.caption_tokens.as_slice()),
        specials,
        DEFAULT_VOCAB_CAP,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps(xs: &[&str]) -> Vec<Vec<String>> {
        xs.iter()
            .map(|s| s.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn counts_specials_and_corpus_tokens() {
        let c = caps(&["a b", "b c"]);
        let specials: Vec<String> = [PAD, BOS, EOS, UNK, "<|good|>", "<|bad|>"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let v = build_vocab_from(c.iter().map(Vec::as_slice), &specials, 1024).unwrap();
        assert_eq!(v.len(), 9);
        assert_eq!(v.token(6), Some("b"));
        assert_eq!(v.token(7), Some("a"));
        assert_eq!(v.token(8), Some("c"));
        let again = build_vocab_from(c.iter().map(Vec::as_slice), &specials, 1024).unwrap();
        assert_eq!(v, again);
    }

    #[test]
    fn overflow_suggests_larger_cap() {
        let c = caps(&["a b c d e"]);
        let err = build_vocab_from(c.iter().map(Vec::as_slice), &default_specials(), 12).unwrap_err();
        assert!(err.to_string().contains("raise the cap"));
    }

    #[test]
    fn serde_round_trip_and_unknowns() {
        let c = caps(&["x y"]);
        let v = build_vocab_from(c.iter().map(Vec::as_slice), &default_specials(), 64).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(v.encode(&["x", "zzz"]), vec![v.id("x").unwrap(), v.unk()]);
        assert!(serde_json::from_str::<Vocabulary>("[\"a\",\"a\"]").is_err());
    }
}
