use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::affect::{best_match, VadLexicon, VadVector};
use crate::error::Result;
use crate::scalar::Scalar;

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const OOV: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<sos>", "<eos>", "<oov>"];

/// Default vocabulary size, specials included.
pub const DEFAULT_VOCAB_SIZE: usize = 42_000;

/// Threshold a vocabulary word's similarity must exceed to absorb a typo.
pub const VOCAB_SIMILARITY_THRESHOLD: f64 = 0.9;

/// Token vocabulary. Ids `0..4` are the special tokens, regular words follow
/// in the order they were supplied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from an ordered word list; duplicates and special names are skipped.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary { words: Vec::new(), index: HashMap::new() };
        for s in SPECIALS {
            v.push(s.to_string());
        }
        for w in words {
            let w = w.into();
            if !w.is_empty() && !v.index.contains_key(&w) {
                v.push(w);
            }
        }
        v
    }

    /// Keeps the `max_size` most frequent tokens, ties broken alphabetically.
    pub fn build<'a, I>(tokens: I, max_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::from_words(ranked.into_iter().take(max_size).map(|(w, _)| w))
    }

    /// One word per line; order defines ids after the specials.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(Self::from_words(text.lines().map(str::trim).filter(|l| !l.is_empty())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for w in &self.words[SPECIALS.len()..] {
            out.push_str(w);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    fn push(&mut self, w: String) {
        self.index.insert(w.clone(), self.words.len());
        self.words.push(w);
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() == SPECIALS.len()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    pub fn is_special(id: usize) -> bool {
        id < SPECIALS.len()
    }

    /// Exact id, else the most similar regular word strictly above 0.9
    /// similarity, else [`OOV`].
    pub fn map_token(&self, w: &str) -> usize {
        if let Some(id) = self.id(w) {
            return id;
        }
        let regular = self.words[SPECIALS.len()..].iter().map(String::as_str);
        best_match(w, regular, VOCAB_SIMILARITY_THRESHOLD)
            .and_then(|m| self.id(m))
            .unwrap_or(OOV)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.map_token(t.as_ref())).collect()
    }

    /// Regular words of `ids`, specials removed.
    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter()
            .filter(|&&id| !Self::is_special(id))
            .filter_map(|&id| self.word(id))
            .collect()
    }

    /// VAD of every vocabulary entry (the columns of `E^VAD`). Specials are neutral.
    pub fn vad_table<T: Scalar>(&self, lex: &VadLexicon<T>) -> Vec<VadVector<T>> {
        self.words
            .iter()
            .enumerate()
            .map(|(i, w)| if Self::is_special(i) { lex.neutral() } else { lex.lookup(w) })
            .collect()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = String;

    fn try_from(words: Vec<String>) -> std::result::Result<Self, String> {
        if words.len() < SPECIALS.len() || words[..SPECIALS.len()] != SPECIALS {
            return Err("vocabulary must start with the special tokens".into());
        }
        Ok(Self::from_words(words.into_iter().skip(SPECIALS.len())))
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

/// Free-function form of [`Vocabulary::map_token`].
pub fn map_token_to_vocab(v: &Vocabulary, w: &str) -> usize {
    v.map_token(w)
}
