use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::similarity::best_match;
use super::vad::VadVector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Similarity a lexicon word must exceed to stand in for an unknown word.
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.9;

/// Word to VAD dictionary with fuzzy fallback and a neutral default.
///
/// Lookup is total: an exact entry wins, then the most similar entry above the
/// similarity threshold, then the neutral vector `[0.5, 0.5, 0.5]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VadLexicon<T: Scalar> {
    entries: BTreeMap<String, VadVector<T>>,
    neutral: VadVector<T>,
    similarity_threshold: f64,
}

impl<T: Scalar> Default for VadLexicon<T> {
    fn default() -> Self {
        Self {
            entries: BTreeMap::new(),
            neutral: VadVector::neutral(),
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
        }
    }
}

impl<T: Scalar> VadLexicon<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.similarity_threshold = threshold;
        self
    }

    pub fn insert(&mut self, word: impl Into<String>, vad: VadVector<T>) -> Result<()> {
        if !vad.in_unit_cube() {
            return Err(Error::InvalidVad(format!("lexicon entry {vad:?} outside [0, 1]^3")));
        }
        self.entries.insert(word.into(), vad);
        Ok(())
    }

    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, VadVector<T>)>,
        S: Into<String>,
    {
        let mut lex = Self::new();
        for (w, v) in entries {
            lex.insert(w, v)?;
        }
        Ok(lex)
    }

    /// Parses `word<TAB>V<TAB>A<TAB>D` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lex = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::Parse { path: path.to_path_buf(), line: line_no, msg };
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 tab-separated fields, found {}", fields.len())));
            }
            let mut xs = [T::zero(); 3];
            for (x, f) in xs.iter_mut().zip(&fields[1..]) {
                let parsed: f64 = f.trim().parse().map_err(|_| err(format!("bad number `{f}`")))?;
                *x = T::of(parsed);
            }
            let vad = VadVector::bounded(xs[0], xs[1], xs[2]).map_err(|e| err(e.to_string()))?;
            lex.entries.insert(fields[0].trim().to_string(), vad);
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path)?, path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn neutral(&self) -> VadVector<T> {
        self.neutral
    }

    pub fn similarity_threshold(&self) -> f64 {
        self.similarity_threshold
    }

    pub fn get_exact(&self, word: &str) -> Option<VadVector<T>> {
        self.entries.get(word).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &VadVector<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Total lookup with fuzzy fallback.
    pub fn lookup(&self, word: &str) -> VadVector<T> {
        if let Some(v) = self.entries.get(word) {
            return *v;
        }
        best_match(word, self.entries.keys().map(String::as_str), self.similarity_threshold)
            .and_then(|w| self.entries.get(w).copied())
            .unwrap_or(self.neutral)
    }
}

/// Free-function form of [`VadLexicon::lookup`].
pub fn lexicon_vad<T: Scalar>(lex: &VadLexicon<T>, word: &str) -> VadVector<T> {
    lex.lookup(word)
}
