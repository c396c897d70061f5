use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tokenize::normalize_and_tokenize;
use super::vocab::{Vocabulary, OOV};
use crate::affect::{EmotionClassifier, EmotionDistribution};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Prompt and response token ids with the response's emotion label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DialogPair<T: Scalar> {
    pub prompt: Vec<usize>,
    pub response: Vec<usize>,
    pub target_emotion: EmotionDistribution<T>,
}

impl<T: Scalar> DialogPair<T> {
    pub fn new(prompt: Vec<usize>, response: Vec<usize>) -> Self {
        Self { prompt, response, target_emotion: EmotionDistribution::uniform() }
    }

    pub fn with_emotion(mut self, e: EmotionDistribution<T>) -> Self {
        self.target_emotion = e;
        self
    }

    pub fn swapped(&self) -> Self {
        Self {
            prompt: self.response.clone(),
            response: self.prompt.clone(),
            target_emotion: self.target_emotion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reversed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus<T: Scalar> {
    pub pairs: Vec<DialogPair<T>>,
    pub direction: Direction,
}

impl<T: Scalar> Corpus<T> {
    pub fn new(pairs: Vec<DialogPair<T>>) -> Self {
        Self { pairs, direction: Direction::Forward }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Swaps prompt and response of every pair (T-S training data).
    pub fn reverse(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(DialogPair::swapped).collect(),
            direction: match self.direction {
                Direction::Forward => Direction::Reversed,
                Direction::Reversed => Direction::Forward,
            },
        }
    }

    /// Fraction of all prompt and response tokens mapped to OOV.
    pub fn oov_fraction(&self) -> f64 {
        let (oov, total) = self
            .pairs
            .iter()
            .flat_map(|p| p.prompt.iter().chain(&p.response))
            .fold((0usize, 0usize), |(o, t), &id| (o + usize::from(id == OOV), t + 1));
        if total == 0 {
            0.0
        } else {
            oov as f64 / total as f64
        }
    }
}

/// Parses `prompt<TAB>response` lines into id sequences truncated to `max_length`.
/// Blank lines are skipped; every other malformed line is an error naming it.
pub fn parse_pairs<T: Scalar>(text: &str, path: &Path, vocab: &Vocabulary, max_length: usize) -> Result<Corpus<T>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| Error::Parse { path: path.to_path_buf(), line: i + 1, msg: msg.to_string() };
        let (prompt, response) = line.split_once('\t').ok_or_else(|| err("missing TAB between prompt and response"))?;
        if response.contains('\t') {
            return Err(err("more than one TAB"));
        }
        let encode = |s: &str| {
            let mut ids = vocab.encode(&normalize_and_tokenize(s));
            ids.truncate(max_length);
            ids
        };
        let (p, r) = (encode(prompt), encode(response));
        if p.is_empty() || r.is_empty() {
            return Err(err("prompt and response must both contain tokens"));
        }
        pairs.push(DialogPair::new(p, r));
    }
    Ok(Corpus::new(pairs))
}

pub fn ingest_pairs<T: Scalar>(path: impl AsRef<Path>, vocab: &Vocabulary, max_length: usize) -> Result<Corpus<T>> {
    let path = path.as_ref();
    parse_pairs(&fs::read_to_string(path)?, path, vocab, max_length)
}

/// Raw tokenized `(prompt, response)` pairs, used to build a vocabulary before ingestion.
pub fn read_raw_pairs(path: impl AsRef<Path>) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (p, r) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: "missing TAB between prompt and response".into(),
        })?;
        out.push((normalize_and_tokenize(p), normalize_and_tokenize(r)));
    }
    Ok(out)
}

/// Labels every pair with the classifier's distribution for its response.
pub fn label_corpus<T: Scalar, C: EmotionClassifier<T> + ?Sized>(c: &Corpus<T>, vocab: &Vocabulary, classifier: &C) -> Corpus<T> {
    let pairs = c
        .pairs
        .iter()
        .map(|p| {
            let words = vocab.decode(&p.response);
            p.clone().with_emotion(classifier.classify(&words))
        })
        .collect();
    Corpus { pairs, direction: c.direction }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64, seed: u64) -> Result<Self> {
        let fracs = [train_frac, val_frac, test_frac];
        if fracs.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) || (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {fracs:?} must be non-negative and sum to 1")));
        }
        Ok(Self { train_frac, val_frac, test_frac, seed })
    }
}

impl Default for SplitSpec {
    /// 94% train, 1% validation, 5% test.
    fn default() -> Self {
        Self { train_frac: 0.94, val_frac: 0.01, test_frac: 0.05, seed: 0 }
    }
}

/// Seeded shuffle, then contiguous train / validation / test blocks. Train and
/// validation sizes are floored; the test block takes the remainder.
pub fn split_corpus<T: Scalar>(c: &Corpus<T>, s: &SplitSpec) -> (Corpus<T>, Corpus<T>, Corpus<T>) {
    let n = c.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(s.seed));
    // the epsilon keeps 100 * 0.94 from flooring to 93
    let count = |f: f64| ((n as f64 * f + 1e-9).floor() as usize).min(n);
    let n_train = count(s.train_frac);
    let n_val = count(s.val_frac).min(n - n_train);
    let take = |idx: &[usize]| Corpus {
        pairs: idx.iter().map(|&i| c.pairs[i].clone()).collect(),
        direction: c.direction,
    };
    (
        take(&order[..n_train]),
        take(&order[n_train..n_train + n_val]),
        take(&order[n_train + n_val..]),
    )
}
