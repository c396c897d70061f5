//! Corpus BLEU (1- to 4-grams, add-one smoothing above unigrams) and
//! distinct-n normalized by token count.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BLEU_MAX_ORDER: usize = 4;

fn ngram_counts<W: Eq + Hash>(s: &[W], n: usize) -> HashMap<&[W], usize> {
    let mut m = HashMap::new();
    if s.len() >= n {
        for g in s.windows(n) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped matches and candidate n-gram total for one sentence pair.
fn matches<W: Eq + Hash>(cand: &[W], reference: &[W], n: usize) -> (usize, usize) {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let hits = c.iter().map(|(g, k)| (*k).min(r.get(g).copied().unwrap_or(0))).sum();
    (hits, cand.len().saturating_sub(n - 1))
}

/// Corpus BLEU against one reference per candidate.
pub fn bleu<W: Eq + Hash, C: AsRef<[W]>, R: AsRef<[W]>>(candidates: &[C], references: &[R]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Empty("bleu"));
    }
    if candidates.len() != references.len() {
        return Err(Error::Shape { op: "bleu", expected: vec![references.len()], got: vec![candidates.len()] });
    }
    let mut hits = [0usize; BLEU_MAX_ORDER];
    let mut totals = [0usize; BLEU_MAX_ORDER];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        let (c, r) = (c.as_ref(), r.as_ref());
        c_len += c.len();
        r_len += r.len();
        for n in 1..=BLEU_MAX_ORDER {
            let (h, t) = matches(c, r, n);
            hits[n - 1] += h;
            totals[n - 1] += t;
        }
    }
    if hits[0] == 0 {
        return Ok(0.0);
    }
    let mut log_sum = (hits[0] as f64 / totals[0] as f64).ln();
    for n in 1..BLEU_MAX_ORDER {
        log_sum += ((hits[n] + 1) as f64 / (totals[n] + 1) as f64).ln();
    }
    let bp = if c_len > r_len { 1.0 } else { (1.0 - r_len as f64 / c_len as f64).exp() };
    Ok(bp * (log_sum / BLEU_MAX_ORDER as f64).exp())
}

pub fn sentence_bleu<W: Eq + Hash>(candidate: &[W], reference: &[W]) -> f64 {
    bleu(&[candidate], &[reference]).expect("one pair")
}

/// BLEU over beam outputs: per prompt, the best and the average sentence
/// BLEU of its candidates, each averaged over prompts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamBleu {
    pub max: f64,
    pub mean: f64,
}

pub fn beam_bleu<W: Eq + Hash, C: AsRef<[W]>, R: AsRef<[W]>>(candidates: &[Vec<C>], references: &[R]) -> Result<BeamBleu> {
    if candidates.is_empty() {
        return Err(Error::Empty("beam_bleu"));
    }
    if candidates.len() != references.len() {
        return Err(Error::Shape { op: "beam_bleu", expected: vec![references.len()], got: vec![candidates.len()] });
    }
    let (mut max, mut mean) = (0.0, 0.0);
    for (cands, r) in candidates.iter().zip(references) {
        if cands.is_empty() {
            return Err(Error::Empty("beam_bleu candidate list"));
        }
        let scores: Vec<f64> = cands.iter().map(|c| sentence_bleu(c.as_ref(), r.as_ref())).collect();
        max += scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        mean += scores.iter().sum::<f64>() / scores.len() as f64;
    }
    let k = candidates.len() as f64;
    Ok(BeamBleu { max: max / k, mean: mean / k })
}

/// Distinct n-grams across all responses divided by the total number of
/// generated tokens.
pub fn distinct_n<W: Eq + Hash, S: AsRef<[W]>>(responses: &[S], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("distinct-n needs n >= 1".into()));
    }
    let tokens: usize = responses.iter().map(|r| r.as_ref().len()).sum();
    if tokens == 0 {
        return Err(Error::Empty("distinct_n"));
    }
    let mut seen = HashSet::new();
    for r in responses {
        let r = r.as_ref();
        if r.len() >= n {
            seen.extend(r.windows(n));
        }
    }
    Ok(seen.len() as f64 / tokens as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: f64,
    pub distinct1: f64,
    pub distinct2: f64,
    pub token_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam_bleu: Option<BeamBleu>,
}

pub fn evaluate<W: Eq + Hash, C: AsRef<[W]>, R: AsRef<[W]>>(candidates: &[C], references: &[R]) -> Result<EvalReport> {
    Ok(EvalReport {
        bleu: bleu(candidates, references)?,
        distinct1: distinct_n(candidates, 1)?,
        distinct2: distinct_n(candidates, 2)?,
        token_count: candidates.iter().map(|c| c.as_ref().len()).sum(),
        beam_bleu: None,
    })
}
