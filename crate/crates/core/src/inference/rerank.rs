use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::beam::Hypothesis;
use crate::affect::{EmotionClassifier, EmotionDistribution};
use crate::error::{Error, Result};
use crate::model::Seq2Seq;
use crate::scalar::Scalar;
use crate::text::{Vocabulary, EOS};

/// Weights of the reverse-model, length and emotion-distance terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

pub const DEFAULT_ALPHA: f64 = 50.0;
pub const DEFAULT_BETA: f64 = 0.001;
pub const DEFAULT_GAMMA: f64 = 4.2;

impl RerankWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && gamma.is_finite()) {
            return Err(Error::Config(format!("re-ranking weights must be finite: {alpha}, {beta}, {gamma}")));
        }
        Ok(Self { alpha, beta, gamma })
    }

    /// Plain MMI-bidi: no emotion term.
    pub fn mmi(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta, gamma: 0.0 }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }
}

impl Default for RerankWeights {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, beta: DEFAULT_BETA, gamma: DEFAULT_GAMMA }
    }
}

/// A candidate response with its score terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Candidate<T: Scalar> {
    /// Emitted ids, EOS included when the hypothesis finished.
    pub ids: Vec<usize>,
    /// Unnormalized `log p(R_C | S, E0)`.
    pub fwd_logprob: T,
    pub rev_logprob: Option<T>,
    pub emotion: Option<EmotionDistribution<T>>,
    pub final_score: Option<T>,
}

impl<T: Scalar> Candidate<T> {
    pub fn new(ids: Vec<usize>, fwd_logprob: T) -> Self {
        Self { ids, fwd_logprob, rev_logprob: None, emotion: None, final_score: None }
    }

    /// Response tokens without the closing EOS.
    pub fn content(&self) -> &[usize] {
        match self.ids.last() {
            Some(&EOS) => &self.ids[..self.ids.len() - 1],
            _ => &self.ids,
        }
    }

    /// `|R_C|`.
    pub fn length(&self) -> usize {
        self.content().len()
    }

    pub fn emotion_distance(&self, e0: &EmotionDistribution<T>) -> Option<T> {
        self.emotion.as_ref().map(|e| e.distance(e0))
    }
}

impl<T: Scalar> From<Hypothesis<T>> for Candidate<T> {
    fn from(h: Hypothesis<T>) -> Self {
        Candidate::new(h.ids, h.log_prob)
    }
}

/// Fills in the reverse log probability `log p(S | R_C)` and the
/// classified emotion of every candidate. The reverse model is conditioned on
/// the prompt's own classified emotion. A candidate with no content tokens is
/// fed to the reverse model as a lone EOS.
pub fn score_terms<T: Scalar, C: EmotionClassifier<T> + ?Sized>(
    cands: &mut [Candidate<T>],
    prompt: &[usize],
    reverse: Option<&Seq2Seq<T>>,
    classifier: &C,
    vocab: &Vocabulary,
) -> Result<()> {
    let prompt_emotion = classifier.classify(&vocab.decode(prompt));
    for c in cands.iter_mut() {
        if let Some(rev) = reverse {
            let src: Vec<usize> = if c.length() == 0 { vec![EOS] } else { c.content().to_vec() };
            c.rev_logprob = Some(rev.sequence_log_prob(&src, prompt, &prompt_emotion)?);
        }
        c.emotion = Some(classifier.classify(&vocab.decode(c.content())));
    }
    Ok(())
}

/// `fwd + α·rev + β·|R_C| − γ·‖E_{R_C} − E0‖₂`; missing terms count as zero.
pub fn final_score<T: Scalar>(c: &Candidate<T>, e0: &EmotionDistribution<T>, w: &RerankWeights) -> T {
    let rev = c.rev_logprob.unwrap_or_else(T::zero);
    let dist = c.emotion_distance(e0).unwrap_or_else(T::zero);
    c.fwd_logprob + T::of(w.alpha) * rev + T::of(w.beta) * T::of_usize(c.length()) - T::of(w.gamma) * dist
}

pub fn apply_weights<T: Scalar>(cands: &mut [Candidate<T>], e0: &EmotionDistribution<T>, w: &RerankWeights) {
    for c in cands.iter_mut() {
        c.final_score = Some(final_score(c, e0, w));
    }
}

/// [`score_terms`] followed by [`apply_weights`].
pub fn score_candidates<T: Scalar, C: EmotionClassifier<T> + ?Sized>(
    cands: &mut [Candidate<T>],
    prompt: &[usize],
    reverse: Option<&Seq2Seq<T>>,
    classifier: &C,
    vocab: &Vocabulary,
    e0: &EmotionDistribution<T>,
    w: &RerankWeights,
) -> Result<()> {
    score_terms(cands, prompt, reverse, classifier, vocab)?;
    apply_weights(cands, e0, w);
    Ok(())
}

/// Highest final score; ties go to the shorter candidate, then to the
/// lexicographically smaller ids.
pub fn select_final<T: Scalar>(cands: &[Candidate<T>]) -> Result<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, c) in cands.iter().enumerate() {
        let s = c.final_score.ok_or_else(|| Error::Config(format!("candidate {i} has no final score")))?;
        if s.is_nan() {
            return Err(Error::NonFinite(format!("final score of candidate {i}")));
        }
        let better = match best {
            None => true,
            Some((j, b)) => match s.partial_cmp(&b).unwrap_or(Ordering::Equal) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => {
                    let o = &cands[j];
                    (c.ids.len(), &c.ids) < (o.ids.len(), &o.ids)
                }
            },
        };
        if better {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::Empty("select_final"))
}

/// One line of the optional re-ranking report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankRecord {
    pub ids: Vec<usize>,
    pub fwd_logprob: f64,
    pub rev_logprob: Option<f64>,
    pub length: usize,
    pub emotion_distance: Option<f64>,
    pub final_score: Option<f64>,
}

impl RerankRecord {
    pub fn from_candidate<T: Scalar>(c: &Candidate<T>, e0: &EmotionDistribution<T>) -> Self {
        Self {
            ids: c.ids.clone(),
            fwd_logprob: c.fwd_logprob.as_f64(),
            rev_logprob: c.rev_logprob.map(|x| x.as_f64()),
            length: c.length(),
            emotion_distance: c.emotion_distance(e0).map(|x| x.as_f64()),
            final_score: c.final_score.map(|x| x.as_f64()),
        }
    }
}

/// Writes one JSON line per candidate.
pub fn write_rerank_report<T: Scalar>(out: &mut impl Write, cands: &[Candidate<T>], e0: &EmotionDistribution<T>) -> Result<()> {
    for c in cands {
        writeln!(out, "{}", serde_json::to_string(&RerankRecord::from_candidate(c, e0))?)?;
    }
    Ok(())
}
