//! Baseline sentence emotion classifier.
//!
//! The mean VAD of a sentence is compared against the six emotion prototypes
//! (the columns of the emotion-to-VAD map) and a softmax over negative
//! distances gives the distribution.

use super::emotion::{Emotion, EmotionDistribution};
use super::lexicon::VadLexicon;
use super::vad::{vad_distance, EmotionVadMap, VadVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_TEMPERATURE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    temperature: f64,
}

impl ClassifierConfig {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Config(format!("classifier temperature must be positive, got {temperature}")));
        }
        Ok(Self { temperature })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { temperature: DEFAULT_TEMPERATURE }
    }
}

/// Anything that can assign an emotion distribution to a tokenized sentence.
pub trait EmotionClassifier<T: Scalar>: Send + Sync {
    fn classify(&self, words: &[&str]) -> EmotionDistribution<T>;
}

/// Softmax over prototype distances for an already-resolved list of word VADs.
/// An empty list carries no evidence and yields the uniform distribution.
pub fn classify_vads<T: Scalar>(cfg: &ClassifierConfig, vads: &[VadVector<T>]) -> EmotionDistribution<T> {
    if vads.is_empty() {
        return EmotionDistribution::uniform();
    }
    let mean = vads.iter().copied().sum::<VadVector<T>>().scale(T::one() / T::of_usize(vads.len()));
    let temp = T::of(cfg.temperature);
    let scores: Vec<T> = Emotion::ALL
        .iter()
        .map(|e| -vad_distance(&mean, &EmotionVadMap::column(*e)) / temp)
        .collect();
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|s| (*s - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    let mut p = [T::zero(); 6];
    for (pi, x) in p.iter_mut().zip(&exps) {
        *pi = *x / total;
    }
    EmotionDistribution::new(p).expect("softmax yields a valid distribution")
}

pub fn classify_emotion<T: Scalar>(cfg: &ClassifierConfig, lex: &VadLexicon<T>, tokens: &[&str]) -> EmotionDistribution<T> {
    let vads: Vec<VadVector<T>> = tokens.iter().map(|w| lex.lookup(w)).collect();
    classify_vads(cfg, &vads)
}

/// Prototype classifier bound to a lexicon.
#[derive(Debug, Clone)]
pub struct VadPrototypeClassifier<T: Scalar> {
    pub config: ClassifierConfig,
    pub lexicon: VadLexicon<T>,
}

impl<T: Scalar> VadPrototypeClassifier<T> {
    pub fn new(config: ClassifierConfig, lexicon: VadLexicon<T>) -> Self {
        Self { config, lexicon }
    }
}

impl<T: Scalar> EmotionClassifier<T> for VadPrototypeClassifier<T> {
    fn classify(&self, words: &[&str]) -> EmotionDistribution<T> {
        classify_emotion(&self.config, &self.lexicon, words)
    }
}
