use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The six Ekman emotions, in the fixed component order used everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Surprise,
    Joy,
    Sadness,
    Fear,
    Disgust,
}

impl Emotion {
    pub const ALL: [Emotion; 6] = [
        Emotion::Anger,
        Emotion::Surprise,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Fear,
        Emotion::Disgust,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Surprise => "surprise",
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Fear => "fear",
            Emotion::Disgust => "disgust",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Emotion::ALL
            .into_iter()
            .find(|e| e.name() == lower)
            .ok_or_else(|| Error::UnknownEmotion(s.to_string()))
    }
}

/// Tolerance on the sum of a distribution's components.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// A probability distribution over the six emotions.
///
/// On the wire this is a plain array of six numbers in [`Emotion::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 6]", into = "[f64; 6]")]
#[serde(bound = "")]
pub struct EmotionDistribution<T: Scalar> {
    p: [T; 6],
}

impl<T: Scalar> EmotionDistribution<T> {
    pub fn new(p: [T; 6]) -> Result<Self> {
        let tol = T::of(DISTRIBUTION_TOLERANCE);
        for (e, &x) in Emotion::ALL.iter().zip(&p) {
            if !x.is_finite() || x < T::zero() || x > T::one() + tol {
                return Err(Error::InvalidEmotion(format!("{e} component {x} outside [0, 1]")));
            }
        }
        let sum: T = p.iter().copied().sum();
        if (sum - T::one()).abs() > tol {
            return Err(Error::InvalidEmotion(format!("components sum to {sum}")));
        }
        Ok(Self { p })
    }

    /// Builds a distribution from non-negative weights by normalizing them.
    pub fn from_weights(w: [T; 6]) -> Result<Self> {
        let sum: T = w.iter().copied().sum();
        if !(sum > T::zero()) || w.iter().any(|x| *x < T::zero() || !x.is_finite()) {
            return Err(Error::InvalidEmotion("weights must be non-negative with a positive sum".into()));
        }
        Self::new(w.map(|x| x / sum))
    }

    pub fn one_hot(e: Emotion) -> Self {
        let mut p = [T::zero(); 6];
        p[e.index()] = T::one();
        Self { p }
    }

    pub fn uniform() -> Self {
        Self { p: [T::one() / T::of(6.0); 6] }
    }

    pub fn probs(&self) -> &[T; 6] {
        &self.p
    }

    pub fn get(&self, e: Emotion) -> T {
        self.p[e.index()]
    }

    /// Most probable emotion; ties resolve to the earliest in [`Emotion::ALL`].
    pub fn argmax(&self) -> Emotion {
        let mut best = 0;
        for i in 1..6 {
            if self.p[i] > self.p[best] {
                best = i;
            }
        }
        Emotion::ALL[best]
    }

    /// Euclidean distance between two distributions in the six-dimensional simplex.
    pub fn distance(&self, other: &Self) -> T {
        self.p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (*a - *b) * (*a - *b))
            .sum::<T>()
            .sqrt()
    }

    /// Convex combination `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &Self, lambda: T) -> Self {
        Self { p: std::array::from_fn(|i| lambda * self.p[i] + (T::one() - lambda) * other.p[i]) }
    }

    pub fn cast<U: Scalar>(&self) -> EmotionDistribution<U> {
        EmotionDistribution { p: self.p.map(|x| U::of(x.as_f64())) }
    }
}

impl<T: Scalar> TryFrom<[f64; 6]> for EmotionDistribution<T> {
    type Error = Error;

    fn try_from(p: [f64; 6]) -> Result<Self> {
        Self::new(p.map(T::of))
    }
}

impl<T: Scalar> From<EmotionDistribution<T>> for [f64; 6] {
    fn from(e: EmotionDistribution<T>) -> Self {
        e.p.map(|x| x.as_f64())
    }
}

impl<T: Scalar> From<Emotion> for EmotionDistribution<T> {
    fn from(e: Emotion) -> Self {
        Self::one_hot(e)
    }
}
