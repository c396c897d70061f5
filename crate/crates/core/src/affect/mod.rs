//! Emotion representations, the emotion-to-VAD map, the VAD lexicon and the
//! baseline sentence classifier.

mod classifier;
mod emotion;
mod lexicon;
mod similarity;
mod vad;

pub use classifier::{
    classify_emotion, classify_vads, ClassifierConfig, EmotionClassifier, VadPrototypeClassifier, DEFAULT_TEMPERATURE,
};
pub use emotion::{Emotion, EmotionDistribution, DISTRIBUTION_TOLERANCE};
pub use lexicon::{lexicon_vad, VadLexicon, DEFAULT_SIMILARITY_THRESHOLD};
pub use similarity::{best_match, levenshtein, string_similarity};
pub use vad::{emotion_to_vad, vad_distance, EmotionVadMap, VadVector};
