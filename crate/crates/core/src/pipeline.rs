//! End-to-end plumbing shared by the command line and the HTTP service:
//! corpus preparation, and generation with re-ranking.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::affect::{ClassifierConfig, Emotion, EmotionClassifier, EmotionDistribution, VadLexicon, VadPrototypeClassifier};
use crate::error::{Error, Result};
use crate::inference::{beam_search, score_candidates, select_final, BeamConfig, Candidate, RerankWeights, DEFAULT_BEAM_SIZE};
use crate::model::{load_checkpoint, Seq2Seq, VocabVad};
use crate::text::{
    detokenize, label_corpus, normalize_and_tokenize, parse_pairs, split_corpus, Corpus, SplitSpec, Vocabulary,
};

/// A target emotion given by name (one-hot) or as six probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EmotionSpec {
    Name(String),
    Vector([f64; 6]),
}

impl EmotionSpec {
    pub fn resolve(&self) -> Result<EmotionDistribution<f64>> {
        match self {
            EmotionSpec::Name(n) => Ok(EmotionDistribution::one_hot(n.parse::<Emotion>()?)),
            EmotionSpec::Vector(p) => EmotionDistribution::new(*p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub emotion: EmotionSpec,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub beam_size: Option<usize>,
}

/// A re-ranked candidate as reported to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub text: String,
    pub ids: Vec<usize>,
    pub fwd_logprob: f64,
    pub rev_logprob: Option<f64>,
    pub length: usize,
    pub emotion: Option<EmotionDistribution<f64>>,
    pub emotion_distance: Option<f64>,
    pub final_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub response: String,
    /// Index of the chosen candidate in `candidates`.
    pub selected: usize,
    pub target_emotion: EmotionDistribution<f64>,
    pub gamma: f64,
    pub beam_size: usize,
    pub candidates: Vec<ScoredCandidate>,
}

/// Forward model, optional reverse model, vocabulary and classifier, frozen
/// for concurrent use.
pub struct Generator {
    forward: Seq2Seq<f64>,
    reverse: Option<Seq2Seq<f64>>,
    vocab: Vocabulary,
    classifier: Box<dyn EmotionClassifier<f64>>,
    pub weights: RerankWeights,
    pub beam_size: usize,
    pub length_norm: bool,
}

impl Generator {
    pub fn new(
        forward: Seq2Seq<f64>,
        reverse: Option<Seq2Seq<f64>>,
        vocab: Vocabulary,
        classifier: Box<dyn EmotionClassifier<f64>>,
    ) -> Result<Self> {
        let v = vocab.len();
        if forward.config().vocab_size != v {
            return Err(Error::Config(format!("forward model has {} words, vocabulary {v}", forward.config().vocab_size)));
        }
        if let Some(r) = &reverse {
            if r.config().vocab_size != v {
                return Err(Error::Config(format!("reverse model has {} words, vocabulary {v}", r.config().vocab_size)));
            }
        }
        Ok(Self { forward, reverse, vocab, classifier, weights: RerankWeights::default(), beam_size: DEFAULT_BEAM_SIZE, length_norm: true })
    }

    /// Loads both checkpoints and the lexicon; the forward checkpoint must
    /// carry its vocabulary, and the reverse one must agree with it.
    pub fn from_files(fwd: &Path, rev: Option<&Path>, lexicon: Option<&Path>) -> Result<Self> {
        let f = load_checkpoint::<f64>(fwd)?;
        let vocab = f.vocab.ok_or_else(|| Error::Checkpoint(format!("{} carries no vocabulary", fwd.display())))?;
        let reverse = match rev {
            Some(p) => {
                let r = load_checkpoint::<f64>(p)?;
                if r.vocab.as_ref().is_some_and(|rv| rv != &vocab) {
                    return Err(Error::Checkpoint("forward and reverse checkpoints use different vocabularies".into()));
                }
                Some(r.model)
            }
            None => None,
        };
        let lex = match lexicon {
            Some(p) => VadLexicon::load(p)?,
            None => VadLexicon::new(),
        };
        let classifier = Box::new(VadPrototypeClassifier::new(ClassifierConfig::default(), lex));
        Self::new(f.model, reverse, vocab, classifier)
    }

    pub fn forward(&self) -> &Seq2Seq<f64> {
        &self.forward
    }

    pub fn reverse(&self) -> Option<&Seq2Seq<f64>> {
        self.reverse.as_ref()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn classifier(&self) -> &dyn EmotionClassifier<f64> {
        self.classifier.as_ref()
    }

    pub fn encode_prompt(&self, prompt: &str) -> Result<Vec<usize>> {
        let mut ids = self.vocab.encode(&normalize_and_tokenize(prompt));
        ids.truncate(self.forward.max_length());
        if ids.is_empty() {
            return Err(Error::Empty("prompt"));
        }
        Ok(ids)
    }

    /// Beam search, re-ranking and selection. Deterministic for a fixed
    /// generator and request.
    pub fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse> {
        let e0 = req.emotion.resolve()?;
        let gamma = req.gamma.unwrap_or(self.weights.gamma);
        let weights = RerankWeights::new(self.weights.alpha, self.weights.beta, gamma)?;
        let beam_size = req.beam_size.unwrap_or(self.beam_size);
        let cfg = BeamConfig::new(beam_size, self.forward.max_length(), self.length_norm)?;
        let prompt = self.encode_prompt(&req.prompt)?;

        let hyps = beam_search(&self.forward, &prompt, &e0, &cfg)?;
        let mut cands: Vec<Candidate<f64>> = hyps.into_iter().map(Candidate::from).collect();
        score_candidates(&mut cands, &prompt, self.reverse.as_ref(), self.classifier.as_ref(), &self.vocab, &e0, &weights)?;
        let selected = select_final(&cands)?;
        let candidates: Vec<ScoredCandidate> = cands
            .iter()
            .map(|c| ScoredCandidate {
                text: detokenize(&self.vocab.decode(c.content())),
                ids: c.ids.clone(),
                fwd_logprob: c.fwd_logprob,
                rev_logprob: c.rev_logprob,
                length: c.length(),
                emotion: c.emotion,
                emotion_distance: c.emotion_distance(&e0),
                final_score: c.final_score,
            })
            .collect();
        Ok(GenerationResponse {
            response: candidates[selected].text.clone(),
            selected,
            target_emotion: e0,
            gamma,
            beam_size,
            candidates,
        })
    }
}

/// A labeled, split corpus with its vocabulary and word VADs.
pub struct PreparedData {
    pub vocab: Vocabulary,
    pub vad: VocabVad<f64>,
    pub train: Corpus<f64>,
    pub val: Corpus<f64>,
    pub test: Corpus<f64>,
}

/// Reads `prompt<TAB>response` lines, builds a vocabulary of at most
/// `max_vocab` words (specials included), labels responses with the
/// classifier and splits.
pub fn prepare_data(
    corpus: &Path,
    lexicon: &VadLexicon<f64>,
    max_vocab: usize,
    max_length: usize,
    split: &SplitSpec,
) -> Result<PreparedData> {
    let text = std::fs::read_to_string(corpus)?;
    let raw = crate::text::read_raw_pairs(corpus)?;
    let vocab = Vocabulary::build(raw.iter().flat_map(|(p, r)| p.iter().chain(r)).map(String::as_str), max_vocab);
    let parsed = parse_pairs::<f64>(&text, corpus, &vocab, max_length)?;
    if parsed.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let classifier = VadPrototypeClassifier::new(ClassifierConfig::default(), lexicon.clone());
    let labeled = label_corpus(&parsed, &vocab, &classifier);
    let (train, val, test) = split_corpus(&labeled, split);
    let vad = VocabVad::from_lexicon(&vocab, lexicon);
    Ok(PreparedData { vocab, vad, train, val, test })
}
