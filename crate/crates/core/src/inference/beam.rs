use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::affect::EmotionDistribution;
use crate::error::{Error, Result};
use crate::model::{update_affective_state, AffectiveState, Seq2Seq};
use crate::scalar::Scalar;
use crate::text::{EOS, OOV, PAD, SOS};

/// Default beam width.
pub const DEFAULT_BEAM_SIZE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_size: usize,
    /// Maximum emitted tokens per hypothesis, EOS included.
    pub max_length: usize,
    pub length_norm: bool,
}

impl BeamConfig {
    pub fn new(beam_size: usize, max_length: usize, length_norm: bool) -> Result<Self> {
        if beam_size == 0 {
            return Err(Error::Config("beam_size must be at least 1".into()));
        }
        if max_length == 0 {
            return Err(Error::Config("max_length must be at least 1".into()));
        }
        Ok(Self { beam_size, max_length, length_norm })
    }
}

/// An autoregressive model seen one step at a time. A state carries the
/// distribution over the next token.
pub trait StepModel<T: Scalar> {
    type State: Clone;

    fn start(&self, prompt: &[usize], e0: &EmotionDistribution<T>) -> Result<Self::State>;

    /// Log probabilities of the next token.
    fn log_probs<'s>(&self, state: &'s Self::State) -> &'s [T];

    fn advance(&self, state: &Self::State, token: usize) -> Result<Self::State>;

    fn eos(&self) -> usize {
        EOS
    }

    /// Whether `token` may be emitted at all.
    fn allowed(&self, _token: usize) -> bool {
        true
    }
}

/// Decoder state of a [`Seq2Seq`] between steps.
#[derive(Debug, Clone)]
pub struct DecoderState<T: Scalar> {
    pub h: Vec<T>,
    pub affect: AffectiveState<T>,
    sed: Option<Arc<Vec<T>>>,
    log_probs: Vec<T>,
}

impl<T: Scalar> Seq2Seq<T> {
    fn step_from(&self, prev: usize, h: &[T], affect: AffectiveState<T>, sed: Option<Arc<Vec<T>>>) -> Result<DecoderState<T>> {
        let x = self.decoder_input(prev, sed.as_deref().map(|v| v.as_slice()))?;
        let (h, logits) = self.decode_step(&x, h)?;
        let log_probs = self.next_log_probs(&logits, &affect);
        Ok(DecoderState { h, affect, sed, log_probs })
    }
}

impl<T: Scalar> StepModel<T> for Seq2Seq<T> {
    type State = DecoderState<T>;

    fn start(&self, prompt: &[usize], e0: &EmotionDistribution<T>) -> Result<Self::State> {
        let h = self.encode(prompt, e0)?;
        let affect = self.start_state(&self.inference_goal(e0));
        self.step_from(SOS, &h, affect, self.sed_vector(e0).map(Arc::new))
    }

    fn log_probs<'s>(&self, state: &'s Self::State) -> &'s [T] {
        &state.log_probs
    }

    fn advance(&self, state: &Self::State, token: usize) -> Result<Self::State> {
        let affect = update_affective_state(&state.affect, token, self.vad());
        self.step_from(token, &state.h, affect, state.sed.clone())
    }

    fn allowed(&self, token: usize) -> bool {
        !matches!(token, PAD | SOS | OOV)
    }
}

/// A finished hypothesis. `ids` ends with EOS unless the length limit was hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Hypothesis<T: Scalar> {
    pub ids: Vec<usize>,
    pub log_prob: T,
    pub score: T,
}

fn by_score_then_ids<T: Scalar>(a: (&T, &[usize]), b: (&T, &[usize])) -> Ordering {
    b.0.partial_cmp(a.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(b.1))
}

fn normalized<T: Scalar>(log_prob: T, len: usize, on: bool) -> T {
    if on {
        log_prob / T::of_usize(len.max(1))
    } else {
        log_prob
    }
}

/// Beam search. Expansions of all live hypotheses compete for the `B`
/// slots; those ending in EOS leave the beam. Results are sorted by
/// (length-normalized) score, ties by token ids.
pub fn beam_search<T: Scalar, M: StepModel<T> + ?Sized>(
    model: &M,
    prompt: &[usize],
    e0: &EmotionDistribution<T>,
    cfg: &BeamConfig,
) -> Result<Vec<Hypothesis<T>>> {
    let eos = model.eos();
    let mut live: Vec<(Vec<usize>, T, M::State)> = vec![(Vec::new(), T::zero(), model.start(prompt, e0)?)];
    let mut done: Vec<Hypothesis<T>> = Vec::new();
    for step in 0..cfg.max_length {
        let mut expansions: Vec<(usize, usize, T)> = Vec::new();
        for (k, (_, lp, state)) in live.iter().enumerate() {
            for (tok, &p) in model.log_probs(state).iter().enumerate() {
                if p.is_finite() && model.allowed(tok) {
                    expansions.push((k, tok, *lp + p));
                }
            }
        }
        // all live hypotheses have the same length, so raw and normalized
        // orderings agree here
        expansions.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(Ordering::Equal)
                .then_with(|| live[a.0].0.cmp(&live[b.0].0))
                .then_with(|| a.1.cmp(&b.1))
        });
        expansions.truncate(cfg.beam_size);
        let last = step + 1 == cfg.max_length;
        let mut next = Vec::with_capacity(expansions.len());
        for (k, tok, lp) in expansions {
            let mut ids = live[k].0.clone();
            ids.push(tok);
            if tok == eos || last {
                let score = normalized(lp, ids.len(), cfg.length_norm);
                done.push(Hypothesis { ids, log_prob: lp, score });
            } else {
                let state = model.advance(&live[k].2, tok)?;
                next.push((ids, lp, state));
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
    }
    done.sort_by(|a, b| by_score_then_ids((&a.score, &a.ids), (&b.score, &b.ids)));
    done.truncate(cfg.beam_size);
    Ok(done)
}

/// Arg-max decoding (ties to the lowest token id) until EOS or `max_length`.
pub fn greedy_decode<T: Scalar, M: StepModel<T> + ?Sized>(
    model: &M,
    prompt: &[usize],
    e0: &EmotionDistribution<T>,
    max_length: usize,
) -> Result<Hypothesis<T>> {
    let eos = model.eos();
    let mut state = model.start(prompt, e0)?;
    let mut ids = Vec::new();
    let mut total = T::zero();
    for _ in 0..max_length {
        let mut best: Option<(usize, T)> = None;
        for (tok, &p) in model.log_probs(&state).iter().enumerate() {
            if p.is_finite() && model.allowed(tok) && best.is_none_or(|(_, b)| p > b) {
                best = Some((tok, p));
            }
        }
        let (tok, p) = best.ok_or_else(|| Error::NonFinite("every next-token probability is zero".into()))?;
        ids.push(tok);
        total += p;
        if tok == eos {
            break;
        }
        if ids.len() < max_length {
            state = model.advance(&state, tok)?;
        }
    }
    Ok(Hypothesis { score: total, log_prob: total, ids })
}

/// Next-token tables indexed by the emitted prefix; for tests and oracles.
#[derive(Debug, Clone)]
pub struct TableModel<T: Scalar> {
    pub vocab: usize,
    pub eos: usize,
    table: std::collections::HashMap<Vec<usize>, Vec<T>>,
    fallback: Vec<T>,
}

impl<T: Scalar> TableModel<T> {
    /// `fallback` gives the next-token log probabilities for unlisted prefixes.
    pub fn new(eos: usize, fallback: Vec<T>) -> Self {
        Self { vocab: fallback.len(), eos, table: Default::default(), fallback }
    }

    pub fn set(&mut self, prefix: Vec<usize>, log_probs: Vec<T>) {
        assert_eq!(log_probs.len(), self.vocab, "table row width");
        self.table.insert(prefix, log_probs);
    }

    pub fn row(&self, prefix: &[usize]) -> &[T] {
        self.table.get(prefix).unwrap_or(&self.fallback)
    }
}

impl<T: Scalar> StepModel<T> for TableModel<T> {
    type State = (Vec<usize>, Vec<T>);

    fn start(&self, _prompt: &[usize], _e0: &EmotionDistribution<T>) -> Result<Self::State> {
        Ok((Vec::new(), self.row(&[]).to_vec()))
    }

    fn log_probs<'s>(&self, state: &'s Self::State) -> &'s [T] {
        &state.1
    }

    fn advance(&self, state: &Self::State, token: usize) -> Result<Self::State> {
        let mut p = state.0.clone();
        p.push(token);
        let row = self.row(&p).to_vec();
        Ok((p, row))
    }

    fn eos(&self) -> usize {
        self.eos
    }
}
