use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::affective::{effective_lambda, inference_goal, training_goal, v_scores, AffectiveGoal, AffectiveState, VocabVad};
use super::config::ModelConfig;
use crate::affect::EmotionDistribution;
use crate::error::{Error, Result};
use crate::neural::{
    dropout_mask, log_softmax, matvec, sigmoid, softmax, BiGruEncoder, Grads, GruParams, ParamId, ParamStore, Tape, Var,
};
use crate::scalar::Scalar;
use crate::text::{DialogPair, EOS, SOS};

/// Handles of every parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub embedding: ParamId,
    pub encoder: BiGruEncoder,
    pub decoder: GruParams,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub see_a: Option<ParamId>,
    pub see_proj: Option<ParamId>,
    pub sed_a: Option<ParamId>,
    pub lambda: Option<ParamId>,
}

/// Loss terms of one teacher-forced pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLoss<T: Scalar> {
    pub loss: T,
    pub nll: T,
    pub reg: T,
}

/// GRU encoder-decoder with optional emotion embeddings, affective
/// regularizer and affective sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Seq<T: Scalar> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
    vad: VocabVad<T>,
}

// Variant-specific parameters draw from their own stream so that the shared
// parameters do not depend on which flags are set.
const VARIANT_STREAM: u64 = 0x005e_edaf_fec7;

impl<T: Scalar> Seq2Seq<T> {
    pub fn new(config: ModelConfig, vad: VocabVad<T>, seed: u64) -> Result<Self> {
        config.validate()?;
        if vad.len() != config.vocab_size {
            return Err(Error::Shape { op: "vocabulary VAD table", expected: vec![config.vocab_size], got: vec![vad.len()] });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (v, e, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
        let dh = config.decoder_hidden();
        let bound = 1.0 / (h as f64).sqrt();

        let embedding = store.add_uniform("embedding", vec![v, e], bound, &mut rng);
        let encoder = BiGruEncoder::register(&mut store, "encoder", e, h, config.enc_layers, &mut rng);
        let decoder = GruParams::register(&mut store, "decoder", config.decoder_input(), dh, &mut rng);
        let out_w = store.add_uniform("out.w", vec![v, dh], bound, &mut rng);
        let out_b = store.add_uniform("out.b", vec![v], bound, &mut rng);

        let mut vrng = ChaCha8Rng::seed_from_u64(seed ^ VARIANT_STREAM);
        let flags = config.variant;
        let see_a = flags.see.then(|| store.add_uniform("see.a", vec![3, 6], bound, &mut vrng));
        let see_proj = flags.see.then(|| store.add_uniform("see.proj", vec![e, 3], bound, &mut vrng));
        let sed_a = flags.sed.then(|| store.add_uniform("sed.a", vec![3, 6], bound, &mut vrng));
        let lambda = flags.we.then(|| store.add("we.lambda", crate::neural::Tensor::vector(vec![T::zero()])));

        let layout = Layout { embedding, encoder, decoder, out_w, out_b, see_a, see_proj, sed_a, lambda };
        Ok(Self { config, params: store, layout, vad })
    }

    /// Rebuilds a model from stored parameters, checking every expected tensor.
    pub fn from_parts(config: ModelConfig, params: ParamStore<T>, vad: VocabVad<T>) -> Result<Self> {
        config.validate()?;
        let need = |name: &str, shape: Vec<usize>| -> Result<ParamId> {
            let id = params.id(name).ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            if params.get(id).shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!("{name} has shape {:?}, expected {shape:?}", params.get(id).shape())));
            }
            Ok(id)
        };
        let (v, e) = (config.vocab_size, config.embed_dim);
        let dh = config.decoder_hidden();
        let flags = config.variant;
        let encoder = BiGruEncoder::find(&params, "encoder", config.enc_layers)?;
        let decoder = GruParams::find(&params, "decoder")?;
        if encoder.hidden_dim != config.hidden_dim || decoder.hidden_dim != dh || decoder.input_dim != config.decoder_input() {
            return Err(Error::Checkpoint("recurrent layer sizes disagree with the config".into()));
        }
        let layout = Layout {
            embedding: need("embedding", vec![v, e])?,
            encoder,
            decoder,
            out_w: need("out.w", vec![v, dh])?,
            out_b: need("out.b", vec![v])?,
            see_a: flags.see.then(|| need("see.a", vec![3, 6])).transpose()?,
            see_proj: flags.see.then(|| need("see.proj", vec![e, 3])).transpose()?,
            sed_a: flags.sed.then(|| need("sed.a", vec![3, 6])).transpose()?,
            lambda: flags.we.then(|| need("we.lambda", vec![1])).transpose()?,
        };
        if vad.len() != v {
            return Err(Error::Checkpoint(format!("VAD table has {} rows for {v} words", vad.len())));
        }
        Ok(Self { config, params, layout, vad })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn vad(&self) -> &VocabVad<T> {
        &self.vad
    }

    pub fn max_length(&self) -> usize {
        self.config.max_length
    }

    /// Raw mixture parameter (zero when the model has no sampling mixture).
    pub fn lambda_param(&self) -> T {
        self.layout.lambda.map(|id| self.params.get(id).data()[0]).unwrap_or_else(T::zero)
    }

    /// `λ = logistic(lambda_param)`.
    pub fn lambda(&self) -> T {
        sigmoid(self.lambda_param())
    }

    fn emb_row(&self, id: usize) -> Result<&[T]> {
        if id >= self.config.vocab_size {
            return Err(Error::Shape { op: "embedding lookup", expected: vec![self.config.vocab_size], got: vec![id] });
        }
        Ok(self.params.get(self.layout.embedding).row(id))
    }

    /// `see_proj · (A_SEE · e0)`, the extra encoder position.
    pub fn see_prefix(&self, e0: &EmotionDistribution<T>) -> Option<Vec<T>> {
        let (a, proj) = (self.layout.see_a?, self.layout.see_proj?);
        let e = matvec(self.params.get(a).data(), 3, 6, e0.probs());
        Some(matvec(self.params.get(proj).data(), self.config.embed_dim, 3, &e))
    }

    /// `A_SED · e0`, appended to every decoder input.
    pub fn sed_vector(&self, e0: &EmotionDistribution<T>) -> Option<Vec<T>> {
        let a = self.layout.sed_a?;
        Some(matvec(self.params.get(a).data(), 3, 6, e0.probs()))
    }

    /// Decoder input for the previous token: its embedding, joined with the
    /// SED vector when present.
    pub fn decoder_input(&self, prev: usize, sed: Option<&[T]>) -> Result<Vec<T>> {
        let mut x = self.emb_row(prev)?.to_vec();
        if let Some(s) = sed {
            x.extend_from_slice(s);
        }
        Ok(x)
    }

    /// Concatenated final states of the top encoder layer.
    pub fn encode(&self, prompt: &[usize], e0: &EmotionDistribution<T>) -> Result<Vec<T>> {
        if prompt.is_empty() {
            return Err(Error::Empty("encode"));
        }
        let mut inputs = Vec::with_capacity(prompt.len() + 1);
        if let Some(p) = self.see_prefix(e0) {
            inputs.push(p);
        }
        for &id in prompt {
            inputs.push(self.emb_row(id)?.to_vec());
        }
        self.layout.encoder.encode(&self.params, &inputs)
    }

    /// One decoder GRU step followed by the output projection.
    pub fn decode_step(&self, input: &[T], h_prev: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let h = self.layout.decoder.forward(&self.params, input, h_prev)?;
        let w = self.params.get(self.layout.out_w);
        let mut logits = matvec(w.data(), w.rows(), w.cols(), &h);
        logits.iter_mut().zip(self.params.get(self.layout.out_b).data()).for_each(|(l, b)| *l += *b);
        Ok((h, logits))
    }

    /// Next-token probabilities: the sampling mixture when enabled, else the
    /// language model softmax.
    pub fn next_distribution(&self, logits: &[T], state: &AffectiveState<T>) -> Vec<T> {
        if !self.config.variant.we {
            return softmax(logits);
        }
        let lambda = state.lambda(self.config.max_length);
        super::affective::we_mixture(logits, &state.e_t, &self.vad, lambda)
    }

    pub fn next_log_probs(&self, logits: &[T], state: &AffectiveState<T>) -> Vec<T> {
        if !self.config.variant.we || state.lambda_forced(self.config.max_length) {
            return log_softmax(logits);
        }
        self.next_distribution(logits, state).into_iter().map(T::ln).collect()
    }

    pub fn start_state(&self, goal: &AffectiveGoal<T>) -> AffectiveState<T> {
        AffectiveState::new(goal, self.lambda_param())
    }

    pub fn inference_goal(&self, e0: &EmotionDistribution<T>) -> AffectiveGoal<T> {
        inference_goal(e0, self.config.max_length)
    }

    /// Per-step log probabilities of `target` followed by EOS under teacher forcing.
    pub fn teacher_forced_log_probs(
        &self,
        prompt: &[usize],
        target: &[usize],
        e0: &EmotionDistribution<T>,
        goal: &AffectiveGoal<T>,
    ) -> Result<Vec<T>> {
        let mut h = self.encode(prompt, e0)?;
        let sed = self.sed_vector(e0);
        let mut state = self.start_state(goal);
        let mut prev = SOS;
        let mut out = Vec::with_capacity(target.len() + 1);
        for &tok in target.iter().chain(std::iter::once(&EOS)) {
            let x = self.decoder_input(prev, sed.as_deref())?;
            let (hn, logits) = self.decode_step(&x, &h)?;
            h = hn;
            let lp = self.next_log_probs(&logits, &state);
            out.push(*lp.get(tok).ok_or(Error::Shape { op: "target id", expected: vec![lp.len()], got: vec![tok] })?);
            state = super::affective::update_affective_state(&state, tok, &self.vad);
            prev = tok;
        }
        Ok(out)
    }

    /// `log p(target | prompt, e0)` with the inference-time affective goal,
    /// summed over the target tokens and the closing EOS.
    pub fn sequence_log_prob(&self, prompt: &[usize], target: &[usize], e0: &EmotionDistribution<T>) -> Result<T> {
        let goal = self.inference_goal(e0);
        Ok(self.teacher_forced_log_probs(prompt, target, e0, &goal)?.into_iter().sum())
    }

    /// Records the teacher-forced loss of one pair on `tape`. With `dropout`
    /// set, masks are drawn from it; otherwise the pass is deterministic.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape<'_, T>,
        pair: &DialogPair<T>,
        mu: T,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(Var, PairLoss<T>)> {
        if pair.prompt.is_empty() {
            return Err(Error::Empty("encode"));
        }
        let v = self.config.vocab_size;
        if let Some(&bad) = pair.prompt.iter().chain(&pair.response).find(|&&id| id >= v) {
            return Err(Error::Shape { op: "token id", expected: vec![v], got: vec![bad] });
        }
        let rate = self.config.dropout;
        let apply_dropout = |tape: &mut Tape<'_, T>, x: Var, rng: &mut Option<&mut ChaCha8Rng>| -> Var {
            match rng.as_deref_mut() {
                Some(r) if rate > 0.0 => {
                    let mask = tape.constant(dropout_mask(tape.value(x).len(), rate, r));
                    tape.mul(x, mask)
                }
                _ => x,
            }
        };
        let l = &self.layout;
        let e0 = tape.constant(pair.target_emotion.probs().to_vec());

        let mut inputs = Vec::with_capacity(pair.prompt.len() + 1);
        if let (Some(a), Some(proj)) = (l.see_a, l.see_proj) {
            let e = tape.matvec(a, e0);
            inputs.push(tape.matvec(proj, e));
        }
        for &id in &pair.prompt {
            let x = tape.row(l.embedding, id);
            inputs.push(apply_dropout(tape, x, &mut dropout));
        }
        let summary = l.encoder.encode_tape(tape, &inputs, &mut |t, x| apply_dropout(t, x, &mut dropout))?;

        let sed = l.sed_a.map(|a| tape.matvec(a, e0));
        let lambda = l.lambda.map(|id| {
            let p = tape.param(id);
            tape.sigmoid(p)
        });
        let flags = self.config.variant;
        let max_len = self.config.max_length;
        let goal = training_goal(&pair.response, &self.vad);
        let mut e_t = goal.e0_vad;

        let mut h = summary;
        let mut prev = SOS;
        let mut log_terms = Vec::with_capacity(pair.response.len() + 1);
        let mut confidences = Vec::new();
        for (t, &target) in pair.response.iter().chain(std::iter::once(&EOS)).enumerate() {
            let emb = tape.row(l.embedding, prev);
            let mut x = apply_dropout(tape, emb, &mut dropout);
            if let Some(s) = sed {
                x = tape.concat(vec![x, s]);
            }
            h = l.decoder.forward_tape(tape, x, h)?;
            let logits = tape.linear(l.out_w, h, None, Some(l.out_b));
            let in_response = t < pair.response.len();
            let lm = if (flags.wi && in_response) || flags.we { Some(tape.softmax(logits)) } else { None };
            if flags.wi && in_response {
                confidences.push(lm.expect("softmax recorded"));
            }
            let log_p = match lambda {
                Some(lam) if t < max_len / 2 => {
                    let affect = tape.constant(softmax(&v_scores(&e_t, &self.vad)));
                    let lm_part = tape.scale_by(lm.expect("softmax recorded"), lam);
                    let rest = tape.one_minus(lam);
                    let affect_part = tape.scale_by(affect, rest);
                    let mix = tape.add(lm_part, affect_part);
                    let p = tape.pick(mix, target);
                    tape.ln(p)
                }
                _ => {
                    let ls = tape.log_softmax(logits);
                    tape.pick(ls, target)
                }
            };
            log_terms.push(log_p);
            e_t -= self.vad.get(target);
            prev = target;
        }
        let n = T::of_usize(log_terms.len());
        let summed = tape.sum(log_terms);
        let nll = tape.scale(summed, -T::one() / n);
        let mut loss = nll;
        let mut reg_value = T::zero();
        if !confidences.is_empty() {
            let k = T::of_usize(confidences.len());
            let projected: Vec<Var> = confidences
                .iter()
                .map(|s| tape.const_matvec(self.vad.matrix(), 3, v, *s))
                .collect();
            let total = tape.sum(projected);
            let mean = tape.scale(total, T::one() / k);
            let target_mean = self.vad.sum_of(&pair.response).scale(T::one() / T::of_usize(pair.response.len()));
            let target = tape.constant(target_mean.to_array().to_vec());
            let diff = tape.sub(mean, target);
            let reg = tape.norm(diff);
            reg_value = tape.scalar(reg);
            let weighted = tape.scale(reg, mu);
            loss = tape.add(nll, weighted);
        }
        let terms = PairLoss { loss: tape.scalar(loss), nll: tape.scalar(nll), reg: reg_value };
        Ok((loss, terms))
    }

    /// Deterministic loss of one pair (no dropout).
    pub fn pair_loss(&self, pair: &DialogPair<T>, mu: T) -> Result<PairLoss<T>> {
        let mut tape = Tape::new(&self.params);
        Ok(self.loss_on_tape(&mut tape, pair, mu, None)?.1)
    }

    /// Loss and its gradient for one pair, added into `grads`.
    pub fn accumulate_grads(
        &self,
        pair: &DialogPair<T>,
        mu: T,
        dropout: Option<&mut ChaCha8Rng>,
        grads: &mut Grads<T>,
    ) -> Result<PairLoss<T>> {
        let mut tape = Tape::new(&self.params);
        let (root, terms) = self.loss_on_tape(&mut tape, pair, mu, dropout)?;
        if !terms.loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss (nll {}, reg {}) for prompt {:?} / response {:?}",
                terms.nll, terms.reg, pair.prompt, pair.response
            )));
        }
        tape.backward(root, grads);
        Ok(terms)
    }

    /// Mean loss over `pairs` and its gradient, without dropout.
    pub fn batch_loss_and_grads(&self, pairs: &[DialogPair<T>], mu: T) -> Result<(T, Grads<T>)> {
        let mut grads = self.params.zero_grads();
        let mut total = T::zero();
        for p in pairs {
            total += self.accumulate_grads(p, mu, None, &mut grads)?.loss;
        }
        let k = T::one() / T::of_usize(pairs.len().max(1));
        grads.scale(k);
        Ok((total * k, grads))
    }

    /// Mean loss without recording gradients.
    pub fn batch_loss(&self, pairs: &[DialogPair<T>], mu: T) -> Result<T> {
        let mut total = T::zero();
        for p in pairs {
            total += self.pair_loss(p, mu)?.loss;
        }
        Ok(total / T::of_usize(pairs.len().max(1)))
    }

    /// `λ` in effect at a given decoding step.
    pub fn lambda_at(&self, step: usize) -> T {
        if self.config.variant.we {
            effective_lambda(self.lambda_param(), step, self.config.max_length)
        } else {
            T::one()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affect::{Emotion, VadVector};
    use crate::model::variant::ModelVariant;

    fn vad(n: usize) -> VocabVad<f64> {
        VocabVad::new(
            (0..n)
                .map(|i| VadVector::new((i as f64 * 0.37) % 1.0, (i as f64 * 0.61) % 1.0, (i as f64 * 0.13) % 1.0))
                .collect(),
        )
    }

    fn model(variant: ModelVariant) -> Seq2Seq<f64> {
        let mut cfg = ModelConfig::small(10, 4, 3, variant);
        cfg.max_length = 6;
        Seq2Seq::new(cfg, vad(10), 5).unwrap()
    }

    fn pair() -> DialogPair<f64> {
        DialogPair::new(vec![4, 7, 5], vec![6, 8, 9])
            .with_emotion(EmotionDistribution::new([0.1, 0.2, 0.4, 0.1, 0.1, 0.1]).unwrap())
    }

    #[test]
    fn tape_loss_matches_direct_log_probs() {
        for variant in [ModelVariant::BASELINE, ModelVariant::SEE, ModelVariant::SED, ModelVariant::WE, ModelVariant { see: true, sed: true, wi: false, we: true }] {
            let m = model(variant);
            let p = pair();
            let goal = training_goal(&p.response, m.vad());
            let lps = m.teacher_forced_log_probs(&p.prompt, &p.response, &p.target_emotion, &goal).unwrap();
            let nll = -lps.iter().sum::<f64>() / lps.len() as f64;
            let terms = m.pair_loss(&p, 0.0).unwrap();
            assert!((terms.nll - nll).abs() < 1e-12, "{variant}: {} vs {nll}", terms.nll);
        }
    }

    #[test]
    fn regularizer_term_matches_free_function() {
        let m = model(ModelVariant::WI);
        let p = pair();
        let mut h = m.encode(&p.prompt, &p.target_emotion).unwrap();
        let mut prev = SOS;
        let mut dists = Vec::new();
        for &tok in &p.response {
            let x = m.decoder_input(prev, None).unwrap();
            let (hn, logits) = m.decode_step(&x, &h).unwrap();
            h = hn;
            dists.push(softmax(&logits));
            prev = tok;
        }
        let want = super::super::affective::affective_regularizer(&dists, &p.response, m.vad());
        let terms = m.pair_loss(&p, 0.3).unwrap();
        assert!((terms.reg - want).abs() < 1e-12);
        assert!((terms.loss - (terms.nll + 0.3 * want)).abs() < 1e-12);
    }

    #[test]
    fn shared_parameters_do_not_depend_on_flags() {
        let base = model(ModelVariant::BASELINE);
        let wiwe = model(ModelVariant::WI_WE);
        for (id, name, t) in base.params().iter() {
            let other = wiwe.params().id(name).unwrap();
            assert_eq!(t, wiwe.params().get(other), "{name} differs");
            assert_eq!(id, other);
        }
    }

    #[test]
    fn baseline_equals_wi_with_zero_mu() {
        let base = model(ModelVariant::BASELINE);
        let wi = model(ModelVariant::WI);
        let p = pair();
        assert_eq!(base.pair_loss(&p, 0.0).unwrap().loss, wi.pair_loss(&p, 0.0).unwrap().loss);
    }

    #[test]
    fn zero_see_maps_give_zero_prefix() {
        let mut m = model(ModelVariant::SEE);
        let a = m.layout().see_a.unwrap();
        m.params_mut().get_mut(a).data_mut().iter_mut().for_each(|x| *x = 0.0);
        let e = EmotionDistribution::one_hot(Emotion::Fear);
        assert_eq!(m.see_prefix(&e).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn identity_projection_exposes_see_embedding() {
        let mut cfg = ModelConfig::small(10, 3, 3, ModelVariant::SEE);
        cfg.max_length = 6;
        let mut m = Seq2Seq::new(cfg, vad(10), 1).unwrap();
        let proj = m.layout().see_proj.unwrap();
        m.params_mut().set(proj, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let a = m.layout().see_a.unwrap();
        let a_vals = m.params().get(a).data().to_vec();
        let e = EmotionDistribution::one_hot(Emotion::Anger);
        // anger selects column 0 of A_SEE
        assert_eq!(m.see_prefix(&e).unwrap(), vec![a_vals[0], a_vals[6], a_vals[12]]);
    }

    #[test]
    fn sed_input_shape_and_values() {
        let mut m = model(ModelVariant::SED);
        let a = m.layout().sed_a.unwrap();
        let e = EmotionDistribution::one_hot(Emotion::Anger);
        let vals: Vec<f64> = (0..18).map(|i| i as f64 / 10.0).collect();
        m.params_mut().set(a, vals).unwrap();
        let sed = m.sed_vector(&e).unwrap();
        assert_eq!(sed, vec![0.0, 0.6, 1.2]);
        let x = m.decoder_input(4, Some(&sed)).unwrap();
        assert_eq!(x.len(), 4 + 3);
        assert_eq!(&x[..4], m.params().get(m.layout().embedding).row(4));
        assert_eq!(&x[4..], sed.as_slice());
        m.params_mut().set(a, vec![0.0; 18]).unwrap();
        assert_eq!(&m.decoder_input(4, m.sed_vector(&e).as_deref()).unwrap()[4..], &[0.0; 3]);
    }

    #[test]
    fn zero_parameters_give_bias_logits() {
        let mut m = model(ModelVariant::BASELINE);
        let ids: Vec<_> = m.params().ids().collect();
        for id in ids {
            if id != m.layout().out_b {
                m.params_mut().get_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let x = m.decoder_input(SOS, None).unwrap();
        let (_, logits) = m.decode_step(&x, &[0.0; 6]).unwrap();
        assert_eq!(logits, m.params().get(m.layout().out_b).data());
    }

    #[test]
    fn bad_token_rejected() {
        let m = model(ModelVariant::BASELINE);
        let p = DialogPair::<f64>::new(vec![4], vec![42]);
        assert!(m.pair_loss(&p, 0.0).is_err());
        assert!(m.pair_loss(&DialogPair::new(vec![], vec![4]), 0.0).is_err());
    }
}
