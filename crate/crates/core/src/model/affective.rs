//! Affective goal and state bookkeeping, the VAD-proximity scores, the
//! sampling mixture and the affective regularizer.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::affect::{emotion_to_vad, vad_distance, EmotionDistribution, VadLexicon, VadVector};
use crate::neural::{sigmoid, softmax};
use crate::scalar::Scalar;
use crate::text::Vocabulary;

/// VAD of every vocabulary word: the columns of the `3 x |V|` matrix `E^VAD`.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabVad<T: Scalar> {
    vads: Vec<VadVector<T>>,
    matrix: Arc<Vec<T>>,
}

impl<T: Scalar> VocabVad<T> {
    pub fn new(vads: Vec<VadVector<T>>) -> Self {
        let n = vads.len();
        let mut m = vec![T::zero(); 3 * n];
        for (j, x) in vads.iter().enumerate() {
            m[j] = x.v;
            m[n + j] = x.a;
            m[2 * n + j] = x.d;
        }
        Self { vads, matrix: Arc::new(m) }
    }

    pub fn from_lexicon(vocab: &Vocabulary, lex: &VadLexicon<T>) -> Self {
        Self::new(vocab.vad_table(lex))
    }

    /// Every word neutral.
    pub fn neutral(n: usize) -> Self {
        Self::new(vec![VadVector::neutral(); n])
    }

    pub fn len(&self) -> usize {
        self.vads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vads.is_empty()
    }

    pub fn get(&self, id: usize) -> VadVector<T> {
        self.vads[id]
    }

    pub fn vads(&self) -> &[VadVector<T>] {
        &self.vads
    }

    /// Row-major `3 x |V|` matrix.
    pub fn matrix(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.matrix)
    }

    /// `E^VAD s` for a distribution `s` over the vocabulary.
    pub fn expected(&self, s: &[T]) -> VadVector<T> {
        self.vads.iter().zip(s).map(|(x, p)| x.scale(*p)).sum()
    }

    pub fn sum_of(&self, ids: &[usize]) -> VadVector<T> {
        ids.iter().map(|&i| self.vads[i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalOrigin {
    Training,
    Inference,
}

/// Total emotional content a response should carry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffectiveGoal<T: Scalar> {
    pub e0_vad: VadVector<T>,
    pub origin: GoalOrigin,
}

/// Training: the sum of the target words' VADs.
pub fn training_goal<T: Scalar>(target_ids: &[usize], vad: &VocabVad<T>) -> AffectiveGoal<T> {
    AffectiveGoal { e0_vad: vad.sum_of(target_ids), origin: GoalOrigin::Training }
}

/// Inference: `M_VAD E0 · max_length`.
pub fn inference_goal<T: Scalar>(e0: &EmotionDistribution<T>, max_length: usize) -> AffectiveGoal<T> {
    AffectiveGoal { e0_vad: emotion_to_vad(e0).scale(T::of_usize(max_length)), origin: GoalOrigin::Inference }
}

pub enum GoalSource<'a, T: Scalar> {
    Training(&'a [usize]),
    Inference { e0: &'a EmotionDistribution<T>, max_length: usize },
}

pub fn init_affective_goal<T: Scalar>(source: GoalSource<'_, T>, vad: &VocabVad<T>) -> AffectiveGoal<T> {
    match source {
        GoalSource::Training(ids) => training_goal(ids, vad),
        GoalSource::Inference { e0, max_length } => inference_goal(e0, max_length),
    }
}

/// Remaining emotional budget while a response is emitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffectiveState<T: Scalar> {
    pub e_t: VadVector<T>,
    pub step: usize,
    /// Unconstrained mixture parameter; `λ = logistic(lambda_param)`.
    pub lambda_param: T,
}

impl<T: Scalar> AffectiveState<T> {
    pub fn new(goal: &AffectiveGoal<T>, lambda_param: T) -> Self {
        Self { e_t: goal.e0_vad, step: 0, lambda_param }
    }

    /// `λ`, forced to 1 once `⌊max_length / 2⌋` words have been emitted.
    pub fn lambda(&self, max_length: usize) -> T {
        effective_lambda(self.lambda_param, self.step, max_length)
    }

    pub fn lambda_forced(&self, max_length: usize) -> bool {
        self.step >= max_length / 2
    }
}

pub fn effective_lambda<T: Scalar>(lambda_param: T, step: usize, max_length: usize) -> T {
    if step >= max_length / 2 {
        T::one()
    } else {
        sigmoid(lambda_param)
    }
}

/// `E_t = E_{t-1} - e_{r_{t-1}}`.
pub fn update_affective_state<T: Scalar>(s: &AffectiveState<T>, emitted: usize, vad: &VocabVad<T>) -> AffectiveState<T> {
    AffectiveState { e_t: s.e_t - vad.get(emitted), step: s.step + 1, lambda_param: s.lambda_param }
}

/// Component `i` is `-‖e_t - e_{w_i}‖`.
pub fn v_scores<T: Scalar>(e_t: &VadVector<T>, vad: &VocabVad<T>) -> Vec<T> {
    vad.vads().iter().map(|w| -vad_distance(e_t, w)).collect()
}

/// `λ softmax(lm_logits) + (1 - λ) softmax(v(e_t))`.
pub fn we_mixture<T: Scalar>(lm_logits: &[T], e_t: &VadVector<T>, vad: &VocabVad<T>, lambda: T) -> Vec<T> {
    let lm = softmax(lm_logits);
    let affect = softmax(&v_scores(e_t, vad));
    lm.iter().zip(&affect).map(|(a, b)| lambda * *a + (T::one() - lambda) * *b).collect()
}

/// `‖ mean_t E^VAD s_t − mean_t e_{r0_t} ‖₂`. Zero when either side is empty.
pub fn affective_regularizer<T: Scalar>(step_distributions: &[Vec<T>], target_ids: &[usize], vad: &VocabVad<T>) -> T {
    if step_distributions.is_empty() || target_ids.is_empty() {
        return T::zero();
    }
    let generated = step_distributions
        .iter()
        .map(|s| vad.expected(s))
        .sum::<VadVector<T>>()
        .scale(T::one() / T::of_usize(step_distributions.len()));
    let target = vad.sum_of(target_ids).scale(T::one() / T::of_usize(target_ids.len()));
    (generated - target).norm()
}

/// `nll + μ · reg`.
pub fn total_loss<T: Scalar>(nll: T, reg: T, mu: T) -> T {
    nll + mu * reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affect::Emotion;

    fn two_words() -> VocabVad<f64> {
        VocabVad::new(vec![VadVector::zero(), VadVector::splat(1.0)])
    }

    #[test]
    fn regularizer_examples() {
        let vad = two_words();
        let one_hot = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(affective_regularizer(&one_hot, &[1, 0], &vad), 0.0);
        let neutral = VocabVad::<f64>::neutral(2);
        assert_eq!(affective_regularizer(&[vec![0.3, 0.7]], &[0, 0, 1], &neutral), 0.0);
        let r = affective_regularizer(&[vec![0.25, 0.75]], &[1], &vad);
        assert!((r - 0.25 * 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn goals() {
        let vad = VocabVad::new(vec![VadVector::neutral(), VadVector::splat(1.0)]);
        let g = init_affective_goal(GoalSource::Training(&[1, 1]), &vad);
        assert_eq!(g.e0_vad, VadVector::splat(2.0));
        assert_eq!(g.origin, GoalOrigin::Training);
        let anger = EmotionDistribution::one_hot(Emotion::Anger);
        let g = init_affective_goal(GoalSource::Inference { e0: &anger, max_length: 20 }, &vad);
        assert_eq!(g.e0_vad, VadVector::new(0.0, 20.0, 20.0));
        assert_eq!(training_goal(&[], &vad).e0_vad, VadVector::zero());
    }

    #[test]
    fn state_updates() {
        let vad = two_words();
        let goal = AffectiveGoal { e0_vad: VadVector::splat(2.0), origin: GoalOrigin::Training };
        let s = AffectiveState::new(&goal, 0.0);
        let s1 = update_affective_state(&s, 0, &vad);
        assert_eq!(s1.e_t, s.e_t);
        let s2 = update_affective_state(&s1, 1, &vad);
        assert_eq!(s2.e_t, VadVector::splat(1.0));
        assert_eq!(s2.step, 2);
        let target = [1, 0, 1];
        let mut st = AffectiveState::new(&training_goal(&target, &vad), 0.0);
        for &w in &target {
            st = update_affective_state(&st, w, &vad);
        }
        assert_eq!(st.e_t, VadVector::zero());
    }

    #[test]
    fn lambda_forced_after_half() {
        let goal = AffectiveGoal { e0_vad: VadVector::<f64>::zero(), origin: GoalOrigin::Inference };
        let mut s = AffectiveState::new(&goal, 0.0);
        assert_eq!(s.lambda(5), 0.5);
        s.step = 2;
        assert_eq!(s.lambda(5), 1.0);
        s.step = 1;
        assert_eq!(s.lambda(5), 0.5);
    }

    #[test]
    fn v_scores_examples() {
        let vad = VocabVad::new(vec![VadVector::new(0.2, 0.4, 0.6), VadVector::splat(1.0), VadVector::zero()]);
        let v = v_scores(&VadVector::new(0.2, 0.4, 0.6), &vad);
        assert_eq!(v[0], 0.0);
        assert!(v.iter().all(|x| *x <= 0.0));
        // hand distances from (0.5, 0.5, 0.5)
        let v = v_scores(&VadVector::neutral(), &vad);
        let want = [-(0.09f64 + 0.01 + 0.01).sqrt(), -(0.75f64).sqrt(), -(0.75f64).sqrt()];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let flat = v_scores(&VadVector::new(3.0, -1.0, 0.2), &VocabVad::<f64>::neutral(4));
        assert!(flat.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn mixture_limits_and_midpoint() {
        let vad = two_words();
        let logits = [0.3, -1.1];
        let e = VadVector::splat(0.8);
        assert_eq!(we_mixture(&logits, &e, &vad, 1.0), softmax(&logits));
        assert_eq!(we_mixture(&logits, &e, &vad, 0.0), softmax(&v_scores(&e, &vad)));
        // softmax([0.3,-1.1]) and softmax([-√0.6·... ]) averaged by hand
        let lm0 = 1.0 / (1.0 + (-1.4f64).exp());
        let d0 = (3.0 * 0.64f64).sqrt();
        let d1 = (3.0 * 0.04f64).sqrt();
        let af0 = (-d0).exp() / ((-d0).exp() + (-d1).exp());
        let got = we_mixture(&logits, &e, &vad, 0.5);
        assert!((got[0] - 0.5 * (lm0 + af0)).abs() < 1e-15);
        assert!((got[1] - 0.5 * ((1.0 - lm0) + (1.0 - af0))).abs() < 1e-15);
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(1.3, 0.7, 0.0), 1.3);
        assert_eq!(total_loss(1.3, 0.0, 5.0), 1.3);
        assert_eq!(total_loss(1.0, 0.5, 2.0), 2.0);
    }

    proptest::proptest! {
        #[test]
        fn regularizer_permutation_invariant(
            dists in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 3), 1..6),
            targets in proptest::collection::vec(0usize..3, 1..6),
            rot in 0usize..6,
        ) {
            let vad = VocabVad::new(vec![VadVector::new(0.1, 0.9, 0.3), VadVector::new(0.7, 0.2, 0.5), VadVector::new(1.0, 0.0, 0.4)]);
            let norm: Vec<Vec<f64>> = dists.iter().map(|d| { let z: f64 = d.iter().sum(); d.iter().map(|x| x / z).collect() }).collect();
            let mut rotated = norm.clone();
            rotated.rotate_left(rot % norm.len());
            let mut trev = targets.clone();
            trev.reverse();
            let a = affective_regularizer(&norm, &targets, &vad);
            let b = affective_regularizer(&rotated, &trev, &vad);
            proptest::prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
