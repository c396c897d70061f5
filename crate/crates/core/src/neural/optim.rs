use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied as `lr * weight_decay * p`.
    pub weight_decay: f64,
}

impl AdamConfig {
    /// Forward model `p(R|S, E0)`: learning rate 0.001.
    pub fn forward() -> Self {
        Self { lr: 0.001, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-5 }
    }

    /// Reverse model `p(S|R)`: learning rate 0.01.
    pub fn reverse() -> Self {
        Self { lr: 0.01, ..Self::forward() }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        Self { lr, ..self }
    }

    pub fn with_weight_decay(self, weight_decay: f64) -> Self {
        Self { weight_decay, ..self }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::forward()
    }
}

/// First and second moment accumulators for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<T>> = store.iter().map(|(_, _, t)| vec![T::zero(); t.len()]).collect();
        Self { config, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// One bias-corrected update. Non-finite gradients leave parameters and
    /// moments untouched and return an error.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Grads<T>) -> Result<()> {
        if grads.values().len() != self.m.len() {
            return Err(Error::Shape { op: "adam_step", expected: vec![self.m.len()], got: vec![grads.values().len()] });
        }
        for (g, m) in grads.values().iter().zip(&self.m) {
            if g.len() != m.len() {
                return Err(Error::Shape { op: "adam_step", expected: vec![m.len()], got: vec![g.len()] });
            }
        }
        if !grads.all_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (lr, eps, wd) = (T::of(c.lr), T::of(c.eps), T::of(c.weight_decay));
        let bc1 = T::one() - b1.powi(self.step as i32);
        let bc2 = T::one() - b2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let p = store.get_mut(id).data_mut();
            let g = &grads.values()[k];
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * p[i]);
            }
        }
        Ok(())
    }
}

pub fn adam_step<T: Scalar>(state: &mut AdamState<T>, store: &mut ParamStore<T>, grads: &Grads<T>) -> Result<()> {
    state.step(store, grads)
}

/// Rescales all gradients when their global L2 norm exceeds `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut Grads<T>, max_norm: T) -> T {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Reduce-on-plateau learning rate schedule over a metric to minimize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrScheduler {
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    pub best: Option<f64>,
    pub wait: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlateauEvent {
    Improved,
    Waiting,
    Reduced(f64),
}

impl LrScheduler {
    pub fn new(patience: usize, factor: f64, min_lr: f64) -> Result<Self> {
        if patience == 0 || !(factor > 0.0 && factor < 1.0) {
            return Err(Error::Config(format!("scheduler needs patience >= 1 and 0 < factor < 1 (got {patience}, {factor})")));
        }
        Ok(Self { patience, factor, min_lr, best: None, wait: 0 })
    }

    /// Feeds one epoch's metric. After more than `patience` consecutive
    /// epochs without improvement the learning rate is multiplied by
    /// `factor` (never below `min_lr`).
    pub fn observe(&mut self, metric: f64, lr: &mut f64) -> PlateauEvent {
        match self.best {
            Some(b) if !(metric < b) => {
                self.wait += 1;
                if self.wait > self.patience {
                    self.wait = 0;
                    *lr = (*lr * self.factor).max(self.min_lr);
                    PlateauEvent::Reduced(*lr)
                } else {
                    PlateauEvent::Waiting
                }
            }
            _ => {
                self.best = Some(metric);
                self.wait = 0;
                PlateauEvent::Improved
            }
        }
    }
}

impl Default for LrScheduler {
    /// Patience 20 epochs, factor 0.5, floor 1e-6.
    fn default() -> Self {
        Self { patience: 20, factor: 0.5, min_lr: 1e-6, best: None, wait: 0 }
    }
}
