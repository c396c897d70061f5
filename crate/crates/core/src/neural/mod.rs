//! Dense numerics: tensors, a reverse-mode tape, GRU cells, the stacked
//! bidirectional encoder, ADAM, clipping and learning rate scheduling.

mod encoder;
mod gru;
mod ops;
mod optim;
mod params;
mod tape;
mod tensor;

pub use encoder::BiGruEncoder;
pub use gru::{gru_cell_forward, run_gru, GruParams};
pub use ops::{log_softmax, nll_loss, sigmoid, softmax};
pub use optim::{adam_step, clip_global_norm, AdamConfig, AdamState, LrScheduler, PlateauEvent, DEFAULT_CLIP_NORM};
pub use params::{Grads, ParamId, ParamStore};
pub use tape::{Tape, Var, LOG_FLOOR};
pub use tensor::{matvec, Tensor};

/// Inverted dropout mask: each entry is `0` with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask<T: crate::Scalar, R: rand::Rng>(n: usize, rate: f64, rng: &mut R) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    (0..n).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect()
}
