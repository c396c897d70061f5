use rand::Rng;

use super::gru::GruParams;
use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stacked bidirectional GRU. Layer `k > 0` reads the concatenated forward
/// and backward states of layer `k - 1`; the summary is the top layer's last
/// forward state joined with its last backward state (position 0).
#[derive(Debug, Clone, PartialEq)]
pub struct BiGruEncoder {
    pub layers: Vec<(GruParams, GruParams)>,
    pub hidden_dim: usize,
}

impl BiGruEncoder {
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Self {
        let layers = (0..num_layers)
            .map(|k| {
                let inp = if k == 0 { input_dim } else { 2 * hidden_dim };
                let f = GruParams::register(store, &format!("{prefix}.l{k}.fwd"), inp, hidden_dim, rng);
                let b = GruParams::register(store, &format!("{prefix}.l{k}.bwd"), inp, hidden_dim, rng);
                (f, b)
            })
            .collect();
        Self { layers, hidden_dim }
    }

    pub fn find<T: Scalar>(store: &ParamStore<T>, prefix: &str, num_layers: usize) -> Result<Self> {
        let layers = (0..num_layers)
            .map(|k| {
                Ok((
                    GruParams::find(store, &format!("{prefix}.l{k}.fwd"))?,
                    GruParams::find(store, &format!("{prefix}.l{k}.bwd"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let hidden_dim = layers.first().map(|l| l.0.hidden_dim).unwrap_or(0);
        Ok(Self { layers, hidden_dim })
    }

    pub fn summary_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn encode<T: Scalar>(&self, store: &ParamStore<T>, inputs: &[Vec<T>]) -> Result<Vec<T>> {
        if inputs.is_empty() {
            return Err(Error::Empty("encode"));
        }
        let h0 = vec![T::zero(); self.hidden_dim];
        let mut xs: Vec<Vec<T>> = inputs.to_vec();
        let mut summary = Vec::new();
        for (fwd, bwd) in &self.layers {
            let mut hf = Vec::with_capacity(xs.len());
            let mut h = h0.clone();
            for x in &xs {
                h = fwd.forward(store, x, &h)?;
                hf.push(h.clone());
            }
            let mut hb = vec![Vec::new(); xs.len()];
            let mut h = h0.clone();
            for (t, x) in xs.iter().enumerate().rev() {
                h = bwd.forward(store, x, &h)?;
                hb[t] = h.clone();
            }
            summary = [hf[xs.len() - 1].as_slice(), hb[0].as_slice()].concat();
            xs = hf.into_iter().zip(hb).map(|(f, b)| [f, b].concat()).collect();
        }
        Ok(summary)
    }

    /// Tape version; `between` is applied to every input of layers above the first.
    pub fn encode_tape<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        inputs: &[Var],
        between: &mut dyn FnMut(&mut Tape<'_, T>, Var) -> Var,
    ) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::Empty("encode"));
        }
        let n = inputs.len();
        let mut xs = inputs.to_vec();
        let mut summary = None;
        for (k, (fwd, bwd)) in self.layers.iter().enumerate() {
            if k > 0 {
                xs = xs.into_iter().map(|x| between(tape, x)).collect();
            }
            let zero = tape.constant(vec![T::zero(); self.hidden_dim]);
            let mut hf = Vec::with_capacity(n);
            let mut h = zero;
            for x in &xs {
                h = fwd.forward_tape(tape, *x, h)?;
                hf.push(h);
            }
            let mut hb = vec![zero; n];
            let mut h = zero;
            for t in (0..n).rev() {
                h = bwd.forward_tape(tape, xs[t], h)?;
                hb[t] = h;
            }
            summary = Some(tape.concat(vec![hf[n - 1], hb[0]]));
            xs = (0..n).map(|t| tape.concat(vec![hf[t], hb[t]])).collect();
        }
        Ok(summary.expect("at least one layer"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gru::run_gru;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn enc(layers: usize) -> (ParamStore<f64>, BiGruEncoder) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let e = BiGruEncoder::register(&mut store, "enc", 3, 2, layers, &mut rng);
        (store, e)
    }

    fn inputs() -> Vec<Vec<f64>> {
        vec![vec![0.1, -0.4, 0.7], vec![0.3, 0.2, -0.1], vec![-0.6, 0.5, 0.05]]
    }

    #[test]
    fn empty_input_errors() {
        let (store, e) = enc(2);
        assert!(e.encode::<f64>(&store, &[]).is_err());
    }

    #[test]
    fn zero_weights_single_token() {
        let (mut store, e) = enc(2);
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        assert_eq!(e.encode(&store, &[vec![1.0, 2.0, 3.0]]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn backward_direction_is_forward_on_reversed_input() {
        let (store, e) = enc(1);
        let (_, bwd) = e.layers[0];
        let xs = inputs();
        let summary = e.encode(&store, &xs).unwrap();
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let states = run_gru(&store, &bwd, &rev, &[0.0, 0.0]).unwrap();
        assert_eq!(&summary[2..], states.last().unwrap().as_slice());
    }

    // Unrolls both layers by hand from single cell steps.
    #[test]
    fn three_token_two_layer_oracle() {
        let (store, e) = enc(2);
        let xs = inputs();
        let (f0, b0) = e.layers[0];
        let (f1, b1) = e.layers[1];
        let z = [0.0, 0.0];
        let hf1 = f0.forward(&store, &xs[0], &z).unwrap();
        let hf2 = f0.forward(&store, &xs[1], &hf1).unwrap();
        let hf3 = f0.forward(&store, &xs[2], &hf2).unwrap();
        let hb3 = b0.forward(&store, &xs[2], &z).unwrap();
        let hb2 = b0.forward(&store, &xs[1], &hb3).unwrap();
        let hb1 = b0.forward(&store, &xs[0], &hb2).unwrap();
        let l1 = [[hf1, hb1].concat(), [hf2, hb2].concat(), [hf3, hb3].concat()];
        let gf1 = f1.forward(&store, &l1[0], &z).unwrap();
        let gf2 = f1.forward(&store, &l1[1], &gf1).unwrap();
        let gf3 = f1.forward(&store, &l1[2], &gf2).unwrap();
        let gb3 = b1.forward(&store, &l1[2], &z).unwrap();
        let gb2 = b1.forward(&store, &l1[1], &gb3).unwrap();
        let gb1 = b1.forward(&store, &l1[0], &gb2).unwrap();
        let want = [gf3, gb1].concat();
        assert_eq!(e.encode(&store, &xs).unwrap(), want);

        let mut tape = Tape::new(&store);
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let s = e.encode_tape(&mut tape, &vars, &mut |_, v| v).unwrap();
        assert_eq!(tape.value(s), want.as_slice());
    }
}
