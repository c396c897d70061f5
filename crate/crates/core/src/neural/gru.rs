use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::matvec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Parameter handles of one GRU cell.
///
/// `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
/// `n = tanh(W_n x + U_n (r ∘ h) + b_n)`, `h' = (1 − z) ∘ n + z ∘ h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GruParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_n: ParamId,
    pub u_n: ParamId,
    pub b_n: ParamId,
}

impl GruParams {
    /// Registers `prefix.{w,u,b}_{z,r,n}` drawn from `U(-1/√hidden, 1/√hidden)`.
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let mut add = |name: &str, shape: Vec<usize>| store.add_uniform(format!("{prefix}.{name}"), shape, bound, rng);
        let (i, h) = (input_dim, hidden_dim);
        Self {
            input_dim,
            hidden_dim,
            w_z: add("w_z", vec![h, i]),
            u_z: add("u_z", vec![h, h]),
            b_z: add("b_z", vec![h]),
            w_r: add("w_r", vec![h, i]),
            u_r: add("u_r", vec![h, h]),
            b_r: add("b_r", vec![h]),
            w_n: add("w_n", vec![h, i]),
            u_n: add("u_n", vec![h, h]),
            b_n: add("b_n", vec![h]),
        }
    }

    /// Looks up an already registered cell by prefix.
    pub fn find<T: Scalar>(store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        let get = |n: &str| {
            store
                .id(&format!("{prefix}.{n}"))
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {prefix}.{n}")))
        };
        let w_z = get("w_z")?;
        let shape = store.get(w_z).shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::Checkpoint(format!("{prefix}.w_z must be a matrix")));
        }
        Ok(Self {
            input_dim: shape[1],
            hidden_dim: shape[0],
            w_z,
            u_z: get("u_z")?,
            b_z: get("b_z")?,
            w_r: get("w_r")?,
            u_r: get("u_r")?,
            b_r: get("b_r")?,
            w_n: get("w_n")?,
            u_n: get("u_n")?,
            b_n: get("b_n")?,
        })
    }

    fn check(&self, x: usize, h: usize) -> Result<()> {
        if x != self.input_dim || h != self.hidden_dim {
            return Err(Error::Shape {
                op: "gru_cell_forward",
                expected: vec![self.input_dim, self.hidden_dim],
                got: vec![x, h],
            });
        }
        Ok(())
    }

    /// One step evaluated directly on the parameter values.
    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &[T], h: &[T]) -> Result<Vec<T>> {
        self.check(x.len(), h.len())?;
        let hd = self.hidden_dim;
        let affine = |w: ParamId, u: ParamId, b: ParamId, hv: &[T]| {
            let wx = matvec(store.get(w).data(), hd, self.input_dim, x);
            let uh = matvec(store.get(u).data(), hd, hd, hv);
            wx.iter().zip(&uh).zip(store.get(b).data()).map(|((a, b), c)| *a + *b + *c).collect::<Vec<T>>()
        };
        let sig = |v: T| T::one() / (T::one() + (-v).exp());
        let z: Vec<T> = affine(self.w_z, self.u_z, self.b_z, h).into_iter().map(sig).collect();
        let r: Vec<T> = affine(self.w_r, self.u_r, self.b_r, h).into_iter().map(sig).collect();
        let rh: Vec<T> = r.iter().zip(h).map(|(a, b)| *a * *b).collect();
        let n: Vec<T> = affine(self.w_n, self.u_n, self.b_n, &rh).into_iter().map(T::tanh).collect();
        Ok((0..hd).map(|i| (T::one() - z[i]) * n[i] + z[i] * h[i]).collect())
    }

    /// The same step recorded on a tape.
    pub fn forward_tape<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var, h: Var) -> Result<Var> {
        self.check(tape.value(x).len(), tape.value(h).len())?;
        let zp = tape.linear(self.w_z, x, Some((self.u_z, h)), Some(self.b_z));
        let z = tape.sigmoid(zp);
        let rp = tape.linear(self.w_r, x, Some((self.u_r, h)), Some(self.b_r));
        let r = tape.sigmoid(rp);
        let rh = tape.mul(r, h);
        let np = tape.linear(self.w_n, x, Some((self.u_n, rh)), Some(self.b_n));
        let n = tape.tanh(np);
        let keep = tape.one_minus(z);
        let a = tape.mul(keep, n);
        let b = tape.mul(z, h);
        Ok(tape.add(a, b))
    }

    pub fn param_ids(&self) -> [ParamId; 9] {
        [self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_n, self.u_n, self.b_n]
    }
}

pub fn gru_cell_forward<T: Scalar>(store: &ParamStore<T>, p: &GruParams, x: &[T], h_prev: &[T]) -> Result<Vec<T>> {
    p.forward(store, x, h_prev)
}

/// Runs a cell over `inputs` from `h0`, returning every hidden state.
pub fn run_gru<T: Scalar>(store: &ParamStore<T>, p: &GruParams, inputs: &[Vec<T>], h0: &[T]) -> Result<Vec<Vec<T>>> {
    let mut h = h0.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for x in inputs {
        h = p.forward(store, x, &h)?;
        out.push(h.clone());
    }
    Ok(out)
}
