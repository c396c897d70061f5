//! Reverse-mode differentiation over vector-valued nodes.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are read
//! from a borrowed [`ParamStore`]; [`Tape::backward`] accumulates into a
//! matching [`Grads`] buffer.

use std::sync::Arc;

use super::params::{Grads, ParamId, ParamStore};
use crate::scalar::Scalar;

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Floor applied inside [`Tape::ln`].
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op<T: Scalar> {
    Const,
    Param(ParamId),
    Row(ParamId, usize),
    /// `W x + U h + b`, any of the last two optional.
    Linear {
        w: ParamId,
        x: Var,
        u: Option<(ParamId, Var)>,
        b: Option<ParamId>,
    },
    ConstMatVec {
        m: Arc<Vec<T>>,
        rows: usize,
        cols: usize,
        x: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sum(Vec<Var>),
    Sigmoid(Var),
    Tanh(Var),
    OneMinus(Var),
    Concat(Vec<Var>),
    Softmax(Var),
    LogSoftmax(Var),
    Pick(Var, usize),
    Ln(Var),
    Scale(Var, T),
    ScaleBy(Var, Var),
    Norm(Var),
}

#[derive(Debug, Clone)]
struct Node<T: Scalar> {
    value: Vec<T>,
    op: Op<T>,
}

pub struct Tape<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn softmax_slice<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = x.iter().map(|v| (*v - max).exp()).collect();
    let z: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub(crate) fn log_softmax_slice<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = x.iter().map(|v| (*v - max).exp()).sum::<T>().ln() + max;
    x.iter().map(|v| *v - lse).collect()
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self { params, nodes: Vec::with_capacity(1024) }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn constant(&mut self, value: Vec<T>) -> Var {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.params.get(id).data().to_vec();
        self.push(value, Op::Param(id))
    }

    /// Row `i` of a matrix parameter (embedding lookup).
    pub fn row(&mut self, id: ParamId, i: usize) -> Var {
        let value = self.params.get(id).row(i).to_vec();
        self.push(value, Op::Row(id, i))
    }

    pub fn linear(&mut self, w: ParamId, x: Var, u: Option<(ParamId, Var)>, b: Option<ParamId>) -> Var {
        let wt = self.params.get(w);
        let (rows, cols) = (wt.rows(), wt.cols());
        assert_eq!(cols, self.value(x).len(), "linear: {} input width", self.params.name(w));
        let mut y = super::tensor::matvec(wt.data(), rows, cols, self.value(x));
        if let Some((u, h)) = u {
            let ut = self.params.get(u);
            assert_eq!(ut.rows(), rows);
            assert_eq!(ut.cols(), self.value(h).len(), "linear: {} input width", self.params.name(u));
            let uh = super::tensor::matvec(ut.data(), ut.rows(), ut.cols(), self.value(h));
            y.iter_mut().zip(uh).for_each(|(a, b)| *a += b);
        }
        if let Some(b) = b {
            let bt = self.params.get(b);
            assert_eq!(bt.len(), rows);
            y.iter_mut().zip(bt.data()).for_each(|(a, b)| *a += *b);
        }
        self.push(y, Op::Linear { w, x, u, b })
    }

    pub fn matvec(&mut self, w: ParamId, x: Var) -> Var {
        self.linear(w, x, None, None)
    }

    /// Product with a fixed row-major `rows x cols` matrix.
    pub fn const_matvec(&mut self, m: Arc<Vec<T>>, rows: usize, cols: usize, x: Var) -> Var {
        let y = super::tensor::matvec(&m, rows, cols, self.value(x));
        self.push(y, Op::ConstMatVec { m, rows, cols, x })
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Vec<T> {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.len(), vb.len(), "elementwise op on mismatched widths");
        va.iter().zip(vb).map(|(x, y)| f(*x, *y)).collect()
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Vec<T> {
        self.value(a).iter().map(|x| f(*x)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// Elementwise sum of equally sized vectors.
    pub fn sum(&mut self, xs: Vec<Var>) -> Var {
        assert!(!xs.is_empty(), "sum of no vectors");
        let mut v = self.value(xs[0]).to_vec();
        for x in &xs[1..] {
            let vx = self.value(*x);
            assert_eq!(vx.len(), v.len());
            v.iter_mut().zip(vx).for_each(|(a, b)| *a += *b);
        }
        self.push(v, Op::Sum(xs))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.map(a, sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.map(a, T::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| T::one() - x);
        self.push(v, Op::OneMinus(a))
    }

    pub fn concat(&mut self, xs: Vec<Var>) -> Var {
        let v = xs.iter().flat_map(|x| self.value(*x).iter().copied()).collect();
        self.push(v, Op::Concat(xs))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let v = softmax_slice(self.value(a));
        self.push(v, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let v = log_softmax_slice(self.value(a));
        self.push(v, Op::LogSoftmax(a))
    }

    /// Component `i` as a one-element node.
    pub fn pick(&mut self, a: Var, i: usize) -> Var {
        let v = vec![self.value(a)[i]];
        self.push(v, Op::Pick(a, i))
    }

    /// Natural log with inputs floored at [`LOG_FLOOR`].
    pub fn ln(&mut self, a: Var) -> Var {
        let floor = T::of(LOG_FLOOR);
        let v = self.map(a, |x| x.max(floor).ln());
        self.push(v, Op::Ln(a))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let v = self.map(a, |x| x * k);
        self.push(v, Op::Scale(a, k))
    }

    /// Vector times a one-element node.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let k = self.scalar(s);
        let v = self.map(a, |x| x * k);
        self.push(v, Op::ScaleBy(a, s))
    }

    /// Euclidean norm as a one-element node.
    pub fn norm(&mut self, a: Var) -> Var {
        let n = self.value(a).iter().map(|x| *x * *x).sum::<T>().sqrt();
        self.push(vec![n], Op::Norm(a))
    }

    /// Accumulates d`root`/d(param) into `grads`. `root` must be one-element.
    pub fn backward(&self, root: Var, grads: &mut Grads<T>) {
        assert_eq!(self.value(root).len(), 1, "backward from a non-scalar node");
        let mut adj: Vec<Option<Vec<T>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![T::one()]);

        fn acc<T: Scalar>(adj: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
            adj[v.0].get_or_insert_with(|| vec![T::zero(); len])
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                Op::Const => {}
                Op::Param(id) => {
                    grads.get_mut(*id).iter_mut().zip(&g).for_each(|(a, b)| *a += *b);
                }
                Op::Row(id, i) => {
                    let c = g.len();
                    let row = &mut grads.get_mut(*id)[i * c..(i + 1) * c];
                    row.iter_mut().zip(&g).for_each(|(a, b)| *a += *b);
                }
                Op::Linear { w, x, u, b } => {
                    self.linear_backward(*w, *x, &g, grads, &mut adj);
                    if let Some((u, h)) = u {
                        self.linear_backward(*u, *h, &g, grads, &mut adj);
                    }
                    if let Some(b) = b {
                        grads.get_mut(*b).iter_mut().zip(&g).for_each(|(a, b)| *a += *b);
                    }
                }
                Op::ConstMatVec { m, rows, cols, x } => {
                    let gx = acc(&mut adj, *x, *cols);
                    for i in 0..*rows {
                        let gi = g[i];
                        let row = &m[i * cols..(i + 1) * cols];
                        gx.iter_mut().zip(row).for_each(|(a, w)| *a += gi * *w);
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, g.len()).iter_mut().zip(&g).for_each(|(x, d)| *x += *d);
                    acc(&mut adj, *b, g.len()).iter_mut().zip(&g).for_each(|(x, d)| *x += *d);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *a, g.len()).iter_mut().zip(&g).for_each(|(x, d)| *x += *d);
                    acc(&mut adj, *b, g.len()).iter_mut().zip(&g).for_each(|(x, d)| *x -= *d);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga: Vec<T> = g.iter().zip(vb).map(|(d, y)| *d * *y).collect();
                    let gb: Vec<T> = g.iter().zip(va).map(|(d, x)| *d * *x).collect();
                    acc(&mut adj, *a, g.len()).iter_mut().zip(ga).for_each(|(x, d)| *x += d);
                    acc(&mut adj, *b, g.len()).iter_mut().zip(gb).for_each(|(x, d)| *x += d);
                }
                Op::Sum(xs) => {
                    for x in xs {
                        acc(&mut adj, *x, g.len()).iter_mut().zip(&g).for_each(|(a, d)| *a += *d);
                    }
                }
                Op::Sigmoid(a) => {
                    let ga = acc(&mut adj, *a, g.len());
                    for ((acc, d), s) in ga.iter_mut().zip(&g).zip(y) {
                        *acc += *d * *s * (T::one() - *s);
                    }
                }
                Op::Tanh(a) => {
                    let ga = acc(&mut adj, *a, g.len());
                    for ((acc, d), t) in ga.iter_mut().zip(&g).zip(y) {
                        *acc += *d * (T::one() - *t * *t);
                    }
                }
                Op::OneMinus(a) => {
                    acc(&mut adj, *a, g.len()).iter_mut().zip(&g).for_each(|(x, d)| *x -= *d);
                }
                Op::Concat(xs) => {
                    let mut off = 0;
                    for x in xs {
                        let n = self.value(*x).len();
                        acc(&mut adj, *x, n).iter_mut().zip(&g[off..off + n]).for_each(|(a, d)| *a += *d);
                        off += n;
                    }
                }
                Op::Softmax(a) => {
                    let dot: T = g.iter().zip(y).map(|(d, s)| *d * *s).sum();
                    let ga = acc(&mut adj, *a, g.len());
                    for ((acc, d), s) in ga.iter_mut().zip(&g).zip(y) {
                        *acc += *s * (*d - dot);
                    }
                }
                Op::LogSoftmax(a) => {
                    let total: T = g.iter().copied().sum();
                    let ga = acc(&mut adj, *a, g.len());
                    for ((acc, d), ls) in ga.iter_mut().zip(&g).zip(y) {
                        *acc += *d - ls.exp() * total;
                    }
                }
                Op::Pick(a, i) => {
                    let n = self.value(*a).len();
                    acc(&mut adj, *a, n)[*i] += g[0];
                }
                Op::Ln(a) => {
                    let floor = T::of(LOG_FLOOR);
                    let xs = self.value(*a);
                    let ga = acc(&mut adj, *a, g.len());
                    for ((acc, d), x) in ga.iter_mut().zip(&g).zip(xs) {
                        if *x > floor {
                            *acc += *d / *x;
                        }
                    }
                }
                Op::Scale(a, k) => {
                    acc(&mut adj, *a, g.len()).iter_mut().zip(&g).for_each(|(x, d)| *x += *d * *k);
                }
                Op::ScaleBy(a, s) => {
                    let k = self.scalar(*s);
                    let dot: T = g.iter().zip(self.value(*a)).map(|(d, x)| *d * *x).sum();
                    acc(&mut adj, *a, g.len()).iter_mut().zip(&g).for_each(|(x, d)| *x += *d * k);
                    acc(&mut adj, *s, 1)[0] += dot;
                }
                Op::Norm(a) => {
                    let n = y[0];
                    if n > T::zero() {
                        let xs = self.value(*a);
                        let ga = acc(&mut adj, *a, xs.len());
                        for (acc, x) in ga.iter_mut().zip(xs) {
                            *acc += g[0] * *x / n;
                        }
                    }
                }
            }
        }
    }

    fn linear_backward(&self, w: ParamId, x: Var, g: &[T], grads: &mut Grads<T>, adj: &mut [Option<Vec<T>>]) {
        let wt = self.params.get(w);
        let cols = wt.cols();
        let xv = self.value(x);
        let gw = grads.get_mut(w);
        for (i, gi) in g.iter().enumerate() {
            if *gi == T::zero() {
                continue;
            }
            let row = &mut gw[i * cols..(i + 1) * cols];
            row.iter_mut().zip(xv).for_each(|(a, xj)| *a += *gi * *xj);
        }
        let gx = adj[x.0].get_or_insert_with(|| vec![T::zero(); cols]);
        let wd = wt.data();
        for (i, gi) in g.iter().enumerate() {
            let row = &wd[i * cols..(i + 1) * cols];
            gx.iter_mut().zip(row).for_each(|(a, w)| *a += *gi * *w);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tensor::Tensor;

    // Central differences on a closure over the parameter store.
    fn numeric(store: &ParamStore<f64>, f: &dyn Fn(&ParamStore<f64>) -> f64) -> Vec<Vec<f64>> {
        let h = 1e-6;
        let mut out = Vec::new();
        for id in store.ids() {
            let mut g = Vec::new();
            for k in 0..store.get(id).len() {
                let mut plus = store.clone();
                plus.get_mut(id).data_mut()[k] += h;
                let mut minus = store.clone();
                minus.get_mut(id).data_mut()[k] -= h;
                g.push((f(&plus) - f(&minus)) / (2.0 * h));
            }
            out.push(g);
        }
        out
    }

    fn store() -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(vec![3, 2], vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.7]).unwrap());
        s.add("u", Tensor::new(vec![3, 3], vec![0.2, 0.1, -0.3, 0.4, -0.5, 0.6, 0.05, 0.15, -0.25]).unwrap());
        s.add("b", Tensor::new(vec![3], vec![0.01, -0.02, 0.03]).unwrap());
        s.add("emb", Tensor::new(vec![2, 2], vec![0.9, -0.8, 0.4, 0.6]).unwrap());
        s.add("lam", Tensor::new(vec![1], vec![0.3]).unwrap());
        s
    }

    fn build(t: &mut Tape<'_, f64>) -> Var {
        let p = t.params();
        let (w, u, b, emb, lam) = (
            p.id("w").unwrap(),
            p.id("u").unwrap(),
            p.id("b").unwrap(),
            p.id("emb").unwrap(),
            p.id("lam").unwrap(),
        );
        let x = t.row(emb, 1);
        let h = t.constant(vec![0.1, -0.3, 0.2]);
        let pre = t.linear(w, x, Some((u, h)), Some(b));
        let s = t.sigmoid(pre);
        let th = t.tanh(pre);
        let om = t.one_minus(s);
        let m = t.mul(om, th);
        let c = t.concat(vec![m, s]);
        let sm = t.softmax(c);
        let l = t.param(lam);
        let ls = t.sigmoid(l);
        let scaled = t.scale_by(sm, ls);
        let lsm = t.log_softmax(c);
        let mixed = t.sum(vec![scaled, lsm]);
        let vad = Arc::new(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]);
        let e = t.const_matvec(vad, 2, 6, sm);
        let k = t.constant(vec![0.9, 0.1]);
        let diff = t.sub(e, k);
        let n = t.norm(diff);
        let p2 = t.pick(mixed, 2);
        let sq = t.pick(sm, 1);
        let lg = t.ln(sq);
        let tot = t.sum(vec![n, p2, lg]);
        let added = t.add(tot, n);
        t.scale(added, 0.7)
    }

    #[test]
    fn backward_matches_finite_differences() {
        let s = store();
        let mut t = Tape::new(&s);
        let root = build(&mut t);
        let mut g = s.zero_grads();
        t.backward(root, &mut g);
        let f = |st: &ParamStore<f64>| {
            let mut t = Tape::new(st);
            let r = build(&mut t);
            t.scalar(r)
        };
        let num = numeric(&s, &f);
        for (id, n) in s.ids().zip(num) {
            for (a, b) in g.get(id).iter().zip(n) {
                assert!((a - b).abs() < 1e-7, "{}: analytic {a} numeric {b}", s.name(id));
            }
        }
    }

    #[test]
    fn softmax_helpers() {
        let p = softmax_slice(&[0.0, 0.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        let l = log_softmax_slice(&[1.0f64, 2.0, 3.0]);
        let s: f64 = l.iter().map(|x| x.exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
