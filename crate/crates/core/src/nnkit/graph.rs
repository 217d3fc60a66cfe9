//! Reverse-mode tape over matrix-valued nodes.
//!
//! A [`Graph`] lives for one loss evaluation: leaves are pushed, every op
//! computes its value eagerly and records its parents, and [`Graph::backward`]
//! walks the tape once in reverse. Nodes that cannot reach a trainable leaf
//! never receive gradient buffers.
//!
//! Op constructors assert on shape misuse; shape validation of user input
//! happens at the API boundary (`mlp_forward`, `z_value`, ...).

use crate::error::{Error, Result};
use crate::nnkit::tensor::{matmul, Tensor};
use crate::scalar::{lit, Scalar};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    MulConst(Var, Tensor<S>),
    Scale(Var, S),
    AddConst(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Clamp(Var, S, S),
    LogOneMinusTanhSq(Var),
    ConcatCols(Var, Var),
    RepeatRows(Var, usize),
    Reshape(Var),
    SumCols(Var),
    MeanAll(Var),
    QuantileHuber { pred: Var, targets: Tensor<S>, taus: Tensor<S>, kappa: S },
}

#[derive(Clone, Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// One-shot computation tape.
#[derive(Clone, Debug, Default)]
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

/// Gradients of a scalar loss with respect to every node that needed one.
#[derive(Clone, Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
    shapes: Vec<Vec<usize>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient with respect to `v`; zeros when no path reached it.
    pub fn wrt(&self, v: Var) -> Tensor<S> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that gradients flow into.
    pub fn param(&mut self, t: Tensor<S>) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> S {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "node is not a scalar");
        t.values()[0]
    }

    pub fn matmul(&mut self, x: Var, w: Var) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        let (n, k) = (xv.rows(), xv.cols());
        assert_eq!(wv.shape().len(), 2, "matmul weight must be 2-D");
        assert_eq!(wv.shape()[0], k, "matmul inner dimension mismatch");
        let m = wv.shape()[1];
        let out = matmul(xv.values(), wv.values(), n, k, m);
        let t = Tensor::matrix(n, m, out).expect("matmul output");
        self.push(t, Op::MatMul(x, w), &[x, w])
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(b));
        let m = xv.cols();
        assert_eq!(bv.len(), m, "bias width mismatch");
        let mut out = xv.clone();
        for row in out.values_mut().chunks_mut(m) {
            for (o, &bb) in row.iter_mut().zip(bv.values()) {
                *o += bb;
            }
        }
        self.push(out, Op::AddBias(x, b), &[x, b])
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(S, S) -> S, op: Op<S>) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.len(), bv.len(), "elementwise length mismatch");
        let vals = av.values().iter().zip(bv.values()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(av.shape().to_vec(), vals).expect("binary op");
        self.push(t, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| if y < x { y } else { x }, Op::Min(a, b))
    }

    pub fn mul_const(&mut self, a: Var, c: Tensor<S>) -> Var {
        let av = self.value(a);
        assert_eq!(av.len(), c.len(), "mul_const length mismatch");
        let vals = av.values().iter().zip(c.values()).map(|(&x, &y)| x * y).collect();
        let t = Tensor::new(av.shape().to_vec(), vals).expect("mul_const");
        self.push(t, Op::MulConst(a, c), &[a])
    }

    pub fn scale(&mut self, a: Var, s: S) -> Var {
        let t = self.value(a).map(|x| x * s);
        self.push(t, Op::Scale(a, s), &[a])
    }

    pub fn add_const(&mut self, a: Var, c: S) -> Var {
        let t = self.value(a).map(|x| x + c);
        self.push(t, Op::AddConst(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.max(S::zero()));
        self.push(t, Op::Relu(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.tanh());
        self.push(t, Op::Tanh(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.exp());
        self.push(t, Op::Exp(a), &[a])
    }

    /// Clamp into `[lo, hi]`; the gradient is zero outside the open interval.
    pub fn clamp(&mut self, a: Var, lo: S, hi: S) -> Var {
        let t = self.value(a).map(|x| x.max(lo).min(hi));
        self.push(t, Op::Clamp(a, lo, hi), &[a])
    }

    /// `log(1 - tanh(x)^2)` evaluated stably as `2 (ln 2 - x - softplus(-2x))`.
    pub fn log_one_minus_tanh_sq(&mut self, a: Var) -> Var {
        let t = self.value(a).map(log_one_minus_tanh_sq);
        self.push(t, Op::LogOneMinusTanhSq(a), &[a])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let n = av.rows();
        assert_eq!(n, bv.rows(), "concat_cols row mismatch");
        let (p, q) = (av.cols(), bv.cols());
        let mut vals = Vec::with_capacity(n * (p + q));
        for r in 0..n {
            vals.extend_from_slice(av.row(r));
            vals.extend_from_slice(bv.row(r));
        }
        let t = Tensor::matrix(n, p + q, vals).expect("concat");
        self.push(t, Op::ConcatCols(a, b), &[a, b])
    }

    /// Repeats every row `times` times consecutively: `[n×m] -> [n·times×m]`.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Var {
        let av = self.value(a);
        let (n, m) = (av.rows(), av.cols());
        let mut vals = Vec::with_capacity(n * times * m);
        for r in 0..n {
            for _ in 0..times {
                vals.extend_from_slice(av.row(r));
            }
        }
        let t = Tensor::matrix(n * times, m, vals).expect("repeat");
        self.push(t, Op::RepeatRows(a, times), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let t = self.value(a).clone().reshaped(shape).expect("reshape");
        self.push(t, Op::Reshape(a), &[a])
    }

    /// Row sums as an `[n×1]` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (n, m) = (av.rows(), av.cols());
        let vals = (0..n).map(|r| av.values()[r * m..(r + 1) * m].iter().copied().sum()).collect();
        let t = Tensor::matrix(n, 1, vals).expect("sum_cols");
        self.push(t, Op::SumCols(a), &[a])
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = lit::<S>(av.len() as f64);
        let t = Tensor::scalar(av.sum() / n);
        self.push(t, Op::MeanAll(a), &[a])
    }

    /// Batched asymmetric quantile Huber loss.
    ///
    /// `pred` is `[B×N]` online quantile values at fractions `taus` (`[B×N]`),
    /// `targets` is `[B×A]` detached target atoms. The result is
    /// `(1/B) Σ_b (1/A) Σ_i Σ_a |τ_bi − 1{u<0}| L_κ(u)` with
    /// `u = targets_ba − pred_bi`.
    pub fn quantile_huber(&mut self, pred: Var, targets: Tensor<S>, taus: Tensor<S>, kappa: S) -> Var {
        let pv = self.value(pred);
        let (b, n) = (pv.rows(), pv.cols());
        assert_eq!(taus.rows(), b, "taus batch mismatch");
        assert_eq!(taus.cols(), n, "taus width mismatch");
        assert_eq!(targets.rows(), b, "targets batch mismatch");
        let a = targets.cols();
        assert!(a > 0 && b > 0, "empty quantile loss");
        let mut total = S::zero();
        for r in 0..b {
            let mut row = S::zero();
            for (&p, &tau) in pv.row(r).iter().zip(taus.row(r)) {
                for &t in targets.row(r) {
                    row += quantile_huber_value(t - p, tau, kappa);
                }
            }
            total += row / lit(a as f64);
        }
        let t = Tensor::scalar(total / lit(b as f64));
        self.push(t, Op::QuantileHuber { pred, targets, taus, kappa }, &[pred])
    }

    /// Gradients of the one-element node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape().to_vec(), vec![S::one()]).unwrap());

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<S>>], v: Var, g: Tensor<S>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => {
                let shape = self.nodes[v.0].value.shape();
                *slot = Some(if g.shape() == shape { g } else { g.reshaped(shape).expect("grad shape") });
            }
        }
    }

    fn propagate(&self, op: &Op<S>, out: &Tensor<S>, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(x, w) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, k, m) = (xv.rows(), xv.cols(), wv.shape()[1]);
                if self.needs_grad(*x) {
                    // dX = G · Wᵀ
                    let mut wt = vec![S::zero(); m * k];
                    for i in 0..k {
                        for j in 0..m {
                            wt[j * k + i] = wv.values()[i * m + j];
                        }
                    }
                    let dx = matmul(g.values(), &wt, n, m, k);
                    self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                }
                if self.needs_grad(*w) {
                    // dW = Xᵀ · G
                    let mut dw = vec![S::zero(); k * m];
                    for r in 0..n {
                        let gr = &g.values()[r * m..(r + 1) * m];
                        for i in 0..k {
                            let xv = xv.values()[r * k + i];
                            if xv == S::zero() {
                                continue;
                            }
                            for (d, &gv) in dw[i * m..(i + 1) * m].iter_mut().zip(gr) {
                                *d += xv * gv;
                            }
                        }
                    }
                    self.accumulate(grads, *w, Tensor::new(wv.shape().to_vec(), dw).unwrap());
                }
            }
            Op::AddBias(x, b) => {
                if self.needs_grad(*b) {
                    let m = g.cols();
                    let mut db = vec![S::zero(); m];
                    for row in g.values().chunks(m) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    let shape = self.value(*b).shape().to_vec();
                    self.accumulate(grads, *b, Tensor::new(shape, db).unwrap());
                }
                self.accumulate(grads, *x, g.clone());
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.needs_grad(*b) {
                    self.accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs_grad(*a) {
                    self.accumulate(grads, *a, g.zip_map(&reshape_like(bv, g), |x, y| x * y));
                }
                if self.needs_grad(*b) {
                    self.accumulate(grads, *b, g.zip_map(&reshape_like(av, g), |x, y| x * y));
                }
            }
            Op::Min(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let take_b: Vec<bool> =
                    av.values().iter().zip(bv.values()).map(|(&x, &y)| y < x).collect();
                let pick = |want_b: bool| {
                    let vals = g
                        .values()
                        .iter()
                        .zip(&take_b)
                        .map(|(&gv, &tb)| if tb == want_b { gv } else { S::zero() })
                        .collect();
                    Tensor::new(g.shape().to_vec(), vals).unwrap()
                };
                if self.needs_grad(*a) {
                    self.accumulate(grads, *a, pick(false));
                }
                if self.needs_grad(*b) {
                    self.accumulate(grads, *b, pick(true));
                }
            }
            Op::MulConst(a, c) => {
                self.accumulate(grads, *a, g.zip_map(&reshape_like(c, g), |x, y| x * y));
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.map(|v| v * *s)),
            Op::AddConst(a) => self.accumulate(grads, *a, g.clone()),
            Op::Relu(a) => {
                let dg = g.zip_map(&reshape_like(out, g), |gv, o| if o > S::zero() { gv } else { S::zero() });
                self.accumulate(grads, *a, dg);
            }
            Op::Tanh(a) => {
                let dg = g.zip_map(&reshape_like(out, g), |gv, o| gv * (S::one() - o * o));
                self.accumulate(grads, *a, dg);
            }
            Op::Exp(a) => {
                let dg = g.zip_map(&reshape_like(out, g), |gv, o| gv * o);
                self.accumulate(grads, *a, dg);
            }
            Op::Clamp(a, lo, hi) => {
                let av = self.value(*a);
                let dg = g.zip_map(&reshape_like(av, g), |gv, x| {
                    if x > *lo && x < *hi {
                        gv
                    } else {
                        S::zero()
                    }
                });
                self.accumulate(grads, *a, dg);
            }
            Op::LogOneMinusTanhSq(a) => {
                let av = self.value(*a);
                let two = lit::<S>(2.0);
                let dg = g.zip_map(&reshape_like(av, g), |gv, x| -two * x.tanh() * gv);
                self.accumulate(grads, *a, dg);
            }
            Op::ConcatCols(a, b) => {
                let (p, q) = (self.value(*a).cols(), self.value(*b).cols());
                let n = g.rows();
                if self.needs_grad(*a) {
                    let vals = (0..n).flat_map(|r| g.values()[r * (p + q)..r * (p + q) + p].to_vec()).collect();
                    self.accumulate(grads, *a, Tensor::matrix(n, p, vals).unwrap());
                }
                if self.needs_grad(*b) {
                    let vals =
                        (0..n).flat_map(|r| g.values()[r * (p + q) + p..(r + 1) * (p + q)].to_vec()).collect();
                    self.accumulate(grads, *b, Tensor::matrix(n, q, vals).unwrap());
                }
            }
            Op::RepeatRows(a, times) => {
                let av = self.value(*a);
                let (n, m) = (av.rows(), av.cols());
                let mut d = vec![S::zero(); n * m];
                for r in 0..n {
                    for t in 0..*times {
                        let src = &g.values()[(r * times + t) * m..(r * times + t + 1) * m];
                        for (o, &v) in d[r * m..(r + 1) * m].iter_mut().zip(src) {
                            *o += v;
                        }
                    }
                }
                self.accumulate(grads, *a, Tensor::new(av.shape().to_vec(), d).unwrap());
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, g.clone().reshaped(&shape).unwrap());
            }
            Op::SumCols(a) => {
                let av = self.value(*a);
                let m = av.cols();
                let vals = g.values().iter().flat_map(|&v| std::iter::repeat(v).take(m)).collect();
                self.accumulate(grads, *a, Tensor::new(av.shape().to_vec(), vals).unwrap());
            }
            Op::MeanAll(a) => {
                let av = self.value(*a);
                let s = g.values()[0] / lit(av.len() as f64);
                self.accumulate(grads, *a, Tensor::full(av.shape(), s));
            }
            Op::QuantileHuber { pred, targets, taus, kappa } => {
                let pv = self.value(*pred);
                let (b, n) = (pv.rows(), pv.cols());
                let a = targets.cols();
                let scale = g.values()[0] / (lit::<S>(a as f64) * lit(b as f64));
                let mut d = vec![S::zero(); b * n];
                for r in 0..b {
                    for (i, (&p, &tau)) in pv.row(r).iter().zip(taus.row(r)).enumerate() {
                        let mut acc = S::zero();
                        for &t in targets.row(r) {
                            acc += quantile_huber_slope(t - p, tau, *kappa);
                        }
                        d[r * n + i] = -acc * scale;
                    }
                }
                self.accumulate(grads, *pred, Tensor::new(pv.shape().to_vec(), d).unwrap());
            }
        }
    }
}

fn reshape_like<S: Scalar>(t: &Tensor<S>, like: &Tensor<S>) -> Tensor<S> {
    if t.shape() == like.shape() {
        t.clone()
    } else {
        t.clone().reshaped(like.shape()).expect("reshape_like")
    }
}

pub(crate) fn log_one_minus_tanh_sq<S: Scalar>(x: S) -> S {
    let two = lit::<S>(2.0);
    let ln2 = lit::<S>(std::f64::consts::LN_2);
    two * (ln2 - x - softplus(-two * x))
}

pub(crate) fn softplus<S: Scalar>(x: S) -> S {
    // log(1 + e^x) without overflow
    x.max(S::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn huber_value<S: Scalar>(u: S, kappa: S) -> S {
    let a = u.abs();
    let half = lit::<S>(0.5);
    if a <= kappa {
        half * u * u
    } else {
        kappa * (a - half * kappa)
    }
}

#[inline]
pub(crate) fn quantile_huber_value<S: Scalar>(u: S, tau: S, kappa: S) -> S {
    let ind = if u < S::zero() { S::one() } else { S::zero() };
    (tau - ind).abs() * huber_value(u, kappa)
}

/// d/du of the quantile Huber loss.
#[inline]
pub(crate) fn quantile_huber_slope<S: Scalar>(u: S, tau: S, kappa: S) -> S {
    let ind = if u < S::zero() { S::one() } else { S::zero() };
    (tau - ind).abs() * u.max(-kappa).min(kappa)
}
