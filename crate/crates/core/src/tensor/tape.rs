//! Reverse-mode differentiation over an explicit tape.
//!
//! Every primitive appends one node holding its forward value. `backward`
//! walks the tape in reverse, accumulating gradients only along nodes that
//! depend on a parameter leaf.

use super::matrix::{normalize_with_scales, Tensor2};
use crate::error::{Error, Result};

/// Probability clamp used by the binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    /// `A * A^T`
    Gram(Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    ZeroDiag(Var),
    Clamp(Var, f64, f64),
    ClampPassThrough(Var),
    RowSums(Var),
    ConcatCols(Var, Var),
    Normalize(Var, Vec<f64>),
    MeanRows(Var),
    Sum(Var),
    Scale(Var, f64),
    Bce(Var, f64),
    BceLogits(Var, f64),
}

struct Node {
    value: Tensor2,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor2>>,
}

/// `-[t ln p + (1 - t) ln(1 - p)]` with `p` clamped to `[eps, 1 - eps]`.
pub fn bce(p: f64, target: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

fn bce_grad(p: f64, target: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -target / p + (1.0 - target) / (1.0 - p)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor2, op: Op, needs_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite value from {op:?}");
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn param(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Param, true)
    }

    fn check(&self, ok: bool, what: impl FnOnce() -> String) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(what()))
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        self.check(ac == br, || format!("matmul {ar}x{ac} by {br}x{bc}"))?;
        let out = self.value(a).matmul_unchecked(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    pub fn gram(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = av.matmul_t(av);
        let ng = self.ng(a);
        self.push(out, Op::Gram(a), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        self.check(sa == sb, || format!("add {sa:?} and {sb:?}"))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    /// Row sums, `rows x cols -> rows x 1`.
    pub fn row_sums(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data = v
            .data()
            .chunks(v.cols().max(1))
            .map(|r| r.iter().sum())
            .collect();
        let out = Tensor2::from_vec(v.rows(), 1, data).expect("sized by construction");
        let ng = self.ng(a);
        self.push(out, Op::RowSums(a), ng)
    }

    /// `[a | b]` for matrices with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        self.check(va.rows() == vb.rows(), || {
            format!("concat {:?} with {:?}", va.shape(), vb.shape())
        })?;
        let (ca, cb) = (va.cols(), vb.cols());
        let mut out = Tensor2::zeros(va.rows(), ca + cb);
        for i in 0..va.rows() {
            for j in 0..ca {
                out.set(i, j, va.get(i, j));
            }
            for j in 0..cb {
                out.set(i, ca + j, vb.get(i, j));
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::ConcatCols(a, b), ng))
    }

    /// Adds a `1 x cols` bias row to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.value(a).shape();
        let sb = self.value(bias).shape();
        self.check(sb == (1, c), || format!("bias {sb:?} for {r}x{c} input"))?;
        let mut out = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for row in out.data_mut().chunks_mut(c) {
            for (x, y) in row.iter_mut().zip(&b) {
                *x += y;
            }
        }
        let ng = self.ng(a) || self.ng(bias);
        Ok(self.push(out, Op::AddRowBias(a, bias), ng))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(out, Op::Sigmoid(a), ng)
    }

    pub fn zero_diag(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let n = out.rows().min(out.cols());
        for i in 0..n {
            out.set(i, i, 0.0);
        }
        let ng = self.ng(a);
        self.push(out, Op::ZeroDiag(a), ng)
    }

    /// Entrywise clamp into `[lo, hi]`. The gradient passes where the input
    /// lies inside the closed interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        let ng = self.ng(a);
        self.push(out, Op::Clamp(a, lo, hi), ng)
    }

    /// Entrywise clamp into `[lo, hi]` whose gradient is the identity, so
    /// saturated entries still receive a learning signal.
    pub fn clamp_pass_through(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        let ng = self.ng(a);
        self.push(out, Op::ClampPassThrough(a), ng)
    }

    /// Symmetric GCN normalization of a square nonnegative matrix.
    pub fn normalize_adjacency(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).shape();
        self.check(r == c, || format!("normalize {r}x{c}"))?;
        let (out, scales) = normalize_with_scales(self.value(a));
        let ng = self.ng(a);
        Ok(self.push(out, Op::Normalize(a, scales), ng))
    }

    /// Column means, `rows x cols -> 1 x cols`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let (r, c) = v.shape();
        let mut out = Tensor2::zeros(1, c);
        for row in v.data().chunks(c) {
            for (o, x) in out.data_mut().iter_mut().zip(row) {
                *o += x;
            }
        }
        let out = out.scale(1.0 / r as f64);
        let ng = self.ng(a);
        self.push(out, Op::MeanRows(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor2::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(out, Op::Sum(a), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    /// Binary cross-entropy of a `1 x 1` probability against `target`.
    pub fn bce(&mut self, p: Var, target: f64) -> Result<Var> {
        let s = self.value(p).shape();
        self.check(s == (1, 1), || format!("bce on {s:?}"))?;
        let out = Tensor2::scalar(bce(self.value(p).item(), target));
        let ng = self.ng(p);
        Ok(self.push(out, Op::Bce(p, target), ng))
    }

    /// `bce(sigmoid(logit), target)`. The gradient with respect to the logit
    /// is `sigmoid(logit) - target`, which stays informative where the
    /// clamped loss is flat.
    pub fn bce_with_logits(&mut self, logit: Var, target: f64) -> Result<Var> {
        let s = self.value(logit).shape();
        self.check(s == (1, 1), || format!("bce on {s:?}"))?;
        let out = Tensor2::scalar(bce(sigmoid(self.value(logit).item()), target));
        let ng = self.ng(logit);
        Ok(self.push(out, Op::BceLogits(logit, target), ng))
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor2> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Back-propagates from the scalar node `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::NoForward);
        }
        let s = self.value(loss).shape();
        if s != (1, 1) {
            return Err(Error::Shape(format!("backward from non-scalar {s:?}")));
        }
        let mut grads: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = Some(g);
                continue;
            }
            let send = |v: Var, d: Tensor2, grads: &mut Vec<Option<Tensor2>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&d),
                    slot @ None => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Constant | Op::Param => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.ng(*a) {
                        send(*a, g.matmul_t(bv), &mut grads);
                    }
                    if self.ng(*b) {
                        send(*b, av.t_matmul(&g), &mut grads);
                    }
                }
                Op::Gram(a) => {
                    let sym = g.zip_map(&g.transpose(), |x, y| x + y);
                    send(*a, sym.matmul_unchecked(self.value(*a)), &mut grads);
                }
                Op::Add(a, b) => {
                    send(*a, g.clone(), &mut grads);
                    send(*b, g.clone(), &mut grads);
                }
                Op::AddRowBias(a, b) => {
                    let c = g.cols();
                    let mut db = Tensor2::zeros(1, c);
                    for row in g.data().chunks(c) {
                        for (o, x) in db.data_mut().iter_mut().zip(row) {
                            *o += x;
                        }
                    }
                    send(*b, db, &mut grads);
                    send(*a, g.clone(), &mut grads);
                }
                Op::Tanh(a) => {
                    let d = g.zip_map(&node.value, |gi, y| gi * (1.0 - y * y));
                    send(*a, d, &mut grads);
                }
                Op::Sigmoid(a) => {
                    let d = g.zip_map(&node.value, |gi, y| gi * y * (1.0 - y));
                    send(*a, d, &mut grads);
                }
                Op::ZeroDiag(a) => {
                    let mut d = g.clone();
                    for i in 0..d.rows().min(d.cols()) {
                        d.set(i, i, 0.0);
                    }
                    send(*a, d, &mut grads);
                }
                Op::RowSums(a) => {
                    let (r, c) = self.value(*a).shape();
                    let mut d = Tensor2::zeros(r, c);
                    for i in 0..r {
                        for j in 0..c {
                            d.set(i, j, g.get(i, 0));
                        }
                    }
                    send(*a, d, &mut grads);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let mut da = Tensor2::zeros(g.rows(), ca);
                    let mut db = Tensor2::zeros(g.rows(), cb);
                    for i in 0..g.rows() {
                        for j in 0..ca {
                            da.set(i, j, g.get(i, j));
                        }
                        for j in 0..cb {
                            db.set(i, j, g.get(i, ca + j));
                        }
                    }
                    send(*a, da, &mut grads);
                    send(*b, db, &mut grads);
                }
                Op::ClampPassThrough(a) => send(*a, g.clone(), &mut grads),
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let d = g.zip_map(
                        self.value(*a),
                        |gi, x| {
                            if x >= lo && x <= hi {
                                gi
                            } else {
                                0.0
                            }
                        },
                    );
                    send(*a, d, &mut grads);
                }
                Op::Normalize(a, r) => {
                    // N_ij = r_i S_ij r_j, S = A + I, r_i = (sum_j S_ij)^-1/2
                    let av = self.value(*a);
                    let n = av.rows();
                    let s = |i: usize, j: usize| av.get(i, j) + if i == j { 1.0 } else { 0.0 };
                    let mut dr = vec![0.0; n];
                    for i in 0..n {
                        for j in 0..n {
                            let gs = g.get(i, j) * s(i, j);
                            dr[i] += gs * r[j];
                            dr[j] += gs * r[i];
                        }
                    }
                    // dr_i / dd_i = -r_i^3 / 2
                    let dd: Vec<f64> = (0..n).map(|i| -0.5 * dr[i] * r[i].powi(3)).collect();
                    let mut d = Tensor2::zeros(n, n);
                    for i in 0..n {
                        for j in 0..n {
                            d.set(i, j, g.get(i, j) * r[i] * r[j] + dd[i]);
                        }
                    }
                    send(*a, d, &mut grads);
                }
                Op::MeanRows(a) => {
                    let (r, c) = self.value(*a).shape();
                    let mut d = Tensor2::zeros(r, c);
                    let inv = 1.0 / r as f64;
                    for row in d.data_mut().chunks_mut(c) {
                        for (o, x) in row.iter_mut().zip(g.data()) {
                            *o = x * inv;
                        }
                    }
                    send(*a, d, &mut grads);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    send(*a, Tensor2::filled(r, c, g.item()), &mut grads);
                }
                Op::Scale(a, k) => {
                    send(*a, g.scale(*k), &mut grads);
                }
                Op::Bce(p, t) => {
                    let d = g.item() * bce_grad(self.value(*p).item(), *t);
                    send(*p, Tensor2::scalar(d), &mut grads);
                }
                Op::BceLogits(x, t) => {
                    let d = g.item() * (sigmoid(self.value(*x).item()) - t);
                    send(*x, Tensor2::scalar(d), &mut grads);
                }
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_values() {
        assert!((bce(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce(1.0 - BCE_EPS, 1.0) < 1e-6);
        let at_eps = bce(0.0, 1.0);
        assert!(at_eps.is_finite());
        assert!((at_eps + BCE_EPS.ln()).abs() < 1e-9);
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        // loss = sum(W x) for W: 2x3, x: 3x1 -> dL/dW = 1 x^T
        let mut tape = Tape::new();
        let w = tape.param(Tensor2::from_vec(2, 3, vec![0.3, -1.0, 2.0, 0.0, 0.5, 1.0]).unwrap());
        let x = tape.constant(Tensor2::from_vec(3, 1, vec![1.0, 2.0, -3.0]).unwrap());
        let y = tape.matmul(w, x).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        let g = tape.grad(w).unwrap();
        assert_eq!(g.data(), &[1.0, 2.0, -3.0, 1.0, 2.0, -3.0]);
        assert!(tape.grad(x).is_none());
    }

    #[test]
    fn tanh_derivative_at_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor2::scalar(0.0));
        let y = tape.tanh(x);
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().item(), 1.0);
    }

    #[test]
    fn backward_errors() {
        let mut tape = Tape::new();
        assert!(matches!(tape.backward(Var(0)), Err(Error::NoForward)));
        let x = tape.param(Tensor2::zeros(2, 2));
        assert!(matches!(tape.backward(x), Err(Error::Shape(_))));
    }
}
