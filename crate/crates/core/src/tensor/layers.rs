use rand::Rng;

use super::matrix::Tensor2;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// A trainable matrix with its gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor2,
    pub grad: Tensor2,
}

impl Param {
    pub fn new(value: Tensor2) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Tensor2::zeros(r, c),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> Var {
        tape.param(self.value.clone())
    }

    /// Adds the tape's gradient for `var` into the buffer.
    pub fn accumulate(&mut self, tape: &Tape, var: Var) {
        if let Some(g) = tape.grad(var) {
            self.grad.add_assign(g);
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Glorot/Xavier uniform initialization, `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor2 {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    Tensor2::from_vec(rows, cols, data).expect("sized by construction")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

/// One graph convolution, `act(A_norm X W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayer {
    pub weight: Param,
    /// Row vector added to every node.
    pub bias: Param,
}

impl GcnLayer {
    /// Layer with a zero bias.
    pub fn new(weight: Tensor2) -> Self {
        let cols = weight.cols();
        Self::with_bias(weight, Tensor2::zeros(1, cols))
    }

    pub fn with_bias(weight: Tensor2, bias: Tensor2) -> Self {
        Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
        }
    }

    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self::new(glorot_uniform(in_dim, out_dim, rng))
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    /// Forward pass with already-bound weight and bias variables.
    pub fn forward(
        tape: &mut Tape,
        x: Var,
        a_norm: Var,
        weight: Var,
        bias: Var,
        act: Activation,
    ) -> Result<Var> {
        let in_dim = tape.value(weight).rows();
        let out_dim = tape.value(weight).cols();
        // Multiply through the narrower side first.
        let pre = if in_dim <= out_dim {
            let ax = tape.matmul(a_norm, x)?;
            tape.matmul(ax, weight)?
        } else {
            let xw = tape.matmul(x, weight)?;
            tape.matmul(a_norm, xw)?
        };
        let pre = tape.add_row_bias(pre, bias)?;
        Ok(act.apply(tape, pre))
    }
}

/// Evaluates a single GCN layer outside of training.
pub fn gcn_forward(
    x: &Tensor2,
    a_norm: &Tensor2,
    layer: &GcnLayer,
    act: Activation,
) -> Result<Tensor2> {
    if a_norm.rows() != a_norm.cols() || a_norm.cols() != x.rows() {
        return Err(Error::Shape(format!(
            "adjacency {:?} does not match features {:?}",
            a_norm.shape(),
            x.shape()
        )));
    }
    if x.cols() != layer.in_dim() {
        return Err(Error::Shape(format!(
            "features have {} columns, layer expects {}",
            x.cols(),
            layer.in_dim()
        )));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let av = tape.constant(a_norm.clone());
    let wv = tape.constant(layer.weight.value.clone());
    let bv = tape.constant(layer.bias.value.clone());
    let out = GcnLayer::forward(&mut tape, xv, av, wv, bv, act)?;
    Ok(tape.value(out).clone())
}

/// Affine map `x W + b` on row vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::new(glorot_uniform(in_dim, out_dim, rng)),
            bias: Param::new(Tensor2::zeros(1, out_dim)),
        }
    }

    pub fn forward(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xw = tape.matmul(x, weight)?;
        tape.add_row_bias(xw, bias)
    }
}
