//! Dense row-major matrices, a reverse-mode tape over the handful of
//! primitives the models need, GCN/linear layers and the Adam optimizer.

mod layers;
mod matrix;
mod optim;
mod tape;

pub use layers::{gcn_forward, glorot_uniform, Activation, GcnLayer, Linear, Param};
pub use matrix::{normalize_adjacency, Tensor2};
pub use optim::{Adam, AdamConfig};
pub use tape::{bce, Tape, Var, BCE_EPS};
