//! Residual graph generator and GCN discriminator.
//!
//! The generator encodes `(X, A)` with a two-layer GCN into node embeddings
//! `Z`, decodes `tanh(Z Z^T)` as a residual with zero diagonal and adds it to
//! `A`. Clamping the sum into `[0, 1]` gives the edge-probability matrix used
//! both by the discriminator and by the sampler.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::graph::{ClassId, Graph};
use crate::tensor::{normalize_adjacency, Activation, GcnLayer, Linear, Param, Tape, Tensor2, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    pub encoder_hidden: usize,
    pub latent: usize,
    pub discriminator_hidden: usize,
    /// Learn `X_hat` from `Z` instead of passing `X` through.
    pub feature_head: bool,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: 32,
            latent: 16,
            discriminator_hidden: 32,
            feature_head: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub encoder: [GcnLayer; 2],
    pub feature_head: Option<Linear>,
}

/// Output of one generator pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedGraph {
    pub x_hat: Tensor2,
    /// `tanh(Z Z^T)` with zero diagonal, entries in `(-1, 1)`.
    pub residual: Tensor2,
    /// `A + residual`.
    pub combined: Tensor2,
    /// `clamp(A + residual, 0, 1)`, symmetric with zero diagonal.
    pub prob: Tensor2,
}

/// Tape handles of a generator pass.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorVars {
    pub z: Var,
    pub residual: Var,
    pub prob: Var,
    pub x_hat: Var,
}

fn check_input(g: &Graph, expected_dim: usize) -> Result<()> {
    if g.d() != expected_dim {
        return Err(Error::Shape(format!(
            "graph feature dim {} does not match model input {expected_dim}",
            g.d()
        )));
    }
    Ok(())
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(
        feature_dim: usize,
        arch: &ArchitectureConfig,
        rng: &mut R,
    ) -> Self {
        Self {
            encoder: [
                GcnLayer::glorot(feature_dim + 1, arch.encoder_hidden, rng),
                GcnLayer::glorot(arch.encoder_hidden, arch.latent, rng),
            ],
            feature_head: arch
                .feature_head
                .then(|| Linear::glorot(arch.latent, feature_dim, rng)),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder[0].in_dim() - 1
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder[1].out_dim()
    }

    pub fn params(&self) -> Vec<&Param> {
        let [e0, e1] = &self.encoder;
        let mut out = vec![&e0.weight, &e0.bias, &e1.weight, &e1.bias];
        if let Some(h) = &self.feature_head {
            out.push(&h.weight);
            out.push(&h.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let [e0, e1] = &mut self.encoder;
        let mut out = vec![&mut e0.weight, &mut e0.bias, &mut e1.weight, &mut e1.bias];
        if let Some(h) = &mut self.feature_head {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|p| p.bind(tape)).collect()
    }

    pub fn accumulate(&mut self, tape: &Tape, vars: &[Var]) {
        for (p, v) in self.params_mut().into_iter().zip(vars) {
            p.accumulate(tape, *v);
        }
    }

    /// `Z = GCN_2(tanh(GCN_1([X | deg], A_norm)), A_norm)` on the tape.
    pub fn encode_on(&self, tape: &mut Tape, vars: &[Var], g: &Graph) -> Result<Var> {
        check_input(g, self.feature_dim())?;
        let x = tape.constant(g.features_with_degree());
        let a = tape.constant(normalize_adjacency(g.adjacency()));
        let h = GcnLayer::forward(tape, x, a, vars[0], vars[1], Activation::Tanh)?;
        GcnLayer::forward(tape, h, a, vars[2], vars[3], Activation::Identity)
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], g: &Graph) -> Result<GeneratorVars> {
        let z = self.encode_on(tape, vars, g)?;
        let residual = decode_residual_on(tape, z);
        let a = tape.constant(g.adjacency().clone());
        let combined = tape.add(a, residual)?;
        let prob = tape.clamp_pass_through(combined, 0.0, 1.0);
        let x_hat = match &self.feature_head {
            Some(_) => Linear::forward(tape, z, vars[4], vars[5])?,
            None => tape.constant(g.features().clone()),
        };
        Ok(GeneratorVars {
            z,
            residual,
            prob,
            x_hat,
        })
    }

    pub fn encode(&self, g: &Graph) -> Result<Tensor2> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let z = self.encode_on(&mut tape, &vars, g)?;
        Ok(tape.value(z).clone())
    }

    pub fn generate(&self, g: &Graph) -> Result<GeneratedGraph> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let out = self.forward(&mut tape, &vars, g)?;
        let residual = tape.value(out.residual).clone();
        let mut combined = g.adjacency().clone();
        combined.add_assign(&residual);
        let generated = GeneratedGraph {
            x_hat: tape.value(out.x_hat).clone(),
            residual,
            combined,
            prob: tape.value(out.prob).clone(),
        };
        debug_assert!(generated.prob.is_symmetric());
        Ok(generated)
    }
}

fn decode_residual_on(tape: &mut Tape, z: Var) -> Var {
    let zz = tape.gram(z);
    let t = tape.tanh(zz);
    tape.zero_diag(t)
}

/// `tanh(Z Z^T)` with its diagonal zeroed.
pub fn decode_residual(z: &Tensor2) -> Tensor2 {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let r = decode_residual_on(&mut tape, zv);
    tape.value(r).clone()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub layers: [GcnLayer; 2],
    pub head: Linear,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(
        feature_dim: usize,
        arch: &ArchitectureConfig,
        rng: &mut R,
    ) -> Self {
        let h = arch.discriminator_hidden;
        Self {
            layers: [
                GcnLayer::glorot(feature_dim + 1, h, rng),
                GcnLayer::glorot(h, h, rng),
            ],
            head: Linear::glorot(h, 1, rng),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[0].in_dim() - 1
    }

    pub fn params(&self) -> Vec<&Param> {
        let [l0, l1] = &self.layers;
        vec![
            &l0.weight,
            &l0.bias,
            &l1.weight,
            &l1.bias,
            &self.head.weight,
            &self.head.bias,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let [l0, l1] = &mut self.layers;
        vec![
            &mut l0.weight,
            &mut l0.bias,
            &mut l1.weight,
            &mut l1.bias,
            &mut self.head.weight,
            &mut self.head.bias,
        ]
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|p| p.bind(tape)).collect()
    }

    pub fn accumulate(&mut self, tape: &Tape, vars: &[Var]) {
        for (p, v) in self.params_mut().into_iter().zip(vars) {
            p.accumulate(tape, *v);
        }
    }

    /// Probability that `(x, adjacency)` is real.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var, adjacency: Var) -> Result<Var> {
        let logit = self.forward_logit(tape, vars, x, adjacency)?;
        Ok(tape.sigmoid(logit))
    }

    /// Pre-sigmoid score of `(x, adjacency)`. The adjacency is clamped into
    /// `[0, 1]`; its weighted degree is appended to the node features.
    pub fn forward_logit(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        adjacency: Var,
    ) -> Result<Var> {
        let (n, d) = tape.value(x).shape();
        let s = tape.value(adjacency).shape();
        if d != self.feature_dim() || s != (n, n) {
            return Err(Error::Shape(format!(
                "discriminator expects n x {} features and n x n adjacency, got {n}x{d} and {s:?}",
                self.feature_dim()
            )));
        }
        let a = tape.clamp(adjacency, 0.0, 1.0);
        let deg = tape.row_sums(a);
        let x = tape.concat_cols(x, deg)?;
        let a = tape.normalize_adjacency(a)?;
        let h = GcnLayer::forward(tape, x, a, vars[0], vars[1], Activation::Tanh)?;
        let h = GcnLayer::forward(tape, h, a, vars[2], vars[3], Activation::Tanh)?;
        let pooled = tape.mean_rows(h);
        Linear::forward(tape, pooled, vars[4], vars[5])
    }

    pub fn discriminate(&self, x: &Tensor2, adjacency: &Tensor2) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let av = tape.constant(adjacency.clone());
        let p = self.forward(&mut tape, &vars, xv, av)?;
        Ok(tape.value(p).item())
    }
}

/// A trained generator/discriminator pair for one explainee class.
#[derive(Clone, Debug, PartialEq)]
pub struct GanModel {
    pub explainee: ClassId,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

const GEN_NAMES: [&str; 6] = [
    "gen_enc0_w",
    "gen_enc0_b",
    "gen_enc1_w",
    "gen_enc1_b",
    "gen_head_w",
    "gen_head_b",
];
const DISC_NAMES: [&str; 6] = [
    "disc_gcn0_w",
    "disc_gcn0_b",
    "disc_gcn1_w",
    "disc_gcn1_b",
    "disc_head_w",
    "disc_head_b",
];

impl GanModel {
    pub fn new<R: Rng + ?Sized>(
        explainee: ClassId,
        feature_dim: usize,
        arch: &ArchitectureConfig,
        rng: &mut R,
    ) -> Self {
        let generator = Generator::new(feature_dim, arch, rng);
        let discriminator = Discriminator::new(feature_dim, arch, rng);
        Self {
            explainee,
            generator,
            discriminator,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set("model", "residual-gan");
        ck.set("explainee_class", self.explainee);
        ck.set("feature_dim", self.generator.feature_dim());
        ck.set(
            "generator_layers",
            format!(
                "{} {} {}",
                self.generator.feature_dim(),
                self.generator.encoder[0].out_dim(),
                self.generator.latent_dim()
            ),
        );
        ck.set(
            "discriminator_layers",
            format!(
                "{} {} {} 1",
                self.discriminator.feature_dim(),
                self.discriminator.layers[0].out_dim(),
                self.discriminator.layers[1].out_dim()
            ),
        );
        ck.set("feature_head", self.generator.feature_head.is_some());
        for (name, p) in GEN_NAMES.iter().zip(self.generator.params()) {
            ck.push(*name, &p.value);
        }
        for (name, p) in DISC_NAMES.iter().zip(self.discriminator.params()) {
            ck.push(*name, &p.value);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.get("model") != Some("residual-gan") {
            return Err(Error::Config(
                "checkpoint does not hold a residual GAN".into(),
            ));
        }
        let explainee: ClassId = ck.get_parsed("explainee_class")?;
        let head: bool = ck.get_parsed("feature_head")?;
        let t = |name: &str| ck.tensor(name).cloned();
        let generator = Generator {
            encoder: [
                GcnLayer::with_bias(t(GEN_NAMES[0])?, t(GEN_NAMES[1])?),
                GcnLayer::with_bias(t(GEN_NAMES[2])?, t(GEN_NAMES[3])?),
            ],
            feature_head: if head {
                Some(Linear {
                    weight: Param::new(t(GEN_NAMES[4])?),
                    bias: Param::new(t(GEN_NAMES[5])?),
                })
            } else {
                None
            },
        };
        let discriminator = Discriminator {
            layers: [
                GcnLayer::with_bias(t(DISC_NAMES[0])?, t(DISC_NAMES[1])?),
                GcnLayer::with_bias(t(DISC_NAMES[2])?, t(DISC_NAMES[3])?),
            ],
            head: Linear {
                weight: Param::new(t(DISC_NAMES[4])?),
                bias: Param::new(t(DISC_NAMES[5])?),
            },
        };
        Ok(Self {
            explainee,
            generator,
            discriminator,
        })
    }
}
