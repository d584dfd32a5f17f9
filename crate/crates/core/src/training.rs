//! Adversarial training of the residual generator for one explainee class.
//!
//! The discriminator sees oracle-predicted counter-class graphs as real and
//! generated graphs as fake; generated graphs the oracle already places
//! outside the explainee class are additionally presented as real. The
//! generator is trained with the non-saturating objective through a frozen
//! discriminator. One discriminator step is followed by one generator step
//! for every explainee-class instance.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ClassId, Dataset, FoldAssignment, Graph};
use crate::models::{ArchitectureConfig, GanModel, Generator};
use crate::oracle::OracleHandle;
use crate::tensor::{Adam, AdamConfig, Tape, Tensor2};

/// How generated graphs accepted by the oracle enter the discriminator loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcceptedTerm {
    /// Presented with target 1, next to the target-0 term every generated
    /// graph receives.
    #[default]
    AsReal,
    /// An extra target-0 term weighted by the oracle indicator.
    AsFake,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    pub seed: u64,
    /// Emit a progress line on stderr every `log_every` epochs (0 = silent).
    pub log_every: usize,
    pub accepted_term: AcceptedTerm,
    pub architecture: ArchitectureConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            generator_lr: 1e-3,
            discriminator_lr: 1e-3,
            seed: 0,
            log_every: 0,
            accepted_term: AcceptedTerm::AsReal,
            architecture: ArchitectureConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.generator_lr > 0.0 && self.discriminator_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        let a = &self.architecture;
        if a.latent == 0 || a.encoder_hidden == 0 || a.discriminator_hidden == 0 {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch mean losses and mean residual norm.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub generator: Vec<f64>,
    pub discriminator: Vec<f64>,
    /// Mean Frobenius norm of the generated residual over the epoch.
    pub residual_norm: Vec<f64>,
    /// Fraction of generated graphs the oracle placed outside the explainee
    /// class.
    pub accepted_rate: Vec<f64>,
}

impl LossTrace {
    pub fn len(&self) -> usize {
        self.generator.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generator.is_empty()
    }

    /// Tab-separated `epoch gen_loss disc_loss residual_norm accepted_rate`
    /// rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tgen_loss\tdisc_loss\tresidual_norm\taccepted_rate\n");
        for (e, (((g, d), r), a)) in self
            .generator
            .iter()
            .zip(&self.discriminator)
            .zip(&self.residual_norm)
            .zip(&self.accepted_rate)
            .enumerate()
        {
            let _ = writeln!(out, "{}\t{g}\t{d}\t{r}\t{a}", e + 1);
        }
        out
    }
}

/// Receives the dataset indices that flow into each side of the training
/// loop.
pub trait DataPathObserver {
    fn generator_input(&mut self, _index: usize) {}
    fn discriminator_real(&mut self, _index: usize) {}
}

struct NoObserver;
impl DataPathObserver for NoObserver {}

/// Splits `indices` by oracle prediction into the explainee class `c` and
/// its complement.
pub fn split_by_class(
    ds: &Dataset,
    indices: &[usize],
    oracle: &OracleHandle,
    c: ClassId,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut in_class = Vec::new();
    let mut others = Vec::new();
    for &i in indices {
        if oracle.predict(&ds.instances[i].graph)? == c {
            in_class.push(i);
        } else {
            others.push(i);
        }
    }
    if in_class.is_empty() {
        return Err(Error::EmptyPartition(c));
    }
    if others.is_empty() {
        return Err(Error::EmptyPartition(1 - c));
    }
    Ok((in_class, others))
}

/// The binary graph the oracle judges for a generated probability matrix:
/// edges where `prob >= 0.5`.
pub fn threshold_graph(g: &Graph, prob: &Tensor2) -> Result<Graph> {
    let mut out = g.clone();
    for u in 0..g.n() {
        for v in (u + 1)..g.n() {
            out.set_edge(u, v, prob.get(u, v) >= 0.5)?;
        }
    }
    Ok(out)
}

/// Optimizer state for one generator/discriminator pair.
pub struct Trainer {
    pub model: GanModel,
    gen_opt: Adam,
    disc_opt: Adam,
    accepted_term: AcceptedTerm,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpochStats {
    pub generator_loss: f64,
    pub discriminator_loss: f64,
    pub residual_norm: f64,
    pub accepted_rate: f64,
}

impl Trainer {
    pub fn new(model: GanModel, cfg: &TrainConfig) -> Self {
        let gen_opt = Adam::new(
            AdamConfig::with_lr(cfg.generator_lr),
            &model.generator.params(),
        );
        let disc_opt = Adam::new(
            AdamConfig::with_lr(cfg.discriminator_lr),
            &model.discriminator.params(),
        );
        Self {
            model,
            gen_opt,
            disc_opt,
            accepted_term: cfg.accepted_term,
        }
    }

    /// One discriminator update: `real` with target 1, the generated version
    /// of `source` with target 0, and the oracle-dependent accepted term.
    /// Returns the loss, the residual norm and whether the oracle accepted
    /// the generated graph.
    fn discriminator_step(
        &mut self,
        real: &Graph,
        source: &Graph,
        oracle: &OracleHandle,
    ) -> Result<(f64, f64, bool)> {
        let c = self.model.explainee;
        let generated = self.model.generator.generate(source)?;
        let accepted = oracle.predict(&threshold_graph(source, &generated.prob)?)? != c;

        let disc = &mut self.model.discriminator;
        let mut tape = Tape::new();
        let vars = disc.bind(&mut tape);
        let xr = tape.constant(real.features().clone());
        let ar = tape.constant(real.adjacency().clone());
        let p_real = disc.forward_logit(&mut tape, &vars, xr, ar)?;
        let xg = tape.constant(generated.x_hat.clone());
        let ag = tape.constant(generated.prob.clone());
        let p_fake = disc.forward_logit(&mut tape, &vars, xg, ag)?;

        let l_real = tape.bce_with_logits(p_real, 1.0)?;
        let l_fake = tape.bce_with_logits(p_fake, 0.0)?;
        let mut loss = tape.add(l_real, l_fake)?;
        if accepted {
            let target = match self.accepted_term {
                AcceptedTerm::AsReal => 1.0,
                AcceptedTerm::AsFake => 0.0,
            };
            let l_acc = tape.bce_with_logits(p_fake, target)?;
            loss = tape.add(loss, l_acc)?;
        }
        tape.backward(loss)?;
        disc.accumulate(&tape, &vars);
        self.disc_opt.step(&mut disc.params_mut())?;
        Ok((
            tape.value(loss).item(),
            generated.residual.frobenius_norm(),
            accepted,
        ))
    }

    /// One generator update maximizing `log D(G(source))`.
    fn generator_step(&mut self, source: &Graph) -> Result<f64> {
        let gen = &mut self.model.generator;
        let disc = &self.model.discriminator;
        let mut tape = Tape::new();
        let gvars = gen.bind(&mut tape);
        let dvars: Vec<_> = disc
            .params()
            .into_iter()
            .map(|p| tape.constant(p.value.clone()))
            .collect();
        let out = gen.forward(&mut tape, &gvars, source)?;
        let logit = disc.forward_logit(&mut tape, &dvars, out.x_hat, out.prob)?;
        let loss = tape.bce_with_logits(logit, 1.0)?;
        tape.backward(loss)?;
        gen.accumulate(&tape, &gvars);
        self.gen_opt.step(&mut gen.params_mut())?;
        Ok(tape.value(loss).item())
    }

    /// One pass over the shuffled explainee-class instances.
    pub fn train_epoch(
        &mut self,
        ds: &Dataset,
        in_class: &[usize],
        others: &[usize],
        oracle: &OracleHandle,
        rng: &mut ChaCha8Rng,
        observer: &mut dyn DataPathObserver,
    ) -> Result<EpochStats> {
        if in_class.is_empty() {
            return Err(Error::EmptyPartition(self.model.explainee));
        }
        if others.is_empty() {
            return Err(Error::EmptyPartition(1 - self.model.explainee));
        }
        let mut gen_order = in_class.to_vec();
        let mut real_order = others.to_vec();
        gen_order.shuffle(rng);
        real_order.shuffle(rng);

        let mut stats = EpochStats::default();
        for (step, &gi) in gen_order.iter().enumerate() {
            let ri = real_order[step % real_order.len()];
            observer.discriminator_real(ri);
            observer.generator_input(gi);
            let source = &ds.instances[gi].graph;
            let (d_loss, r_norm, accepted) =
                self.discriminator_step(&ds.instances[ri].graph, source, oracle)?;
            let g_loss = self.generator_step(source)?;
            stats.discriminator_loss += d_loss;
            stats.generator_loss += g_loss;
            stats.residual_norm += r_norm;
            stats.accepted_rate += f64::from(u8::from(accepted));
        }
        let k = gen_order.len() as f64;
        stats.discriminator_loss /= k;
        stats.generator_loss /= k;
        stats.residual_norm /= k;
        stats.accepted_rate /= k;
        Ok(stats)
    }
}

/// Derives an independent stream seed from a master seed and a tag tuple.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z = master
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains a pair for explainee class `c` on the given training indices.
pub fn train_class(
    ds: &Dataset,
    train_indices: &[usize],
    oracle: &OracleHandle,
    cfg: &TrainConfig,
    c: ClassId,
    seed: u64,
) -> Result<(GanModel, LossTrace)> {
    train_class_observed(ds, train_indices, oracle, cfg, c, seed, &mut NoObserver)
}

pub fn train_class_observed(
    ds: &Dataset,
    train_indices: &[usize],
    oracle: &OracleHandle,
    cfg: &TrainConfig,
    c: ClassId,
    seed: u64,
    observer: &mut dyn DataPathObserver,
) -> Result<(GanModel, LossTrace)> {
    cfg.validate()?;
    let (in_class, others) = split_by_class(ds, train_indices, oracle, c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = GanModel::new(c, ds.feature_dim(), &cfg.architecture, &mut rng);
    let mut trainer = Trainer::new(model, cfg);
    let mut trace = LossTrace::default();
    for epoch in 1..=cfg.epochs {
        let s = trainer.train_epoch(ds, &in_class, &others, oracle, &mut rng, observer)?;
        for (what, v) in [
            ("generator loss", s.generator_loss),
            ("discriminator loss", s.discriminator_loss),
            ("residual norm", s.residual_norm),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    what: what.to_string(),
                });
            }
        }
        trace.generator.push(s.generator_loss);
        trace.discriminator.push(s.discriminator_loss);
        trace.residual_norm.push(s.residual_norm);
        trace.accepted_rate.push(s.accepted_rate);
        if cfg.log_every > 0 && epoch % cfg.log_every == 0 {
            eprintln!(
                "class {c} epoch {epoch}: gen {:.4} disc {:.4} |R| {:.3}",
                s.generator_loss, s.discriminator_loss, s.residual_norm
            );
        }
    }
    Ok((trainer.model, trace))
}

/// Models and traces for one fold, indexed by explainee class.
#[derive(Clone, Debug)]
pub struct FoldModels {
    pub fold: usize,
    pub models: [GanModel; 2],
    pub traces: [LossTrace; 2],
}

/// Trains both explainee classes on every fold's training split. Folds and
/// classes run in parallel; each (fold, class) job has its own seed stream.
pub fn train(
    ds: &Dataset,
    folds: &FoldAssignment,
    oracle: &OracleHandle,
    cfg: &TrainConfig,
) -> Result<Vec<FoldModels>> {
    cfg.validate()?;
    let jobs: Vec<(usize, ClassId)> = (0..folds.k).flat_map(|f| [(f, 0), (f, 1)]).collect();
    let results: Vec<Result<(GanModel, LossTrace)>> = jobs
        .par_iter()
        .map(|&(fold, c)| {
            let seed = derive_seed(cfg.seed, fold as u64, u64::from(c));
            train_class(ds, &folds.train_indices(fold), oracle, cfg, c, seed)
        })
        .collect();
    let mut it = results.into_iter();
    let mut out = Vec::with_capacity(folds.k);
    for fold in 0..folds.k {
        let (m0, t0) = it.next().expect("one job per class")?;
        let (m1, t1) = it.next().expect("one job per class")?;
        out.push(FoldModels {
            fold,
            models: [m0, m1],
            traces: [t0, t1],
        });
    }
    Ok(out)
}

/// Mean over same-class pairs `(G*, G)` of `||G(G*) - (X, A)||^2`, where the
/// generator output is `(X_hat, prob)` and class membership is decided by the
/// oracle.
pub fn realism_diagnostic(
    generator: &Generator,
    queries: &[usize],
    ds: &Dataset,
    oracle: &OracleHandle,
) -> Result<f64> {
    let classes: Vec<ClassId> = ds
        .instances
        .iter()
        .map(|i| oracle.predict(&i.graph))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for &q in queries {
        let star = &ds.instances[q].graph;
        let out = generator.generate(star)?;
        for (inst, &cls) in ds.instances.iter().zip(&classes) {
            if cls != classes[q] || inst.graph.n() != star.n() {
                continue;
            }
            let dx = out
                .x_hat
                .zip_map(inst.graph.features(), |a, b| (a - b) * (a - b))
                .sum();
            let da = out
                .prob
                .zip_map(inst.graph.adjacency(), |a, b| (a - b) * (a - b))
                .sum();
            total += dx + da;
            pairs += 1;
        }
    }
    Ok(if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    })
}
