//! Partial-order sampling of counterfactual candidates.
//!
//! Candidate edges are split into ordered groups. Each group carries a guard:
//! for guarded groups the oracle is consulted after each sampled edge and the
//! first graph whose prediction differs from the input's is returned. The
//! default order samples the input's own edges first (unguarded), then the
//! non-edges (guarded).

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ClassId, Graph};
use crate::models::{GanModel, GeneratedGraph};
use crate::oracle::OracleHandle;
use crate::tensor::Tensor2;
use crate::training::derive_seed;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionGroup {
    /// Node pairs in canonical `u < v` form.
    pub edges: Vec<(usize, usize)>,
    /// Check the oracle after every sampled edge of this group.
    pub guard: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialOrder {
    pub groups: Vec<PartitionGroup>,
}

impl PartialOrder {
    pub fn edge_total(&self) -> usize {
        self.groups.iter().map(|g| g.edges.len()).sum()
    }
}

/// Existing edges (unguarded) followed by non-existing pairs (guarded).
pub fn partial_order(a: &Tensor2) -> PartialOrder {
    let n = a.rows();
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if a.get(u, v) != 0.0 {
                positive.push((u, v));
            } else {
                negative.push((u, v));
            }
        }
    }
    PartialOrder {
        groups: vec![
            PartitionGroup {
                edges: positive,
                guard: false,
            },
            PartitionGroup {
                edges: negative,
                guard: true,
            },
        ],
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeOrdering {
    /// Most probable pairs first; ties keep index order.
    #[default]
    DescendingProbability,
    /// Row-major pair order.
    Index,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub max_attempts: usize,
    pub seed: u64,
    pub ordering: EdgeOrdering,
    /// Guarded pairs with probability below the floor are not drawn.
    pub probability_floor: f64,
    /// Consult the oracle once when an unguarded group completes.
    pub boundary_check: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            max_attempts: 10,
            seed: 0,
            ordering: EdgeOrdering::DescendingProbability,
            probability_floor: 1e-3,
            boundary_check: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.probability_floor) {
            return Err(Error::Config("probability_floor must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutcome {
    pub graph: Graph,
    pub valid: bool,
    /// Every oracle call made while sampling, including the one on the input.
    pub oracle_calls: u64,
    /// Calls made after a draw inside a guarded group.
    pub guarded_calls: u64,
    /// Calls made at the end of an unguarded group.
    pub boundary_calls: u64,
    pub attempts: usize,
}

fn ordered_edges(
    group: &PartitionGroup,
    prob: &Tensor2,
    ordering: EdgeOrdering,
) -> Vec<(usize, usize)> {
    let mut edges = group.edges.clone();
    if ordering == EdgeOrdering::DescendingProbability {
        edges.sort_by(|&(a, b), &(c, d)| prob.get(c, d).total_cmp(&prob.get(a, b)));
    }
    edges
}

struct Counters {
    total: u64,
    guarded: u64,
    boundary: u64,
}

/// Samples a counterfactual for `g_star`, computing its oracle class first.
pub fn sample_candidate(
    g_star: &Graph,
    generated: &GeneratedGraph,
    oracle: &OracleHandle,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<SampleOutcome> {
    let class = oracle.predict(g_star)?;
    let mut out = sample_for_class(g_star, class, generated, oracle, cfg, rng)?;
    out.oracle_calls += 1;
    Ok(out)
}

/// Samples a counterfactual for `g_star` whose oracle class is known.
pub fn sample_for_class(
    g_star: &Graph,
    class: ClassId,
    generated: &GeneratedGraph,
    oracle: &OracleHandle,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<SampleOutcome> {
    cfg.validate()?;
    let n = g_star.n();
    let prob = &generated.prob;
    if prob.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "probability matrix {:?} for a graph with {n} nodes",
            prob.shape()
        )));
    }
    let order = partial_order(g_star.adjacency());
    let groups: Vec<(Vec<(usize, usize)>, bool)> = order
        .groups
        .iter()
        .map(|g| (ordered_edges(g, prob, cfg.ordering), g.guard))
        .collect();

    let mut template = g_star.clone();
    if generated.x_hat.shape() == g_star.features().shape() {
        template.set_features(generated.x_hat.clone())?;
    }

    let mut calls = Counters {
        total: 0,
        guarded: 0,
        boundary: 0,
    };
    for attempt in 1..=cfg.max_attempts {
        let mut candidate = template.clone();
        for (u, v) in candidate.edges() {
            candidate.remove_edge(u, v)?;
        }
        // the candidate changed since the oracle last saw it
        let mut dirty = true;
        for (gi, (edges, guard)) in groups.iter().enumerate() {
            for &(u, v) in edges {
                let p = prob.get(u, v);
                if *guard && p < cfg.probability_floor {
                    continue;
                }
                let keep = rng.gen::<f64>() < p;
                if keep != candidate.has_edge(u, v) {
                    candidate.set_edge(u, v, keep)?;
                    dirty = true;
                }
                if *guard && dirty {
                    calls.total += 1;
                    calls.guarded += 1;
                    dirty = false;
                    if oracle.predict(&candidate)? != class {
                        return Ok(SampleOutcome {
                            graph: candidate,
                            valid: true,
                            oracle_calls: calls.total,
                            guarded_calls: calls.guarded,
                            boundary_calls: calls.boundary,
                            attempts: attempt,
                        });
                    }
                }
            }
            let last = gi + 1 == groups.len();
            if !*guard && cfg.boundary_check && !last && dirty {
                calls.total += 1;
                calls.boundary += 1;
                dirty = false;
                if oracle.predict(&candidate)? != class {
                    return Ok(SampleOutcome {
                        graph: candidate,
                        valid: true,
                        oracle_calls: calls.total,
                        guarded_calls: calls.guarded,
                        boundary_calls: calls.boundary,
                        attempts: attempt,
                    });
                }
            }
        }
    }
    Ok(SampleOutcome {
        graph: g_star.clone(),
        valid: false,
        oracle_calls: calls.total,
        guarded_calls: calls.guarded,
        boundary_calls: calls.boundary,
        attempts: cfg.max_attempts,
    })
}

/// Node pairs in canonical `u < v` form.
pub type PairList = Vec<(usize, usize)>;

/// Edge flips turning `from` into `to`: `(added, removed)`, each sorted.
pub fn edge_operations(from: &Graph, to: &Graph) -> (PairList, PairList) {
    let mut added = Vec::new();
    let mut removed = Vec::new();
    for u in 0..from.n() {
        for v in (u + 1)..from.n() {
            match (from.has_edge(u, v), to.has_edge(u, v)) {
                (false, true) => added.push((u, v)),
                (true, false) => removed.push((u, v)),
                _ => {}
            }
        }
    }
    (added, removed)
}

/// One explained instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplanationRecord {
    pub instance: usize,
    pub fold: usize,
    pub input_class: ClassId,
    pub candidate: Graph,
    pub valid: bool,
    /// Oracle calls inside the explanation window.
    pub oracle_calls: u64,
    pub guarded_calls: u64,
    pub runtime_secs: f64,
}

/// Per-class generators available to the explainer.
pub trait GeneratorBank {
    fn model_for(&self, class: ClassId) -> Option<&GanModel>;
}

impl GeneratorBank for [GanModel; 2] {
    fn model_for(&self, class: ClassId) -> Option<&GanModel> {
        self.iter().find(|m| m.explainee == class)
    }
}

impl GeneratorBank for [Option<GanModel>; 2] {
    fn model_for(&self, class: ClassId) -> Option<&GanModel> {
        self.iter().flatten().find(|m| m.explainee == class)
    }
}

impl GeneratorBank for GanModel {
    fn model_for(&self, class: ClassId) -> Option<&GanModel> {
        (self.explainee == class).then_some(self)
    }
}

/// Classifies `g_star`, generates with the matching explainee model and
/// samples a candidate. The sampler stream is seeded from
/// `(cfg.seed, fold, instance)`.
pub fn explain(
    g_star: &Graph,
    instance: usize,
    fold: usize,
    bank: &(impl GeneratorBank + ?Sized),
    oracle: &OracleHandle,
    cfg: &SamplerConfig,
) -> Result<ExplanationRecord> {
    let started = Instant::now();
    let window = oracle.open_window();
    let class = oracle.predict(g_star)?;
    let model = bank.model_for(class).ok_or(Error::NoGenerator(class))?;
    let generated = model.generator.generate(g_star)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, fold as u64, instance as u64));
    let outcome = sample_for_class(g_star, class, &generated, oracle, cfg, &mut rng)?;
    let runtime_secs = started.elapsed().as_secs_f64();
    let oracle_calls = window.close(oracle);
    Ok(ExplanationRecord {
        instance,
        fold,
        input_class: class,
        candidate: outcome.graph,
        valid: outcome.valid,
        oracle_calls,
        guarded_calls: outcome.guarded_calls,
        runtime_secs,
    })
}
