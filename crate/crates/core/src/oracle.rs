//! The black-box classifier being explained, with call accounting.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::graph::{ClassId, Dataset, Graph};
use crate::tensor::{
    normalize_adjacency, Activation, Adam, AdamConfig, GcnLayer, Linear, Param, Tape,
};

/// True iff `g` contains a cycle: iterative depth-first search over every
/// component, tracking the parent each node was reached from.
pub fn has_cycle(g: &Graph) -> bool {
    let n = g.n();
    let mut visited = vec![false; n];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        stack.push((root, usize::MAX));
        while let Some((u, parent)) = stack.pop() {
            for v in g.neighbors(u) {
                if v == parent {
                    continue;
                }
                if visited[v] {
                    return true;
                }
                visited[v] = true;
                stack.push((v, u));
            }
        }
    }
    false
}

/// Two-layer GCN with mean pooling and a logistic head. Node degree is
/// appended to the input features.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnClassifier {
    pub layers: [GcnLayer; 2],
    pub head: Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GcnOracleConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for GcnOracleConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            epochs: 100,
            lr: 1e-2,
            seed: 0,
        }
    }
}

impl GcnClassifier {
    pub fn new(feature_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            layers: [
                GcnLayer::glorot(feature_dim + 1, hidden, rng),
                GcnLayer::glorot(hidden, hidden, rng),
            ],
            head: Linear::glorot(hidden, 1, rng),
        }
    }

    fn params(&self) -> [&Param; 6] {
        let [l0, l1] = &self.layers;
        [
            &l0.weight,
            &l0.bias,
            &l1.weight,
            &l1.bias,
            &self.head.weight,
            &self.head.bias,
        ]
    }

    fn params_mut(&mut self) -> [&mut Param; 6] {
        let [l0, l1] = &mut self.layers;
        [
            &mut l0.weight,
            &mut l0.bias,
            &mut l1.weight,
            &mut l1.bias,
            &mut self.head.weight,
            &mut self.head.bias,
        ]
    }

    fn forward(&self, tape: &mut Tape, g: &Graph) -> Result<(Vars, crate::tensor::Var)> {
        if g.d() + 1 != self.layers[0].in_dim() {
            return Err(Error::Shape(format!(
                "graph feature dim {} does not match classifier input {}",
                g.d(),
                self.layers[0].in_dim() - 1
            )));
        }
        let vars = self.params().map(|p| p.bind(tape));
        let x = tape.constant(g.features_with_degree());
        let a = tape.constant(normalize_adjacency(g.adjacency()));
        let h = GcnLayer::forward(tape, x, a, vars[0], vars[1], Activation::Tanh)?;
        let h = GcnLayer::forward(tape, h, a, vars[2], vars[3], Activation::Tanh)?;
        let pooled = tape.mean_rows(h);
        let logit = Linear::forward(tape, pooled, vars[4], vars[5])?;
        Ok((vars, tape.sigmoid(logit)))
    }

    /// Probability of class 1.
    pub fn probability(&self, g: &Graph) -> Result<f64> {
        let mut tape = Tape::new();
        let (_, p) = self.forward(&mut tape, g)?;
        Ok(tape.value(p).item())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set("model", "gcn-oracle");
        ck.set("input_dim", self.layers[0].in_dim() - 1);
        ck.set("hidden", self.layers[0].out_dim());
        for (name, p) in PARAM_NAMES.iter().zip(self.params()) {
            ck.push(*name, &p.value);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.get("model") != Some("gcn-oracle") {
            return Err(Error::Config(
                "checkpoint does not hold a GCN oracle".into(),
            ));
        }
        Ok(Self {
            layers: [
                GcnLayer::with_bias(ck.tensor("gcn0_w")?.clone(), ck.tensor("gcn0_b")?.clone()),
                GcnLayer::with_bias(ck.tensor("gcn1_w")?.clone(), ck.tensor("gcn1_b")?.clone()),
            ],
            head: Linear {
                weight: Param::new(ck.tensor("head_w")?.clone()),
                bias: Param::new(ck.tensor("head_b")?.clone()),
            },
        })
    }
}

const PARAM_NAMES: [&str; 6] = ["gcn0_w", "gcn0_b", "gcn1_w", "gcn1_b", "head_w", "head_b"];

type Vars = [crate::tensor::Var; 6];

#[derive(Clone, Debug, PartialEq)]
pub enum OracleKind {
    ExactCycle,
    /// `None` until trained.
    TrainedGcn(Option<Box<GcnClassifier>>),
    /// Always answers the same class; a test double.
    Constant(ClassId),
}

/// The classifier `Phi` with a monotone call counter.
#[derive(Debug)]
pub struct OracleHandle {
    kind: OracleKind,
    calls: AtomicU64,
}

impl Clone for OracleHandle {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind.clone(),
            calls: AtomicU64::new(self.call_count()),
        }
    }
}

/// Marks the start of an accounting window; see [`OracleHandle::open_window`].
#[derive(Clone, Copy, Debug)]
pub struct CallWindow {
    start: u64,
}

impl CallWindow {
    /// Calls made on `oracle` since the window opened.
    pub fn close(self, oracle: &OracleHandle) -> u64 {
        oracle.call_count() - self.start
    }
}

impl OracleHandle {
    pub fn new(kind: OracleKind) -> Self {
        Self {
            kind,
            calls: AtomicU64::new(0),
        }
    }

    pub fn exact_cycle() -> Self {
        Self::new(OracleKind::ExactCycle)
    }

    pub fn constant(class: ClassId) -> Self {
        Self::new(OracleKind::Constant(class))
    }

    pub fn gcn(model: GcnClassifier) -> Self {
        Self::new(OracleKind::TrainedGcn(Some(Box::new(model))))
    }

    pub fn kind(&self) -> &OracleKind {
        &self.kind
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn open_window(&self) -> CallWindow {
        CallWindow {
            start: self.call_count(),
        }
    }

    pub fn predict(&self, g: &Graph) -> Result<ClassId> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match &self.kind {
            OracleKind::ExactCycle => Ok(ClassId::from(has_cycle(g))),
            OracleKind::Constant(c) => Ok(*c),
            OracleKind::TrainedGcn(None) => Err(Error::UntrainedOracle),
            OracleKind::TrainedGcn(Some(m)) => Ok(ClassId::from(m.probability(g)? > 0.5)),
        }
    }
}

/// Fraction of instances whose prediction matches the label.
pub fn oracle_accuracy(oracle: &OracleHandle, ds: &Dataset) -> Result<f64> {
    accuracy_on(oracle, ds, &(0..ds.len()).collect::<Vec<_>>())
}

pub fn accuracy_on(oracle: &OracleHandle, ds: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for &i in indices {
        let inst = &ds.instances[i];
        if oracle.predict(&inst.graph)? == inst.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / indices.len() as f64)
}

/// Trains a GCN classifier on `train` and reports its accuracy on `held_out`
/// (`None` when no held-out indices are given).
pub fn train_gcn_oracle(
    ds: &Dataset,
    train: &[usize],
    held_out: &[usize],
    config: &GcnOracleConfig,
) -> Result<(OracleHandle, Option<f64>)> {
    let has = |c: ClassId| train.iter().any(|&i| ds.instances[i].label == c);
    if !(has(0) && has(1)) {
        return Err(Error::SingleClass);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = GcnClassifier::new(ds.feature_dim(), config.hidden, &mut rng);
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr), &model.params());
    let mut order = train.to_vec();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let inst = &ds.instances[i];
            let mut tape = Tape::new();
            let (vars, p) = model.forward(&mut tape, &inst.graph)?;
            let loss = tape.bce(p, f64::from(inst.label))?;
            tape.backward(loss)?;
            for (param, var) in model.params_mut().into_iter().zip(vars) {
                param.accumulate(&tape, var);
            }
            opt.step(&mut model.params_mut())?;
        }
    }
    let handle = OracleHandle::gcn(model);
    let acc = if held_out.is_empty() {
        None
    } else {
        let scratch = handle.clone();
        Some(accuracy_on(&scratch, ds, held_out)?)
    };
    Ok((handle, acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LabeledGraph;
    use proptest::prelude::*;

    #[test]
    fn exact_cycle_fixtures() {
        let o = OracleHandle::exact_cycle();
        let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let path = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(o.predict(&tri).unwrap(), 1);
        assert_eq!(o.predict(&path).unwrap(), 0);
        assert_eq!(o.call_count(), 2);
        // cycle in a second component only
        let g = Graph::from_edges(6, &[(0, 1), (2, 3), (3, 4), (2, 4)]).unwrap();
        assert_eq!(o.predict(&g).unwrap(), 1);
    }

    #[test]
    fn windows_measure_deltas() {
        let o = OracleHandle::constant(0);
        let g = Graph::new(2, 1).unwrap();
        o.predict(&g).unwrap();
        let w = o.open_window();
        o.predict(&g).unwrap();
        o.predict(&g).unwrap();
        assert_eq!(w.close(&o), 2);
        assert_eq!(o.call_count(), 3);
    }

    #[test]
    fn accuracy_errors_and_baseline() {
        let o = OracleHandle::constant(0);
        assert!(matches!(
            oracle_accuracy(&o, &Dataset::new("e")),
            Err(Error::EmptyDataset)
        ));
        let mut ds = Dataset::new("b");
        for i in 0..10 {
            let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
            ds.push(LabeledGraph::new(g, (i % 2) as u8).unwrap())
                .unwrap();
        }
        assert_eq!(oracle_accuracy(&o, &ds).unwrap(), 0.5);
        let untrained = OracleHandle::new(OracleKind::TrainedGcn(None));
        assert!(matches!(
            untrained.predict(&ds.instances[0].graph),
            Err(Error::UntrainedOracle)
        ));
    }

    #[test]
    fn single_class_training_is_rejected() {
        let mut ds = Dataset::new("one");
        for _ in 0..4 {
            let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
            ds.push(LabeledGraph::new(g, 0).unwrap()).unwrap();
        }
        let r = train_gcn_oracle(&ds, &[0, 1, 2, 3], &[], &GcnOracleConfig::default());
        assert!(matches!(r, Err(Error::SingleClass)));
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (1usize..12).prop_flat_map(|n| {
            proptest::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
                let mut g = Graph::from_edges(n, &[]).unwrap();
                let mut k = 0;
                for u in 0..n {
                    for v in (u + 1)..n {
                        if bits[k] {
                            g.insert_edge(u, v).unwrap();
                        }
                        k += 1;
                    }
                }
                g
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        // cyclic iff |E| > n - #components (spanning-forest rank)
        #[test]
        fn cycle_oracle_matches_forest_rank(g in arb_graph()) {
            let o = OracleHandle::exact_cycle();
            let expected = g.edge_count() > g.n() - g.component_count();
            prop_assert_eq!(o.predict(&g).unwrap() == 1, expected);
        }
    }
}
