//! Tree-Cycles: random trees (class 0) and random trees with cycle motifs
//! hanging off single bridge edges (class 1), at a fixed node count.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, LabeledGraph};
use crate::oracle::has_cycle;
use crate::tensor::Tensor2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeFeatures {
    /// Every node carries the single feature `1.0`.
    #[default]
    Constant,
    /// Every node carries its degree.
    Degree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeCyclesConfig {
    pub num_instances: usize,
    pub nodes_per_instance: usize,
    pub min_cycles: usize,
    pub max_cycles: usize,
    pub min_cycle_size: usize,
    pub max_cycle_size: usize,
    /// Target fraction of cyclic instances.
    pub class_balance: f64,
    pub features: NodeFeatures,
    pub seed: u64,
}

impl Default for TreeCyclesConfig {
    fn default() -> Self {
        Self {
            num_instances: 500,
            nodes_per_instance: 28,
            min_cycles: 1,
            max_cycles: 3,
            min_cycle_size: 3,
            max_cycle_size: 7,
            class_balance: 0.5,
            features: NodeFeatures::Constant,
            seed: 0,
        }
    }
}

impl TreeCyclesConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_instances == 0 {
            return bad("num_instances must be positive".into());
        }
        if self.min_cycle_size < 3 || self.max_cycle_size < self.min_cycle_size {
            return bad(format!(
                "cycle sizes must satisfy 3 <= min <= max (got {}..={})",
                self.min_cycle_size, self.max_cycle_size
            ));
        }
        if self.min_cycles < 1 || self.max_cycles < self.min_cycles {
            return bad(format!(
                "cycle counts must satisfy 1 <= min <= max (got {}..={})",
                self.min_cycles, self.max_cycles
            ));
        }
        if self.nodes_per_instance < self.max_cycle_size {
            return bad(format!(
                "nodes_per_instance {} is below max_cycle_size {}",
                self.nodes_per_instance, self.max_cycle_size
            ));
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return bad(format!(
                "class_balance {} outside (0, 1)",
                self.class_balance
            ));
        }
        // at least one tree node must remain to anchor the bridges
        if self.min_cycles * self.min_cycle_size >= self.nodes_per_instance {
            return Err(Error::Infeasible(format!(
                "{} cycles of {} nodes do not fit in {} nodes",
                self.min_cycles, self.min_cycle_size, self.nodes_per_instance
            )));
        }
        Ok(())
    }

    fn params(&self) -> Vec<(&'static str, String)> {
        vec![
            ("class_balance", self.class_balance.to_string()),
            ("features", format!("{:?}", self.features).to_lowercase()),
            ("max_cycle_size", self.max_cycle_size.to_string()),
            ("max_cycles", self.max_cycles.to_string()),
            ("min_cycle_size", self.min_cycle_size.to_string()),
            ("min_cycles", self.min_cycles.to_string()),
            ("nodes_per_instance", self.nodes_per_instance.to_string()),
            ("num_instances", self.num_instances.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

/// Uniform random attachment tree on `n` nodes: node `i` links to a uniform
/// node among `0..i`.
pub fn random_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Graph> {
    let mut g = Graph::from_edges(n, &[])?;
    grow_tree(&mut g, n, rng)?;
    Ok(g)
}

fn grow_tree<R: Rng + ?Sized>(g: &mut Graph, tree_nodes: usize, rng: &mut R) -> Result<()> {
    for i in 1..tree_nodes {
        let parent = rng.gen_range(0..i);
        g.insert_edge(parent, i)?;
    }
    Ok(())
}

/// Places a simple cycle on the reserved nodes `first..first + cycle_size`
/// and joins it to the tree on `0..tree_nodes` with one bridge edge between
/// a uniform tree node and a uniform cycle node.
pub fn attach_cycle<R: Rng + ?Sized>(
    g: &Graph,
    tree_nodes: usize,
    first: usize,
    cycle_size: usize,
    rng: &mut R,
) -> Result<Graph> {
    if cycle_size < 3 {
        return Err(Error::Config(format!("cycle size {cycle_size} is below 3")));
    }
    if tree_nodes == 0 || tree_nodes > first {
        return Err(Error::Config(format!(
            "tree nodes 0..{tree_nodes} must precede the reserved block at {first}"
        )));
    }
    if first + cycle_size > g.n() {
        return Err(Error::Infeasible(format!(
            "a {cycle_size}-cycle at node {first} needs {} nodes, graph has {}",
            first + cycle_size,
            g.n()
        )));
    }
    let mut out = g.clone();
    for k in 0..cycle_size {
        out.insert_edge(first + k, first + (k + 1) % cycle_size)?;
    }
    let anchor = rng.gen_range(0..tree_nodes);
    let on_cycle = first + rng.gen_range(0..cycle_size);
    out.insert_edge(anchor, on_cycle)?;
    Ok(out)
}

fn draw_cycle_sizes<R: Rng + ?Sized>(cfg: &TreeCyclesConfig, rng: &mut R) -> Vec<usize> {
    loop {
        let count = rng.gen_range(cfg.min_cycles..=cfg.max_cycles);
        let sizes: Vec<usize> = (0..count)
            .map(|_| rng.gen_range(cfg.min_cycle_size..=cfg.max_cycle_size))
            .collect();
        if sizes.iter().sum::<usize>() < cfg.nodes_per_instance {
            return sizes;
        }
    }
}

fn cyclic_instance<R: Rng + ?Sized>(cfg: &TreeCyclesConfig, rng: &mut R) -> Result<Graph> {
    let n = cfg.nodes_per_instance;
    let sizes = draw_cycle_sizes(cfg, rng);
    let tree_nodes = n - sizes.iter().sum::<usize>();
    let mut g = Graph::from_edges(n, &[])?;
    grow_tree(&mut g, tree_nodes, rng)?;
    let mut first = tree_nodes;
    for s in sizes {
        g = attach_cycle(&g, tree_nodes, first, s, rng)?;
        first += s;
    }
    Ok(g)
}

fn apply_features(g: &mut Graph, kind: NodeFeatures) -> Result<()> {
    let n = g.n();
    let x = match kind {
        NodeFeatures::Constant => Tensor2::filled(n, 1, 1.0),
        NodeFeatures::Degree => {
            let degrees = (0..n).map(|i| g.degree(i) as f64).collect();
            Tensor2::from_vec(n, 1, degrees)?
        }
    };
    g.set_features(x)
}

pub fn generate_tree_cycles(cfg: &TreeCyclesConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cyclic = (cfg.num_instances as f64 * cfg.class_balance).round() as usize;
    let mut labels: Vec<u8> = (0..cfg.num_instances)
        .map(|i| u8::from(i < cyclic))
        .collect();
    labels.shuffle(&mut rng);

    let mut ds = Dataset::new("tree-cycles");
    for (k, v) in cfg.params() {
        ds.generation_params.insert(k.to_string(), v);
    }
    for label in labels {
        let mut g = if label == 1 {
            cyclic_instance(cfg, &mut rng)?
        } else {
            random_tree(cfg.nodes_per_instance, &mut rng)?
        };
        apply_features(&mut g, cfg.features)?;
        debug_assert_eq!(u8::from(has_cycle(&g)), label);
        ds.push(LabeledGraph::new(g, label)?)?;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn trees_are_spanning_and_acyclic() {
        let mut r = rng();
        assert_eq!(random_tree(1, &mut r).unwrap().edge_count(), 0);
        for n in [2, 5, 28, 100] {
            let t = random_tree(n, &mut r).unwrap();
            assert_eq!(t.edge_count(), n - 1);
            assert!(!has_cycle(&t));
            assert_eq!(t.component_count(), 1);
        }
    }

    #[test]
    fn attach_cycle_counts_edges() {
        let mut r = rng();
        let mut g = Graph::from_edges(28, &[]).unwrap();
        grow_tree(&mut g, 25, &mut r).unwrap();
        let g = attach_cycle(&g, 25, 25, 3, &mut r).unwrap();
        assert_eq!(g.edge_count(), (25 - 1) + 3 + 1);
        assert!(has_cycle(&g));
        assert_eq!(g.component_count(), 1);

        let single = Graph::from_edges(4, &[]).unwrap();
        let h = attach_cycle(&single, 1, 1, 3, &mut r).unwrap();
        assert_eq!((h.n(), h.edge_count()), (4, 4));
        assert!(matches!(
            attach_cycle(&single, 1, 2, 3, &mut r),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn default_dataset_is_balanced_and_faithful() {
        let ds = generate_tree_cycles(&TreeCyclesConfig::default()).unwrap();
        assert_eq!(ds.len(), 500);
        let ones = ds.instances.iter().filter(|i| i.label == 1).count();
        assert_eq!(ones, 250);
        for inst in &ds.instances {
            assert_eq!(inst.graph.n(), 28);
            assert_eq!(u8::from(has_cycle(&inst.graph)), inst.label);
            assert_eq!(inst.graph.component_count(), 1);
            if inst.label == 1 {
                let extra = inst.graph.edge_count() - 27;
                assert!((1..=3).contains(&extra), "{extra} cycles");
            }
        }
    }

    #[test]
    fn ablation_shapes_are_feasible() {
        let cfg = TreeCyclesConfig {
            num_instances: 20,
            nodes_per_instance: 128,
            min_cycles: 4,
            max_cycles: 4,
            min_cycle_size: 28,
            max_cycle_size: 28,
            ..Default::default()
        };
        let ds = generate_tree_cycles(&cfg).unwrap();
        for inst in ds.instances.iter().filter(|i| i.label == 1) {
            assert_eq!(inst.graph.edge_count(), 127 + 4);
        }
        let bad = TreeCyclesConfig {
            min_cycles: 5,
            max_cycles: 5,
            ..cfg
        };
        assert!(matches!(
            generate_tree_cycles(&bad),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = TreeCyclesConfig {
            num_instances: 40,
            seed: 5,
            ..Default::default()
        };
        let a = generate_tree_cycles(&cfg).unwrap().to_text();
        let b = generate_tree_cycles(&cfg).unwrap().to_text();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs() {
        let base = TreeCyclesConfig::default();
        for cfg in [
            TreeCyclesConfig {
                max_cycle_size: 2,
                min_cycle_size: 2,
                ..base.clone()
            },
            TreeCyclesConfig {
                class_balance: 1.0,
                ..base.clone()
            },
            TreeCyclesConfig {
                nodes_per_instance: 6,
                ..base.clone()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
