//! Shared checks for the integration and acceptance targets. Every check
//! returns `Err(description)` on the first violation.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rsgg::checkpoint::Checkpoint;
use rsgg::config::ExperimentConfig;
use rsgg::eval::{candidate_from_row, rows_from_tsv, rows_to_tsv, run_experiment, ExperimentSpec};
use rsgg::graph::{load_records, save_records, GraphRecords};
use rsgg::metrics::{ged, sparsity, MetricsRow};
use rsgg::models::{ArchitectureConfig, Discriminator, GanModel, GeneratedGraph, Generator};
use rsgg::render::{render_pictorial, GREEN, RED};
use rsgg::sampler::{partial_order, sample_candidate, SamplerConfig};
use rsgg::synth::{generate_tree_cycles, TreeCyclesConfig};
use rsgg::tensor::{normalize_adjacency, Activation, GcnLayer, Linear, Tape, Tensor2, Var};
use rsgg::training::TrainConfig;
use rsgg::{Dataset, Graph, LabeledGraph, OracleHandle, Result};

pub type Check = std::result::Result<(), String>;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

// ---------------------------------------------------------------- oracles

/// Cycle indicator by union-find: an edge joining two nodes already in one
/// component closes a cycle.
pub fn cyclic_by_union_find(g: &Graph) -> bool {
    let n = g.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for u in 0..n {
        for v in (u + 1)..n {
            if g.adjacency().get(u, v) != 0.0 {
                let (a, b) = (find(&mut parent, u), find(&mut parent, v));
                if a == b {
                    return true;
                }
                parent[a] = b;
            }
        }
    }
    false
}

/// Number of unordered pairs whose adjacency differs.
pub fn pair_difference(a: &Graph, b: &Graph) -> usize {
    let n = a.n();
    let mut d = 0;
    for u in 0..n {
        for v in (u + 1)..n {
            if (a.adjacency().get(u, v) != 0.0) != (b.adjacency().get(u, v) != 0.0) {
                d += 1;
            }
        }
    }
    d
}

pub fn undirected_edges(g: &Graph) -> usize {
    let n = g.n();
    (0..n)
        .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
        .filter(|&(u, v)| g.adjacency().get(u, v) != 0.0)
        .count()
}

pub fn random_graph(n: usize, density: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen_bool(density) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

/// Symmetric probabilities with zero diagonal; roughly a third of the
/// entries are exactly 0 or 1.
pub fn random_prob(n: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
    let mut p = Tensor2::zeros(n, n);
    for u in 0..n {
        for v in (u + 1)..n {
            let x = match rng.gen_range(0..6) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.gen::<f64>(),
            };
            p.set(u, v, x);
            p.set(v, u, x);
        }
    }
    p
}

pub fn generated_with_prob(g: &Graph, prob: Tensor2) -> GeneratedGraph {
    let mut residual = prob.clone();
    residual.add_assign(&g.adjacency().scale(-1.0));
    GeneratedGraph {
        x_hat: g.features().clone(),
        residual,
        combined: prob.clone(),
        prob,
    }
}

fn random_tensor(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor2 {
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor2::from_vec(rows, cols, data).unwrap()
}

// ------------------------------------------------------- gradient checks

/// Reduces `out` to a scalar with unequal per-entry weights:
/// `sum_ij w_j tanh(out_ij)`.
fn reduce(tape: &mut Tape, out: Var) -> Result<Var> {
    let cols = tape.value(out).cols();
    let w = Tensor2::from_vec(cols, 1, (0..cols).map(|j| 0.7 + 0.37 * j as f64).collect())?;
    let t = tape.tanh(out);
    let w = tape.constant(w);
    let m = tape.matmul(t, w)?;
    Ok(tape.sum(m))
}

/// Largest relative error between back-propagated and central-difference
/// gradients of `f` over every entry of every input. Gradients smaller than
/// `1e-3` are compared on that scale.
pub fn max_gradient_error(inputs: &[Tensor2], f: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let eval = |vals: &[Tensor2]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.param(v.clone())).collect();
        let loss = f(&mut tape, &vars).unwrap();
        tape.value(loss).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.param(v.clone())).collect();
    let loss = f(&mut tape, &vars).unwrap();
    tape.backward(loss).unwrap();
    let mut worst = 0.0_f64;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = tape
            .grad(vars[i])
            .cloned()
            .unwrap_or_else(|| Tensor2::zeros(input.rows(), input.cols()));
        for k in 0..input.data().len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[k] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[k] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            let a = analytic.data()[k];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    worst
}

/// Five-node fixture with a triangle and a pendant path.
pub fn five_node_graph() -> Graph {
    Graph::from_edges(5, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4)]).unwrap()
}

/// Values in `[lo, hi]` kept at least `gap` away from each kink.
fn away_from(mut t: Tensor2, kinks: &[f64], gap: f64) -> Tensor2 {
    for x in t.data_mut() {
        for &k in kinks {
            if (*x - k).abs() < gap {
                *x = k + gap.copysign(*x - k);
            }
        }
    }
    t
}

type GradCase = (
    &'static str,
    Vec<Tensor2>,
    Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>,
);

/// One case per differentiable operation and per layer.
pub fn gradient_cases() -> Vec<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut r = |rows, cols| random_tensor(rows, cols, -1.5, 1.5, &mut rng);
    let g = five_node_graph();
    let a_norm = normalize_adjacency(g.adjacency());
    let mut cases: Vec<GradCase> = Vec::new();

    cases.push((
        "matmul",
        vec![r(4, 3), r(3, 2)],
        Box::new(|t, v| {
            let m = t.matmul(v[0], v[1])?;
            reduce(t, m)
        }),
    ));
    cases.push((
        "gram",
        vec![r(5, 3)],
        Box::new(|t, v| {
            let m = t.gram(v[0]);
            reduce(t, m)
        }),
    ));
    cases.push((
        "add",
        vec![r(4, 3), r(4, 3)],
        Box::new(|t, v| {
            let m = t.add(v[0], v[1])?;
            reduce(t, m)
        }),
    ));
    cases.push((
        "add_row_bias",
        vec![r(4, 3), r(1, 3)],
        Box::new(|t, v| {
            let m = t.add_row_bias(v[0], v[1])?;
            reduce(t, m)
        }),
    ));
    cases.push((
        "tanh",
        vec![r(4, 3)],
        Box::new(|t, v| {
            let m = t.tanh(v[0]);
            let m = t.scale(m, 1.3);
            reduce(t, m)
        }),
    ));
    cases.push((
        "sigmoid",
        vec![r(4, 3)],
        Box::new(|t, v| {
            let m = t.sigmoid(v[0]);
            reduce(t, m)
        }),
    ));
    cases.push((
        "zero_diag",
        vec![r(5, 5)],
        Box::new(|t, v| {
            let m = t.zero_diag(v[0]);
            reduce(t, m)
        }),
    ));
    cases.push((
        "clamp",
        vec![away_from(r(5, 4), &[-0.5, 0.5], 1e-2)],
        Box::new(|t, v| {
            let m = t.clamp(v[0], -0.5, 0.5);
            reduce(t, m)
        }),
    ));
    let interior = random_tensor(5, 4, 0.05, 0.95, &mut ChaCha8Rng::seed_from_u64(8));
    cases.push((
        "clamp_pass_through (interior)",
        vec![interior],
        Box::new(|t, v| {
            let m = t.clamp_pass_through(v[0], 0.0, 1.0);
            reduce(t, m)
        }),
    ));
    let sym = {
        let mut m = random_tensor(5, 5, 0.1, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        for u in 0..5 {
            m.set(u, u, 0.0);
            for w in 0..u {
                let x = m.get(w, u);
                m.set(u, w, x);
            }
        }
        m
    };
    cases.push((
        "normalize_adjacency",
        vec![sym.clone()],
        Box::new(|t, v| {
            let m = t.normalize_adjacency(v[0])?;
            reduce(t, m)
        }),
    ));
    cases.push((
        "mean_rows",
        vec![r(4, 3)],
        Box::new(|t, v| {
            let m = t.mean_rows(v[0]);
            reduce(t, m)
        }),
    ));
    cases.push((
        "sum+scale",
        vec![r(4, 3)],
        Box::new(|t, v| {
            let m = t.tanh(v[0]);
            let s = t.sum(m);
            Ok(t.scale(s, -2.5))
        }),
    ));
    cases.push((
        "row_sums",
        vec![r(4, 3)],
        Box::new(|t, v| {
            let m = t.row_sums(v[0]);
            reduce(t, m)
        }),
    ));
    cases.push((
        "concat_cols",
        vec![r(4, 3), r(4, 2)],
        Box::new(|t, v| {
            let m = t.concat_cols(v[0], v[1])?;
            reduce(t, m)
        }),
    ));
    for target in [0.0, 0.3, 1.0] {
        let p = Tensor2::scalar(0.37);
        cases.push(("bce", vec![p], Box::new(move |t, v| t.bce(v[0], target))));
        let x = Tensor2::scalar(-0.8);
        cases.push((
            "bce_with_logits",
            vec![x],
            Box::new(move |t, v| t.bce_with_logits(v[0], target)),
        ));
    }

    for (name, act) in [
        ("gcn layer (tanh)", Activation::Tanh),
        ("gcn layer (identity)", Activation::Identity),
    ] {
        let an = a_norm.clone();
        cases.push((
            name,
            vec![r(5, 3), r(3, 4), r(1, 4)],
            Box::new(move |t, v| {
                let a = t.constant(an.clone());
                let h = GcnLayer::forward(t, v[0], a, v[1], v[2], act)?;
                reduce(t, h)
            }),
        ));
    }
    cases.push((
        "gcn layer (adjacency input)",
        vec![r(5, 3), r(3, 4), r(1, 4), sym.clone()],
        Box::new(|t, v| {
            let a = t.normalize_adjacency(v[3])?;
            let h = GcnLayer::forward(t, v[0], a, v[1], v[2], Activation::Tanh)?;
            reduce(t, h)
        }),
    ));
    cases.push((
        "linear layer",
        vec![r(3, 4), r(4, 2), r(1, 2)],
        Box::new(|t, v| {
            let h = Linear::forward(t, v[0], v[1], v[2])?;
            reduce(t, h)
        }),
    ));

    let arch = ArchitectureConfig {
        encoder_hidden: 6,
        latent: 3,
        discriminator_hidden: 5,
        feature_head: false,
    };
    let mut mrng = ChaCha8Rng::seed_from_u64(10);
    let gen = Generator::new(1, &arch, &mut mrng);
    let gen_params: Vec<Tensor2> = gen.params().iter().map(|p| p.value.scale(0.5)).collect();
    let gg = g.clone();
    cases.push((
        "generator residual",
        gen_params,
        Box::new(move |t, v| {
            let out = gen.forward(t, v, &gg)?;
            reduce(t, out.residual)
        }),
    ));
    let disc = Discriminator::new(1, &arch, &mut mrng);
    let mut disc_inputs: Vec<Tensor2> = disc.params().iter().map(|p| p.value.clone()).collect();
    disc_inputs.push(r(5, 1));
    let mut frac = sym.scale(0.8);
    for u in 0..5 {
        frac.set(u, u, 0.5);
    }
    disc_inputs.push(frac);
    cases.push((
        "discriminator logit",
        disc_inputs,
        Box::new(move |t, v| {
            let logit = disc.forward_logit(t, &v[..6], v[6], v[7])?;
            t.bce_with_logits(logit, 1.0)
        }),
    ));
    cases
}

/// Runs every gradient case; returns `(name, error)` pairs.
pub fn gradient_errors() -> Vec<(&'static str, f64)> {
    gradient_cases()
        .into_iter()
        .map(|(name, inputs, f)| (name, max_gradient_error(&inputs, f.as_ref())))
        .collect()
}

pub fn gradient_suite() -> Check {
    for (name, err) in gradient_errors() {
        if err.is_nan() || err >= FD_TOL {
            return Err(format!("{name}: relative gradient error {err:.3e}"));
        }
    }
    pass_through_is_identity_when_saturated()
}

/// Outside `[0, 1]` the pass-through clamp forwards the incoming gradient
/// unchanged.
pub fn pass_through_is_identity_when_saturated() -> Check {
    let x = Tensor2::from_vec(1, 4, vec![-0.7, 0.4, 1.6, 2.0]).unwrap();
    let mut tape = Tape::new();
    let v = tape.param(x);
    let c = tape.clamp_pass_through(v, 0.0, 1.0);
    let w = tape.constant(Tensor2::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let m = tape.matmul(c, w).unwrap();
    let s = tape.sum(m);
    if tape.value(c).data() != [0.0, 0.4, 1.0, 1.0] {
        return Err(format!("clamped values {:?}", tape.value(c).data()));
    }
    tape.backward(s).unwrap();
    let g = tape.grad(v).unwrap().data().to_vec();
    if g != [1.0, 2.0, 3.0, 4.0] {
        return Err(format!("pass-through gradient {g:?}"));
    }
    Ok(())
}

// ------------------------------------------------------ property checks

pub fn tc_config(num_instances: usize, seed: u64) -> TreeCyclesConfig {
    TreeCyclesConfig {
        num_instances,
        seed,
        ..Default::default()
    }
}

/// A generator with every parameter zero returns the input adjacency.
pub fn residual_identity() -> Check {
    let ds = generate_tree_cycles(&tc_config(20, 3)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut gen = Generator::new(1, &ArchitectureConfig::default(), &mut rng);
    for p in gen.params_mut() {
        p.value.fill(0.0);
    }
    for (i, inst) in ds.instances.iter().enumerate() {
        let out = gen.generate(&inst.graph).map_err(|e| e.to_string())?;
        if &out.prob != inst.graph.adjacency() {
            return Err(format!("instance {i}: prob differs from A"));
        }
        if out.residual.data().iter().any(|&r| r != 0.0) {
            return Err(format!("instance {i}: nonzero residual"));
        }
    }
    Ok(())
}

/// Symmetry, binarity, fallback contract and class flip of sampled
/// candidates on random graphs and probabilities.
pub fn sampler_invariants(trials: usize) -> Check {
    let oracle = OracleHandle::exact_cycle();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut valid_seen = 0;
    for trial in 0..trials {
        let n = rng.gen_range(3..10);
        let g = random_graph(n, rng.gen_range(0.1..0.6), &mut rng);
        let gen = generated_with_prob(&g, random_prob(n, &mut rng));
        let cfg = SamplerConfig {
            max_attempts: rng.gen_range(1..5),
            ..Default::default()
        };
        let out = sample_candidate(&g, &gen, &oracle, &cfg, &mut rng).map_err(|e| e.to_string())?;
        let a = out.graph.adjacency();
        for u in 0..n {
            if a.get(u, u) != 0.0 {
                return Err(format!("trial {trial}: self loop at {u}"));
            }
            for v in 0..n {
                let x = a.get(u, v);
                if x != 0.0 && x != 1.0 {
                    return Err(format!("trial {trial}: non-binary entry {x}"));
                }
                if x != a.get(v, u) {
                    return Err(format!("trial {trial}: asymmetric at ({u},{v})"));
                }
            }
        }
        if out.valid {
            valid_seen += 1;
            if cyclic_by_union_find(&out.graph) == cyclic_by_union_find(&g) {
                return Err(format!("trial {trial}: valid candidate keeps the class"));
            }
        } else if out.graph != g {
            return Err(format!("trial {trial}: fallback differs from the input"));
        }
        if out.attempts > cfg.max_attempts {
            return Err(format!(
                "trial {trial}: {} attempts over budget",
                out.attempts
            ));
        }
    }
    if valid_seen == 0 {
        return Err("no trial produced a valid candidate".into());
    }
    Ok(())
}

/// The groups partition every unordered pair: edges unguarded first, then
/// non-edges guarded.
pub fn partial_order_partition(trials: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..trials {
        let n = rng.gen_range(1..12);
        let g = random_graph(n, rng.gen_range(0.0..1.0), &mut rng);
        let po = partial_order(g.adjacency());
        if po.groups.len() != 2 || po.groups[0].guard || !po.groups[1].guard {
            return Err(format!("trial {trial}: unexpected group layout"));
        }
        let mut seen = BTreeSet::new();
        for (gi, group) in po.groups.iter().enumerate() {
            for &(u, v) in &group.edges {
                if u >= v || !seen.insert((u, v)) {
                    return Err(format!(
                        "trial {trial}: pair ({u},{v}) repeated or unordered"
                    ));
                }
                if g.has_edge(u, v) != (gi == 0) {
                    return Err(format!("trial {trial}: pair ({u},{v}) in group {gi}"));
                }
            }
        }
        if seen.len() != n * n.saturating_sub(1) / 2 {
            return Err(format!("trial {trial}: {} pairs covered", seen.len()));
        }
    }
    Ok(())
}

/// Identity, symmetry and triangle inequality of the edit distance, and
/// agreement with a direct pair count.
pub fn ged_axioms(trials: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..trials {
        let n = rng.gen_range(2..10);
        let [a, b, c] = [0.2, 0.5, 0.8].map(|d| random_graph(n, d, &mut rng));
        let d = |x: &Graph, y: &Graph| ged(x, y).unwrap();
        if d(&a, &a) != 0.0 {
            return Err(format!("trial {trial}: d(a,a) != 0"));
        }
        if d(&a, &b) != d(&b, &a) {
            return Err(format!("trial {trial}: asymmetric"));
        }
        if d(&a, &c) > d(&a, &b) + d(&b, &c) {
            return Err(format!("trial {trial}: triangle inequality"));
        }
        if (d(&a, &b) == 0.0) != (a == b) {
            return Err(format!(
                "trial {trial}: zero distance between distinct graphs"
            ));
        }
        if d(&a, &b) != pair_difference(&a, &b) as f64 {
            return Err(format!("trial {trial}: distance differs from pair count"));
        }
        let s = sparsity(&a, &b).unwrap();
        let expect = pair_difference(&a, &b) as f64 / (n + undirected_edges(&a)) as f64;
        if (s - expect).abs() > 1e-12 {
            return Err(format!("trial {trial}: sparsity {s} vs {expect}"));
        }
    }
    Ok(())
}

/// Every label equals the union-find cycle indicator; each instance is a
/// connected graph on the configured node count.
pub fn label_faithfulness(ds: &Dataset, n: usize) -> Check {
    let mut cyclic = 0;
    for (i, inst) in ds.instances.iter().enumerate() {
        let truth = cyclic_by_union_find(&inst.graph);
        if inst.label != u8::from(truth) {
            return Err(format!(
                "instance {i}: label {} but cyclic = {truth}",
                inst.label
            ));
        }
        if inst.graph.n() != n {
            return Err(format!("instance {i}: {} nodes", inst.graph.n()));
        }
        if inst.graph.component_count() != 1 {
            return Err(format!("instance {i}: disconnected"));
        }
        cyclic += usize::from(truth);
    }
    if cyclic == 0 || cyclic == ds.len() {
        return Err(format!("{cyclic} of {} instances cyclic", ds.len()));
    }
    Ok(())
}

/// Dataset, checkpoint, candidate, results and configuration files survive a
/// save/load cycle unchanged.
pub fn round_trips() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let err = |e: rsgg::Error| e.to_string();
    let ds = generate_tree_cycles(&tc_config(12, 5)).map_err(err)?;
    let path = dir.path().join("ds.txt");
    ds.save(&path).map_err(err)?;
    if Dataset::load(&path).map_err(err)? != ds {
        return Err("dataset changed on reload".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = GanModel::new(1, 1, &ArchitectureConfig::default(), &mut rng);
    let path = dir.path().join("m.ckpt");
    model.to_checkpoint().save(&path).map_err(err)?;
    let back = GanModel::from_checkpoint(&Checkpoint::load(&path).map_err(err)?).map_err(err)?;
    if back != model {
        return Err("model changed on reload".into());
    }

    let recs = GraphRecords {
        name: "cands".into(),
        params: Default::default(),
        records: vec![
            (3, ds.instances[0].clone()),
            (
                7,
                LabeledGraph::new(Graph::from_edges(28, &[(0, 5)]).unwrap(), 0).unwrap(),
            ),
        ],
    };
    let path = dir.path().join("c.txt");
    save_records(&recs, &path).map_err(err)?;
    if load_records(&path).map_err(err)? != recs {
        return Err("candidate records changed on reload".into());
    }

    let rows = vec![MetricsRow {
        instance: 4,
        fold: 1,
        label: 1,
        input_class: 1,
        candidate_class: 0,
        valid: true,
        runtime_secs: 0.125,
        ged: 2.0,
        oracle_calls: 3,
        correctness: 1,
        sparsity: 2.0 / 57.0,
        fidelity: 1,
        added: vec![(0, 9)],
        removed: vec![(2, 3)],
    }];
    let text = rows_to_tsv(&rows);
    if rows_from_tsv(&text, std::path::Path::new("mem")).map_err(err)? != rows {
        return Err("results rows changed on reload".into());
    }

    let mut cfg = ExperimentConfig::default();
    cfg.override_seed(99);
    cfg.training.epochs = 17;
    let back =
        ExperimentConfig::from_toml(&cfg.to_toml(), std::path::Path::new("mem")).map_err(err)?;
    if back != cfg {
        return Err("configuration changed on reload".into());
    }
    Ok(())
}

/// A small end-to-end experiment for determinism and rendering checks.
pub fn small_spec(seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        data: TreeCyclesConfig {
            num_instances: 30,
            nodes_per_instance: 10,
            max_cycles: 2,
            max_cycle_size: 4,
            seed,
            ..Default::default()
        },
        folds: 3,
        fold_seed: seed,
        train: TrainConfig {
            epochs: 4,
            seed,
            ..Default::default()
        },
        sampler: SamplerConfig {
            seed,
            ..Default::default()
        },
    }
}

fn without_runtime(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    rows.iter()
        .cloned()
        .map(|mut r| {
            r.runtime_secs = 0.0;
            r
        })
        .collect()
}

/// Two runs of the full pipeline from one seed agree on every model, row and
/// report byte.
pub fn pipeline_determinism() -> Check {
    let oracle = OracleHandle::exact_cycle();
    let a = run_experiment(&small_spec(21), &oracle).map_err(|e| e.to_string())?;
    let b = run_experiment(&small_spec(21), &oracle).map_err(|e| e.to_string())?;
    if a.dataset != b.dataset {
        return Err("datasets differ".into());
    }
    for (x, y) in a.models.iter().zip(&b.models) {
        if x.models != y.models || x.traces != y.traces {
            return Err(format!("fold {} models differ", x.fold));
        }
    }
    if without_runtime(&a.evaluation.rows) != without_runtime(&b.evaluation.rows) {
        return Err("result rows differ".into());
    }
    if a.evaluation.report.to_text() != b.evaluation.report.to_text() {
        return Err("reports differ".into());
    }
    Ok(())
}

/// Rendered cells carry `(green + red) / 2 = GED` pixels, counted straight
/// from the image.
pub fn pictorial_accounting() -> Check {
    let oracle = OracleHandle::exact_cycle();
    let run = run_experiment(&small_spec(4), &oracle).map_err(|e| e.to_string())?;
    let rows = &run.evaluation.rows;
    let (img, cells) = render_pictorial(&run.dataset, rows).map_err(|e| e.to_string())?;
    let n = run.dataset.instances[0].graph.n();
    let mut checked = 0;
    for cell in &cells {
        let (x0, y0) = (cell.column * (n + 1) + 1, cell.fold * (n + 1) + 1);
        let (mut green, mut red) = (0, 0);
        for y in y0..y0 + n {
            for x in x0..x0 + n {
                match img.get(x, y) {
                    GREEN => green += 1,
                    RED => red += 1,
                    _ => {}
                }
            }
        }
        let row = rows
            .iter()
            .find(|r| r.instance == cell.instance)
            .ok_or("cell without a row")?;
        let input = &run.dataset.instances[row.instance].graph;
        let expected = if row.valid {
            let cand = candidate_from_row(input, row).map_err(|e| e.to_string())?;
            pair_difference(input, &cand)
        } else {
            0
        };
        if green + red != 2 * expected {
            return Err(format!(
                "instance {}: green {green} + red {red} for GED {expected}",
                row.instance
            ));
        }
        checked += usize::from(row.valid);
    }
    if checked == 0 {
        return Err("no valid cell rendered".into());
    }
    Ok(())
}

/// The 3-node path with `prob[0,2] = 1` becomes a triangle after a single
/// guarded oracle call.
pub fn fixture_trace() -> Check {
    let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let mut prob = g.adjacency().clone();
    prob.set(0, 2, 1.0);
    prob.set(2, 0, 1.0);
    let gen = generated_with_prob(&g, prob);
    let oracle = OracleHandle::exact_cycle();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = sample_candidate(&g, &gen, &oracle, &SamplerConfig::default(), &mut rng)
        .map_err(|e| e.to_string())?;
    let triangle = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
    if !out.valid || out.graph != triangle {
        return Err(format!(
            "candidate {:?} valid={}",
            out.graph.edges(),
            out.valid
        ));
    }
    if pair_difference(&g, &out.graph) != 1 || ged(&g, &out.graph).unwrap() != 1.0 {
        return Err("GED is not 1".into());
    }
    if out.guarded_calls != 1 {
        return Err(format!("{} guarded oracle calls", out.guarded_calls));
    }
    // input classification, boundary check after the kept edges, one guarded draw
    if (out.oracle_calls, out.boundary_calls, out.attempts) != (3, 1, 1) {
        return Err(format!(
            "calls {} boundary {} attempts {}",
            out.oracle_calls, out.boundary_calls, out.attempts
        ));
    }
    Ok(())
}
