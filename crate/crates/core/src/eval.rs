//! K-fold evaluation driver, results files, external-candidate scoring and
//! the ablation sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{kfold_split, Dataset, FoldAssignment, Graph};
use crate::metrics::{aggregate, fidelity, ged, sparsity, AggregateReport, MetricsRow, Summary};
use crate::models::GanModel;
use crate::oracle::{oracle_accuracy, OracleHandle};
use crate::sampler::{edge_operations, explain, ExplanationRecord, SamplerConfig};
use crate::synth::{generate_tree_cycles, TreeCyclesConfig};
use crate::training::{train, FoldModels, TrainConfig};

/// Scores one explanation. Oracle calls made here are bookkeeping and fall
/// outside the explanation window.
pub fn score(
    ds: &Dataset,
    record: &ExplanationRecord,
    oracle: &OracleHandle,
) -> Result<MetricsRow> {
    let inst = &ds.instances[record.instance];
    let g = &inst.graph;
    let candidate_class = oracle.predict(&record.candidate)?;
    let correctness = u8::from(candidate_class != record.input_class);
    if record.valid {
        assert_eq!(correctness, 1, "valid candidate must flip the oracle");
    } else {
        assert_eq!(
            record.candidate.adjacency(),
            g.adjacency(),
            "fallback must return the input"
        );
    }
    let (added, removed) = edge_operations(g, &record.candidate);
    Ok(MetricsRow {
        instance: record.instance,
        fold: record.fold,
        label: inst.label,
        input_class: record.input_class,
        candidate_class,
        valid: record.valid,
        runtime_secs: record.runtime_secs,
        ged: ged(g, &record.candidate)?,
        oracle_calls: record.oracle_calls,
        correctness,
        sparsity: sparsity(g, &record.candidate)?,
        fidelity: fidelity(
            record.input_class == inst.label,
            candidate_class == inst.label,
        ),
        added,
        removed,
    })
}

/// Output of an evaluation run.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub rows: Vec<MetricsRow>,
    pub report: AggregateReport,
}

/// Explains every test instance of every fold with that fold's models.
pub fn evaluate(
    ds: &Dataset,
    folds: &FoldAssignment,
    oracle: &OracleHandle,
    models: &[[GanModel; 2]],
    cfg: &SamplerConfig,
) -> Result<Evaluation> {
    if models.len() != folds.k {
        return Err(Error::MissingCheckpoint(format!(
            "{} folds but models for {}",
            folds.k,
            models.len()
        )));
    }
    let mut rows = Vec::new();
    for (fold, bank) in models.iter().enumerate() {
        for i in folds.test_indices(fold) {
            let record = explain(&ds.instances[i].graph, i, fold, bank, oracle, cfg)?;
            rows.push(score(ds, &record, oracle)?);
        }
    }
    finish(ds, folds, oracle, rows)
}

fn finish(
    ds: &Dataset,
    folds: &FoldAssignment,
    oracle: &OracleHandle,
    rows: Vec<MetricsRow>,
) -> Result<Evaluation> {
    let mut report = aggregate(&rows, folds.k);
    report.dataset = ds.name.clone();
    report.oracle_accuracy = oracle_accuracy(oracle, ds)?;
    Ok(Evaluation { rows, report })
}

/// Scores candidates produced elsewhere. Instances without a candidate, and
/// candidates that do not flip the oracle, count as fallbacks to the input.
pub fn evaluate_candidates(
    ds: &Dataset,
    folds: &FoldAssignment,
    oracle: &OracleHandle,
    candidates: &BTreeMap<usize, Graph>,
) -> Result<Evaluation> {
    let mut rows = Vec::new();
    for fold in 0..folds.k {
        for i in folds.test_indices(fold) {
            let g = &ds.instances[i].graph;
            let input_class = oracle.predict(g)?;
            let mut candidate = g.clone();
            let mut valid = false;
            if let Some(c) = candidates.get(&i) {
                if c.n() != g.n() {
                    return Err(Error::Shape(format!(
                        "candidate for instance {i} has {} nodes, input has {}",
                        c.n(),
                        g.n()
                    )));
                }
                if oracle.predict(c)? != input_class {
                    candidate = c.clone();
                    valid = true;
                }
            }
            let record = ExplanationRecord {
                instance: i,
                fold,
                input_class,
                candidate,
                valid,
                oracle_calls: 0,
                guarded_calls: 0,
                runtime_secs: 0.0,
            };
            rows.push(score(ds, &record, oracle)?);
        }
    }
    finish(ds, folds, oracle, rows)
}

const ROWS_HEADER: &str =
    "instance\tfold\tlabel\tinput_class\tcandidate_class\tvalid\tged\toracle_calls\truntime_s\tcorrectness\tsparsity\tfidelity\tadded\tremoved";

fn fmt_pairs(pairs: &[(usize, usize)]) -> String {
    if pairs.is_empty() {
        return "-".to_string();
    }
    pairs
        .iter()
        .map(|(u, v)| format!("{u}-{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_pairs(s: &str) -> Option<Vec<(usize, usize)>> {
    if s == "-" {
        return Some(Vec::new());
    }
    s.split(',')
        .map(|p| {
            let (u, v) = p.split_once('-')?;
            Some((u.parse().ok()?, v.parse().ok()?))
        })
        .collect()
}

/// Per-instance rows as tab-separated text.
pub fn rows_to_tsv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(ROWS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\t{}\t{}\t{}\t{}",
            r.instance,
            r.fold,
            r.label,
            r.input_class,
            r.candidate_class,
            u8::from(r.valid),
            r.ged,
            r.oracle_calls,
            r.runtime_secs,
            r.correctness,
            r.sparsity,
            r.fidelity,
            fmt_pairs(&r.added),
            fmt_pairs(&r.removed)
        );
    }
    out
}

pub fn rows_from_tsv(text: &str, path: &Path) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().enumerate();
    let err = |line: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    match lines.next() {
        Some((_, h)) if h == ROWS_HEADER => {}
        _ => return Err(err(1, "missing results header")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 14 {
            return Err(err(line_no, "expected 14 fields"));
        }
        macro_rules! p {
            ($i:expr) => {
                f[$i].parse().map_err(|_| err(line_no, "bad field"))?
            };
        }
        let valid: u8 = p!(5);
        rows.push(MetricsRow {
            instance: p!(0),
            fold: p!(1),
            label: p!(2),
            input_class: p!(3),
            candidate_class: p!(4),
            valid: valid == 1,
            ged: p!(6),
            oracle_calls: p!(7),
            runtime_secs: p!(8),
            correctness: p!(9),
            sparsity: p!(10),
            fidelity: p!(11),
            added: parse_pairs(f[12]).ok_or_else(|| err(line_no, "bad added list"))?,
            removed: parse_pairs(f[13]).ok_or_else(|| err(line_no, "bad removed list"))?,
        });
    }
    Ok(rows)
}

pub fn save_rows(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, rows_to_tsv(rows)).map_err(|e| Error::io(path, e))
}

pub fn load_rows(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    rows_from_tsv(&text, path)
}

/// Rebuilds the candidate graph of a row from its edge operations.
pub fn candidate_from_row(input: &Graph, row: &MetricsRow) -> Result<Graph> {
    let mut g = input.clone();
    for &(u, v) in &row.added {
        g.insert_edge(u, v)?;
    }
    for &(u, v) in &row.removed {
        g.remove_edge(u, v)?;
    }
    Ok(g)
}

/// A complete synthetic experiment with the exact cycle oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub data: TreeCyclesConfig,
    pub folds: usize,
    pub fold_seed: u64,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            data: TreeCyclesConfig::default(),
            folds: 10,
            fold_seed: 0,
            train: TrainConfig::default(),
            sampler: SamplerConfig::default(),
        }
    }
}

/// Output of [`run_experiment`].
pub struct ExperimentRun {
    pub dataset: Dataset,
    pub folds: FoldAssignment,
    pub models: Vec<FoldModels>,
    pub evaluation: Evaluation,
}

/// Generate, split, train and evaluate.
pub fn run_experiment(spec: &ExperimentSpec, oracle: &OracleHandle) -> Result<ExperimentRun> {
    let dataset = generate_tree_cycles(&spec.data)?;
    let folds = kfold_split(&dataset, spec.folds, spec.fold_seed)?;
    let models = train(&dataset, &folds, oracle, &spec.train)?;
    let banks: Vec<[GanModel; 2]> = models.iter().map(|m| m.models.clone()).collect();
    let evaluation = evaluate(&dataset, &folds, oracle, &banks, &spec.sampler)?;
    Ok(ExperimentRun {
        dataset,
        folds,
        models,
        evaluation,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationKind {
    CycleSize,
    CycleCount,
    NodeCount,
    DatasetSize,
}

impl AblationKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cycle-size" => Ok(Self::CycleSize),
            "cycle-count" => Ok(Self::CycleCount),
            "node-count" => Ok(Self::NodeCount),
            "dataset-size" => Ok(Self::DatasetSize),
            _ => Err(Error::Config(format!("unknown ablation kind `{s}`"))),
        }
    }

    /// The experiment for grid value `x`, derived from `base`.
    pub fn apply(self, base: &ExperimentSpec, x: usize) -> ExperimentSpec {
        let mut spec = base.clone();
        let d = &mut spec.data;
        match self {
            Self::CycleSize => {
                d.min_cycle_size = x;
                d.max_cycle_size = x;
            }
            Self::CycleCount => {
                d.min_cycles = x;
                d.max_cycles = x;
            }
            Self::NodeCount => d.nodes_per_instance = x,
            Self::DatasetSize => d.num_instances = x,
        }
        spec
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationPoint {
    pub x: usize,
    pub correctness: Summary,
    pub ged: Summary,
    /// GED divided by the node count.
    pub ged_per_node: Summary,
}

/// Regenerates, retrains and evaluates at each grid value.
pub fn run_ablation(
    kind: AblationKind,
    grid: &[usize],
    base: &ExperimentSpec,
    oracle: &OracleHandle,
) -> Result<Vec<AblationPoint>> {
    let mut out = Vec::with_capacity(grid.len());
    for &x in grid {
        let spec = kind.apply(base, x);
        spec.data
            .validate()
            .map_err(|e| Error::Infeasible(format!("grid point {x} for {kind:?}: {e}")))?;
        let run = run_experiment(&spec, oracle)?;
        let n = spec.data.nodes_per_instance as f64;
        let report = &run.evaluation.report;
        out.push(AblationPoint {
            x,
            correctness: report.correctness,
            ged: report.ged,
            ged_per_node: Summary {
                mean: report.ged.mean / n,
                std_err: report.ged.std_err / n,
            },
        });
    }
    Ok(out)
}

pub fn ablation_to_tsv(kind: AblationKind, points: &[AblationPoint]) -> String {
    let mut out = format!(
        "# ablation {kind:?}\nx\tcorrectness\tcorrectness_se\tged\tged_se\tged_per_n\tged_per_n_se\n"
    );
    for p in points {
        let _ = writeln!(
            out,
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.6}\t{:.6}",
            p.x,
            p.correctness.mean,
            p.correctness.std_err,
            p.ged.mean,
            p.ged.std_err,
            p.ged_per_node.mean,
            p.ged_per_node.std_err
        );
    }
    out
}
