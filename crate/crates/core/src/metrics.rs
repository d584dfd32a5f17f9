//! Explanation quality metrics and their fold-level aggregation.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{ClassId, Graph};

/// Unit-cost edit distance under the identity node mapping: the number of
/// unordered pairs whose adjacency differs.
pub fn ged(g: &Graph, g_prime: &Graph) -> Result<f64> {
    if g.n() != g_prime.n() {
        return Err(Error::Shape(format!(
            "graph edit distance needs equal node counts ({} vs {})",
            g.n(),
            g_prime.n()
        )));
    }
    let n = g.n();
    let mut diff = 0usize;
    for u in 0..n {
        for v in (u + 1)..n {
            if g.has_edge(u, v) != g_prime.has_edge(u, v) {
                diff += 1;
            }
        }
    }
    Ok(diff as f64)
}

/// `GED(G, G') / (n + |E(G)|)`.
pub fn sparsity(g: &Graph, g_prime: &Graph) -> Result<f64> {
    Ok(ged(g, g_prime)? / (g.n() + g.edge_count()) as f64)
}

/// `chi(G) - I[Phi(G') = y]`, with `chi(G) = I[Phi(G) = y]`.
pub fn fidelity(input_correct: bool, candidate_matches_label: bool) -> i8 {
    i8::from(input_correct) - i8::from(candidate_matches_label)
}

/// Metrics for one explained instance.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub instance: usize,
    pub fold: usize,
    pub label: ClassId,
    pub input_class: ClassId,
    pub candidate_class: ClassId,
    pub valid: bool,
    pub runtime_secs: f64,
    pub ged: f64,
    pub oracle_calls: u64,
    pub correctness: u8,
    pub sparsity: f64,
    pub fidelity: i8,
    pub added: Vec<(usize, usize)>,
    pub removed: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Standard error of the per-fold means.
    pub std_err: f64,
}

impl Summary {
    /// Mean and standard error over `values` (one value per fold).
    pub fn of(values: &[f64]) -> Self {
        let k = values.len();
        if k == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        let std_err = if k < 2 {
            0.0
        } else {
            let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        };
        Self { mean, std_err }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AggregateReport {
    pub dataset: String,
    pub folds: usize,
    pub instances: usize,
    pub runtime: Summary,
    pub ged: Summary,
    pub oracle_calls: Summary,
    pub correctness: Summary,
    pub sparsity: Summary,
    pub fidelity: Summary,
    pub oracle_accuracy: f64,
    /// Free-form echo of the experiment configuration.
    pub config_echo: String,
}

/// Per-fold means of one metric over the rows of each fold.
fn fold_means(rows: &[MetricsRow], k: usize, f: impl Fn(&MetricsRow) -> f64) -> Vec<f64> {
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for r in rows {
        sums[r.fold] += f(r);
        counts[r.fold] += 1;
    }
    sums.iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s / c as f64)
        .collect()
}

pub fn aggregate(rows: &[MetricsRow], k: usize) -> AggregateReport {
    let s = |f: &dyn Fn(&MetricsRow) -> f64| Summary::of(&fold_means(rows, k, f));
    AggregateReport {
        folds: k,
        instances: rows.len(),
        runtime: s(&|r| r.runtime_secs),
        ged: s(&|r| r.ged),
        oracle_calls: s(&|r| r.oracle_calls as f64),
        correctness: s(&|r| f64::from(r.correctness)),
        sparsity: s(&|r| r.sparsity),
        fidelity: s(&|r| f64::from(r.fidelity)),
        ..Default::default()
    }
}

impl AggregateReport {
    /// Deterministic report body. Wall-clock runtime is kept out of it and
    /// written by [`AggregateReport::timing_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# rsgg evaluation report");
        let _ = writeln!(out, "dataset\t{}", self.dataset);
        let _ = writeln!(out, "folds\t{}", self.folds);
        let _ = writeln!(out, "instances\t{}", self.instances);
        let _ = writeln!(out, "metric\tmean\tstd_err");
        for (name, s) in [
            ("GED", self.ged),
            ("Oracle Calls", self.oracle_calls),
            ("Correctness", self.correctness),
            ("Sparsity", self.sparsity),
            ("Fidelity", self.fidelity),
        ] {
            let _ = writeln!(out, "{name}\t{:.3}\t{:.3}", s.mean, s.std_err);
        }
        let _ = writeln!(out, "Oracle Acc.\t{:.3}\t0.000", self.oracle_accuracy);
        if !self.config_echo.is_empty() {
            let _ = writeln!(out, "# config");
            for line in self.config_echo.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        out
    }

    pub fn timing_text(&self) -> String {
        format!(
            "metric\tmean\tstd_err\nRuntime (s)\t{:.6}\t{:.6}\n",
            self.runtime.mean, self.runtime.std_err
        )
    }
}
