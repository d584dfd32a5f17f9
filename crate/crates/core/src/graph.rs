//! Undirected graphs with dense adjacency, labeled datasets, the dataset
//! text format and stratified fold splitting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// An undirected graph `(X, A)` with a dense `n x n` adjacency matrix and an
/// `n x d` node feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    features: Tensor2,
    adjacency: Tensor2,
}

impl Graph {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidGraph(format!(
                "node count and feature dimension must be positive (got n={n}, d={d})"
            )));
        }
        Ok(Self {
            features: Tensor2::zeros(n, d),
            adjacency: Tensor2::zeros(n, n),
        })
    }

    /// Builds a graph with constant unit features from an edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::new(n, 1)?;
        g.features.fill(1.0);
        for &(u, v) in edges {
            g.insert_edge(u, v)?;
        }
        Ok(g)
    }

    /// Builds a graph from explicit parts, checking every invariant.
    pub fn from_parts(features: Tensor2, adjacency: Tensor2) -> Result<Self> {
        let n = adjacency.rows();
        if n == 0 || adjacency.cols() != n {
            return Err(Error::InvalidGraph(format!(
                "adjacency must be square and non-empty (got {}x{})",
                adjacency.rows(),
                adjacency.cols()
            )));
        }
        if features.rows() != n || features.cols() == 0 {
            return Err(Error::InvalidGraph(format!(
                "feature matrix is {}x{}, expected {n} rows",
                features.rows(),
                features.cols()
            )));
        }
        for i in 0..n {
            if adjacency.get(i, i) != 0.0 {
                return Err(Error::SelfLoop(i));
            }
            for j in (i + 1)..n {
                let a = adjacency.get(i, j);
                if a != adjacency.get(j, i) {
                    return Err(Error::Asymmetric {
                        instance: 0,
                        u: i,
                        v: j,
                    });
                }
                if a != 0.0 && a != 1.0 {
                    return Err(Error::InvalidGraph(format!(
                        "adjacency entry ({i},{j}) = {a} is not binary"
                    )));
                }
            }
        }
        Ok(Self {
            features,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor2 {
        &self.features
    }

    pub fn adjacency(&self) -> &Tensor2 {
        &self.adjacency
    }

    /// Features with node degree appended as the last column.
    pub fn features_with_degree(&self) -> Tensor2 {
        let (n, d) = (self.n(), self.d());
        let mut x = Tensor2::zeros(n, d + 1);
        for i in 0..n {
            for j in 0..d {
                x.set(i, j, self.features.get(i, j));
            }
            x.set(i, d, self.degree(i) as f64);
        }
        x
    }

    pub fn set_features(&mut self, features: Tensor2) -> Result<()> {
        if features.rows() != self.n() || features.cols() == 0 {
            return Err(Error::Shape(format!(
                "features {}x{} for a graph with {} nodes",
                features.rows(),
                features.cols(),
                self.n()
            )));
        }
        self.features = features;
        Ok(())
    }

    fn check_pair(&self, u: usize, v: usize) -> Result<()> {
        let n = self.n();
        if u >= n {
            return Err(Error::NodeOutOfRange { index: u, n });
        }
        if v >= n {
            return Err(Error::NodeOutOfRange { index: v, n });
        }
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        Ok(())
    }

    /// Returns a copy of the graph with the undirected edge `(u, v)` present.
    pub fn add_edge(&self, u: usize, v: usize) -> Result<Self> {
        let mut g = self.clone();
        g.insert_edge(u, v)?;
        Ok(g)
    }

    pub fn insert_edge(&mut self, u: usize, v: usize) -> Result<()> {
        self.set_edge(u, v, true)
    }

    pub fn remove_edge(&mut self, u: usize, v: usize) -> Result<()> {
        self.set_edge(u, v, false)
    }

    pub fn set_edge(&mut self, u: usize, v: usize, present: bool) -> Result<()> {
        self.check_pair(u, v)?;
        let w = if present { 1.0 } else { 0.0 };
        self.adjacency.set(u, v, w);
        self.adjacency.set(v, u, w);
        Ok(())
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n() && v < self.n() && self.adjacency.get(u, v) != 0.0
    }

    /// `|E| = sum(A) / 2`.
    pub fn edge_count(&self) -> usize {
        let total: f64 = self.adjacency.data().iter().sum();
        (total / 2.0).round() as usize
    }

    /// Undirected edges in canonical `u < v` order, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if self.adjacency.get(u, v) != 0.0 {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        let row = self.adjacency.row(u);
        row.iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(v, _)| v)
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors(u).count()
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut stack = Vec::new();
        let mut components = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        components
    }
}

/// Binary class label.
pub type ClassId = u8;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledGraph {
    pub graph: Graph,
    pub label: ClassId,
}

impl LabeledGraph {
    pub fn new(graph: Graph, label: ClassId) -> Result<Self> {
        if label > 1 {
            return Err(Error::InvalidGraph(format!("label {label} is not binary")));
        }
        Ok(Self { graph, label })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub generation_params: BTreeMap<String, String>,
    pub instances: Vec<LabeledGraph>,
}

const DATASET_MAGIC: &str = "rsgg-dataset";
const DATASET_VERSION: &str = "1";

impl Dataset {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            generation_params: BTreeMap::new(),
            instances: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Feature dimension shared by all instances (1 for an empty dataset).
    pub fn feature_dim(&self) -> usize {
        self.instances.first().map_or(1, |i| i.graph.d())
    }

    pub fn push(&mut self, instance: LabeledGraph) -> Result<()> {
        if let Some(first) = self.instances.first() {
            if first.graph.d() != instance.graph.d() {
                return Err(Error::Shape(format!(
                    "instance feature dim {} differs from dataset dim {}",
                    instance.graph.d(),
                    first.graph.d()
                )));
            }
        }
        self.instances.push(instance);
        Ok(())
    }

    pub fn labels(&self) -> Vec<ClassId> {
        self.instances.iter().map(|i| i.label).collect()
    }

    /// Serializes the dataset into its line-oriented text form.
    pub fn to_text(&self) -> String {
        let ids: Vec<usize> = (0..self.instances.len()).collect();
        write_records(
            &self.name,
            &self.generation_params,
            self.feature_dim(),
            ids.iter().zip(&self.instances).map(|(&i, g)| (i, g)),
        )
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let parsed = parse_records(text, path)?;
        for (pos, (id, _)) in parsed.records.iter().enumerate() {
            if *id != pos {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    msg: format!("instance ids must be sequential (found {id} at position {pos})"),
                });
            }
        }
        Ok(Self {
            name: parsed.name,
            generation_params: parsed.params,
            instances: parsed.records.into_iter().map(|(_, g)| g).collect(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    ds.save(path)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::load(path)
}

/// Graph records keyed by an arbitrary instance id. Candidate files written
/// by external explainers share this layout with dataset files but may hold
/// a sparse subset of ids.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphRecords {
    pub name: String,
    pub params: BTreeMap<String, String>,
    pub records: Vec<(usize, LabeledGraph)>,
}

pub(crate) fn write_records<'a>(
    name: &str,
    params: &BTreeMap<String, String>,
    dim: usize,
    records: impl ExactSizeIterator<Item = (usize, &'a LabeledGraph)>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{DATASET_MAGIC} {DATASET_VERSION}");
    let _ = writeln!(out, "name {name}");
    for (k, v) in params {
        let _ = writeln!(out, "param {k} {v}");
    }
    let _ = writeln!(out, "feature_dim {dim}");
    let _ = writeln!(out, "instance_count {}", records.len());
    for (id, inst) in records {
        let g = &inst.graph;
        let _ = writeln!(out, "instance {id} label {} nodes {}", inst.label, g.n());
        for u in 0..g.n() {
            let _ = write!(out, "adj {u}");
            for v in g.neighbors(u) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        for u in 0..g.n() {
            let _ = write!(out, "feat {u}");
            for x in g.features().row(u) {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn save_records(records: &GraphRecords, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dim = records.records.first().map_or(1, |(_, g)| g.graph.d());
    let text = write_records(
        &records.name,
        &records.params,
        dim,
        records.records.iter().map(|(i, g)| (*i, g)),
    );
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_records(path: impl AsRef<Path>) -> Result<GraphRecords> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text, path)
}

struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    line_no: usize,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str, path: &'a Path) -> Self {
        Self {
            lines: text.lines().enumerate(),
            path,
            line_no: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line_no,
            msg: msg.into(),
        }
    }

    fn peek_keyword(&self) -> Option<&'a str> {
        self.lines
            .clone()
            .next()
            .and_then(|(_, l)| l.split_whitespace().next())
    }

    fn next_tokens(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let (idx, line) = self
            .lines
            .next()
            .ok_or_else(|| self.err(format!("unexpected end of file, expected `{keyword}`")))?;
        self.line_no = idx + 1;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some(k) if k == keyword => Ok(tokens.collect()),
            other => Err(self.err(format!("expected `{keyword}`, found {other:?}"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, token: &str) -> Result<T> {
        token
            .parse()
            .map_err(|_| self.err(format!("cannot parse `{token}`")))
    }
}

fn parse_records(text: &str, path: &Path) -> Result<GraphRecords> {
    let mut r = LineReader::new(text, path);
    let header = r.next_tokens(DATASET_MAGIC)?;
    let version = header.first().copied().unwrap_or("");
    if version != DATASET_VERSION {
        return Err(Error::SchemaVersion {
            found: version.to_string(),
            expected: DATASET_VERSION.to_string(),
        });
    }
    let name = r.next_tokens("name")?.join(" ");
    let mut params = BTreeMap::new();
    while r.peek_keyword() == Some("param") {
        let toks = r.next_tokens("param")?;
        if toks.is_empty() {
            return Err(r.err("param line without a key"));
        }
        params.insert(toks[0].to_string(), toks[1..].join(" "));
    }
    let dim_toks = r.next_tokens("feature_dim")?;
    let dim: usize = r.parse(dim_toks.first().copied().unwrap_or(""))?;
    let count_toks = r.next_tokens("instance_count")?;
    let count: usize = r.parse(count_toks.first().copied().unwrap_or(""))?;

    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let toks = r.next_tokens("instance")?;
        if toks.len() != 5 || toks[1] != "label" || toks[3] != "nodes" {
            return Err(r.err("malformed instance header"));
        }
        let id: usize = r.parse(toks[0])?;
        let label: u8 = r.parse(toks[2])?;
        let n: usize = r.parse(toks[4])?;
        if label > 1 {
            return Err(r.err(format!("label {label} is not binary")));
        }
        if n == 0 {
            return Err(r.err("instance with zero nodes"));
        }
        let mut adjacency = Tensor2::zeros(n, n);
        for u in 0..n {
            let toks = r.next_tokens("adj")?;
            let node: usize = r.parse(toks.first().copied().unwrap_or(""))?;
            if node != u {
                return Err(r.err(format!("expected adjacency row {u}, found {node}")));
            }
            for t in &toks[1..] {
                let v: usize = r.parse(t)?;
                if v >= n {
                    return Err(r.err(format!("neighbor {v} out of range")));
                }
                if v == u {
                    return Err(r.err(format!("self-loop on node {u}")));
                }
                adjacency.set(u, v, 1.0);
            }
        }
        for u in 0..n {
            for v in (u + 1)..n {
                let a = adjacency.get(u, v);
                let b = adjacency.get(v, u);
                if a != b {
                    let (from, to) = if a != 0.0 { (u, v) } else { (v, u) };
                    return Err(Error::Asymmetric {
                        instance: id,
                        u: from,
                        v: to,
                    });
                }
            }
        }
        let mut features = Tensor2::zeros(n, dim);
        for u in 0..n {
            let toks = r.next_tokens("feat")?;
            if toks.len() != dim + 1 {
                return Err(r.err(format!("feature row must hold {dim} values")));
            }
            let node: usize = r.parse(toks[0])?;
            if node != u {
                return Err(r.err(format!("expected feature row {u}, found {node}")));
            }
            for (j, t) in toks[1..].iter().enumerate() {
                features.set(u, j, r.parse(t)?);
            }
        }
        let graph = Graph {
            features,
            adjacency,
        };
        records.push((id, LabeledGraph { graph, label }));
    }
    Ok(GraphRecords {
        name,
        params,
        records,
    })
}

/// Assignment of every dataset instance to exactly one of `k` folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub membership: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.membership
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.membership
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.membership {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified, seeded k-fold split. Instances of each class are shuffled and
/// dealt round-robin, the deal continuing across classes so fold sizes never
/// differ by more than one.
pub fn kfold_split(ds: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!(
            "fold count must be at least 2 (got {k})"
        )));
    }
    if k > ds.len() {
        return Err(Error::Config(format!(
            "fold count {k} exceeds instance count {}",
            ds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut membership = vec![0; ds.len()];
    let mut slot = 0;
    for class in 0..=1u8 {
        let mut idx: Vec<usize> = ds
            .instances
            .iter()
            .enumerate()
            .filter(|(_, g)| g.label == class)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        for i in idx {
            membership[i] = slot % k;
            slot += 1;
        }
    }
    Ok(FoldAssignment { k, membership })
}
