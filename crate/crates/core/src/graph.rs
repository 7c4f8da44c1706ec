//! Categorical graphs and the factorized node/edge reference process.
//!
//! Every node slot and every unordered slot pair carries its own copy of the
//! single-variable process, independently. Graphs are padded with dummy nodes
//! to a common slot count; edges touching a dummy hold the no-edge label.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measures::Coupling;
use crate::scalar::Scalar;
use crate::state_process::{
    MarkovReference, NoiseSchedule, Prior, RateMatrix, ReferenceProcess, StateSpace,
    TransitionKernel,
};

/// Default ceiling on the size of an enumerated graph space.
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphVocab<T> {
    node_labels: Vec<String>,
    edge_labels: Vec<String>,
    node_prior: Prior<T>,
    edge_prior: Prior<T>,
    dummy: usize,
    no_edge: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
struct VocabFile<T> {
    node_labels: Vec<String>,
    edge_labels: Vec<String>,
    #[serde(default)]
    node_prior: Option<Vec<T>>,
    #[serde(default)]
    edge_prior: Option<Vec<T>>,
    /// Defaults to the first node label.
    #[serde(default)]
    dummy_label: Option<String>,
    /// Defaults to the first edge label.
    #[serde(default)]
    no_edge_label: Option<String>,
}

fn distinct(labels: &[String], what: &str) -> Result<()> {
    StateSpace::new(labels.to_vec())
        .map(|_| ())
        .map_err(|e| Error::InvalidParameter(format!("{what}: {e}")))
}

impl<T: Scalar> GraphVocab<T> {
    /// The dummy node label and the no-edge label are the first entries.
    pub fn new(
        node_labels: Vec<String>,
        edge_labels: Vec<String>,
        node_prior: Prior<T>,
        edge_prior: Prior<T>,
    ) -> Result<Self> {
        distinct(&node_labels, "node labels")?;
        distinct(&edge_labels, "edge labels")?;
        if node_prior.len() != node_labels.len() {
            return Err(Error::SizeMismatch {
                expected: node_labels.len(),
                found: node_prior.len(),
            });
        }
        if edge_prior.len() != edge_labels.len() {
            return Err(Error::SizeMismatch {
                expected: edge_labels.len(),
                found: edge_prior.len(),
            });
        }
        Ok(Self {
            node_labels,
            edge_labels,
            node_prior,
            edge_prior,
            dummy: 0,
            no_edge: 0,
        })
    }

    /// Uniform priors over labels `v0..` and `e0..`; `v0` is the dummy and
    /// `e0` the no-edge label.
    pub fn uniform(d_v: usize, d_e: usize) -> Result<Self> {
        let names = |p: &str, d: usize| (0..d).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        Self::new(
            names("v", d_v),
            names("e", d_e),
            Prior::uniform(d_v)?,
            Prior::uniform(d_e)?,
        )
    }

    pub fn with_special_labels(mut self, dummy: &str, no_edge: &str) -> Result<Self> {
        self.dummy = self.node_index(dummy)?;
        self.no_edge = self.edge_index(no_edge)?;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: VocabFile<T> = serde_json::from_str(text)?;
        let node_prior = match f.node_prior {
            Some(p) => Prior::new(p)?,
            None => Prior::uniform(f.node_labels.len())?,
        };
        let edge_prior = match f.edge_prior {
            Some(p) => Prior::new(p)?,
            None => Prior::uniform(f.edge_labels.len())?,
        };
        let dummy = f
            .dummy_label
            .unwrap_or_else(|| f.node_labels.first().cloned().unwrap_or_default());
        let no_edge = f
            .no_edge_label
            .unwrap_or_else(|| f.edge_labels.first().cloned().unwrap_or_default());
        Self::new(f.node_labels, f.edge_labels, node_prior, edge_prior)?
            .with_special_labels(&dummy, &no_edge)
    }

    pub fn to_json(&self) -> Result<String> {
        let f = VocabFile {
            node_labels: self.node_labels.clone(),
            edge_labels: self.edge_labels.clone(),
            node_prior: Some(self.node_prior.as_slice().to_vec()),
            edge_prior: Some(self.edge_prior.as_slice().to_vec()),
            dummy_label: Some(self.node_labels[self.dummy].clone()),
            no_edge_label: Some(self.edge_labels[self.no_edge].clone()),
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn d_v(&self) -> usize {
        self.node_labels.len()
    }

    pub fn d_e(&self) -> usize {
        self.edge_labels.len()
    }

    pub fn node_labels(&self) -> &[String] {
        &self.node_labels
    }

    pub fn edge_labels(&self) -> &[String] {
        &self.edge_labels
    }

    pub fn node_prior(&self) -> &Prior<T> {
        &self.node_prior
    }

    pub fn edge_prior(&self) -> &Prior<T> {
        &self.edge_prior
    }

    pub fn dummy(&self) -> usize {
        self.dummy
    }

    pub fn no_edge(&self) -> usize {
        self.no_edge
    }

    pub fn node_index(&self, label: &str) -> Result<usize> {
        self.node_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Format(format!("unknown node label {label:?}")))
    }

    pub fn edge_index(&self, label: &str) -> Result<usize> {
        self.edge_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Format(format!("unknown edge label {label:?}")))
    }

    pub fn has_uniform_priors(&self) -> bool {
        self.node_prior.is_uniform() && self.edge_prior.is_uniform()
    }
}

/// A graph on `n` node slots with categorical node and edge labels. Edges
/// are stored as a full symmetric matrix; the diagonal holds no-edge.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledGraph {
    nodes: Vec<usize>,
    edges: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    n: usize,
    nodes: Vec<String>,
    #[serde(default)]
    edges: Vec<(usize, usize, String)>,
}

impl LabeledGraph {
    /// A graph whose every edge slot holds `no_edge`.
    pub fn empty(nodes: Vec<usize>, no_edge: usize) -> Self {
        let n = nodes.len();
        Self {
            nodes,
            edges: vec![no_edge; n * n],
        }
    }

    /// Build from node labels and an edge list; absent pairs are no-edge.
    pub fn from_edges(
        nodes: Vec<usize>,
        edges: &[(usize, usize, usize)],
        no_edge: usize,
    ) -> Result<Self> {
        let mut g = Self::empty(nodes, no_edge);
        let n = g.n();
        for &(i, j, l) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidParameter(format!(
                    "bad edge ({i}, {j}) on {n} nodes"
                )));
            }
            g.set_edge(i, j, l);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> usize {
        self.nodes[i]
    }

    pub fn edge(&self, i: usize, j: usize) -> usize {
        self.edges[i * self.n() + j]
    }

    pub fn set_node(&mut self, i: usize, label: usize) {
        self.nodes[i] = label;
    }

    pub fn set_edge(&mut self, i: usize, j: usize, label: usize) {
        let n = self.n();
        self.edges[i * n + j] = label;
        self.edges[j * n + i] = label;
    }

    /// Unordered slot pairs `(i, j)`, `i < j`, in lexicographic order.
    pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    /// Check label ranges, symmetry, the diagonal and dummy incidence.
    pub fn validate<T: Scalar>(&self, vocab: &GraphVocab<T>) -> Result<()> {
        self.validate_labels(vocab)?;
        for (i, j) in Self::pairs(self.n()) {
            let dummy_end = self.node(i) == vocab.dummy() || self.node(j) == vocab.dummy();
            if dummy_end && self.edge(i, j) != vocab.no_edge() {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i}, {j}) touches a dummy node"
                )));
            }
        }
        Ok(())
    }

    /// Label ranges, symmetry and diagonal only; dummy nodes may carry edges.
    pub fn validate_labels<T: Scalar>(&self, vocab: &GraphVocab<T>) -> Result<()> {
        let n = self.n();
        if let Some(&l) = self.nodes.iter().find(|&&l| l >= vocab.d_v()) {
            return Err(Error::InvalidParameter(format!(
                "node label {l} out of range"
            )));
        }
        for i in 0..n {
            if self.edge(i, i) != vocab.no_edge() {
                return Err(Error::InvalidParameter(format!("self-loop on node {i}")));
            }
            for j in 0..n {
                if self.edge(i, j) >= vocab.d_e() {
                    return Err(Error::InvalidParameter(format!(
                        "edge label {} out of range",
                        self.edge(i, j)
                    )));
                }
                if self.edge(i, j) != self.edge(j, i) {
                    return Err(Error::InvalidParameter(format!(
                        "edges ({i}, {j}) not symmetric"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Append dummy nodes up to `n` slots.
    pub fn padded(&self, n: usize, dummy: usize, no_edge: usize) -> Result<Self> {
        let m = self.n();
        if n < m {
            return Err(Error::InvalidParameter(format!(
                "cannot pad {m} nodes down to {n}"
            )));
        }
        let mut nodes = self.nodes.clone();
        nodes.resize(n, dummy);
        let mut g = Self::empty(nodes, no_edge);
        for (i, j) in Self::pairs(m) {
            g.set_edge(i, j, self.edge(i, j));
        }
        Ok(g)
    }

    /// The graph `h` with `h.node(i) = self.node(map[i])` and
    /// `h.edge(i, j) = self.edge(map[i], map[j])`.
    pub fn relabel(&self, map: &[usize]) -> Result<Self> {
        Assignment::new(map.to_vec())?.check_len(self.n())?;
        let n = self.n();
        let nodes = map.iter().map(|&a| self.nodes[a]).collect();
        let edges = (0..n * n)
            .map(|k| self.edge(map[k / n], map[k % n]))
            .collect();
        Ok(Self { nodes, edges })
    }

    /// Number of node slots plus unordered pairs whose labels differ.
    pub fn mismatch_count(&self, other: &Self) -> Result<usize> {
        if self.n() != other.n() {
            return Err(Error::SizeMismatch {
                expected: self.n(),
                found: other.n(),
            });
        }
        let nodes = self
            .nodes
            .iter()
            .zip(&other.nodes)
            .filter(|(a, b)| a != b)
            .count();
        let edges = Self::pairs(self.n())
            .filter(|&(i, j)| self.edge(i, j) != other.edge(i, j))
            .count();
        Ok(nodes + edges)
    }

    pub fn num_real_edges(&self, no_edge: usize) -> usize {
        Self::pairs(self.n())
            .filter(|&(i, j)| self.edge(i, j) != no_edge)
            .count()
    }

    pub fn from_json<T: Scalar>(text: &str, vocab: &GraphVocab<T>) -> Result<Self> {
        let f: GraphFile = serde_json::from_str(text)?;
        if f.nodes.len() != f.n {
            return Err(Error::SizeMismatch {
                expected: f.n,
                found: f.nodes.len(),
            });
        }
        let nodes = f
            .nodes
            .iter()
            .map(|l| vocab.node_index(l))
            .collect::<Result<Vec<_>>>()?;
        let edges = f
            .edges
            .iter()
            .map(|(i, j, l)| Ok((*i, *j, vocab.edge_index(l)?)))
            .collect::<Result<Vec<_>>>()?;
        let g = Self::from_edges(nodes, &edges, vocab.no_edge())?;
        g.validate(vocab)?;
        Ok(g)
    }

    pub fn to_json<T: Scalar>(&self, vocab: &GraphVocab<T>) -> Result<String> {
        let f = GraphFile {
            n: self.n(),
            nodes: self
                .nodes
                .iter()
                .map(|&l| vocab.node_labels()[l].clone())
                .collect(),
            edges: Self::pairs(self.n())
                .filter(|&(i, j)| self.edge(i, j) != vocab.no_edge())
                .map(|(i, j)| (i, j, vocab.edge_labels()[self.edge(i, j)].clone()))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    /// Compact label `nodes|edges` with label indices, e.g. `1.0|1`.
    pub fn key(&self) -> String {
        let nodes: Vec<String> = self.nodes.iter().map(|l| l.to_string()).collect();
        let edges: Vec<String> = Self::pairs(self.n())
            .map(|(i, j)| self.edge(i, j).to_string())
            .collect();
        format!("{}|{}", nodes.join("."), edges.join("."))
    }
}

/// A random graph with `n_real` non-dummy nodes padded to `n_slots`. Each
/// real pair gets a real edge label with probability `density`.
pub fn random_graph<T: Scalar, G: Rng + ?Sized>(
    vocab: &GraphVocab<T>,
    n_real: usize,
    n_slots: usize,
    density: f64,
    rng: &mut G,
) -> Result<LabeledGraph> {
    let real_nodes: Vec<usize> = (0..vocab.d_v()).filter(|&l| l != vocab.dummy()).collect();
    let real_edges: Vec<usize> = (0..vocab.d_e()).filter(|&l| l != vocab.no_edge()).collect();
    if real_nodes.is_empty() || real_edges.is_empty() {
        return Err(Error::InvalidParameter(
            "vocabulary has no real labels".into(),
        ));
    }
    let nodes = (0..n_real)
        .map(|_| real_nodes[rng.random_range(0..real_nodes.len())])
        .collect();
    let mut g = LabeledGraph::empty(nodes, vocab.no_edge());
    for (i, j) in LabeledGraph::pairs(n_real) {
        if rng.random::<f64>() < density {
            g.set_edge(i, j, real_edges[rng.random_range(0..real_edges.len())]);
        }
    }
    g.padded(n_slots, vocab.dummy(), vocab.no_edge())
}

/// Sparse molecule-like graph: a random spanning tree over the real nodes
/// plus `n_real / 4` extra random edges, padded to `n_slots`.
pub fn random_sparse_graph<T: Scalar, G: Rng + ?Sized>(
    vocab: &GraphVocab<T>,
    n_real: usize,
    n_slots: usize,
    rng: &mut G,
) -> Result<LabeledGraph> {
    let real_edges: Vec<usize> = (0..vocab.d_e()).filter(|&l| l != vocab.no_edge()).collect();
    let mut g = random_graph(vocab, n_real, n_slots, 0.0, rng)?;
    let edge = |rng: &mut G| real_edges[rng.random_range(0..real_edges.len())];
    for i in 1..n_real {
        let j = rng.random_range(0..i);
        let l = edge(rng);
        g.set_edge(i, j, l);
    }
    for _ in 0..n_real / 4 {
        let (i, j) = (rng.random_range(0..n_real), rng.random_range(0..n_real));
        if i != j {
            let l = edge(rng);
            g.set_edge(i, j, l);
        }
    }
    Ok(g)
}

/// A node correspondence: slot `i` of the first graph matches slot
/// `mapping[i]` of the second.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub mapping: Vec<usize>,
}

impl Assignment {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &a in &mapping {
            if a >= n || seen[a] {
                return Err(Error::InvalidAssignment(format!(
                    "{mapping:?} is not a permutation"
                )));
            }
            seen[a] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &a) in self.mapping.iter().enumerate() {
            inv[a] = i;
        }
        Self { mapping: inv }
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::InvalidAssignment(format!(
                "assignment has {} slots, graphs have {n}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Node and edge reference processes on a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphProcess<T> {
    vocab: GraphVocab<T>,
    node: ReferenceProcess<T>,
    edge: ReferenceProcess<T>,
}

impl<T: Scalar> GraphProcess<T> {
    pub fn new(vocab: GraphVocab<T>, schedule: NoiseSchedule<T>) -> Self {
        let node = ReferenceProcess::new(schedule.clone(), vocab.node_prior().clone());
        let edge = ReferenceProcess::new(schedule, vocab.edge_prior().clone());
        Self { vocab, node, edge }
    }

    /// Separate node and edge schedules; both must share the grid.
    pub fn with_schedules(
        vocab: GraphVocab<T>,
        node: NoiseSchedule<T>,
        edge: NoiseSchedule<T>,
    ) -> Result<Self> {
        if node.n_steps() != edge.n_steps() || (node.tau() - edge.tau()).abs() > T::validation_tol()
        {
            return Err(Error::InvalidParameter(
                "node and edge schedules must share n_steps and tau".into(),
            ));
        }
        Ok(Self {
            node: ReferenceProcess::new(node, vocab.node_prior().clone()),
            edge: ReferenceProcess::new(edge, vocab.edge_prior().clone()),
            vocab,
        })
    }

    pub fn vocab(&self) -> &GraphVocab<T> {
        &self.vocab
    }

    pub fn node_process(&self) -> &ReferenceProcess<T> {
        &self.node
    }

    pub fn edge_process(&self) -> &ReferenceProcess<T> {
        &self.edge
    }

    pub fn n_steps(&self) -> usize {
        self.node.n_steps()
    }

    pub fn node_kernel(&self, s: usize, t: usize) -> Result<Matrix<T>> {
        Ok(self.node.transition(s, t)?.matrix)
    }

    pub fn edge_kernel(&self, s: usize, t: usize) -> Result<Matrix<T>> {
        Ok(self.edge.transition(s, t)?.matrix)
    }

    /// `-ln P^V_{0:τ}` and `-ln P^E_{0:τ}` label-pair tables.
    pub fn nll_tables(&self) -> Result<(Matrix<T>, Matrix<T>)> {
        let n = self.n_steps();
        Ok((
            self.node_kernel(0, n)?.map(|p| -p.ln()),
            self.edge_kernel(0, n)?.map(|p| -p.ln()),
        ))
    }
}

fn same_slots(g1: &LabeledGraph, g2: &LabeledGraph) -> Result<()> {
    if g1.n() != g2.n() {
        return Err(Error::SizeMismatch {
            expected: g1.n(),
            found: g2.n(),
        });
    }
    Ok(())
}

fn product_kernel<T: Scalar>(
    pv: &Matrix<T>,
    pe: &Matrix<T>,
    g1: &LabeledGraph,
    g2: &LabeledGraph,
) -> T {
    let nodes = g1
        .nodes()
        .iter()
        .zip(g2.nodes())
        .fold(T::one(), |acc, (&a, &b)| acc * pv[(a, b)]);
    LabeledGraph::pairs(g1.n()).fold(nodes, |acc, (i, j)| {
        acc * pe[(g1.edge(i, j), g2.edge(i, j))]
    })
}

/// `P^G_{s:t}(g1, g2)`: product of node kernels over slots and edge kernels
/// over unordered pairs.
pub fn graph_kernel<T: Scalar>(
    process: &GraphProcess<T>,
    g1: &LabeledGraph,
    g2: &LabeledGraph,
    s: usize,
    t: usize,
) -> Result<T> {
    same_slots(g1, g2)?;
    Ok(product_kernel(
        &process.node_kernel(s, t)?,
        &process.edge_kernel(s, t)?,
        g1,
        g2,
    ))
}

/// `-ln P^G_{0:τ}(g1, σ(g2))`, summed term by term.
pub fn pair_nll<T: Scalar>(
    process: &GraphProcess<T>,
    g1: &LabeledGraph,
    g2: &LabeledGraph,
    assignment: &Assignment,
) -> Result<T> {
    same_slots(g1, g2)?;
    assignment.check_len(g1.n())?;
    let (cv, ce) = process.nll_tables()?;
    Ok(pair_nll_with_tables(&cv, &ce, g1, g2, &assignment.mapping))
}

pub(crate) fn pair_nll_with_tables<T: Scalar>(
    cv: &Matrix<T>,
    ce: &Matrix<T>,
    g1: &LabeledGraph,
    g2: &LabeledGraph,
    map: &[usize],
) -> T {
    let nodes = (0..g1.n()).fold(T::zero(), |acc, i| acc + cv[(g1.node(i), g2.node(map[i]))]);
    LabeledGraph::pairs(g1.n()).fold(nodes, |acc, (i, j)| {
        acc + ce[(g1.edge(i, j), g2.edge(map[i], map[j]))]
    })
}

/// All labelled graphs on `n` slots, indexed in mixed radix: node slots
/// first (slot 0 most significant), then unordered pairs in lexicographic
/// order. Configurations with edges on dummy nodes are included so the space
/// is a full product; [`FlatGraphSpace::respects_dummies`] marks them.
#[derive(Debug, Clone)]
pub struct FlatGraphSpace<T> {
    vocab: GraphVocab<T>,
    n: usize,
    graphs: Vec<LabeledGraph>,
    index: HashMap<LabeledGraph, usize>,
}

/// `d_V^n · d_E^(n(n-1)/2)`, or `None` on overflow.
pub fn graph_space_size(d_v: usize, d_e: usize, n: usize) -> Option<usize> {
    let pairs = u32::try_from(n * n.saturating_sub(1) / 2).ok()?;
    d_v.checked_pow(u32::try_from(n).ok()?)?
        .checked_mul(d_e.checked_pow(pairs)?)
}

pub fn enumerate_graph_space<T: Scalar>(
    vocab: &GraphVocab<T>,
    n: usize,
    cap: usize,
) -> Result<FlatGraphSpace<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "graph space needs at least one node slot".into(),
        ));
    }
    let size = graph_space_size(vocab.d_v(), vocab.d_e(), n).unwrap_or(usize::MAX);
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    let pairs: Vec<(usize, usize)> = LabeledGraph::pairs(n).collect();
    let mut radices = vec![vocab.d_v(); n];
    radices.extend(std::iter::repeat_n(vocab.d_e(), pairs.len()));
    let mut graphs = Vec::with_capacity(size);
    let mut digits = vec![0usize; radices.len()];
    for _ in 0..size {
        let mut g = LabeledGraph::empty(digits[..n].to_vec(), vocab.no_edge());
        for (&(i, j), &l) in pairs.iter().zip(&digits[n..]) {
            g.set_edge(i, j, l);
        }
        graphs.push(g);
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < radices[pos] {
                break;
            }
            digits[pos] = 0;
        }
    }
    let index = graphs
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, g)| (g, i))
        .collect();
    Ok(FlatGraphSpace {
        vocab: vocab.clone(),
        n,
        graphs,
        index,
    })
}

impl<T: Scalar> FlatGraphSpace<T> {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vocab(&self) -> &GraphVocab<T> {
        &self.vocab
    }

    pub fn graph(&self, i: usize) -> &LabeledGraph {
        &self.graphs[i]
    }

    pub fn graphs(&self) -> &[LabeledGraph] {
        &self.graphs
    }

    pub fn index_of(&self, g: &LabeledGraph) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn state_space(&self) -> Result<StateSpace> {
        StateSpace::new(self.graphs.iter().map(LabeledGraph::key).collect())
    }

    /// Per-state flag: no edge touches a dummy node.
    pub fn respects_dummies(&self) -> Vec<bool> {
        self.graphs
            .iter()
            .map(|g| g.validate(&self.vocab).is_ok())
            .collect()
    }

    /// Product kernel on indices.
    pub fn kernel(&self, process: &GraphProcess<T>, s: usize, t: usize) -> Result<Matrix<T>> {
        let pv = process.node_kernel(s, t)?;
        let pe = process.edge_kernel(s, t)?;
        let m = self.len();
        Ok(Matrix::from_fn(m, m, |a, b| {
            product_kernel(&pv, &pe, &self.graphs[a], &self.graphs[b])
        }))
    }

    /// `E_π[mismatch_count(X_0, X_τ)]`.
    pub fn expected_mismatch(&self, coupling: &Coupling<T>) -> Result<T> {
        if coupling.d() != self.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                found: coupling.d(),
            });
        }
        let counts = Matrix::from_fn(self.len(), self.len(), |a, b| {
            T::from_count(self.graphs[a].mismatch_count(&self.graphs[b]).unwrap_or(0))
        });
        Ok(coupling.expect(|a, b| counts[(a, b)]))
    }
}

/// The graph process seen as a single chain on an enumerated space.
#[derive(Debug, Clone)]
pub struct FlatGraphProcess<T> {
    space: FlatGraphSpace<T>,
    process: GraphProcess<T>,
}

impl<T: Scalar> FlatGraphProcess<T> {
    pub fn new(space: FlatGraphSpace<T>, process: GraphProcess<T>) -> Result<Self> {
        if space.vocab() != process.vocab() {
            return Err(Error::InvalidParameter(
                "graph space and process use different vocabularies".into(),
            ));
        }
        Ok(Self { space, process })
    }

    pub fn space(&self) -> &FlatGraphSpace<T> {
        &self.space
    }

    pub fn process(&self) -> &GraphProcess<T> {
        &self.process
    }
}

impl<T: Scalar> MarkovReference<T> for FlatGraphProcess<T> {
    fn num_states(&self) -> usize {
        self.space.len()
    }

    fn n_steps(&self) -> usize {
        self.process.n_steps()
    }

    fn tau(&self) -> T {
        self.process.node.tau()
    }

    fn transition(&self, s: usize, t: usize) -> Result<TransitionKernel<T>> {
        Ok(TransitionKernel {
            from: s,
            to: t,
            matrix: self.space.kernel(&self.process, s, t)?,
        })
    }

    /// Kronecker sum of the component generators: a single component moves.
    fn rate(&self, t: usize) -> Result<RateMatrix<T>> {
        let av = self.process.node.rate(t)?.matrix;
        let ae = self.process.edge.rate(t)?.matrix;
        let pairs: Vec<(usize, usize)> = LabeledGraph::pairs(self.space.n()).collect();
        let m = self.space.len();
        let matrix = Matrix::from_fn(m, m, |a, b| {
            let (g, h) = (self.space.graph(a), self.space.graph(b));
            if a == b {
                let nodes = g.nodes().iter().fold(T::zero(), |acc, &x| acc + av[(x, x)]);
                return pairs
                    .iter()
                    .fold(nodes, |acc, &(i, j)| acc + ae[(g.edge(i, j), g.edge(i, j))]);
            }
            let node_diff: Vec<usize> = (0..g.n()).filter(|&i| g.node(i) != h.node(i)).collect();
            let edge_diff: Vec<&(usize, usize)> = pairs
                .iter()
                .filter(|&&(i, j)| g.edge(i, j) != h.edge(i, j))
                .collect();
            match (node_diff.as_slice(), edge_diff.as_slice()) {
                ([i], []) => av[(g.node(*i), h.node(*i))],
                ([], [&(i, j)]) => ae[(g.edge(i, j), h.edge(i, j))],
                _ => T::zero(),
            }
        });
        Ok(RateMatrix { at: t, matrix })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn process(d_v: usize, d_e: usize, ratio: f64) -> GraphProcess<f64> {
        GraphProcess::new(
            GraphVocab::uniform(d_v, d_e).unwrap(),
            NoiseSchedule::single_step(ratio).unwrap(),
        )
    }

    #[test]
    fn two_node_identical_pair() {
        let p = process(2, 2, 0.3);
        let g = LabeledGraph::from_edges(vec![1, 1], &[(0, 1, 1)], 0).unwrap();
        // three factors of 0.3 + 0.7 / 2
        assert_abs_diff_eq!(
            graph_kernel(&p, &g, &g, 0, 1).unwrap(),
            0.274_625,
            epsilon = 1e-12
        );
    }

    #[test]
    fn single_node_reduces_to_node_kernel() {
        let p = process(3, 2, 0.4);
        let a = LabeledGraph::empty(vec![2], 0);
        let b = LabeledGraph::empty(vec![1], 0);
        assert_abs_diff_eq!(
            graph_kernel(&p, &a, &b, 0, 1).unwrap(),
            0.6 / 3.0,
            epsilon = 1e-15
        );
        assert!(graph_kernel(&p, &a, &LabeledGraph::empty(vec![1, 1], 0), 0, 1).is_err());
    }

    #[test]
    fn space_sizes() {
        let v = GraphVocab::<f64>::uniform(2, 2).unwrap();
        assert_eq!(
            enumerate_graph_space(&v, 1, DEFAULT_ENUMERATION_CAP)
                .unwrap()
                .len(),
            2
        );
        assert_eq!(
            enumerate_graph_space(&v, 2, DEFAULT_ENUMERATION_CAP)
                .unwrap()
                .len(),
            8
        );
        assert_eq!(
            enumerate_graph_space(&v, 3, DEFAULT_ENUMERATION_CAP)
                .unwrap()
                .len(),
            64
        );
        assert!(matches!(
            enumerate_graph_space(&v, 5, DEFAULT_ENUMERATION_CAP),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn enumeration_is_a_bijection() {
        let v = GraphVocab::<f64>::uniform(2, 3).unwrap();
        let s = enumerate_graph_space(&v, 3, DEFAULT_ENUMERATION_CAP).unwrap();
        for (i, g) in s.graphs().iter().enumerate() {
            assert_eq!(s.index_of(g), Some(i));
        }
        assert_eq!(s.state_space().unwrap().len(), s.len());
        assert_eq!(s.graph(1).key(), "0.0.0|0.0.1");
    }

    #[test]
    fn relabel_and_nll_agree() {
        let p = process(3, 3, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g1 = random_graph(p.vocab(), 3, 3, 0.5, &mut rng).unwrap();
        let g2 = random_graph(p.vocab(), 3, 3, 0.5, &mut rng).unwrap();
        let sigma = Assignment::new(vec![2, 0, 1]).unwrap();
        let nll = pair_nll(&p, &g1, &g2, &sigma).unwrap();
        let k = graph_kernel(&p, &g1, &g2.relabel(&sigma.mapping).unwrap(), 0, 1).unwrap();
        assert_abs_diff_eq!(nll, -k.ln(), epsilon = 1e-12);
        assert!(pair_nll(&p, &g1, &g2, &Assignment::identity(2)).is_err());
    }

    #[test]
    fn assignment_validation() {
        assert!(Assignment::new(vec![0, 0]).is_err());
        assert!(Assignment::new(vec![0, 2]).is_err());
        let a = Assignment::new(vec![2, 0, 1]).unwrap();
        assert_eq!(a.inverse().mapping, vec![1, 2, 0]);
    }

    #[test]
    fn dummy_incidence_is_rejected() {
        let v = GraphVocab::<f64>::uniform(2, 2).unwrap();
        let g = LabeledGraph::from_edges(vec![0, 1], &[(0, 1, 1)], 0).unwrap();
        assert!(g.validate(&v).is_err());
        assert!(g.validate_labels(&v).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"node_labels": ["*", "C", "O"], "edge_labels": ["none", "single"],
                       "node_prior": [0.2, 0.5, 0.3], "edge_prior": [0.8, 0.2]}"#;
        let v = GraphVocab::<f64>::from_json(text).unwrap();
        assert_eq!((v.dummy(), v.no_edge()), (0, 0));
        let g = LabeledGraph::from_json(
            r#"{"n": 3, "nodes": ["C", "O", "C"], "edges": [[0, 1, "single"]]}"#,
            &v,
        )
        .unwrap();
        assert_eq!(g.edge(1, 0), 1);
        assert_eq!(
            LabeledGraph::from_json(&g.to_json(&v).unwrap(), &v).unwrap(),
            g
        );
        assert_eq!(
            GraphVocab::<f64>::from_json(&v.to_json().unwrap()).unwrap(),
            v
        );
        assert!(GraphVocab::<f64>::from_json(
            r#"{"node_labels": ["a", "b"], "edge_labels": ["x", "y"], "extra": 1}"#
        )
        .is_err());
    }

    #[test]
    fn flat_rates_are_generators() {
        let gp = GraphProcess::new(
            GraphVocab::uniform(2, 2).unwrap(),
            NoiseSchedule::symmetric_cosine(10, 0.9, 1.0, 0.008).unwrap(),
        );
        let space = enumerate_graph_space(gp.vocab(), 2, 100).unwrap();
        let flat = FlatGraphProcess::new(space, gp).unwrap();
        for t in 0..=10 {
            flat.rate(t).unwrap().validate(1e-12).unwrap();
        }
        flat.transition(0, 10).unwrap().validate(1e-12).unwrap();
    }
}
