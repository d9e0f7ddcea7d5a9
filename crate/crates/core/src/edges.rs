//! Edge selection over the cosine-similarity graph of node vectors: global
//! thresholding (GTE) and the iterative Rényi-entropy method (REM).

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{self, ArtifactKind};
use crate::entropy::{diversity_index, effective_count, normalized_weights, RenyiOrder};
use crate::error::{Error, Result};
use crate::vectors::NodeVectors;

/// Up to this many nodes every positive neighbor is materialized.
pub const DENSE_LIMIT: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub similarity: f64,
}

fn by_similarity(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    b.similarity.total_cmp(&a.similarity).then(a.id.cmp(&b.id))
}

#[derive(Debug, Clone)]
enum Source {
    Vectors { unit: Vec<f64>, dim: usize },
    Lists,
}

/// Cosine similarities plus, per node, the positive neighbors w_p(v_i)
/// sorted by similarity descending (node id ascending on ties).
#[derive(Debug, Clone)]
pub struct SimilarityView {
    labels: Vec<String>,
    source: Source,
    neighbors: Vec<Vec<Neighbor>>,
    /// Set when neighbor lists were cut to the top M entries.
    cap: Option<usize>,
}

/// Builds the view, materializing all positive neighbors when the node count
/// is at most [`DENSE_LIMIT`] and only the top ⌊|N|/2⌋ otherwise.
pub fn build_similarity(vectors: &NodeVectors) -> Result<SimilarityView> {
    let n = vectors.len();
    let cap = (n > DENSE_LIMIT).then_some(n / 2);
    build_similarity_capped(vectors, cap)
}

pub fn build_similarity_capped(vectors: &NodeVectors, cap: Option<usize>) -> Result<SimilarityView> {
    let dim = vectors.dim();
    let mut unit = Vec::with_capacity(vectors.as_slice().len());
    for i in 0..vectors.len() {
        let row = vectors.row(i);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateVector {
                node: vectors.labels()[i].clone(),
            });
        }
        unit.extend(row.iter().map(|x| x / norm));
    }
    let n = vectors.len();
    let neighbors = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &unit[i * dim..(i + 1) * dim];
            let mut list: Vec<Neighbor> = (0..n)
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let w = dot(xi, &unit[j * dim..(j + 1) * dim]);
                    (w > 0.0).then_some(Neighbor {
                        id: j as u32,
                        similarity: w,
                    })
                })
                .collect();
            list.sort_by(by_similarity);
            if let Some(m) = cap {
                list.truncate(m);
            }
            list
        })
        .collect();
    Ok(SimilarityView {
        labels: vectors.labels().to_vec(),
        source: Source::Vectors { unit, dim },
        neighbors,
        cap,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SimilarityView {
    /// A view over explicit per-node similarity lists. Non-positive entries
    /// and self-entries are dropped; lists need not be symmetric.
    pub fn from_neighbor_lists(labels: Vec<String>, lists: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        if labels.len() != lists.len() {
            return Err(Error::Consistency("one neighbor list per node".into()));
        }
        let n = labels.len();
        let neighbors = lists
            .into_iter()
            .enumerate()
            .map(|(i, list)| {
                let mut list: Vec<Neighbor> = list
                    .into_iter()
                    .filter(|&(j, w)| j as usize != i && w > 0.0)
                    .map(|(id, similarity)| Neighbor { id, similarity })
                    .collect();
                if list.iter().any(|nb| nb.id as usize >= n || !nb.similarity.is_finite()) {
                    return Err(Error::Consistency("bad neighbor entry".into()));
                }
                list.sort_by(by_similarity);
                Ok(list)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            labels,
            source: Source::Lists,
            neighbors,
            cap: None,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// w_p(v_i), best first.
    pub fn positive_neighbors(&self, i: usize) -> &[Neighbor] {
        &self.neighbors[i]
    }

    /// w_ij. For list-backed views a pair missing from i's list reads as 0.
    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        match &self.source {
            Source::Vectors { unit, dim } => {
                dot(&unit[i * dim..(i + 1) * dim], &unit[j * dim..(j + 1) * dim])
            }
            Source::Lists => self.neighbors[i]
                .iter()
                .find(|nb| nb.id as usize == j)
                .map_or(0.0, |nb| nb.similarity),
        }
    }

    /// Every unordered pair with w_ij > 0 as (w, i, j), i < j, sorted by
    /// similarity descending then (i, j) ascending.
    pub fn positive_pairs(&self) -> Vec<(f64, u32, u32)> {
        let n = self.n_nodes();
        let mut pairs: Vec<(f64, u32, u32)> = match (&self.source, self.cap) {
            (Source::Vectors { .. }, Some(_)) => (0..n)
                .into_par_iter()
                .flat_map_iter(|i| {
                    (i + 1..n).filter_map(move |j| {
                        let w = self.similarity(i, j);
                        (w > 0.0).then_some((w, i as u32, j as u32))
                    })
                })
                .collect(),
            _ => {
                let mut seen: HashMap<(u32, u32), f64> = HashMap::new();
                for (i, list) in self.neighbors.iter().enumerate() {
                    for nb in list {
                        let key = (nb.id.min(i as u32), nb.id.max(i as u32));
                        seen.entry(key).or_insert(nb.similarity);
                    }
                }
                seen.into_iter().map(|((i, j), w)| (w, i, j)).collect()
            }
        };
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub source: u32,
    pub target: u32,
    pub weight: f64,
}

/// Undirected weighted edges in canonical (source < target) sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    labels: Vec<String>,
    edges: Vec<Edge>,
}

impl EdgeList {
    /// Canonicalizes orientation, sorts and drops duplicate pairs (first
    /// weight wins). Self-loops and non-finite weights are rejected.
    pub fn new(labels: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        let n = labels.len();
        let mut edges: Vec<Edge> = edges
            .into_iter()
            .map(|e| Edge {
                source: e.source.min(e.target),
                target: e.source.max(e.target),
                weight: e.weight,
            })
            .collect();
        for e in &edges {
            if e.source == e.target {
                return Err(Error::Consistency(format!(
                    "self-loop on `{}`",
                    labels.get(e.source as usize).map_or("?", String::as_str)
                )));
            }
            if e.target as usize >= n {
                return Err(Error::Consistency("edge endpoint out of range".into()));
            }
            if !e.weight.is_finite() {
                return Err(Error::NumericState("edge weight is not finite".into()));
            }
        }
        edges.sort_by_key(|e| (e.source, e.target));
        edges.dedup_by_key(|e| (e.source, e.target));
        Ok(Self { labels, edges })
    }

    fn from_sorted_unique(labels: Vec<String>, edges: Vec<Edge>) -> Self {
        Self { labels, edges }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes()];
        for e in &self.edges {
            deg[e.source as usize] += 1;
            deg[e.target as usize] += 1;
        }
        deg
    }

    pub fn isolated_count(&self) -> usize {
        self.degrees().iter().filter(|&&d| d == 0).count()
    }

    pub fn is_subset_of(&self, other: &EdgeList) -> bool {
        self.edges.iter().all(|e| {
            other
                .edges
                .binary_search_by_key(&(e.source, e.target), |o| (o.source, o.target))
                .is_ok()
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = ArtifactKind::Edges.header();
        out.push('\n');
        for e in &self.edges {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                self.labels[e.source as usize], self.labels[e.target as usize], e.weight
            ));
        }
        out
    }

    /// Parses `source<TAB>target<TAB>weight` rows. Node ids follow `labels`
    /// when given, otherwise order of first appearance. A missing weight
    /// reads as 1.
    pub fn parse_tsv(text: &str, labels: Option<&[String]>) -> Result<Self> {
        let (body, skipped) = artifact::strip_header(text, ArtifactKind::Edges)?;
        let mut names: Vec<String> = labels.map(<[String]>::to_vec).unwrap_or_default();
        let mut index: HashMap<String, u32> = names
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as u32))
            .collect();
        let fixed = labels.is_some();
        let mut edges = Vec::new();
        for (k, line) in body.lines().enumerate() {
            let line_no = k + 1 + skipped;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(Error::Structure {
                    line: line_no,
                    expected: 3,
                    found: fields.len(),
                });
            }
            let mut id = |name: &str| -> Result<u32> {
                if let Some(&i) = index.get(name) {
                    return Ok(i);
                }
                if fixed {
                    return Err(Error::Format {
                        what: "edge list",
                        line: line_no,
                        message: format!("unknown node `{name}`"),
                    });
                }
                names.push(name.to_string());
                index.insert(name.to_string(), (names.len() - 1) as u32);
                Ok((names.len() - 1) as u32)
            };
            let source = id(fields[0])?;
            let target = id(fields[1])?;
            let weight = match fields.get(2) {
                Some(w) => w.parse().map_err(|_| Error::Parse {
                    row: line_no,
                    column: "weight".into(),
                    value: w.to_string(),
                })?,
                None => 1.0,
            };
            edges.push(Edge {
                source,
                target,
                weight,
            });
        }
        EdgeList::new(names, edges)
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        artifact::write_atomic(path, self.to_tsv().as_bytes())
    }

    pub fn read_tsv(path: &Path, labels: Option<&[String]>) -> Result<Self> {
        Self::parse_tsv(&artifact::read_to_string(path)?, labels)
    }
}

/// Global thresholding: every pair with w_ij > τ.
pub fn gte(sim: &SimilarityView, threshold: f64) -> EdgeList {
    let edges = sim
        .positive_pairs()
        .into_iter()
        .take_while(|p| p.0 > threshold)
        .map(|(w, i, j)| Edge {
            source: i,
            target: j,
            weight: w,
        })
        .collect();
    EdgeList::new(sim.labels.clone(), edges).expect("similarity pairs are canonical")
}

/// The threshold at which GTE keeps the `count` strongest pairs (fewer when
/// the cut falls inside a run of tied similarities).
pub fn threshold_for_edge_count(sim: &SimilarityView, count: usize) -> f64 {
    let pairs = sim.positive_pairs();
    match pairs.get(count) {
        Some(p) => p.0,
        None => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrization {
    /// Keep an edge if either endpoint retains the other.
    Union,
    /// Keep an edge only if both endpoints retain each other.
    Intersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemConfig {
    pub order: RenyiOrder,
    pub max_iterations: usize,
    pub init_cap_fraction: f64,
    pub symmetrization: Symmetrization,
}

impl Default for RemConfig {
    fn default() -> Self {
        Self {
            order: RenyiOrder::Order(2.0),
            max_iterations: 10,
            init_cap_fraction: 0.5,
            symmetrization: Symmetrization::Union,
        }
    }
}

impl RemConfig {
    pub fn validate(&self) -> Result<()> {
        self.order.validate()?;
        if self.max_iterations == 0 {
            return Err(Error::Config("REM needs at least one iteration".into()));
        }
        if !(self.init_cap_fraction > 0.0 && self.init_cap_fraction <= 1.0) {
            return Err(Error::Config("init_cap_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Active-set sizes of one node across iterations: entry 0 is the initial
/// size, entry k the size after iteration k. Each active set is the prefix
/// of the node's best-first neighbor list of that length.
pub fn rem_schedule(
    similarities: &[f64],
    initial: usize,
    order: RenyiOrder,
    max_iterations: usize,
) -> Result<Vec<usize>> {
    let mut sizes = Vec::with_capacity(max_iterations + 1);
    let mut size = initial.min(similarities.len());
    sizes.push(size);
    for _ in 0..max_iterations {
        if size == 0 {
            sizes.push(0);
            continue;
        }
        let weights = normalized_weights(&similarities[..size]);
        let d = diversity_index(&weights, order)?;
        size = effective_count(d).min(size);
        sizes.push(size);
    }
    Ok(sizes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemTraceRow {
    pub iteration: usize,
    pub remaining_edges: usize,
    pub isolated_nodes: usize,
}

#[derive(Debug, Clone)]
pub struct RemResult {
    pub edges: EdgeList,
    pub trace: Vec<RemTraceRow>,
    /// `history[k][i]`: size of node i's active set after iteration k.
    pub history: Vec<Vec<usize>>,
}

impl RemResult {
    pub fn iterations(&self) -> usize {
        self.history.len() - 1
    }
}

pub fn rem_trace_csv(trace: &[RemTraceRow]) -> String {
    let mut out = ArtifactKind::RemTrace.header();
    out.push_str("\niteration,remaining_edges,isolated_nodes\n");
    for row in trace {
        out.push_str(&format!(
            "{},{},{}\n",
            row.iteration, row.remaining_edges, row.isolated_nodes
        ));
    }
    out
}

fn retained_edges(sim: &SimilarityView, sizes: &[usize], mode: Symmetrization) -> Vec<Edge> {
    let mut directed: Vec<(u32, u32, f64)> = Vec::new();
    for (i, &size) in sizes.iter().enumerate() {
        for nb in &sim.neighbors[i][..size] {
            directed.push((i as u32, nb.id, nb.similarity));
        }
    }
    let mut keyed: Vec<((u32, u32), f64)> = directed
        .into_iter()
        .map(|(i, j, w)| ((i.min(j), i.max(j)), w))
        .collect();
    keyed.sort_by_key(|e| e.0);
    let mut edges = Vec::with_capacity(keyed.len());
    let mut k = 0;
    while k < keyed.len() {
        let mut run = 1;
        while k + run < keyed.len() && keyed[k + run].0 == keyed[k].0 {
            run += 1;
        }
        if mode == Symmetrization::Union || run >= 2 {
            let ((source, target), weight) = keyed[k];
            edges.push(Edge {
                source,
                target,
                weight,
            });
        }
        k += run;
    }
    edges
}

/// Iterative Rényi-entropy backbone.
///
/// Each node starts from its top ⌊fraction·|N|⌋ positive neighbors. Every
/// iteration renormalizes the weights over the current active set, computes
/// the Hill number D_α and keeps the top nint(D_α) neighbors. Iteration stops
/// at `max_iterations` or once no node's set shrinks.
pub fn rem(sim: &SimilarityView, config: &RemConfig) -> Result<RemResult> {
    config.validate()?;
    let n = sim.n_nodes();
    if let Some(i) = (0..n).find(|&i| sim.neighbors[i].is_empty()) {
        return Err(Error::NoPositiveNeighbor {
            node: sim.labels[i].clone(),
        });
    }
    let initial = ((config.init_cap_fraction * n as f64).floor() as usize).max(1);
    let schedules: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sims: Vec<f64> = sim.neighbors[i].iter().map(|nb| nb.similarity).collect();
            rem_schedule(&sims, initial, config.order, config.max_iterations)
        })
        .collect::<Result<_>>()?;

    let mut last = 0;
    for k in 1..=config.max_iterations {
        if schedules.iter().any(|s| s[k] < s[k - 1]) {
            last = k;
        } else {
            break;
        }
    }
    let history: Vec<Vec<usize>> = (0..=last)
        .map(|k| schedules.iter().map(|s| s[k]).collect())
        .collect();

    let mut trace = Vec::with_capacity(history.len());
    let mut final_edges = Vec::new();
    for (k, sizes) in history.iter().enumerate() {
        let edges = retained_edges(sim, sizes, config.symmetrization);
        let list = EdgeList::from_sorted_unique(sim.labels.clone(), edges);
        trace.push(RemTraceRow {
            iteration: k,
            remaining_edges: list.len(),
            isolated_nodes: list.isolated_count(),
        });
        if k == last {
            final_edges = list.edges;
        }
    }
    Ok(RemResult {
        edges: EdgeList::from_sorted_unique(sim.labels.clone(), final_edges),
        trace,
        history,
    })
}
