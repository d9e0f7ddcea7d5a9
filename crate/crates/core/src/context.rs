//! Per-condition tolerance neighborhoods and the biased random walks that
//! turn them into a text-like corpus.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{self, ArtifactKind};
use crate::data::NodalDataset;
use crate::error::{Error, Result};
use crate::seed;

/// δ_i = max(relative·|v_i(ω)|, absolute_floor).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceRule {
    pub relative: f64,
    pub absolute_floor: f64,
    /// Keep v_i in its own context set (distance zero always qualifies).
    pub include_self: bool,
}

impl Default for ToleranceRule {
    fn default() -> Self {
        Self {
            relative: 0.1,
            absolute_floor: 0.0,
            include_self: false,
        }
    }
}

impl ToleranceRule {
    pub fn new(relative: f64, absolute_floor: f64) -> Result<Self> {
        let rule = Self {
            relative,
            absolute_floor,
            include_self: false,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.relative) || !ok(self.absolute_floor) {
            return Err(Error::Config(
                "tolerance terms must be finite and nonnegative".into(),
            ));
        }
        if self.relative == 0.0 && self.absolute_floor == 0.0 {
            return Err(Error::Config(
                "tolerance needs a nonzero relative or absolute term".into(),
            ));
        }
        Ok(())
    }

    pub fn tolerance(&self, value: f64) -> f64 {
        (self.relative * value.abs()).max(self.absolute_floor)
    }
}

/// `sets[condition][node]` is `None` when the node is missing in that
/// condition, otherwise the ascending list of its context members.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSets {
    node_labels: Vec<String>,
    condition_labels: Vec<String>,
    sets: Vec<Vec<Option<Vec<u32>>>>,
}

impl ContextSets {
    /// Assembles context sets from explicit member lists, e.g. for fixtures.
    /// Lists are sorted and deduplicated.
    pub fn from_lists(
        node_labels: Vec<String>,
        condition_labels: Vec<String>,
        mut sets: Vec<Vec<Option<Vec<u32>>>>,
    ) -> Result<Self> {
        let n = node_labels.len();
        if sets.len() != condition_labels.len() {
            return Err(Error::Consistency(
                "one list of context sets per condition is required".into(),
            ));
        }
        for per_condition in &mut sets {
            if per_condition.len() != n {
                return Err(Error::Consistency(format!(
                    "expected {n} context sets per condition, found {}",
                    per_condition.len()
                )));
            }
            for members in per_condition.iter_mut().flatten() {
                members.sort_unstable();
                members.dedup();
                if members.last().is_some_and(|&m| m as usize >= n) {
                    return Err(Error::Consistency("context member out of range".into()));
                }
            }
        }
        Ok(Self {
            node_labels,
            condition_labels,
            sets,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_labels.len()
    }

    pub fn n_conditions(&self) -> usize {
        self.condition_labels.len()
    }

    pub fn node_labels(&self) -> &[String] {
        &self.node_labels
    }

    pub fn condition_labels(&self) -> &[String] {
        &self.condition_labels
    }

    pub fn get(&self, condition: usize, node: u32) -> Option<&[u32]> {
        self.sets[condition][node as usize].as_deref()
    }

    pub fn contains(&self, condition: usize, node: u32, member: u32) -> bool {
        self.get(condition, node)
            .is_some_and(|set| set.binary_search(&member).is_ok())
    }

    /// s_ω: present nodes whose context set is empty.
    pub fn empty_count(&self, condition: usize) -> usize {
        self.sets[condition]
            .iter()
            .filter(|s| s.as_ref().is_some_and(Vec::is_empty))
            .count()
    }

    /// `{condition: {node: [neighbors...]}}` keyed by label.
    pub fn to_json(&self) -> serde_json::Value {
        let mut root = BTreeMap::new();
        for (c, per_condition) in self.sets.iter().enumerate() {
            let mut nodes = BTreeMap::new();
            for (i, members) in per_condition.iter().enumerate() {
                if let Some(members) = members {
                    let names: Vec<&str> = members
                        .iter()
                        .map(|&m| self.node_labels[m as usize].as_str())
                        .collect();
                    nodes.insert(self.node_labels[i].as_str(), names);
                }
            }
            root.insert(self.condition_labels[c].as_str(), nodes);
        }
        serde_json::to_value(root).expect("string maps serialize")
    }
}

/// C_ω(v_i) = { v_j : v_j(ω) present, |v_j(ω) − v_i(ω)| ≤ δ_i }, with v_i
/// itself excluded unless the rule asks for it.
pub fn build_context_sets(dataset: &NodalDataset, rule: &ToleranceRule) -> Result<ContextSets> {
    rule.validate()?;
    let n = dataset.n_nodes();
    let sets = (0..dataset.n_conditions())
        .into_par_iter()
        .map(|c| {
            let mut present: Vec<(f64, u32)> = dataset
                .column(c)
                .enumerate()
                .filter_map(|(i, v)| v.map(|v| (v, i as u32)))
                .collect();
            present.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let mut per_node: Vec<Option<Vec<u32>>> = vec![None; n];
            for &(value, node) in &present {
                let delta = rule.tolerance(value);
                // Both differences are monotone in the sorted value, so the
                // exact predicate carves out one contiguous run.
                let lo = present.partition_point(|&(v, _)| value - v > delta);
                let hi = present.partition_point(|&(v, _)| v - value <= delta);
                let mut members: Vec<u32> = present[lo..hi]
                    .iter()
                    .map(|&(_, j)| j)
                    .filter(|&j| rule.include_self || j != node)
                    .collect();
                members.sort_unstable();
                per_node[node as usize] = Some(members);
            }
            per_node
        })
        .collect();
    Ok(ContextSets {
        node_labels: dataset.node_labels().to_vec(),
        condition_labels: dataset.condition_labels().to_vec(),
        sets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    pub length: usize,
    pub walks_per_start: usize,
    /// Breadth searching rate.
    pub p: f64,
    /// Depth searching rate.
    pub q: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            length: 10,
            walks_per_start: 10,
            p: 1.0,
            q: 1.0,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::Config("walk length must be at least 2".into()));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.p) || !positive(self.q) {
            return Err(Error::Config(
                "breadth and depth rates must be positive".into(),
            ));
        }
        Ok(())
    }

    fn is_unbiased(&self) -> bool {
        self.p == 1.0 && self.q == 1.0
    }
}

/// Unnormalized next-step weights out of `current`.
///
/// Without a predecessor every member weighs 1. With one, the predecessor
/// weighs 1, members shared with the predecessor's context set weigh `p` and
/// the rest weigh `q`.
pub fn transition_weights(
    contexts: &ContextSets,
    condition: usize,
    previous: Option<u32>,
    current: u32,
    p: f64,
    q: f64,
) -> Vec<(u32, f64)> {
    let Some(candidates) = contexts.get(condition, current) else {
        return Vec::new();
    };
    match previous {
        None => candidates.iter().map(|&c| (c, 1.0)).collect(),
        Some(prev) => {
            let prev_set = contexts.get(condition, prev).unwrap_or(&[]);
            candidates
                .iter()
                .map(|&c| {
                    let w = if c == prev {
                        1.0
                    } else if prev_set.binary_search(&c).is_ok() {
                        p
                    } else {
                        q
                    };
                    (c, w)
                })
                .collect()
        }
    }
}

fn step<R: Rng + ?Sized>(
    contexts: &ContextSets,
    condition: usize,
    previous: Option<u32>,
    current: u32,
    config: &WalkConfig,
    rng: &mut R,
) -> Option<u32> {
    let candidates = contexts.get(condition, current)?;
    if candidates.is_empty() {
        return None;
    }
    if previous.is_none() || config.is_unbiased() {
        return Some(candidates[rng.random_range(0..candidates.len())]);
    }
    let weights = transition_weights(contexts, condition, previous, current, config.p, config.q);
    let total: f64 = weights.iter().map(|w| w.1).sum();
    let mut target = rng.random::<f64>() * total;
    for &(node, w) in &weights {
        if target < w {
            return Some(node);
        }
        target -= w;
    }
    weights.last().map(|w| w.0)
}

/// One walk of at most `config.length` nodes starting at `start`.
pub fn sample_walk<R: Rng + ?Sized>(
    contexts: &ContextSets,
    condition: usize,
    start: u32,
    config: &WalkConfig,
    rng: &mut R,
) -> Result<Vec<u32>> {
    if contexts.get(condition, start).is_none_or(<[u32]>::is_empty) {
        return Err(Error::StartUnreachable {
            condition: contexts.condition_labels[condition].clone(),
            node: contexts.node_labels[start as usize].clone(),
        });
    }
    let mut walk = Vec::with_capacity(config.length);
    walk.push(start);
    let mut previous = None;
    while walk.len() < config.length {
        let current = *walk.last().unwrap();
        match step(contexts, condition, previous, current, config, rng) {
            Some(next) => {
                walk.push(next);
                previous = Some(current);
            }
            None => break,
        }
    }
    Ok(walk)
}

/// Random node sequences plus the label table their ids index into.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub node_labels: Vec<String>,
    pub sequences: Vec<Vec<u32>>,
    /// Condition of each sequence, when known (not stored on disk).
    pub conditions: Option<Vec<u32>>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Re-indexes nodes by order of first appearance and drops labels that
    /// never occur. This is the vocabulary a corpus file implies.
    pub fn compact(&self) -> Corpus {
        let mut remap: Vec<Option<u32>> = vec![None; self.node_labels.len()];
        let mut labels = Vec::new();
        let sequences = self
            .sequences
            .iter()
            .map(|seq| {
                seq.iter()
                    .map(|&id| {
                        *remap[id as usize].get_or_insert_with(|| {
                            labels.push(self.node_labels[id as usize].clone());
                            (labels.len() - 1) as u32
                        })
                    })
                    .collect()
            })
            .collect();
        Corpus {
            node_labels: labels,
            sequences,
            conditions: self.conditions.clone(),
        }
    }

    pub fn to_text(&self) -> Result<String> {
        if let Some(bad) = self
            .node_labels
            .iter()
            .find(|l| l.is_empty() || l.chars().any(char::is_whitespace))
        {
            return Err(Error::Format {
                what: "corpus",
                line: 0,
                message: format!("node label `{bad}` cannot be written space-separated"),
            });
        }
        let mut out = ArtifactKind::Corpus.header();
        out.push('\n');
        for seq in &self.sequences {
            for (k, &id) in seq.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                out.push_str(&self.node_labels[id as usize]);
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Corpus> {
        let (body, skipped) = artifact::strip_header(text, ArtifactKind::Corpus)?;
        let mut index: HashMap<String, u32> = HashMap::new();
        let mut labels = Vec::new();
        let mut sequences = Vec::new();
        for (k, line) in body.lines().enumerate() {
            let tokens: Vec<&str> = line.split(' ').filter(|t| !t.is_empty()).collect();
            if tokens.is_empty() {
                continue;
            }
            if tokens.len() < 2 {
                return Err(Error::Format {
                    what: "corpus",
                    line: k + 1 + skipped,
                    message: "sequences need at least two nodes".into(),
                });
            }
            let seq = tokens
                .iter()
                .map(|&t| {
                    *index.entry(t.to_string()).or_insert_with(|| {
                        labels.push(t.to_string());
                        (labels.len() - 1) as u32
                    })
                })
                .collect();
            sequences.push(seq);
        }
        Ok(Corpus {
            node_labels: labels,
            sequences,
            conditions: None,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        artifact::write_atomic(path, self.to_text()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Corpus> {
        Corpus::parse(&artifact::read_to_string(path)?)
    }
}

fn check_consistent(contexts: &ContextSets, dataset: &NodalDataset) -> Result<()> {
    if contexts.node_labels() != dataset.node_labels()
        || contexts.condition_labels() != dataset.condition_labels()
    {
        return Err(Error::Consistency(
            "context sets were built from a different dataset".into(),
        ));
    }
    for c in 0..dataset.n_conditions() {
        for (i, value) in dataset.column(c).enumerate() {
            if value.is_some() != contexts.sets[c][i].is_some() {
                return Err(Error::Consistency(format!(
                    "presence of node `{}` in condition `{}` differs between dataset and context sets",
                    dataset.node_labels()[i],
                    dataset.condition_labels()[c]
                )));
            }
        }
    }
    Ok(())
}

/// Expected corpus size: Σ_ω K·(|N| − ε_ω − s_ω).
pub fn expected_corpus_len(contexts: &ContextSets, dataset: &NodalDataset, k: usize) -> usize {
    (0..dataset.n_conditions())
        .map(|c| k * (dataset.n_nodes() - dataset.missing_count(c) - contexts.empty_count(c)))
        .sum()
}

/// Starts `walks_per_start` walks from every node with a nonempty context set
/// in every condition. Each walk draws from its own stream keyed by
/// (condition, node, walk), so output is identical for any thread count.
pub fn generate_corpus(
    contexts: &ContextSets,
    dataset: &NodalDataset,
    config: &WalkConfig,
) -> Result<Corpus> {
    config.validate()?;
    check_consistent(contexts, dataset)?;
    let walk_label = seed::label("walk");
    let starts: Vec<(usize, u32)> = (0..contexts.n_conditions())
        .flat_map(|c| {
            (0..contexts.n_nodes() as u32)
                .filter(move |&i| contexts.get(c, i).is_some_and(|s| !s.is_empty()))
                .map(move |i| (c, i))
        })
        .collect();
    let walks: Vec<(u32, Vec<u32>)> = starts
        .par_iter()
        .flat_map_iter(|&(c, start)| {
            (0..config.walks_per_start).map(move |w| {
                let mut rng =
                    seed::stream(config.seed, &[walk_label, c as u64, start as u64, w as u64]);
                let walk = sample_walk(contexts, c, start, config, &mut rng)
                    .expect("start has a nonempty context set");
                (c as u32, walk)
            })
        })
        .filter(|(_, walk)| walk.len() >= 2)
        .collect();
    let (conditions, sequences) = walks.into_iter().unzip();
    Ok(Corpus {
        node_labels: contexts.node_labels().to_vec(),
        sequences,
        conditions: Some(conditions),
    })
}

/// Human-readable one-line summary used in logs.
pub fn describe(contexts: &ContextSets) -> String {
    let mut out = String::new();
    for c in 0..contexts.n_conditions() {
        let sizes: Vec<usize> = contexts.sets[c].iter().flatten().map(Vec::len).collect();
        let mean = if sizes.is_empty() {
            0.0
        } else {
            sizes.iter().sum::<usize>() as f64 / sizes.len() as f64
        };
        let _ = write!(
            out,
            "{}{}: mean |C|={mean:.1}",
            if c > 0 { ", " } else { "" },
            contexts.condition_labels[c]
        );
    }
    out
}
