//! Node-by-condition measurement tables: CSV ingestion with missing cells and
//! the community-structured synthetic generator.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::error::{Error, Result};
use crate::seed;

/// A |N|×|Ω| table of optional measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalDataset {
    node_labels: Vec<String>,
    condition_labels: Vec<String>,
    /// Row-major, one row per node.
    values: Vec<Option<f64>>,
}

fn check_unique(labels: &[String], kind: &'static str) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for label in labels {
        if !seen.insert(label.as_str()) {
            return Err(Error::LabelCollision {
                kind,
                label: label.clone(),
            });
        }
    }
    Ok(())
}

impl NodalDataset {
    pub fn new(
        node_labels: Vec<String>,
        condition_labels: Vec<String>,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        check_unique(&node_labels, "node")?;
        check_unique(&condition_labels, "condition")?;
        if values.len() != node_labels.len() * condition_labels.len() {
            return Err(Error::Consistency(format!(
                "{} values for a {}x{} table",
                values.len(),
                node_labels.len(),
                condition_labels.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NumericState(
                "dataset contains a non-finite measurement".into(),
            ));
        }
        Ok(Self {
            node_labels,
            condition_labels,
            values,
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

    pub fn value(&self, node: usize, condition: usize) -> Option<f64> {
        self.values[node * self.n_conditions() + condition]
    }

    pub fn row(&self, node: usize) -> &[Option<f64>] {
        let m = self.n_conditions();
        &self.values[node * m..(node + 1) * m]
    }

    pub fn column(&self, condition: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.n_nodes()).map(move |i| self.value(i, condition))
    }

    /// ε_ω: the number of missing cells in `condition`.
    pub fn missing_count(&self, condition: usize) -> usize {
        self.column(condition).filter(Option::is_none).count()
    }
}

/// Delimiter and missing-cell token for CSV ingestion and export.
///
/// Empty cells are always read as missing; `missing_token` adds a second
/// spelling (e.g. `NA`) and is what gets written for missing cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub missing_token: String,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            missing_token: String::new(),
        }
    }
}

pub fn load_dataset(path: &Path, options: &CsvOptions) -> Result<NodalDataset> {
    let text = artifact::read_to_string(path)?;
    parse_dataset(&text, options)
}

pub fn parse_dataset(text: &str, options: &CsvOptions) -> Result<NodalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(record) => record.map_err(csv_error)?,
        None => return NodalDataset::new(Vec::new(), Vec::new(), Vec::new()),
    };
    let width = header.len();
    let condition_labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut node_labels = Vec::new();
    let mut values = Vec::new();
    for (offset, record) in records.enumerate() {
        let record = record.map_err(csv_error)?;
        let line = offset + 2;
        if record.len() != width {
            return Err(Error::Structure {
                line,
                expected: width,
                found: record.len(),
            });
        }
        node_labels.push(record[0].to_string());
        for (column, cell) in record.iter().skip(1).enumerate() {
            values.push(parse_cell(cell, options, line, &condition_labels[column])?);
        }
    }
    NodalDataset::new(node_labels, condition_labels, values)
}

fn parse_cell(cell: &str, options: &CsvOptions, row: usize, column: &str) -> Result<Option<f64>> {
    let trimmed = cell.trim();
    if trimmed.is_empty() || trimmed == options.missing_token {
        return Ok(None);
    }
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Parse {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Format {
        what: "CSV table",
        line,
        message: e.to_string(),
    }
}

pub fn dataset_to_csv(dataset: &NodalDataset, options: &CsvOptions) -> Vec<u8> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(options.delimiter)
        .flexible(true)
        .from_writer(Vec::new());
    let mut header = Vec::with_capacity(dataset.n_conditions() + 1);
    header.push("node".to_string());
    header.extend(dataset.condition_labels.iter().cloned());
    // Writing into a Vec cannot fail.
    writer.write_record(&header).expect("in-memory write");
    for (i, label) in dataset.node_labels.iter().enumerate() {
        let mut record = Vec::with_capacity(header.len());
        record.push(label.clone());
        record.extend(dataset.row(i).iter().map(|v| match v {
            Some(v) => v.to_string(),
            None => options.missing_token.clone(),
        }));
        writer.write_record(&record).expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}

pub fn write_dataset(dataset: &NodalDataset, path: &Path, options: &CsvOptions) -> Result<()> {
    artifact::write_atomic(path, &dataset_to_csv(dataset, options))
}

/// What a community draws from in one test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Index into `sub_intervals`.
    Sub(usize),
    /// The whole `global_range` (perturbation test).
    Full,
}

/// Community-structured synthetic design.
///
/// Nodes are split into equal contiguous communities (G1 holds the first
/// block of nodes, G2 the next, ...). In every test each community draws its
/// values uniformly from one sub-interval or from the full range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_nodes: usize,
    pub n_communities: usize,
    pub global_range: (f64, f64),
    pub sub_intervals: Vec<(f64, f64)>,
    /// `plan[test][community]`. When absent the cyclic plan is used: community
    /// g in test t < m draws from sub-interval (g + t) mod m, and one final
    /// test draws everyone from the full range.
    #[serde(default)]
    pub community_interval_plan: Option<Vec<Vec<Assignment>>>,
    /// Number of leading tests in which G2 copies G1's assignment. 1 leaves
    /// the plan untouched.
    #[serde(default = "default_overlap")]
    pub overlap_variant: u8,
    #[serde(default)]
    pub seed: u64,
}

fn default_overlap() -> u8 {
    1
}

impl SyntheticSpec {
    /// Five communities over [1, 500] with sub-intervals [1,100], [101,200],
    /// ..., [401,500] and six tests.
    pub fn table1(n_nodes: usize, seed: u64) -> Self {
        Self {
            n_nodes,
            n_communities: 5,
            global_range: (1.0, 500.0),
            sub_intervals: (0..5)
                .map(|k| (1.0 + 100.0 * k as f64, 100.0 + 100.0 * k as f64))
                .collect(),
            community_interval_plan: None,
            overlap_variant: 1,
            seed,
        }
    }

    pub fn with_overlap(mut self, variant: u8) -> Self {
        self.overlap_variant = variant;
        self
    }

    pub fn community_size(&self) -> usize {
        self.n_nodes / self.n_communities
    }

    pub fn community_of(&self, node: usize) -> usize {
        node / self.community_size()
    }

    pub fn community_labels(&self) -> Vec<usize> {
        (0..self.n_nodes).map(|i| self.community_of(i)).collect()
    }

    /// The effective `[test][community]` plan, overlap variant applied.
    pub fn plan(&self) -> Vec<Vec<Assignment>> {
        let mut plan = self.community_interval_plan.clone().unwrap_or_else(|| {
            let m = self.n_communities;
            let k = self.sub_intervals.len();
            let mut plan: Vec<Vec<Assignment>> = (0..m)
                .map(|t| (0..m).map(|g| Assignment::Sub((g + t) % k)).collect())
                .collect();
            plan.push(vec![Assignment::Full; m]);
            plan
        });
        if self.overlap_variant >= 2 && self.n_communities >= 2 {
            for test in plan.iter_mut().take(self.overlap_variant as usize) {
                test[1] = test[0];
            }
        }
        plan
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("synthetic spec: {msg}")));
        if self.n_nodes == 0 || self.n_communities == 0 {
            return fail("n_nodes and n_communities must be positive".into());
        }
        if !self.n_nodes.is_multiple_of(self.n_communities) {
            return fail(format!(
                "{} nodes cannot be split into {} equal communities",
                self.n_nodes, self.n_communities
            ));
        }
        let (lo, hi) = self.global_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return fail("global_range must be a finite interval with lo < hi".into());
        }
        if self.sub_intervals.is_empty() {
            return fail("at least one sub-interval is required".into());
        }
        for (k, &(a, b)) in self.sub_intervals.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return fail(format!("sub-interval {k} is not a valid interval"));
            }
            if k > 0 && a < self.sub_intervals[k - 1].1 {
                return fail(format!("sub-interval {k} overlaps its predecessor"));
            }
        }
        if self.sub_intervals[0].0 != lo || self.sub_intervals.last().unwrap().1 != hi {
            return fail("sub-intervals must span global_range end to end".into());
        }
        if !(1..=4).contains(&self.overlap_variant) {
            return fail(format!(
                "overlap_variant {} is outside 1..=4",
                self.overlap_variant
            ));
        }
        if self.overlap_variant >= 2 && self.n_communities < 2 {
            return fail("overlap variants need at least two communities".into());
        }
        let plan = self.plan();
        if (self.overlap_variant as usize) > plan.len() {
            return fail("overlap_variant exceeds the number of tests".into());
        }
        for (t, test) in plan.iter().enumerate() {
            if test.len() != self.n_communities {
                return fail(format!(
                    "test {} assigns {} communities, expected {}",
                    t + 1,
                    test.len(),
                    self.n_communities
                ));
            }
            if let Some(Assignment::Sub(k)) = test
                .iter()
                .find(|a| matches!(a, Assignment::Sub(k) if *k >= self.sub_intervals.len()))
            {
                return fail(format!("test {} references sub-interval {k}", t + 1));
            }
        }
        Ok(())
    }

    pub fn interval(&self, assignment: Assignment) -> (f64, f64) {
        match assignment {
            Assignment::Sub(k) => self.sub_intervals[k],
            Assignment::Full => self.global_range,
        }
    }
}

/// Draws every cell uniformly from the interval its community is assigned in
/// that test. Nodes are labelled `v1..vN`, tests `T1..T|plan|`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<NodalDataset> {
    spec.validate()?;
    let plan = spec.plan();
    let mut rng = seed::stream(spec.seed, &[seed::label("synthetic")]);
    let mut values = Vec::with_capacity(spec.n_nodes * plan.len());
    for node in 0..spec.n_nodes {
        let community = spec.community_of(node);
        for test in &plan {
            let (a, b) = spec.interval(test[community]);
            let u: f64 = rng.random();
            values.push(Some((a + (b - a) * u).min(b)));
        }
    }
    NodalDataset::new(
        (1..=spec.n_nodes).map(|i| format!("v{i}")).collect(),
        (1..=plan.len()).map(|t| format!("T{t}")).collect(),
        values,
    )
}
