//! Stage orchestration behind the `nodalnet` binary.
//!
//! Every stage reads its inputs from the previous stage's artifacts and can
//! run on its own; [`run_pipeline`] chains them in memory and passes data
//! through the same serializers, so staged and monolithic runs agree byte
//! for byte.

use std::fmt;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nodalnet::analysis::{self, Metric};
use nodalnet::artifact;
use nodalnet::context::{self, ContextSets, Corpus};
use nodalnet::data::{self, CsvOptions, NodalDataset, SyntheticSpec};
use nodalnet::edges::{self, EdgeList, RemConfig, SimilarityView};
use nodalnet::skipgram::{self, Objective};
use nodalnet::{seed, Error, ErrorKind, NodeVectors, RenyiOrder, Symmetrization, ToleranceRule, TrainConfig, WalkConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DATASET: &str = "dataset.csv";
pub const CONTEXTS: &str = "contexts.json";
pub const CORPUS: &str = "corpus.txt";
pub const EMBEDDING_CSV: &str = "embedding.csv";
pub const EMBEDDING_BIN: &str = "embedding.bin";
pub const TRAINING_LOG: &str = "training_log.csv";
pub const EDGES: &str = "edges.tsv";
pub const REM_TRACE: &str = "rem_trace.csv";
pub const STATS: &str = "stats.csv";
pub const DEGREES: &str = "degrees.csv";
pub const SWEEP: &str = "sweep.csv";
pub const PROJECTION_CSV: &str = "projection.csv";
pub const PROJECTION_SVG: &str = "projection.svg";
pub const SEPARATION: &str = "separation.json";
pub const MANIFEST: &str = "manifest.json";

/// A failure tagged with the stage it happened in.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        match self.source.kind() {
            ErrorKind::Input => 2,
            ErrorKind::Numeric => 3,
            ErrorKind::Config => 4,
        }
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait InStage<T> {
    fn stage(self, stage: &'static str) -> StageResult<T>;
}

impl<T> InStage<T> for nodalnet::Result<T> {
    fn stage(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Edge-selection method and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum EdgeChoice {
    Gte { threshold: f64 },
    Rem(RemConfig),
}

impl Default for EdgeChoice {
    fn default() -> Self {
        EdgeChoice::Rem(RemConfig::default())
    }
}

impl EdgeChoice {
    /// Parses `gte:<τ>` or `rem:<α>[,<iterations>[,union|intersection]]`.
    pub fn parse(text: &str) -> nodalnet::Result<Self> {
        let bad = || Error::Config(format!("cannot parse edge method `{text}`"));
        let (method, args) = text.split_once(':').ok_or_else(bad)?;
        match method {
            "gte" => {
                let threshold: f64 = args.trim().parse().map_err(|_| bad())?;
                Ok(EdgeChoice::Gte { threshold })
            }
            "rem" => {
                let mut parts = args.split(',').map(str::trim);
                let mut config = RemConfig::default();
                let alpha: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                config.order = RenyiOrder::new(alpha)?;
                if let Some(k) = parts.next() {
                    config.max_iterations = k.parse().map_err(|_| bad())?;
                }
                if let Some(mode) = parts.next() {
                    config.symmetrization = match mode {
                        "union" => Symmetrization::Union,
                        "intersection" => Symmetrization::Intersection,
                        _ => return Err(bad()),
                    };
                }
                if parts.next().is_some() {
                    return Err(bad());
                }
                Ok(EdgeChoice::Rem(config))
            }
            _ => Err(bad()),
        }
    }
}

/// Parses `softmax` or `neg:<k>`.
pub fn parse_objective(text: &str) -> nodalnet::Result<Objective> {
    match text.split_once(':') {
        None if text == "softmax" => Ok(Objective::FullSoftmax),
        Some(("neg", k)) => k
            .trim()
            .parse()
            .ok()
            .filter(|&k: &usize| k > 0)
            .map(|k| Objective::NegativeSampling { k })
            .ok_or_else(|| Error::Config(format!("bad negative-sample count in `{text}`"))),
        _ => Err(Error::Config(format!("unknown objective `{text}`"))),
    }
}

fn default_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

fn default_out() -> PathBuf {
    PathBuf::from("nodalnet-out")
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Measurement table; exclusive with `synthetic`.
    pub input: Option<PathBuf>,
    pub csv: CsvOptions,
    pub synthetic: Option<SyntheticSpec>,
    pub tolerance: ToleranceRule,
    pub walk: WalkConfig,
    pub train: TrainConfig,
    pub edges: EdgeChoice,
    /// Thresholds for the GTE sweep table.
    pub sweep_grid: Vec<f64>,
    pub write_contexts: bool,
    pub out: PathBuf,
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            csv: CsvOptions::default(),
            synthetic: None,
            tolerance: ToleranceRule::default(),
            walk: WalkConfig::default(),
            train: TrainConfig::default(),
            edges: EdgeChoice::default(),
            sweep_grid: default_grid(),
            write_contexts: false,
            out: default_out(),
            seed: 0,
            workers: default_workers(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub master: u64,
    pub generate: u64,
    pub walk: u64,
    pub train: u64,
}

impl StageSeeds {
    pub fn derive(master: u64) -> Self {
        let d = |name: &str| seed::derive_seed(master, &[seed::label(name)]);
        Self {
            master,
            generate: d("generate"),
            walk: d("walk"),
            train: d("train"),
        }
    }
}

impl PipelineConfig {
    /// Reads a config document, or the `config` member of a manifest.
    pub fn from_json(text: &str) -> nodalnet::Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config JSON: {e}")))?;
        let value = match value.get("config") {
            Some(inner) if value.get("artifacts").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| Error::Config(format!("config JSON: {e}")))
    }

    pub fn load(path: &Path) -> nodalnet::Result<Self> {
        Self::from_json(&artifact::read_to_string(path)?)
    }

    pub fn seeds(&self) -> StageSeeds {
        StageSeeds::derive(self.seed)
    }

    /// Pushes derived seeds and the worker count into the stage configs.
    pub fn resolved(&self) -> Self {
        let seeds = self.seeds();
        let mut out = self.clone();
        if let Some(spec) = &mut out.synthetic {
            spec.seed = seeds.generate;
        }
        out.walk.seed = seeds.walk;
        out.train.seed = seeds.train;
        out.train.workers = self.workers;
        out
    }

    pub fn validate(&self) -> nodalnet::Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.tolerance.validate()?;
        self.walk.validate()?;
        self.train.validate()?;
        match self.edges {
            EdgeChoice::Gte { threshold } if !threshold.is_finite() => {
                return Err(Error::Config("GTE threshold must be finite".into()))
            }
            EdgeChoice::Rem(rem) => rem.validate()?,
            _ => {}
        }
        if let Some(spec) = &self.synthetic {
            spec.validate()?;
        }
        Ok(())
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Synthetic community of every node, when the labels identify them.
    pub fn communities_for(&self, labels: &[String]) -> Option<(Vec<usize>, usize)> {
        let spec = self.synthetic.as_ref()?;
        let communities = labels
            .iter()
            .map(|label| {
                let index: usize = label.strip_prefix('v')?.parse().ok()?;
                (1..=spec.n_nodes)
                    .contains(&index)
                    .then(|| spec.community_of(index - 1))
            })
            .collect::<Option<Vec<usize>>>()?;
        let present = communities.iter().collect::<std::collections::BTreeSet<_>>().len();
        (present == spec.n_communities).then_some((communities, spec.n_communities))
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

fn ensure_out(config: &PipelineConfig, stage: &'static str) -> StageResult<()> {
    std::fs::create_dir_all(&config.out)
        .map_err(|e| Error::Io {
            path: config.out.clone(),
            source: e,
        })
        .stage(stage)
}

/// Written artifacts in write order.
#[derive(Debug, Default, Clone)]
pub struct Written(pub Vec<PathBuf>);

impl Written {
    fn put(&mut self, path: PathBuf, bytes: &[u8], stage: &'static str) -> StageResult<()> {
        artifact::write_atomic(&path, bytes).stage(stage)?;
        info!("{stage}: wrote {}", path.display());
        self.0.push(path);
        Ok(())
    }
}

/// ingest: the dataset from the input table or the synthetic generator.
pub fn ingest(config: &PipelineConfig) -> StageResult<NodalDataset> {
    let config = config.resolved();
    match (&config.input, &config.synthetic) {
        (Some(path), None) => data::load_dataset(path, &config.csv).stage("ingest"),
        (None, Some(spec)) => data::generate_synthetic(spec).stage("ingest"),
        (Some(_), Some(_)) => Err(Error::Config(
            "give either an input table or a synthetic spec, not both".into(),
        ))
        .stage("ingest"),
        (None, None) => Err(Error::Config("no input table or synthetic spec given".into())).stage("ingest"),
    }
}

/// generate: writes the synthetic dataset table.
pub fn stage_generate(config: &PipelineConfig, written: &mut Written) -> StageResult<NodalDataset> {
    if config.synthetic.is_none() {
        return Err(Error::Config("generate needs a synthetic spec".into())).stage("generate");
    }
    let dataset = ingest(config)?;
    ensure_out(config, "generate")?;
    written.put(
        config.artifact(DATASET),
        &data::dataset_to_csv(&dataset, &config.csv),
        "generate",
    )?;
    Ok(dataset)
}

/// walk: context sets and the walk corpus.
pub fn stage_walk(
    config: &PipelineConfig,
    dataset: &NodalDataset,
    written: &mut Written,
) -> StageResult<Corpus> {
    let config = config.resolved();
    ensure_out(&config, "walk")?;
    let contexts: ContextSets = context::build_context_sets(dataset, &config.tolerance).stage("walk")?;
    info!("walk: {}", context::describe(&contexts));
    if config.write_contexts {
        let json = serde_json::to_string_pretty(&contexts.to_json()).expect("JSON value serializes");
        written.put(config.artifact(CONTEXTS), json.as_bytes(), "walk")?;
    }
    if config.walk.walks_per_start == 0 {
        warn!("walk: walks_per_start is 0, the corpus will be empty");
    }
    let corpus = with_pool(config.workers, || context::generate_corpus(&contexts, dataset, &config.walk))
        .stage("walk")?
        .compact();
    info!("walk: {} sequences", corpus.len());
    written.put(config.artifact(CORPUS), corpus.to_text().stage("walk")?.as_bytes(), "walk")?;
    Ok(corpus)
}

/// train: skip-gram node vectors plus the per-epoch log.
pub fn stage_train(
    config: &PipelineConfig,
    corpus: &Corpus,
    written: &mut Written,
) -> StageResult<NodeVectors> {
    let config = config.resolved();
    ensure_out(&config, "train")?;
    let trained = skipgram::train(corpus, &config.train).stage("train")?;
    if let Some(last) = trained.log.last() {
        info!("train: final mean loss {:.6}", last.mean_loss);
    }
    let vectors = trained.model.node_vectors();
    written.put(config.artifact(EMBEDDING_CSV), vectors.to_csv().as_bytes(), "train")?;
    written.put(config.artifact(EMBEDDING_BIN), &vectors.to_binary(), "train")?;
    written.put(
        config.artifact(TRAINING_LOG),
        skipgram::training_log_csv(&trained.log).as_bytes(),
        "train",
    )?;
    Ok(vectors)
}

/// edges: similarity ranking and the selected network.
pub fn stage_edges(
    config: &PipelineConfig,
    vectors: &NodeVectors,
    written: &mut Written,
) -> StageResult<(SimilarityView, EdgeList)> {
    ensure_out(config, "edges")?;
    with_pool(config.workers, || -> StageResult<_> {
        let sim = edges::build_similarity(vectors).stage("edges")?;
        let (list, trace) = match config.edges {
            EdgeChoice::Gte { threshold } => (edges::gte(&sim, threshold), None),
            EdgeChoice::Rem(rem) => {
                let result = edges::rem(&sim, &rem).stage("edges")?;
                info!("edges: REM settled after {} iterations", result.iterations());
                (result.edges, Some(result.trace))
            }
        };
        info!("edges: {} edges, {} isolated nodes", list.len(), list.isolated_count());
        written.put(config.artifact(EDGES), list.to_tsv().as_bytes(), "edges")?;
        if let Some(trace) = trace {
            written.put(config.artifact(REM_TRACE), edges::rem_trace_csv(&trace).as_bytes(), "edges")?;
        }
        Ok((sim, list))
    })
}

#[derive(Debug, Clone, Serialize)]
struct SeparationReport {
    purity_embedding: f64,
    purity_projection: f64,
    centroid_distances: Vec<Vec<f64>>,
}

/// analyze: network statistics, plus the sweep, projection and community
/// separation when node vectors are available.
pub fn stage_analyze(
    config: &PipelineConfig,
    edge_list: &EdgeList,
    vectors: Option<(&NodeVectors, Option<&SimilarityView>)>,
    written: &mut Written,
) -> StageResult<analysis::NetworkStats> {
    ensure_out(config, "analyze")?;
    let n_nodes = vectors.map_or(edge_list.n_nodes(), |(v, _)| v.len());
    let stats = analysis::network_stats(edge_list, n_nodes).stage("analyze")?;
    written.put(config.artifact(STATS), stats.to_csv().as_bytes(), "analyze")?;
    written.put(config.artifact(DEGREES), stats.degrees_csv().as_bytes(), "analyze")?;
    let Some((vectors, sim)) = vectors else {
        return Ok(stats);
    };
    let built;
    let sim = match sim {
        Some(sim) => sim,
        None => {
            built = with_pool(config.workers, || edges::build_similarity(vectors)).stage("analyze")?;
            &built
        }
    };
    let sweep = analysis::threshold_sweep(sim, &config.sweep_grid);
    written.put(config.artifact(SWEEP), analysis::sweep_csv(&sweep).as_bytes(), "analyze")?;

    let projection = analysis::pca_project(vectors).stage("analyze")?;
    let communities = config.communities_for(vectors.labels());
    let labels = communities.as_ref().map(|c| c.0.as_slice());
    written.put(config.artifact(PROJECTION_CSV), projection.to_csv(labels).as_bytes(), "analyze")?;
    written.put(config.artifact(PROJECTION_SVG), projection.to_svg(labels).as_bytes(), "analyze")?;
    if let Some((communities, k)) = &communities {
        let raw = analysis::community_separation(&analysis::rows(vectors), communities, *k, Metric::Cosine)
            .stage("analyze")?;
        let points: Vec<&[f64]> = projection.coords.iter().map(|p| p.as_slice()).collect();
        let flat = analysis::community_separation(&points, communities, *k, Metric::Euclidean)
            .stage("analyze")?;
        info!("analyze: nearest-centroid purity {:.3}", raw.purity);
        let report = SeparationReport {
            purity_embedding: raw.purity,
            purity_projection: flat.purity,
            centroid_distances: raw.centroid_distances,
        };
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        written.put(config.artifact(SEPARATION), json.as_bytes(), "analyze")?;
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub config: PipelineConfig,
    pub seeds: StageSeeds,
    pub artifacts: Vec<ArtifactDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_files(paths: &[PathBuf]) -> StageResult<Vec<ArtifactDigest>> {
    paths
        .iter()
        .map(|path| {
            let bytes = std::fs::read(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            });
            Ok(ArtifactDigest {
                name: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                sha256: sha256_hex(&bytes.stage("manifest")?),
            })
        })
        .collect()
}

/// The whole pipeline: every stage in order, then the manifest.
pub fn run_pipeline(config: &PipelineConfig) -> StageResult<Manifest> {
    config.validate().stage("config")?;
    let mut written = Written::default();
    let dataset = if config.synthetic.is_some() {
        stage_generate(config, &mut written)?
    } else {
        ingest(config)?
    };
    let corpus = stage_walk(config, &dataset, &mut written)?;
    let vectors = stage_train(config, &corpus, &mut written)?;
    let (sim, edge_list) = stage_edges(config, &vectors, &mut written)?;
    stage_analyze(config, &edge_list, Some((&vectors, Some(&sim))), &mut written)?;

    let manifest = Manifest {
        format: "#nodalnet manifest v1".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.resolved(),
        seeds: config.seeds(),
        artifacts: digest_files(&written.0)?,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    artifact::write_atomic(&config.artifact(MANIFEST), json.as_bytes()).stage("manifest")?;
    Ok(manifest)
}

/// Loads a stage artifact by type, mapping failures to `stage`.
pub fn read_corpus(path: &Path) -> StageResult<Corpus> {
    Corpus::read(path).stage("train")
}

pub fn read_vectors(path: &Path, stage: &'static str) -> StageResult<NodeVectors> {
    NodeVectors::read_csv(path).stage(stage)
}

pub fn read_edges(path: &Path, labels: Option<&[String]>) -> StageResult<EdgeList> {
    EdgeList::read_tsv(path, labels).stage("analyze")
}

pub fn validate(config: &PipelineConfig) -> StageResult<()> {
    config.validate().stage("config")
}
