use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nodalnet::data::SyntheticSpec;
use nodalnet::{artifact, Error};
use nodalnet_cli::{
    parse_objective, EdgeChoice, PipelineConfig, StageError, Written, CORPUS, EDGES, EMBEDDING_CSV,
};

#[derive(Parser)]
#[command(name = "nodalnet", version, about = "Node embeddings and sparse networks from nodal measurement tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write a manifest.
    Run(Common),
    /// Write the synthetic dataset table.
    Generate(Common),
    /// Build context sets and write the walk corpus.
    Walk(Common),
    /// Train node vectors on a corpus.
    Train {
        #[command(flatten)]
        common: Common,
        /// Corpus file [default: <out>/corpus.txt]
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Select edges from node vectors.
    Edges {
        #[command(flatten)]
        common: Common,
        /// Embedding CSV [default: <out>/embedding.csv]
        #[arg(long)]
        embedding: Option<PathBuf>,
    },
    /// Network statistics, threshold sweep and projection.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Edge list [default: <out>/edges.tsv]
        #[arg(long = "edge-list")]
        edge_list: Option<PathBuf>,
        /// Embedding CSV [default: <out>/embedding.csv if present]
        #[arg(long)]
        embedding: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config document or a manifest to replay.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Measurement table (CSV, first column node labels).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Synthetic dataset spec (JSON).
    #[arg(long)]
    synthetic: Option<PathBuf>,
    /// Missing-cell token besides the empty cell, e.g. NA.
    #[arg(long)]
    missing_token: Option<String>,
    #[arg(long)]
    tolerance_rel: Option<f64>,
    #[arg(long)]
    tolerance_abs: Option<f64>,
    /// Keep each node in its own context set.
    #[arg(long)]
    include_self: bool,
    #[arg(long)]
    walk_length: Option<usize>,
    #[arg(long)]
    walks_per_start: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// softmax | neg:<k>
    #[arg(long)]
    objective: Option<String>,
    /// gte:<threshold> | rem:<alpha>[,<iterations>[,union|intersection]]
    #[arg(long)]
    edges: Option<String>,
    /// Also write the context sets as JSON.
    #[arg(long)]
    write_contexts: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

fn config_error(message: String) -> StageError {
    StageError {
        stage: "config",
        source: Error::Config(message),
    }
}

fn in_config(e: Error) -> StageError {
    StageError {
        stage: "config",
        source: e,
    }
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig, StageError> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path).map_err(in_config)?,
            None => PipelineConfig::default(),
        };
        if let Some(path) = &self.input {
            config.input = Some(path.clone());
            config.synthetic = None;
        }
        if let Some(path) = &self.synthetic {
            let text = artifact::read_to_string(path).map_err(|source| StageError {
                stage: "ingest",
                source,
            })?;
            let spec: SyntheticSpec = serde_json::from_str(&text)
                .map_err(|e| config_error(format!("synthetic spec {}: {e}", path.display())))?;
            config.synthetic = Some(spec);
            config.input = None;
        }
        if let Some(token) = &self.missing_token {
            config.csv.missing_token = token.clone();
        }
        if let Some(v) = self.tolerance_rel {
            config.tolerance.relative = v;
        }
        if let Some(v) = self.tolerance_abs {
            config.tolerance.absolute_floor = v;
        }
        if self.include_self {
            config.tolerance.include_self = true;
        }
        if let Some(v) = self.walk_length {
            config.walk.length = v;
        }
        if let Some(v) = self.walks_per_start {
            config.walk.walks_per_start = v;
        }
        if let Some(v) = self.p {
            config.walk.p = v;
        }
        if let Some(v) = self.q {
            config.walk.q = v;
        }
        if let Some(v) = self.dim {
            config.train.dim = v;
        }
        if let Some(v) = self.window {
            config.train.window = v;
        }
        if let Some(v) = self.epochs {
            config.train.epochs = v;
        }
        if let Some(text) = &self.objective {
            config.train.objective = parse_objective(text).map_err(in_config)?;
        }
        if let Some(text) = &self.edges {
            config.edges = EdgeChoice::parse(text).map_err(in_config)?;
        }
        if self.write_contexts {
            config.write_contexts = true;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
        nodalnet_cli::validate(&config)?;
        Ok(config)
    }
}

fn execute(command: Command) -> Result<(), StageError> {
    let mut written = Written::default();
    match command {
        Command::Run(common) => {
            let config = common.resolve()?;
            let manifest = nodalnet_cli::run_pipeline(&config)?;
            log::info!("run: {} artifacts in {}", manifest.artifacts.len(), config.out.display());
        }
        Command::Generate(common) => {
            let config = common.resolve()?;
            nodalnet_cli::stage_generate(&config, &mut written)?;
        }
        Command::Walk(common) => {
            let config = common.resolve()?;
            let dataset = nodalnet_cli::ingest(&config)?;
            nodalnet_cli::stage_walk(&config, &dataset, &mut written)?;
        }
        Command::Train { common, corpus } => {
            let config = common.resolve()?;
            let path = corpus.unwrap_or_else(|| config.out.join(CORPUS));
            let corpus = nodalnet_cli::read_corpus(&path)?;
            nodalnet_cli::stage_train(&config, &corpus, &mut written)?;
        }
        Command::Edges { common, embedding } => {
            let config = common.resolve()?;
            let path = embedding.unwrap_or_else(|| config.out.join(EMBEDDING_CSV));
            let vectors = nodalnet_cli::read_vectors(&path, "edges")?;
            nodalnet_cli::stage_edges(&config, &vectors, &mut written)?;
        }
        Command::Analyze {
            common,
            edge_list,
            embedding,
        } => {
            let config = common.resolve()?;
            let default_embedding = config.out.join(EMBEDDING_CSV);
            let embedding = match embedding {
                Some(path) => Some(path),
                None if edge_list.is_none() && default_embedding.exists() => Some(default_embedding),
                None => None,
            };
            let vectors = embedding
                .map(|path| nodalnet_cli::read_vectors(&path, "analyze"))
                .transpose()?;
            let path = edge_list.unwrap_or_else(|| config.out.join(EDGES));
            let edges = nodalnet_cli::read_edges(&path, vectors.as_ref().map(|v| v.labels()))?;
            nodalnet_cli::stage_analyze(&config, &edges, vectors.as_ref().map(|v| (v, None)), &mut written)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
