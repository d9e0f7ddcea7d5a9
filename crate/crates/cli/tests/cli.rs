use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nodalnet::artifact::ArtifactKind;
use nodalnet_cli::{sha256_hex, Manifest};

const SPEC: &str = r#"{"n_nodes": 60, "n_communities": 5, "global_range": [1, 500],
  "sub_intervals": [[1, 100], [101, 200], [201, 300], [301, 400], [401, 500]], "seed": 0}"#;

const FAST: [&str; 6] = ["--dim", "8", "--epochs", "2", "--seed", "17"];

fn nodalnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nodalnet"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(output: &Output) {
    assert!(
        output.status.success(),
        "status {:?}\n{}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.json"), SPEC).unwrap();
    dir
}

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn staged_run_matches_monolithic_run() {
    let dir = workspace();
    let cwd = dir.path();
    ok(&nodalnet(&with(&["run", "--synthetic", "spec.json", "--out", "mono"], &FAST), cwd));

    let staged = |sub: &str, extra: &[&str]| {
        let mut args = vec![sub, "--synthetic", "spec.json", "--out", "staged"];
        args.extend_from_slice(&FAST);
        args.extend_from_slice(extra);
        ok(&nodalnet(&args, cwd));
    };
    staged("generate", &[]);
    staged("walk", &[]);
    staged("train", &[]);
    staged("edges", &[]);
    staged("analyze", &[]);

    let mono: Vec<_> = files(&cwd.join("mono")).into_iter().filter(|f| f.0 != "manifest.json").collect();
    let split = files(&cwd.join("staged"));
    let names = |v: &[(String, Vec<u8>)]| v.iter().map(|f| f.0.clone()).collect::<Vec<_>>();
    assert_eq!(names(&mono), names(&split));
    for (a, b) in mono.iter().zip(&split) {
        assert!(a.1 == b.1, "{} differs between staged and monolithic runs", a.0);
    }
}

#[test]
fn reruns_are_byte_identical_and_manifest_replays() {
    let dir = workspace();
    let cwd = dir.path();
    for out in ["a", "b"] {
        ok(&nodalnet(&with(&["run", "--synthetic", "spec.json", "--out", out, "--edges", "gte:0.5"], &FAST), cwd));
    }
    let a = files(&cwd.join("a"));
    let b = files(&cwd.join("b"));
    for (x, y) in a.iter().zip(&b).filter(|(x, _)| x.0 != "manifest.json") {
        assert!(x.1 == y.1, "{} differs between reruns", x.0);
    }

    let manifest: Manifest = serde_json::from_slice(&fs::read(cwd.join("a/manifest.json")).unwrap()).unwrap();
    for digest in &manifest.artifacts {
        let bytes = fs::read(cwd.join("a").join(&digest.name)).unwrap();
        assert_eq!(sha256_hex(&bytes), digest.sha256, "{}", digest.name);
    }
    ok(&nodalnet(&["run", "--config", "a/manifest.json", "--out", "replay"], cwd));
    let replayed: Manifest = serde_json::from_slice(&fs::read(cwd.join("replay/manifest.json")).unwrap()).unwrap();
    assert_eq!(replayed.artifacts, manifest.artifacts);
    assert_eq!(replayed.seeds, manifest.seeds);
}

#[test]
fn missing_input_is_an_ingest_error() {
    let dir = workspace();
    let out = nodalnet(&["run", "--input", "nope.csv", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ingest"), "{stderr}");
}

#[test]
fn gte_and_rem_write_loadable_edge_files() {
    let dir = workspace();
    let cwd = dir.path();
    ok(&nodalnet(&with(&["run", "--synthetic", "spec.json", "--out", "g", "--edges", "gte:0.8"], &FAST), cwd));
    ok(&nodalnet(&with(&["run", "--synthetic", "spec.json", "--out", "r", "--edges", "rem:2.0,10"], &FAST), cwd));
    let labels: Vec<String> = (1..=60).map(|i| format!("v{i}")).collect();
    let g = nodalnet::EdgeList::read_tsv(&cwd.join("g/edges.tsv"), Some(&labels)).unwrap();
    let r = nodalnet::EdgeList::read_tsv(&cwd.join("r/edges.tsv"), Some(&labels)).unwrap();
    assert_eq!(r.isolated_count(), 0);
    assert!(g.edges().iter().all(|e| e.weight > 0.8));
    assert!(cwd.join("r/rem_trace.csv").exists());
    assert!(!cwd.join("g/rem_trace.csv").exists());
    let stats = fs::read_to_string(cwd.join("r/stats.csv")).unwrap();
    let row: Vec<&str> = stats.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "60");
    assert_eq!(row[2], "0");
}

#[test]
fn zero_embedding_row_names_the_node() {
    let dir = workspace();
    let cwd = dir.path();
    fs::write(
        cwd.join("emb.csv"),
        format!("{}\nlabel,x1,x2\na,1,0\nb,0,0\nc,0.5,0.5\n", ArtifactKind::Embedding.header()),
    )
    .unwrap();
    let out = nodalnet(&["edges", "--embedding", "emb.csv", "--out", "o"], cwd);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("edges") && stderr.contains("`b`"), "{stderr}");
}

#[test]
fn analyze_counts_a_hand_written_network() {
    let dir = workspace();
    let cwd = dir.path();
    // A star centred on b.
    fs::write(cwd.join("net.tsv"), "a\tb\t0.9\nb\tc\t0.7\nb\td\t0.4\n").unwrap();
    ok(&nodalnet(&["analyze", "--edge-list", "net.tsv", "--out", "o"], cwd));
    let stats = fs::read_to_string(cwd.join("o/stats.csv")).unwrap();
    assert_eq!(
        stats,
        format!("{}\nn_nodes,n_edges,isolated_nodes,isolated_percent,density\n4,3,0,0,0.5\n", ArtifactKind::Stats.header())
    );
    let degrees = fs::read_to_string(cwd.join("o/degrees.csv")).unwrap();
    assert!(degrees.ends_with("degree,count\n0,0\n1,3\n2,0\n3,1\n"), "{degrees}");
}

#[test]
fn zero_walks_give_an_empty_corpus_and_a_warning() {
    let dir = workspace();
    let out = nodalnet(&["walk", "--synthetic", "spec.json", "--walks-per-start", "0", "--out", "o"], dir.path());
    ok(&out);
    let corpus = fs::read_to_string(dir.path().join("o/corpus.txt")).unwrap();
    assert_eq!(corpus.trim_end(), ArtifactKind::Corpus.header());
    assert!(String::from_utf8_lossy(&out.stderr).contains("walks_per_start is 0"));
}

#[test]
fn mismatched_artifact_header_is_a_compatibility_error() {
    let dir = workspace();
    let cwd = dir.path();
    fs::write(cwd.join("c.txt"), format!("{}\na b\n", ArtifactKind::Edges.header())).unwrap();
    let out = nodalnet(&["train", "--corpus", "c.txt", "--out", "o"], cwd);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("format mismatch"));
}

#[test]
fn bad_flags_are_config_errors() {
    let dir = workspace();
    for args in [
        &["run", "--synthetic", "spec.json", "--edges", "knn:3"][..],
        &["run", "--synthetic", "spec.json", "--p", "-1"],
        &["run", "--synthetic", "spec.json", "--objective", "hs"],
        &["run", "--walk-lenght", "3"],
    ] {
        let out = nodalnet(args, dir.path());
        assert_eq!(out.status.code(), Some(4), "{args:?}");
    }
}
