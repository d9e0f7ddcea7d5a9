use nodalnet::analysis::{community_separation, network_stats, pca_project, threshold_sweep, Metric};
use nodalnet::context::{
    build_context_sets, expected_corpus_len, generate_corpus, sample_walk, ContextSets, Corpus,
    ToleranceRule, WalkConfig,
};
use nodalnet::data::{dataset_to_csv, generate_synthetic, parse_dataset, CsvOptions, NodalDataset, SyntheticSpec};
use nodalnet::edges::{build_similarity, gte, rem, rem_schedule, Edge, EdgeList, RemConfig};
use nodalnet::entropy::{diversity_index, renyi_entropy, RenyiOrder};
use nodalnet::skipgram::{softmax_in_place, train, EmbeddingModel, TrainConfig, TrainingPair};
use nodalnet::NodeVectors;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn dataset_strategy(max_nodes: usize, max_conds: usize) -> impl Strategy<Value = NodalDataset> {
    (2..=max_nodes, 1..=max_conds).prop_flat_map(|(n, m)| {
        proptest::collection::vec(
            proptest::option::weighted(0.85, -50.0f64..50.0),
            n * m,
        )
        .prop_map(move |values| {
            NodalDataset::new(labels("v", n), labels("c", m), values).unwrap()
        })
    })
}

fn vectors_strategy() -> impl Strategy<Value = NodeVectors> {
    (4usize..30, 2usize..6).prop_flat_map(|(n, d)| {
        proptest::collection::vec(-1.0f64..1.0, n * d).prop_map(move |mut data| {
            // Keep rows away from zero norm.
            for row in data.chunks_mut(d) {
                row[0] += if row[0] >= 0.0 { 0.1 } else { -0.1 };
            }
            NodeVectors::new(labels("n", n), d, data).unwrap()
        })
    })
}

fn weights_strategy() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(1e-6f64..1.0, 1..40).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    })
}

const ORDERS: [RenyiOrder; 4] = [
    RenyiOrder::Order(0.5),
    RenyiOrder::Shannon,
    RenyiOrder::Order(2.0),
    RenyiOrder::Order(4.0),
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_keeps_missing_cells(ds in dataset_strategy(12, 5)) {
        let options = CsvOptions::default();
        let text = String::from_utf8(dataset_to_csv(&ds, &options)).unwrap();
        let back = parse_dataset(&text, &options).unwrap();
        for c in 0..ds.n_conditions() {
            prop_assert_eq!(back.missing_count(c), ds.missing_count(c));
        }
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn constant_tolerance_gives_symmetric_contexts(ds in dataset_strategy(25, 3), delta in 0.5f64..20.0) {
        let rule = ToleranceRule::new(0.0, delta).unwrap();
        let cs = build_context_sets(&ds, &rule).unwrap();
        for c in 0..ds.n_conditions() {
            for i in 0..ds.n_nodes() as u32 {
                for &j in cs.get(c, i).unwrap_or(&[]) {
                    prop_assert!(cs.contains(c, j, i));
                    prop_assert_ne!(i, j);
                }
            }
        }
    }

    #[test]
    fn every_corpus_step_is_a_context_member(ds in dataset_strategy(20, 3), seed in any::<u64>(), p in 0.25f64..4.0, q in 0.25f64..4.0) {
        let rule = ToleranceRule::default();
        let cs = build_context_sets(&ds, &rule).unwrap();
        let config = WalkConfig { length: 6, walks_per_start: 2, p, q, seed };
        let corpus = generate_corpus(&cs, &ds, &config).unwrap();
        let conds = corpus.conditions.as_ref().unwrap();
        for (seq, &c) in corpus.sequences.iter().zip(conds) {
            prop_assert!(seq.len() >= 2 && seq.len() <= 6);
            for w in seq.windows(2) {
                let a = ds.value(w[0] as usize, c as usize).unwrap();
                let b = ds.value(w[1] as usize, c as usize).unwrap();
                prop_assert!(w[0] != w[1]);
                prop_assert!((b - a).abs() <= rule.tolerance(a));
            }
        }
        prop_assert_eq!(corpus.len(), expected_corpus_len(&cs, &ds, 2));
    }

    #[test]
    fn seed_changes_sequences_not_size(seed in any::<u64>()) {
        let ds = generate_synthetic(&SyntheticSpec::table1(50, 3)).unwrap();
        let cs = build_context_sets(&ds, &ToleranceRule::default()).unwrap();
        let a = WalkConfig { seed, ..WalkConfig::default() };
        let b = WalkConfig { seed: seed ^ 0x9e37, ..WalkConfig::default() };
        let ca = generate_corpus(&cs, &ds, &a).unwrap();
        let cb = generate_corpus(&cs, &ds, &b).unwrap();
        prop_assert_eq!(ca.len(), cb.len());
        prop_assert_ne!(&ca.sequences, &cb.sequences);
        prop_assert_eq!(&ca, &generate_corpus(&cs, &ds, &a).unwrap());
    }

    #[test]
    fn softmax_sums_to_one_and_ignores_shifts(logits in proptest::collection::vec(-30.0f64..30.0, 1..50), shift in -100.0f64..100.0) {
        let mut a = logits.clone();
        softmax_in_place(&mut a);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let mut b: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        softmax_in_place(&mut b);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn pair_loss_is_nonnegative(seed in any::<u64>(), n in 2usize..8, d in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input: Vec<f64> = (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let output: Vec<f64> = (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let model = EmbeddingModel::from_parts(labels("n", n), d, input, output).unwrap();
        for center in 0..n as u32 {
            for context in 0..n as u32 {
                let loss = model.pair_loss(TrainingPair { center, context }).unwrap();
                prop_assert!(loss >= 0.0);
            }
        }
        // Zero output weights make every logit equal.
        let fresh = EmbeddingModel::initialized(labels("n", n), d, seed);
        let loss = fresh.pair_loss(TrainingPair { center: 0, context: (n - 1) as u32 }).unwrap();
        prop_assert!((loss - (n as f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn entropy_stays_in_range_and_falls_with_order(w in weights_strategy()) {
        let ln_n = (w.len() as f64).ln();
        let mut previous = f64::INFINITY;
        for order in ORDERS {
            let h = renyi_entropy(&w, order).unwrap();
            prop_assert!((0.0..=ln_n).contains(&h));
            prop_assert!(h <= previous + 1e-12);
            previous = h;
            let d = diversity_index(&w, order).unwrap();
            prop_assert!((d - h.exp()).abs() <= 1e-12 * d.max(1.0));
        }
        let near = renyi_entropy(&w, RenyiOrder::Order(1.001)).unwrap();
        let shannon = renyi_entropy(&w, RenyiOrder::Shannon).unwrap();
        prop_assert!((near - shannon).abs() < 1e-3);
    }

    #[test]
    fn rem_schedule_ignores_similarity_scale(raw in proptest::collection::vec(1e-3f64..1.0, 1..60), scale in 1e-3f64..1e3) {
        let mut sims = raw.clone();
        sims.sort_by(|a, b| b.total_cmp(a));
        let scaled: Vec<f64> = sims.iter().map(|s| s * scale).collect();
        for order in ORDERS {
            let a = rem_schedule(&sims, sims.len(), order, 10).unwrap();
            let b = rem_schedule(&scaled, sims.len(), order, 10).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn pca_variance_fractions(v in vectors_strategy()) {
        let proj = pca_project(&v).unwrap();
        let [a, b] = proj.explained_variance;
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(a >= b);
        prop_assert!(a + b <= 1.0 + 1e-12);
        if v.dim() == 2 {
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }
        prop_assert_eq!(proj.coords.len(), v.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn rem_active_sets_shrink_and_cover_every_node(v in vectors_strategy(), alpha in prop_oneof![Just(0.5), Just(1.0), Just(2.0), Just(4.0)]) {
        let sim = build_similarity(&v).unwrap();
        let config = RemConfig { order: RenyiOrder::new(alpha).unwrap(), ..RemConfig::default() };
        match rem(&sim, &config) {
            Ok(result) => {
                for pair in result.history.windows(2) {
                    for (after, before) in pair[1].iter().zip(&pair[0]) {
                        prop_assert!(after <= before && *after >= 1);
                    }
                }
                for pair in result.trace.windows(2) {
                    prop_assert!(pair[1].remaining_edges <= pair[0].remaining_edges);
                }
                prop_assert!(result.trace.iter().all(|r| r.isolated_nodes == 0));
                prop_assert_eq!(result.edges.isolated_count(), 0);
            }
            Err(nodalnet::Error::NoPositiveNeighbor { .. }) => {
                prop_assume!(false);
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn gte_edge_sets_nest(v in vectors_strategy(), t1 in -0.2f64..0.9, gap in 0.0f64..0.5) {
        let sim = build_similarity(&v).unwrap();
        let low = gte(&sim, t1);
        let high = gte(&sim, t1 + gap);
        prop_assert!(high.is_subset_of(&low));
        prop_assert!(high.isolated_count() >= low.isolated_count());
        let sweep = threshold_sweep(&sim, &[t1, t1 + gap]);
        prop_assert_eq!(sweep[0].remaining_edges, low.len());
        prop_assert_eq!(sweep[1].remaining_edges, high.len());
        prop_assert_eq!(sweep[1].isolated_nodes, high.isolated_count());
    }

    #[test]
    fn purity_survives_rotation_and_scaling(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d, k) = (60, 5, 3);
        let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let communities: Vec<usize> = (0..n).map(|i| i % k).collect();
        let points: Vec<Vec<f64>> = communities
            .iter()
            .map(|&c| centers[c].iter().map(|x| x + rng.random_range(-0.8..0.8)).collect())
            .collect();
        // A random rotation composed from Givens rotations.
        let mut transformed = points.clone();
        for _ in 0..12 {
            let a = rng.random_range(0..d);
            let b = (a + rng.random_range(1..d)) % d;
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let (s, c) = theta.sin_cos();
            for p in &mut transformed {
                let (x, y) = (p[a], p[b]);
                p[a] = c * x - s * y;
                p[b] = s * x + c * y;
            }
        }
        transformed.iter_mut().flatten().for_each(|x| *x *= scale);
        for metric in [Metric::Cosine, Metric::Euclidean] {
            let before: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
            let after: Vec<&[f64]> = transformed.iter().map(Vec::as_slice).collect();
            let p0 = community_separation(&before, &communities, k, metric).unwrap().purity;
            let p1 = community_separation(&after, &communities, k, metric).unwrap().purity;
            prop_assert_eq!(p0, p1);
        }
    }

    #[test]
    fn density_is_twice_edges_over_pairs(n in 2usize..30, picks in proptest::collection::vec((0u32..30, 0u32..30), 0..80)) {
        let edges: Vec<Edge> = picks
            .into_iter()
            .filter(|(a, b)| a != b && (*a as usize) < n && (*b as usize) < n)
            .map(|(a, b)| Edge { source: a, target: b, weight: 1.0 })
            .collect();
        let list = EdgeList::new(labels("n", n), edges).unwrap();
        let stats = network_stats(&list, n).unwrap();
        let expected = 2.0 * list.len() as f64 / (n as f64 * (n as f64 - 1.0));
        prop_assert_eq!(stats.density, expected);
        prop_assert_eq!(stats.degree_histogram.iter().sum::<usize>(), n);
    }

    #[test]
    fn synthetic_values_follow_the_plan(seed in any::<u64>(), variant in 1u8..=4) {
        let spec = SyntheticSpec::table1(100, seed).with_overlap(variant);
        let ds = generate_synthetic(&spec).unwrap();
        let plan = spec.plan();
        prop_assert_eq!(ds.n_conditions(), plan.len());
        for i in 0..ds.n_nodes() {
            let g = spec.community_of(i);
            for (t, test) in plan.iter().enumerate() {
                let (lo, hi) = spec.interval(test[g]);
                let v = ds.value(i, t).unwrap();
                prop_assert!(lo <= v && v <= hi, "node {} test {} value {}", i, t, v);
            }
        }
        prop_assert_eq!(&ds, &generate_synthetic(&spec).unwrap());
    }
}

#[test]
fn two_cliques_separate_after_training() {
    let n = 20;
    let mut sets = vec![Vec::new(); n];
    for (i, set) in sets.iter_mut().enumerate() {
        let base = if i < 10 { 0 } else { 10 };
        *set = (base..base + 10).filter(|&j| j != i as u32).collect::<Vec<u32>>();
    }
    let cs = ContextSets::from_lists(labels("n", n), vec!["c".into()], vec![sets.into_iter().map(Some).collect()]).unwrap();
    let walk = WalkConfig { length: 10, walks_per_start: 10, seed: 1, ..WalkConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sequences = (0..n as u32)
        .flat_map(|s| (0..10).map(move |_| s))
        .map(|s| sample_walk(&cs, 0, s, &walk, &mut rng).unwrap())
        .collect();
    let corpus = Corpus { node_labels: labels("n", n), sequences, conditions: None };
    let config = TrainConfig { dim: 8, epochs: 5, seed: 2, ..TrainConfig::default() };
    let vectors = train(&corpus, &config).unwrap().model.node_vectors();
    let sim = build_similarity(&vectors).unwrap();
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    for i in 0..n {
        for j in i + 1..n {
            let s = sim.similarity(i, j);
            if (i < 10) == (j < 10) { intra.push(s) } else { inter.push(s) }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&intra) > mean(&inter), "intra {} inter {}", mean(&intra), mean(&inter));
}
