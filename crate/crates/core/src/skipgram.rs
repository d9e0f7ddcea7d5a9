//! Three-layer skip-gram network trained by per-pair SGD.
//!
//! The hidden layer is the center node's row of the input matrix; the output
//! layer scores every node r with u^r = ⟨f(v_center), output row r⟩ and is
//! normalized either by the full softmax or approximated by negative sampling.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::ArtifactKind;
use crate::context::Corpus;
use crate::error::{Error, Result};
use crate::seed;
use crate::vectors::NodeVectors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    FullSoftmax,
    NegativeSampling { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub initial_learning_rate: f64,
    pub final_learning_rate: f64,
    pub objective: Objective,
    pub seed: u64,
    /// 1 trains deterministically; more workers run lock-free asynchronous
    /// SGD and give up reproducibility.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            window: 2,
            epochs: 5,
            initial_learning_rate: 0.025,
            final_learning_rate: 1e-4,
            objective: Objective::FullSoftmax,
            seed: 0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.dim < 2 {
            return fail("embedding dimension must be at least 2");
        }
        if self.window == 0 {
            return fail("window must be positive");
        }
        if !(self.initial_learning_rate.is_finite() && self.initial_learning_rate > 0.0) {
            return fail("initial learning rate must be positive");
        }
        if !(self.final_learning_rate >= 0.0
            && self.final_learning_rate <= self.initial_learning_rate)
        {
            return fail("final learning rate must lie in [0, initial]");
        }
        if matches!(self.objective, Objective::NegativeSampling { k: 0 }) {
            return fail("negative sampling needs k > 0");
        }
        if self.workers == 0 {
            return fail("workers must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrainingPair {
    pub center: u32,
    pub context: u32,
}

/// Every (center, context) pair within `window` positions, never crossing a
/// sequence boundary.
pub fn extract_pairs(corpus: &Corpus, window: usize) -> impl Iterator<Item = TrainingPair> + '_ {
    corpus.sequences.iter().flat_map(move |seq| {
        (0..seq.len()).flat_map(move |i| {
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(seq.len() - 1);
            (lo..=hi).filter(move |&j| j != i).map(move |j| TrainingPair {
                center: seq[i],
                context: seq[j],
            })
        })
    })
}

/// Input and output weight matrices, both |N|×d and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    labels: Vec<String>,
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

/// Gradient of one pair's loss: the center's input row and the whole output
/// matrix (every other input row has zero gradient).
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub input_row: Vec<f64>,
    pub output: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators let the compiler vectorize.
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    let mut acc = [0.0; 4];
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// −ln σ(x), stable for large |x|.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

impl EmbeddingModel {
    /// Input weights uniform in [−0.5/d, 0.5/d], output weights zero.
    pub fn initialized(labels: Vec<String>, dim: usize, seed_value: u64) -> Self {
        let mut rng = seed::stream(seed_value, &[seed::label("init")]);
        let half = 0.5 / dim as f64;
        let input = (0..labels.len() * dim)
            .map(|_| rng.random_range(-half..=half))
            .collect();
        let output = vec![0.0; labels.len() * dim];
        Self {
            labels,
            dim,
            input,
            output,
        }
    }

    pub fn from_parts(
        labels: Vec<String>,
        dim: usize,
        input: Vec<f64>,
        output: Vec<f64>,
    ) -> Result<Self> {
        let n = labels.len();
        if input.len() != n * dim || output.len() != n * dim {
            return Err(Error::Consistency(format!(
                "weight matrices must both be {n}x{dim}"
            )));
        }
        Ok(Self {
            labels,
            dim,
            input,
            output,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn input_weights(&self) -> &[f64] {
        &self.input
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.output
    }

    pub fn input_weights_mut(&mut self) -> &mut [f64] {
        &mut self.input
    }

    pub fn output_weights_mut(&mut self) -> &mut [f64] {
        &mut self.output
    }

    fn input_row(&self, i: u32) -> &[f64] {
        let i = i as usize;
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    fn check_index(&self, i: u32) -> Result<()> {
        if (i as usize) < self.n_nodes() {
            Ok(())
        } else {
            Err(Error::Consistency(format!(
                "node index {i} out of range for {} nodes",
                self.n_nodes()
            )))
        }
    }

    /// Output scores u^r for every node r.
    pub fn logits(&self, center: u32) -> Result<Vec<f64>> {
        self.check_index(center)?;
        let h = self.input_row(center);
        let logits: Vec<f64> = self.output.chunks_exact(self.dim).map(|o| dot(h, o)).collect();
        if logits.iter().any(|u| !u.is_finite()) {
            return Err(Error::NumericState(format!(
                "non-finite output score for center {center}"
            )));
        }
        Ok(logits)
    }

    /// P(v_r | f(v_center)) over all nodes.
    pub fn forward_softmax(&self, center: u32) -> Result<Vec<f64>> {
        let mut probs = self.logits(center)?;
        softmax_in_place(&mut probs);
        Ok(probs)
    }

    /// −u^context + ln Σ_r exp(u^r).
    pub fn pair_loss(&self, pair: TrainingPair) -> Result<f64> {
        self.check_index(pair.context)?;
        let logits = self.logits(pair.center)?;
        Ok((log_sum_exp(&logits) - logits[pair.context as usize]).max(0.0))
    }

    pub fn pair_gradient(&self, pair: TrainingPair) -> Result<PairGradient> {
        self.check_index(pair.context)?;
        let mut g = self.forward_softmax(pair.center)?;
        g[pair.context as usize] -= 1.0;
        let h = self.input_row(pair.center);
        let mut input_row = vec![0.0; self.dim];
        let mut output = vec![0.0; self.output.len()];
        for (r, (o, grad_o)) in self
            .output
            .chunks_exact(self.dim)
            .zip(output.chunks_exact_mut(self.dim))
            .enumerate()
        {
            for k in 0..self.dim {
                input_row[k] += g[r] * o[k];
                grad_o[k] = g[r] * h[k];
            }
        }
        Ok(PairGradient { input_row, output })
    }

    /// One full-softmax SGD step on `pair`. Returns the loss before the step.
    pub fn sgd_step(&mut self, pair: TrainingPair, learning_rate: f64) -> Result<f64> {
        self.check_index(pair.center)?;
        self.check_index(pair.context)?;
        let n = self.n_nodes();
        let d = self.dim;
        let c = pair.center as usize;
        let mut h = self.input[c * d..(c + 1) * d].to_vec();
        let mut scratch = StepScratch::new(n, d);
        let loss = softmax_step(
            &mut h,
            &mut self.output,
            pair.context as usize,
            learning_rate,
            &mut scratch,
        )?;
        self.input[c * d..(c + 1) * d].copy_from_slice(&h);
        Ok(loss)
    }

    /// One negative-sampling step: the context row is pushed toward the
    /// center, each noise row away. Returns the surrogate loss.
    pub fn sgd_step_negative(
        &mut self,
        pair: TrainingPair,
        negatives: &[u32],
        learning_rate: f64,
    ) -> Result<f64> {
        self.check_index(pair.center)?;
        self.check_index(pair.context)?;
        for &neg in negatives {
            self.check_index(neg)?;
        }
        let d = self.dim;
        let c = pair.center as usize;
        let mut h = self.input[c * d..(c + 1) * d].to_vec();
        let mut grad_h = vec![0.0; d];
        let loss = negative_step(
            &mut h,
            &mut self.output,
            d,
            pair.context as usize,
            negatives,
            learning_rate,
            &mut grad_h,
        )?;
        self.input[c * d..(c + 1) * d].copy_from_slice(&h);
        Ok(loss)
    }

    /// f(v): the input-matrix rows.
    pub fn node_vectors(&self) -> NodeVectors {
        NodeVectors::new(self.labels.clone(), self.dim, self.input.clone())
            .expect("model weights are finite and conform")
    }
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|u| (u - max).exp()).sum::<f64>().ln()
}

/// Max-subtracted softmax.
pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

struct StepScratch {
    probs: Vec<f64>,
    grad_h: Vec<f64>,
}

impl StepScratch {
    fn new(n: usize, d: usize) -> Self {
        Self {
            probs: vec![0.0; n],
            grad_h: vec![0.0; d],
        }
    }
}

fn softmax_step(
    h: &mut [f64],
    output: &mut [f64],
    context: usize,
    lr: f64,
    scratch: &mut StepScratch,
) -> Result<f64> {
    let d = h.len();
    let probs = &mut scratch.probs;
    let mut max = f64::NEG_INFINITY;
    for (u, o) in probs.iter_mut().zip(output.chunks_exact(d)) {
        *u = dot(h, o);
        max = max.max(*u);
    }
    let target = probs[context];
    let mut sum = 0.0;
    for u in probs.iter_mut() {
        *u = (*u - max).exp();
        sum += *u;
    }
    let lse = max + sum.ln();
    if !lse.is_finite() {
        return Err(Error::NumericState("non-finite softmax normalizer".into()));
    }
    let loss = (lse - target).max(0.0);
    let inv = 1.0 / sum;
    for u in probs.iter_mut() {
        *u *= inv;
    }
    probs[context] -= 1.0;

    let grad_h = &mut scratch.grad_h;
    grad_h.fill(0.0);
    for (&g, o) in probs.iter().zip(output.chunks_exact_mut(d)) {
        let step = lr * g;
        for ((gh, ok), hk) in grad_h.iter_mut().zip(o.iter_mut()).zip(h.iter()) {
            *gh += g * *ok;
            *ok -= step * hk;
        }
    }
    for (hk, gh) in h.iter_mut().zip(grad_h.iter()) {
        *hk -= lr * gh;
    }
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericState("non-finite gradient".into()));
    }
    Ok(loss)
}

fn negative_step(
    h: &mut [f64],
    output: &mut [f64],
    d: usize,
    context: usize,
    negatives: &[u32],
    lr: f64,
    grad_h: &mut [f64],
) -> Result<f64> {
    grad_h.fill(0.0);
    let mut loss = 0.0;
    let targets = std::iter::once((context, 1.0)).chain(
        negatives
            .iter()
            .map(|&r| r as usize)
            .filter(|&r| r != context)
            .map(|r| (r, 0.0)),
    );
    for (row, label) in targets {
        let o = &mut output[row * d..(row + 1) * d];
        let score = dot(h, o);
        loss += if label == 1.0 {
            neg_log_sigmoid(score)
        } else {
            neg_log_sigmoid(-score)
        };
        // Descent direction of the logistic loss w.r.t. the score.
        let g = label - sigmoid(score);
        for k in 0..d {
            grad_h[k] += g * o[k];
            o[k] += lr * g * h[k];
        }
    }
    for k in 0..d {
        h[k] += lr * grad_h[k];
    }
    if !loss.is_finite() || h.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericState("non-finite gradient".into()));
    }
    Ok(loss)
}

/// Unigram^{3/4} noise distribution over corpus node frequencies.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    cumulative: Vec<f64>,
}

impl NoiseSampler {
    pub fn from_counts(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let x = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= x);
        i.min(self.cumulative.len() - 1) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
}

pub fn training_log_csv(log: &[EpochStat]) -> String {
    let mut out = ArtifactKind::TrainingLog.header();
    out.push_str("\nepoch,mean_loss,learning_rate\n");
    for s in log {
        out.push_str(&format!("{},{},{}\n", s.epoch, s.mean_loss, s.learning_rate));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: EmbeddingModel,
    pub log: Vec<EpochStat>,
}

fn learning_rate(config: &TrainConfig, step: usize, total: usize) -> f64 {
    let progress = if total == 0 {
        0.0
    } else {
        step as f64 / total as f64
    };
    config.initial_learning_rate
        - (config.initial_learning_rate - config.final_learning_rate) * progress
}

/// Trains on every window pair of `corpus` for `config.epochs` shuffled
/// passes with a linearly decaying learning rate. The vocabulary is
/// `corpus.node_labels`.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("cannot train on an empty corpus".into()));
    }
    let n = corpus.node_labels.len();
    let mut pairs: Vec<TrainingPair> = extract_pairs(corpus, config.window).collect();
    if pairs.is_empty() {
        return Err(Error::Config("corpus yields no training pairs".into()));
    }
    if let Some(bad) = pairs
        .iter()
        .find(|p| p.center as usize >= n || p.context as usize >= n)
    {
        return Err(Error::Consistency(format!(
            "corpus references node {} beyond its {n} labels",
            bad.center.max(bad.context)
        )));
    }
    let noise = match config.objective {
        Objective::FullSoftmax => None,
        Objective::NegativeSampling { .. } => {
            let mut counts = vec![0u64; n];
            corpus.sequences.iter().flatten().for_each(|&id| counts[id as usize] += 1);
            Some(NoiseSampler::from_counts(&counts))
        }
    };

    let mut model = EmbeddingModel::initialized(corpus.node_labels.clone(), config.dim, config.seed);
    let total = pairs.len() * config.epochs;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = seed::stream(config.seed, &[seed::label("shuffle"), epoch as u64]);
        pairs.shuffle(&mut rng);
        let offset = epoch * pairs.len();
        let loss_sum = if config.workers == 1 {
            run_epoch_serial(&mut model, &pairs, config, noise.as_ref(), offset, total, epoch)?
        } else {
            run_epoch_async(&mut model, &pairs, config, noise.as_ref(), offset, total, epoch)?
        };
        log.push(EpochStat {
            epoch: epoch + 1,
            mean_loss: loss_sum / pairs.len() as f64,
            learning_rate: learning_rate(config, offset + pairs.len() - 1, total),
        });
    }
    Ok(TrainedModel { model, log })
}

fn draw_negatives(
    noise: &NoiseSampler,
    k: usize,
    rng: &mut impl Rng,
    out: &mut Vec<u32>,
) {
    out.clear();
    out.extend((0..k).map(|_| noise.sample(rng)));
}

fn run_epoch_serial(
    model: &mut EmbeddingModel,
    pairs: &[TrainingPair],
    config: &TrainConfig,
    noise: Option<&NoiseSampler>,
    offset: usize,
    total: usize,
    epoch: usize,
) -> Result<f64> {
    let d = model.dim;
    let mut scratch = StepScratch::new(model.n_nodes(), d);
    let mut h = vec![0.0; d];
    let mut negatives = Vec::new();
    let mut rng = seed::stream(config.seed, &[seed::label("negatives"), epoch as u64]);
    let mut loss_sum = 0.0;
    for (t, pair) in pairs.iter().enumerate() {
        let lr = learning_rate(config, offset + t, total);
        let c = pair.center as usize;
        h.copy_from_slice(&model.input[c * d..(c + 1) * d]);
        loss_sum += match (config.objective, noise) {
            (Objective::NegativeSampling { k }, Some(noise)) => {
                draw_negatives(noise, k, &mut rng, &mut negatives);
                negative_step(
                    &mut h,
                    &mut model.output,
                    d,
                    pair.context as usize,
                    &negatives,
                    lr,
                    &mut scratch.grad_h,
                )?
            }
            _ => softmax_step(&mut h, &mut model.output, pair.context as usize, lr, &mut scratch)?,
        };
        model.input[c * d..(c + 1) * d].copy_from_slice(&h);
    }
    Ok(loss_sum)
}

fn load(cells: &[AtomicU64], range: std::ops::Range<usize>, out: &mut [f64]) {
    for (x, cell) in out.iter_mut().zip(&cells[range]) {
        *x = f64::from_bits(cell.load(Ordering::Relaxed));
    }
}

/// Adds `new - old` onto the shared cells. Concurrent updates to the same
/// cell may be lost.
fn apply_delta(cells: &[AtomicU64], start: usize, old: &[f64], new: &[f64]) {
    for (k, (o, n)) in old.iter().zip(new).enumerate() {
        if o != n {
            let cell = &cells[start + k];
            let cur = f64::from_bits(cell.load(Ordering::Relaxed));
            cell.store((cur + (n - o)).to_bits(), Ordering::Relaxed);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_epoch_async(
    model: &mut EmbeddingModel,
    pairs: &[TrainingPair],
    config: &TrainConfig,
    noise: Option<&NoiseSampler>,
    offset: usize,
    total: usize,
    epoch: usize,
) -> Result<f64> {
    let d = model.dim;
    let n = model.n_nodes();
    let to_cells = |v: &[f64]| -> Vec<AtomicU64> { v.iter().map(|x| AtomicU64::new(x.to_bits())).collect() };
    let input = to_cells(&model.input);
    let output = to_cells(&model.output);
    let chunk = pairs.len().div_ceil(config.workers);

    let results: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .chunks(chunk)
            .enumerate()
            .map(|(w, slice)| {
                let (input, output) = (&input, &output);
                scope.spawn(move || -> Result<f64> {
                    let mut rng = seed::stream(
                        config.seed,
                        &[seed::label("negatives"), epoch as u64, w as u64],
                    );
                    let mut scratch = StepScratch::new(n, d);
                    let mut h = vec![0.0; d];
                    let mut h_old = vec![0.0; d];
                    let mut local = vec![0.0; n * d];
                    let mut local_old = vec![0.0; n * d];
                    let mut negatives = Vec::new();
                    let mut loss_sum = 0.0;
                    for (t, pair) in slice.iter().enumerate() {
                        let lr = learning_rate(config, offset + w * chunk + t, total);
                        let c = pair.center as usize;
                        load(input, c * d..(c + 1) * d, &mut h);
                        h_old.copy_from_slice(&h);
                        let rows: Vec<usize> = match (config.objective, noise) {
                            (Objective::NegativeSampling { k }, Some(noise)) => {
                                draw_negatives(noise, k, &mut rng, &mut negatives);
                                let mut rows: Vec<usize> = negatives.iter().map(|&r| r as usize).collect();
                                rows.push(pair.context as usize);
                                rows.sort_unstable();
                                rows.dedup();
                                rows
                            }
                            _ => (0..n).collect(),
                        };
                        for &r in &rows {
                            load(output, r * d..(r + 1) * d, &mut local[r * d..(r + 1) * d]);
                        }
                        for &r in &rows {
                            local_old[r * d..(r + 1) * d].copy_from_slice(&local[r * d..(r + 1) * d]);
                        }
                        loss_sum += if noise.is_some() {
                            negative_step(
                                &mut h,
                                &mut local,
                                d,
                                pair.context as usize,
                                &negatives,
                                lr,
                                &mut scratch.grad_h,
                            )?
                        } else {
                            softmax_step(&mut h, &mut local, pair.context as usize, lr, &mut scratch)?
                        };
                        for &r in &rows {
                            let span = r * d..(r + 1) * d;
                            apply_delta(output, r * d, &local_old[span.clone()], &local[span]);
                        }
                        apply_delta(input, c * d, &h_old, &h);
                    }
                    Ok(loss_sum)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
    });

    let from_cells = |cells: Vec<AtomicU64>| -> Vec<f64> {
        cells.into_iter().map(|c| f64::from_bits(c.into_inner())).collect()
    };
    model.input = from_cells(input);
    model.output = from_cells(output);
    if model.input.iter().chain(&model.output).any(|x| !x.is_finite()) {
        return Err(Error::NumericState("asynchronous training diverged".into()));
    }
    results.into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    fn corpus(seqs: Vec<Vec<u32>>, n: usize) -> Corpus {
        Corpus {
            node_labels: labels(n),
            sequences: seqs,
            conditions: None,
        }
    }

    fn pairs_of(seq: Vec<u32>, c: usize) -> Vec<(u32, u32)> {
        let corpus = corpus(vec![seq], 5);
        extract_pairs(&corpus, c).map(|p| (p.center, p.context)).collect()
    }

    #[test]
    fn window_one_pairs() {
        assert_eq!(pairs_of(vec![0, 1, 2], 1), vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
    }

    #[test]
    fn single_node_sequence_has_no_pairs() {
        assert!(pairs_of(vec![3], 2).is_empty());
    }

    #[test]
    fn window_two_center_contexts() {
        let contexts: Vec<u32> = pairs_of(vec![0, 1, 2, 3, 4], 2)
            .into_iter()
            .filter(|p| p.0 == 2)
            .map(|p| p.1)
            .collect();
        assert_eq!(contexts, vec![0, 1, 3, 4]);
    }

    #[test]
    fn uniform_logits_give_uniform_softmax_and_log_n_loss() {
        let model = EmbeddingModel::initialized(labels(7), 4, 1);
        let probs = model.forward_softmax(3).unwrap();
        assert!(probs.iter().all(|&p| (p - 1.0 / 7.0).abs() < 1e-15));
        let loss = model
            .pair_loss(TrainingPair {
                center: 3,
                context: 5,
            })
            .unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_input_row_gives_uniform_softmax() {
        let n = 4;
        let mut output = vec![0.0; n * 3];
        output.iter_mut().enumerate().for_each(|(i, x)| *x = i as f64 * 0.3 - 1.0);
        let model = EmbeddingModel::from_parts(labels(n), 3, vec![0.0; n * 3], output).unwrap();
        let probs = model.forward_softmax(0).unwrap();
        assert!(probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let model = EmbeddingModel::from_parts(
            labels(2),
            2,
            vec![100.0, 100.0, 0.0, 0.0],
            vec![10.0, 10.0, 9.0, 9.0],
        )
        .unwrap();
        let probs = model.forward_softmax(0).unwrap();
        assert!(probs.iter().all(|p| p.is_finite()));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_weights_are_reported() {
        let model = EmbeddingModel::from_parts(labels(2), 2, vec![f64::NAN; 4], vec![1.0; 4]).unwrap();
        assert!(matches!(model.forward_softmax(0), Err(Error::NumericState(_))));
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut model = EmbeddingModel::initialized(labels(5), 3, 2);
        model.output.iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64).sin());
        let before = model.clone();
        model
            .sgd_step(TrainingPair { center: 1, context: 2 }, 0.0)
            .unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn negative_sampling_step_increases_context_score() {
        let mut model = EmbeddingModel::initialized(labels(6), 4, 5);
        let pair = TrainingPair { center: 0, context: 1 };
        let score = |m: &EmbeddingModel| {
            dot(&m.input[0..4], &m.output[4..8])
        };
        let before = score(&model);
        for _ in 0..50 {
            model.sgd_step_negative(pair, &[2, 3, 4], 0.1).unwrap();
        }
        assert!(score(&model) > before);
    }

    #[test]
    fn noise_sampler_follows_three_quarter_power() {
        let sampler = NoiseSampler::from_counts(&[16, 0, 1]);
        let mut rng = seed::stream(3, &[]);
        let mut hits = [0usize; 3];
        for _ in 0..90_000 {
            hits[sampler.sample(&mut rng) as usize] += 1;
        }
        assert_eq!(hits[1], 0);
        // 16^0.75 = 8, so the odds are 8:1.
        let ratio = hits[0] as f64 / hits[2] as f64;
        assert!((ratio - 8.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let corpus = corpus(vec![vec![0, 1, 2]], 3);
        let config = TrainConfig {
            dim: 4,
            epochs: 0,
            seed: 9,
            ..TrainConfig::default()
        };
        let trained = train(&corpus, &config).unwrap();
        assert_eq!(trained.model, EmbeddingModel::initialized(labels(3), 4, 9));
        assert!(trained.log.is_empty());
    }

    #[test]
    fn empty_corpus_is_a_config_error() {
        let corpus = corpus(vec![], 3);
        assert!(matches!(
            train(&corpus, &TrainConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            TrainConfig { dim: 1, ..TrainConfig::default() },
            TrainConfig { window: 0, ..TrainConfig::default() },
            TrainConfig { final_learning_rate: 1.0, ..TrainConfig::default() },
            TrainConfig { objective: Objective::NegativeSampling { k: 0 }, ..TrainConfig::default() },
        ];
        for config in bad {
            assert!(config.validate().is_err(), "{config:?}");
        }
    }

    #[test]
    fn async_training_stays_finite() {
        let seqs: Vec<Vec<u32>> = (0..40).map(|i| vec![i % 8, (i + 1) % 8, (i + 3) % 8]).collect();
        let corpus = corpus(seqs, 8);
        for objective in [Objective::FullSoftmax, Objective::NegativeSampling { k: 3 }] {
            let config = TrainConfig {
                dim: 4,
                epochs: 2,
                workers: 3,
                objective,
                ..TrainConfig::default()
            };
            let trained = train(&corpus, &config).unwrap();
            assert!(trained.model.input.iter().all(|x| x.is_finite()));
            assert_eq!(trained.log.len(), 2);
        }
    }

    #[test]
    fn training_log_format() {
        let log = [EpochStat { epoch: 1, mean_loss: 2.5, learning_rate: 0.01 }];
        assert_eq!(
            training_log_csv(&log),
            "#nodalnet training-log v1\nepoch,mean_loss,learning_rate\n1,2.5,0.01\n"
        );
    }
}
