//! Streaming codebook learning with delayed, data-dependent initialization.
//!
//! Until iteration `T_q` embeddings pass through unquantized while a rolling
//! window of the last `W` iterations is kept. At iterations
//! `T_q + m·W` for `m < reinit_count` the codebook is refit to the window with
//! KMeans++ seeding and Lloyd refinement. Every other post-`T_q` step quantizes
//! each sample and moves the selected entries down the gradient of the codebook
//! loss `mean ‖sg(z_e) − e‖²`. The commitment term `β‖z_e − sg(e)‖²` is
//! recorded but has nothing to act on here: there is no encoder.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, PivqError, Result};
use crate::par::{self, Execution};
use crate::quantizer::{self, Method, Metric};
use crate::rng::Rng;
use crate::types::{squared_distance, Codebook, Embedding, UsageStats};

/// Perturbation applied to duplicated centroids when there are fewer samples
/// than centroids.
const DUPLICATE_JITTER: f64 = 1e-6;

/// KMeans++ seeding followed by `lloyd_iters` Lloyd iterations.
///
/// Seeding picks the first centroid uniformly. Each further one is the best
/// of `2 + ⌊ln K⌋` candidates, each drawn with probability proportional to its
/// squared distance to the nearest centroid chosen so far; the candidate that
/// leaves the smallest total squared distance wins. Once every sample
/// coincides with a centroid the draws fall back to uniform. With fewer samples than centroids, repeated centroids are
/// jittered by `1e-6` Gaussian noise. Empty clusters keep their centroid.
pub fn kmeanspp_init(
    samples: &[Embedding],
    k: usize,
    lloyd_iters: usize,
    rng: &mut Rng,
    exec: Execution,
) -> Result<Codebook> {
    let first = samples
        .first()
        .ok_or_else(|| PivqError::invalid("no samples to initialise from"))?;
    if k == 0 {
        return Err(PivqError::invalid("K must be at least 1"));
    }
    let dim = first.dim();
    for s in samples {
        check_dim(dim, s.dim())?;
    }
    let n = samples.len();
    let point = |i: usize| samples[i].as_slice();

    let mut centroids: Vec<f64> = Vec::with_capacity(k * dim);
    let mut chosen = rng.below(n);
    centroids.extend_from_slice(point(chosen));
    let mut nearest_d2 = par::map(exec, samples, |s| squared_distance(s.as_slice(), point(chosen)));
    let trials = 2 + (k as f64).ln() as usize;
    for _ in 1..k {
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let cand = match rng.weighted_index(&nearest_d2) {
                Some(i) => i,
                None => rng.below(n),
            };
            let c = point(cand);
            let updated = par::map_range(exec, n, |i| nearest_d2[i].min(squared_distance(point(i), c)));
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|(p, _, _)| potential < *p) {
                best = Some((potential, cand, updated));
            }
        }
        let (_, cand, updated) = best.expect("at least two trials");
        chosen = cand;
        centroids.extend_from_slice(point(chosen));
        nearest_d2 = updated;
    }

    if n < k {
        for i in 1..k {
            let duplicate = (0..i).any(|j| {
                centroids[i * dim..(i + 1) * dim] == centroids[j * dim..(j + 1) * dim]
            });
            if duplicate {
                for v in &mut centroids[i * dim..(i + 1) * dim] {
                    *v += DUPLICATE_JITTER * rng.normal();
                }
            }
        }
    }

    let mut codebook = Codebook::from_flat(dim, centroids)?;
    for _ in 0..lloyd_iters {
        lloyd_step(&mut codebook, samples, exec);
    }
    Ok(codebook)
}

/// One Lloyd iteration. Sums are accumulated in sample order so the result
/// does not depend on `exec`.
pub fn lloyd_step(codebook: &mut Codebook, samples: &[Embedding], exec: Execution) {
    let dim = codebook.dim();
    let k = codebook.len();
    let labels = par::map(exec, samples, |s| quantizer::nearest_index(codebook, s.as_slice()));
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (s, &label) in samples.iter().zip(&labels) {
        counts[label] += 1;
        for (acc, v) in sums[label * dim..(label + 1) * dim].iter_mut().zip(s.as_slice()) {
            *acc += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            for (dst, src) in codebook.entry_mut(c).iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                *dst = src * inv;
            }
        }
    }
}

/// Mean squared distance from each sample to its nearest codebook entry.
pub fn distortion(codebook: &Codebook, samples: &[Embedding], exec: Execution) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let d = par::map(exec, samples, |s| {
        let i = quantizer::nearest_index(codebook, s.as_slice());
        squared_distance(codebook.entry(i), s.as_slice())
    });
    d.iter().sum::<f64>() / samples.len() as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    /// Refit to the window with KMeans++ at the scheduled iterations.
    #[default]
    Kmeanspp,
    /// Keep the Gaussian codebook drawn at construction; never refit.
    Random,
}

fn default_reinit_count() -> u64 {
    3
}
fn default_lloyd_iters() -> usize {
    10
}
fn default_t_q() -> u64 {
    60_000
}
fn default_window() -> u64 {
    5_000
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    0.25
}
fn default_init_scale() -> f64 {
    1.0
}

/// Trainer configuration. The short keys (`K`, `d`, `L`, `T_q`, `W`) are the
/// serialized names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    #[serde(rename = "K")]
    pub codebook_size: usize,
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(rename = "L")]
    pub codes_per_sample: usize,
    /// First iteration that quantizes.
    #[serde(rename = "T_q", default = "default_t_q")]
    pub quantize_start: u64,
    /// Rolling window length, in iterations.
    #[serde(rename = "W", default = "default_window")]
    pub window: u64,
    #[serde(default = "default_reinit_count")]
    pub reinit_count: u64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_beta")]
    pub commitment_beta: f64,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lloyd_iters")]
    pub lloyd_iters: usize,
    /// Step size at post-`T_q` iteration `t` is `lr / (1 + lr_decay · t)`.
    #[serde(default)]
    pub lr_decay: f64,
    #[serde(default)]
    pub init: InitMethod,
    /// Standard deviation of the construction-time Gaussian codebook.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub metric: Metric,
}

impl TrainerConfig {
    pub fn new(codebook_size: usize, dim: usize, codes_per_sample: usize) -> Self {
        TrainerConfig {
            codebook_size,
            dim,
            codes_per_sample,
            quantize_start: default_t_q(),
            window: default_window(),
            reinit_count: default_reinit_count(),
            learning_rate: default_learning_rate(),
            commitment_beta: default_beta(),
            method: Method::default(),
            seed: 0,
            lloyd_iters: default_lloyd_iters(),
            lr_decay: 0.0,
            init: InitMethod::default(),
            init_scale: default_init_scale(),
            metric: Metric::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.codebook_size == 0 || self.dim == 0 || self.codes_per_sample == 0 {
            return Err(PivqError::invalid("K, d and L must be positive"));
        }
        if self.window == 0 || self.quantize_start < self.window {
            return Err(PivqError::invalid("need T_q >= W >= 1"));
        }
        if !positive(self.learning_rate) || !positive(self.commitment_beta) {
            return Err(PivqError::invalid("learning_rate and commitment_beta must be positive"));
        }
        if !non_negative(self.lr_decay) || !non_negative(self.init_scale) {
            return Err(PivqError::invalid("lr_decay and init_scale must be non-negative"));
        }
        if self.method == Method::Matching && self.codes_per_sample > self.codebook_size {
            return Err(PivqError::CodebookTooSmall {
                k: self.codebook_size,
                l: self.codes_per_sample,
            });
        }
        Ok(())
    }

    /// Whether `iteration` refits the codebook.
    pub fn is_reinit_iteration(&self, iteration: u64) -> bool {
        self.init == InitMethod::Kmeanspp && reinit_schedule_hit(
            iteration,
            self.quantize_start,
            self.window,
            self.reinit_count,
        )
    }
}

/// False for NaN.
pub(crate) fn positive(x: f64) -> bool {
    x > 0.0
}

fn non_negative(x: f64) -> bool {
    x >= 0.0
}

/// `iteration ∈ {t_q + m·w : 0 ≤ m < count}`.
pub fn reinit_schedule_hit(iteration: u64, t_q: u64, w: u64, count: u64) -> bool {
    iteration >= t_q && (iteration - t_q).is_multiple_of(w) && (iteration - t_q) / w < count
}

/// The embeddings seen over the most recent `W` iterations.
#[derive(Clone, Debug, Default)]
pub struct WindowBuffer {
    capacity: usize,
    batches: VecDeque<Vec<Embedding>>,
}

impl WindowBuffer {
    pub fn new(capacity: usize) -> Self {
        WindowBuffer {
            capacity,
            batches: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, batch: Vec<Embedding>) {
        if self.capacity == 0 {
            return;
        }
        if self.batches.len() == self.capacity {
            self.batches.pop_front();
        }
        self.batches.push_back(batch);
    }

    /// Number of iterations held.
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn samples(&self) -> Vec<Embedding> {
        self.batches.iter().flatten().cloned().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: u64,
    pub codebook_loss: f64,
    pub commitment_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReinitRecord {
    pub iteration: u64,
    pub window_samples: usize,
    /// Distortion of the window samples right after the refit.
    pub distortion: f64,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub codebook: Codebook,
    /// Next iteration to run.
    pub iteration: u64,
    /// Usage since the last refit (or since `T_q`).
    pub usage: UsageStats,
    pub loss_history: Vec<LossRecord>,
    pub reinits: Vec<ReinitRecord>,
    pub window: WindowBuffer,
    rng: Rng,
}

impl TrainState {
    pub fn new(cfg: &TrainerConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(cfg.seed);
        let values = (0..cfg.codebook_size * cfg.dim)
            .map(|_| cfg.init_scale * rng.normal())
            .collect();
        Ok(TrainState {
            codebook: Codebook::from_flat(cfg.dim, values)?,
            iteration: 0,
            usage: UsageStats::new(cfg.codebook_size),
            loss_history: Vec::new(),
            reinits: Vec::new(),
            window: WindowBuffer::new(cfg.window as usize),
            rng,
        })
    }
}

/// Runs one iteration on `batch` (one embedding list of length `L` per sample).
pub fn train_step(
    mut state: TrainState,
    batch: &[Vec<Embedding>],
    cfg: &TrainerConfig,
    exec: Execution,
) -> Result<TrainState> {
    for sample in batch {
        check_dim(cfg.codes_per_sample, sample.len())?;
        for z in sample {
            check_dim(cfg.dim, z.dim())?;
        }
    }
    let it = state.iteration;
    state.window.push(batch.iter().flatten().cloned().collect());

    if it < cfg.quantize_start {
        state.iteration += 1;
        return Ok(state);
    }

    if cfg.is_reinit_iteration(it) {
        let samples = state.window.samples();
        if !samples.is_empty() {
            let mut rng = state.rng.child(it);
            state.codebook =
                kmeanspp_init(&samples, cfg.codebook_size, cfg.lloyd_iters, &mut rng, exec)?;
            state.usage = UsageStats::new(cfg.codebook_size);
            state.reinits.push(ReinitRecord {
                iteration: it,
                window_samples: samples.len(),
                distortion: distortion(&state.codebook, &samples, exec),
            });
        }
        state.iteration += 1;
        return Ok(state);
    }

    let results = quantizer::quantize_batch(&state.codebook, batch, cfg.method, cfg.metric, exec)?;
    let dim = cfg.dim;
    let mut grad = vec![0.0; cfg.codebook_size * dim];
    let mut loss = 0.0;
    let mut pairs = 0usize;
    for (sample, result) in batch.iter().zip(&results) {
        for (z, &code) in sample.iter().zip(&result.indices) {
            let e = state.codebook.entry(code);
            for d in 0..dim {
                let diff = e[d] - z.as_slice()[d];
                loss += diff * diff;
                grad[code * dim + d] += 2.0 * diff;
            }
            pairs += 1;
        }
        state.usage.record(&result.indices)?;
    }
    if pairs > 0 {
        let scale = 1.0 / pairs as f64;
        loss *= scale;
        let t = (it - cfg.quantize_start) as f64;
        let lr = cfg.learning_rate / (1.0 + cfg.lr_decay * t);
        for c in 0..cfg.codebook_size {
            let g = &grad[c * dim..(c + 1) * dim];
            for (v, gv) in state.codebook.entry_mut(c).iter_mut().zip(g) {
                *v -= lr * gv * scale;
            }
        }
        state.loss_history.push(LossRecord {
            iteration: it,
            codebook_loss: loss,
            commitment_loss: cfg.commitment_beta * loss,
        });
    }
    state.iteration += 1;
    Ok(state)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub iterations: u64,
    pub k_data: usize,
    pub max_k_img: usize,
    pub dead_codes: usize,
    /// Distortion of the final window under the final codebook.
    pub final_distortion: Option<f64>,
    pub reinits: Vec<ReinitRecord>,
    pub loss_history: Vec<LossRecord>,
}

impl TrainingReport {
    pub fn from_state(state: &TrainState, exec: Execution) -> Self {
        let window = state.window.samples();
        TrainingReport {
            iterations: state.iteration,
            k_data: state.usage.dataset_usage(),
            max_k_img: state.usage.max_per_image_usage,
            dead_codes: state.usage.dead_codes(),
            final_distortion: (!window.is_empty())
                .then(|| distortion(&state.codebook, &window, exec)),
            reinits: state.reinits.clone(),
            loss_history: state.loss_history.clone(),
        }
    }
}

/// Feeds every batch of `stream` through [`train_step`].
pub fn run_training<I>(
    stream: I,
    cfg: &TrainerConfig,
    exec: Execution,
) -> Result<(TrainState, TrainingReport)>
where
    I: IntoIterator<Item = Vec<Vec<Embedding>>>,
{
    let mut state = TrainState::new(cfg)?;
    for batch in stream {
        state = train_step(state, &batch, cfg, exec)?;
    }
    let report = TrainingReport::from_state(&state, exec);
    Ok((state, report))
}

/// Synthetic stream: each embedding is drawn from a 16-component isotropic
/// Gaussian mixture in two dimensions whose means sit on the 4×4 integer grid
/// `{0,1,2,3}²`.
#[derive(Clone, Debug)]
pub struct Gauss16 {
    rng: Rng,
    pub sigma: f64,
    pub codes_per_sample: usize,
    pub batch_size: usize,
}

impl Gauss16 {
    pub const DIM: usize = 2;

    pub fn new(seed: u64, codes_per_sample: usize, batch_size: usize) -> Self {
        Gauss16 {
            rng: Rng::new(seed),
            sigma: 0.05,
            codes_per_sample,
            batch_size,
        }
    }

    pub fn means() -> Vec<Embedding> {
        (0..16)
            .map(|i| Embedding::new(vec![(i % 4) as f64, (i / 4) as f64]).unwrap())
            .collect()
    }

    pub fn sample_point(&mut self) -> Embedding {
        let c = self.rng.below(16);
        let x = (c % 4) as f64 + self.sigma * self.rng.normal();
        let y = (c / 4) as f64 + self.sigma * self.rng.normal();
        Embedding::new(vec![x, y]).unwrap()
    }
}

impl Iterator for Gauss16 {
    type Item = Vec<Vec<Embedding>>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(
            (0..self.batch_size)
                .map(|_| (0..self.codes_per_sample).map(|_| self.sample_point()).collect())
                .collect(),
        )
    }
}
