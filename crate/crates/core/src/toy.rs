//! A small permutation-invariant autoencoder over synthetic aligned images.
//!
//! ```text
//! image ─ tanh(W1·x + b1) ─ W2·h + b2 ─▶ L embeddings z_e
//!       ─ matching quantization ─▶ L distinct codes
//!       ─ Σ codebook entries (ascending code order) ─ tanh(V1·s + c1) ─ V2·g + c2 ─▶ image
//! ```
//!
//! The decoder sees the codes only through a sum taken in ascending code
//! order, so any reordering of the code list reproduces the output bit for bit.
//! Gradients are written out by hand. Quantization is straight-through: the
//! gradient reaching the decoder input is copied to every `z_e`, plus the
//! commitment term `2β(z_e − e)/L`. The codebook receives only the codebook
//! loss gradient `2(e − z_e)/L`.

use serde::{Deserialize, Serialize};

use crate::codebook_train::{kmeanspp_init, positive, reinit_schedule_hit, WindowBuffer};
use crate::error::{check_dim, PivqError, Result};
use crate::par::{self, Execution};
use crate::quantizer::{matching_quantize, QuantizationResult};
use crate::rng::Rng;
use crate::types::{CodeSet, Codebook, Embedding, UsageStats};

fn d_side() -> usize {
    8
}
fn d_factors() -> usize {
    4
}
fn d_values() -> usize {
    4
}
fn d_noise() -> f64 {
    0.01
}
fn d_len() -> usize {
    8
}
fn d_k() -> usize {
    64
}
fn d_dim() -> usize {
    8
}
fn d_hidden() -> usize {
    64
}
fn d_steps() -> u64 {
    20_000
}
fn d_batch() -> usize {
    8
}
fn d_lr() -> f64 {
    0.02
}
fn d_momentum() -> f64 {
    0.9
}
fn d_beta() -> f64 {
    0.25
}
fn d_t_q() -> u64 {
    1_000
}
fn d_window() -> u64 {
    500
}
fn d_reinit() -> u64 {
    3
}
fn d_lloyd() -> usize {
    10
}
fn d_train() -> usize {
    1024
}
fn d_heldout() -> usize {
    256
}
fn d_log_every() -> u64 {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    #[serde(default = "d_side")]
    pub image_side: usize,
    #[serde(default = "d_factors")]
    pub factors: usize,
    #[serde(default = "d_values")]
    pub factor_values: usize,
    #[serde(default = "d_noise")]
    pub noise: f64,
    #[serde(rename = "L", default = "d_len")]
    pub codes_per_sample: usize,
    #[serde(rename = "K", default = "d_k")]
    pub codebook_size: usize,
    #[serde(rename = "d", default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_hidden")]
    pub hidden: usize,
    #[serde(default = "d_steps")]
    pub steps: u64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_momentum")]
    pub momentum: f64,
    #[serde(default = "d_beta")]
    pub commitment_beta: f64,
    #[serde(rename = "T_q", default = "d_t_q")]
    pub quantize_start: u64,
    #[serde(rename = "W", default = "d_window")]
    pub window: u64,
    #[serde(default = "d_reinit")]
    pub reinit_count: u64,
    #[serde(default = "d_lloyd")]
    pub lloyd_iters: usize,
    #[serde(default = "d_train")]
    pub train_samples: usize,
    #[serde(default = "d_heldout")]
    pub heldout_samples: usize,
    #[serde(default = "d_log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.image_side,
            self.factors,
            self.factor_values,
            self.codes_per_sample,
            self.codebook_size,
            self.dim,
            self.hidden,
            self.batch_size,
            self.train_samples,
            self.heldout_samples,
        ];
        if sizes.contains(&0) {
            return Err(PivqError::invalid("toy config sizes must be positive"));
        }
        if self.factors > self.image_side * self.image_side {
            return Err(PivqError::invalid("more factors than pixels"));
        }
        if self.codes_per_sample > self.codebook_size {
            return Err(PivqError::CodebookTooSmall {
                k: self.codebook_size,
                l: self.codes_per_sample,
            });
        }
        if self.window == 0 || self.quantize_start < self.window {
            return Err(PivqError::invalid("need T_q >= W >= 1"));
        }
        if !positive(self.learning_rate) || !positive(self.commitment_beta) {
            return Err(PivqError::invalid("learning_rate and commitment_beta must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..=0.5).contains(&self.noise) {
            return Err(PivqError::invalid("momentum must be in [0,1) and noise in [0,0.5]"));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.image_side * self.image_side
    }
}

/// Seed of the fixed factor templates; every dataset shares them.
const TEMPLATE_SEED: u64 = 0x5EED_7E3A;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSample {
    /// Row-major `side × side` grid in `[0, 1]`.
    pub image: Vec<f64>,
    pub factors: Vec<usize>,
}

/// Images built from additive per-factor templates. Factor `f` owns a
/// contiguous band of pixels; each of its values paints that band with a fixed
/// pattern in `[0.1, 0.9]`. Noise is uniform in `[−noise, noise]`, then the
/// image is clipped to `[0, 1]`.
#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    side: usize,
    factors: usize,
    values: usize,
    noise: f64,
    /// `templates[f * values + v]`, full-size images.
    templates: Vec<Vec<f64>>,
}

impl SyntheticWorld {
    pub fn new(cfg: &ToyConfig) -> Self {
        let pixels = cfg.pixels();
        let mut rng = Rng::new(TEMPLATE_SEED);
        let mut templates = Vec::with_capacity(cfg.factors * cfg.factor_values);
        for f in 0..cfg.factors {
            for _ in 0..cfg.factor_values {
                let t = (0..pixels)
                    .map(|p| {
                        if p * cfg.factors / pixels == f {
                            rng.uniform_range(0.1, 0.9)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                templates.push(t);
            }
        }
        SyntheticWorld {
            side: cfg.image_side,
            factors: cfg.factors,
            values: cfg.factor_values,
            noise: cfg.noise,
            templates,
        }
    }

    pub fn combinations(&self) -> usize {
        self.values.pow(self.factors as u32)
    }

    fn decode_combination(&self, mut c: usize) -> Vec<usize> {
        (0..self.factors)
            .map(|_| {
                let v = c % self.values;
                c /= self.values;
                v
            })
            .collect()
    }

    pub fn render(&self, factors: &[usize], rng: &mut Rng) -> Vec<f64> {
        let mut img = vec![0.0; self.side * self.side];
        for (f, &v) in factors.iter().enumerate() {
            for (p, t) in img.iter_mut().zip(&self.templates[f * self.values + v]) {
                *p += t;
            }
        }
        for p in &mut img {
            *p = (*p + rng.uniform_range(-self.noise, self.noise)).clamp(0.0, 1.0);
        }
        img
    }

    /// `count` samples. Factor combinations are dealt from shuffled full
    /// decks, so every block of `values^factors` samples covers each
    /// combination once.
    pub fn generate(&self, count: usize, rng: &mut Rng) -> Vec<SyntheticSample> {
        let total = self.combinations();
        let mut deck: Vec<usize> = Vec::new();
        (0..count)
            .map(|_| {
                if deck.is_empty() {
                    deck = (0..total).collect();
                    rng.shuffle(&mut deck);
                }
                let factors = self.decode_combination(deck.pop().unwrap());
                let image = self.render(&factors, rng);
                SyntheticSample { image, factors }
            })
            .collect()
    }
}

pub fn generate_dataset(cfg: &ToyConfig, count: usize, rng: &mut Rng) -> Vec<SyntheticSample> {
    SyntheticWorld::new(cfg).generate(count, rng)
}

/// All trainable parameters. Gradients use the same layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub enc_w1: Vec<f64>,
    pub enc_b1: Vec<f64>,
    pub enc_w2: Vec<f64>,
    pub enc_b2: Vec<f64>,
    /// `K × d`, row-major.
    pub codebook: Vec<f64>,
    pub dec_w1: Vec<f64>,
    pub dec_b1: Vec<f64>,
    pub dec_w2: Vec<f64>,
    pub dec_b2: Vec<f64>,
}

impl Params {
    pub const BLOCKS: [&'static str; 9] = [
        "enc_w1", "enc_b1", "enc_w2", "enc_b2", "codebook", "dec_w1", "dec_b1", "dec_w2", "dec_b2",
    ];

    pub fn zeros_like(other: &Params) -> Params {
        let z = |v: &Vec<f64>| vec![0.0; v.len()];
        Params {
            enc_w1: z(&other.enc_w1),
            enc_b1: z(&other.enc_b1),
            enc_w2: z(&other.enc_w2),
            enc_b2: z(&other.enc_b2),
            codebook: z(&other.codebook),
            dec_w1: z(&other.dec_w1),
            dec_b1: z(&other.dec_b1),
            dec_w2: z(&other.dec_w2),
            dec_b2: z(&other.dec_b2),
        }
    }

    pub fn blocks(&self) -> [&[f64]; 9] {
        [
            &self.enc_w1,
            &self.enc_b1,
            &self.enc_w2,
            &self.enc_b2,
            &self.codebook,
            &self.dec_w1,
            &self.dec_b1,
            &self.dec_w2,
            &self.dec_b2,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 9] {
        [
            &mut self.enc_w1,
            &mut self.enc_b1,
            &mut self.enc_w2,
            &mut self.enc_b2,
            &mut self.codebook,
            &mut self.dec_w1,
            &mut self.dec_b1,
            &mut self.dec_w2,
            &mut self.dec_b2,
        ]
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        Self::BLOCKS
            .iter()
            .position(|&b| b == name)
            .map(|i| self.blocks()[i])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        let i = Self::BLOCKS.iter().position(|&b| b == name)?;
        let [a, b, c, d, e, f, g, h, k] = self.blocks_mut();
        Some([a, b, c, d, e, f, g, h, k].into_iter().nth(i).unwrap())
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &Params) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Shape of a [`ToyModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub pixels: usize,
    pub hidden: usize,
    pub len: usize,
    pub dim: usize,
    pub codebook_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub shape: Shape,
    pub params: Params,
}

/// Activations kept for [`ToyModel::backward`].
#[derive(Clone, Debug)]
pub struct Cache {
    pub input: Vec<f64>,
    pub enc_hidden: Vec<f64>,
    /// `L × d` encoder outputs.
    pub z_e: Vec<f64>,
    /// Codes chosen for each `z_e`, when quantized.
    pub indices: Option<Vec<usize>>,
    /// Pooled decoder input.
    pub pooled: Vec<f64>,
    pub dec_hidden: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// Mean absolute pixel error.
    pub reconstruction: f64,
    /// `mean_j ‖sg(z_e_j) − e_j‖²`.
    pub codebook: f64,
    /// `β · mean_j ‖z_e_j − sg(e_j)‖²`.
    pub commitment: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.codebook + self.commitment
    }
}

/// `out[i] = b[i] + Σ_j w[i·cols + j] x[j]`.
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(i, bi)| bi + w[i * cols..(i + 1) * cols].iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
        .collect()
}

/// Accumulates `dW += dy ⊗ x`, `db += dy` and returns `Wᵀ dy`.
fn affine_backward(w: &[f64], x: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let cols = x.len();
    let mut dx = vec![0.0; cols];
    for (i, &g) in dy.iter().enumerate() {
        db[i] += g;
        if g == 0.0 {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        let drow = &mut dw[i * cols..(i + 1) * cols];
        for j in 0..cols {
            drow[j] += g * x[j];
            dx[j] += g * row[j];
        }
    }
    dx
}

impl ToyModel {
    /// Weights `N(0, 1/fan_in)`, zero biases, codebook `N(0, 1)`.
    pub fn new(shape: Shape, rng: &mut Rng) -> Self {
        let mut gauss = |n: usize, fan_in: usize| -> Vec<f64> {
            let s = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| s * rng.normal()).collect()
        };
        let Shape {
            pixels,
            hidden,
            len,
            dim,
            codebook_size,
        } = shape;
        let enc_w1 = gauss(hidden * pixels, pixels);
        let enc_w2 = gauss(len * dim * hidden, hidden);
        let codebook = gauss(codebook_size * dim, 1);
        let dec_w1 = gauss(hidden * dim, dim);
        let dec_w2 = gauss(pixels * hidden, hidden);
        ToyModel {
            shape,
            params: Params {
                enc_w1,
                enc_b1: vec![0.0; hidden],
                enc_w2,
                enc_b2: vec![0.0; len * dim],
                codebook,
                dec_w1,
                dec_b1: vec![0.0; hidden],
                dec_w2,
                dec_b2: vec![0.0; pixels],
            },
        }
    }

    pub fn from_config(cfg: &ToyConfig, rng: &mut Rng) -> Self {
        ToyModel::new(
            Shape {
                pixels: cfg.pixels(),
                hidden: cfg.hidden,
                len: cfg.codes_per_sample,
                dim: cfg.dim,
                codebook_size: cfg.codebook_size,
            },
            rng,
        )
    }

    pub fn codebook(&self) -> Codebook {
        Codebook::from_flat(self.shape.dim, self.params.codebook.clone()).expect("finite codebook")
    }

    /// Returns `(hidden, z_e)` with `z_e` flattened `L × d`.
    pub fn encode(&self, image: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.shape.pixels, image.len())?;
        let p = &self.params;
        let mut h = affine(&p.enc_w1, &p.enc_b1, image);
        h.iter_mut().for_each(|v| *v = v.tanh());
        let z = affine(&p.enc_w2, &p.enc_b2, &h);
        Ok((h, z))
    }

    pub fn embeddings(z_e: &[f64], dim: usize) -> Vec<Embedding> {
        z_e.chunks_exact(dim)
            .map(|c| Embedding::new(c.to_vec()).expect("finite activations"))
            .collect()
    }

    /// Decoder head on a pooled vector; returns `(hidden, output)`.
    pub fn decode_pooled(&self, pooled: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.shape.dim, pooled.len())?;
        let p = &self.params;
        let mut g = affine(&p.dec_w1, &p.dec_b1, pooled);
        g.iter_mut().for_each(|v| *v = v.tanh());
        let out = affine(&p.dec_w2, &p.dec_b2, &g);
        Ok((g, out))
    }

    /// Sum of the codebook entries for `codes`, taken in ascending code order.
    pub fn pool_codes(&self, codes: &[usize]) -> Result<Vec<f64>> {
        let dim = self.shape.dim;
        let mut sorted = codes.to_vec();
        sorted.sort_unstable();
        let mut s = vec![0.0; dim];
        for &c in &sorted {
            if c >= self.shape.codebook_size {
                return Err(PivqError::CodeOutOfRange {
                    code: c,
                    k: self.shape.codebook_size,
                });
            }
            for (acc, v) in s.iter_mut().zip(&self.params.codebook[c * dim..(c + 1) * dim]) {
                *acc += v;
            }
        }
        Ok(s)
    }

    /// Reconstruction from a list of codes in any order.
    pub fn decode_codes(&self, codes: &[usize]) -> Result<Vec<f64>> {
        Ok(self.decode_pooled(&self.pool_codes(codes)?)?.1)
    }

    pub fn decode_set(&self, codes: &CodeSet) -> Result<Vec<f64>> {
        self.decode_codes(codes.codes())
    }

    /// Full pass. With `quantize` the embeddings are matched to the codebook;
    /// without it their plain sum feeds the decoder.
    pub fn forward(
        &self,
        image: &[f64],
        quantize: bool,
    ) -> Result<(Vec<f64>, Option<QuantizationResult>, Cache)> {
        let (h, z) = self.encode(image)?;
        let (pooled, result) = if quantize {
            let zs = Self::embeddings(&z, self.shape.dim);
            let result = matching_quantize(&self.codebook(), &zs)?;
            (self.pool_codes(&result.indices)?, Some(result))
        } else {
            let mut s = vec![0.0; self.shape.dim];
            for chunk in z.chunks_exact(self.shape.dim) {
                for (acc, v) in s.iter_mut().zip(chunk) {
                    *acc += v;
                }
            }
            (s, None)
        };
        let (g, out) = self.decode_pooled(&pooled)?;
        let cache = Cache {
            input: image.to_vec(),
            enc_hidden: h,
            z_e: z,
            indices: result.as_ref().map(|r| r.indices.clone()),
            pooled,
            dec_hidden: g,
            output: out.clone(),
        };
        Ok((out, result, cache))
    }

    pub fn loss(&self, cache: &Cache, beta: f64) -> LossParts {
        let n = cache.output.len() as f64;
        let reconstruction = cache
            .output
            .iter()
            .zip(&cache.input)
            .map(|(o, x)| (o - x).abs())
            .sum::<f64>()
            / n;
        let (codebook, commitment) = match &cache.indices {
            Some(idx) => {
                let sq = self.vq_squared_error(&cache.z_e, idx);
                (sq, beta * sq)
            }
            None => (0.0, 0.0),
        };
        LossParts {
            reconstruction,
            codebook,
            commitment,
        }
    }

    /// `mean_j ‖z_e_j − e_{idx_j}‖²`.
    pub fn vq_squared_error(&self, z_e: &[f64], indices: &[usize]) -> f64 {
        let dim = self.shape.dim;
        let total: f64 = indices
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                z_e[j * dim..(j + 1) * dim]
                    .iter()
                    .zip(&self.params.codebook[c * dim..(c + 1) * dim])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum();
        total / indices.len().max(1) as f64
    }

    /// `∂(mean |out − x|)/∂out`.
    pub fn l1_grad(cache: &Cache) -> Vec<f64> {
        let n = cache.output.len() as f64;
        cache
            .output
            .iter()
            .zip(&cache.input)
            .map(|(o, x)| {
                let d = o - x;
                if d > 0.0 {
                    1.0 / n
                } else if d < 0.0 {
                    -1.0 / n
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Parameter gradients for upstream `grad_out = ∂loss/∂output` plus
    /// `vq_scale` times the codebook and commitment terms.
    pub fn backward(&self, cache: &Cache, grad_out: &[f64], vq_scale: f64, beta: f64) -> Result<Params> {
        check_dim(self.shape.pixels, grad_out.len())?;
        let p = &self.params;
        let Shape { dim, len, .. } = self.shape;
        let mut grads = Params::zeros_like(p);

        let d_dec_hidden = affine_backward(&p.dec_w2, &cache.dec_hidden, grad_out, &mut grads.dec_w2, &mut grads.dec_b2);
        let d_pre: Vec<f64> = d_dec_hidden
            .iter()
            .zip(&cache.dec_hidden)
            .map(|(g, a)| g * (1.0 - a * a))
            .collect();
        let d_pooled = affine_backward(&p.dec_w1, &cache.pooled, &d_pre, &mut grads.dec_w1, &mut grads.dec_b1);

        // Straight-through: every z_e receives the pooled gradient unchanged.
        let mut d_z = Vec::with_capacity(len * dim);
        for _ in 0..len {
            d_z.extend_from_slice(&d_pooled);
        }
        if let Some(idx) = &cache.indices {
            let w = vq_scale * 2.0 / len as f64;
            for (j, &c) in idx.iter().enumerate() {
                for d in 0..dim {
                    let diff = cache.z_e[j * dim + d] - p.codebook[c * dim + d];
                    d_z[j * dim + d] += beta * w * diff;
                    grads.codebook[c * dim + d] -= w * diff;
                }
            }
        }

        let d_enc_hidden = affine_backward(&p.enc_w2, &cache.enc_hidden, &d_z, &mut grads.enc_w2, &mut grads.enc_b2);
        let d_pre: Vec<f64> = d_enc_hidden
            .iter()
            .zip(&cache.enc_hidden)
            .map(|(g, a)| g * (1.0 - a * a))
            .collect();
        affine_backward(&p.enc_w1, &cache.input, &d_pre, &mut grads.enc_w1, &mut grads.enc_b1);
        Ok(grads)
    }

    /// Mean squared pixel error with quantization on.
    pub fn mse(&self, samples: &[SyntheticSample], exec: Execution) -> Result<f64> {
        let errs = par::map(exec, samples, |s| -> Result<f64> {
            let (out, _, _) = self.forward(&s.image, true)?;
            Ok(out.iter().zip(&s.image).map(|(o, x)| (o - x).powi(2)).sum::<f64>() / out.len() as f64)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(errs.iter().sum::<f64>() / errs.len().max(1) as f64)
    }

    /// Code sets of `samples` under matching quantization.
    pub fn encode_sets(&self, samples: &[SyntheticSample], exec: Execution) -> Result<Vec<CodeSet>> {
        par::map(exec, samples, |s| {
            self.forward(&s.image, true).map(|(_, r, _)| r.expect("quantized").code_set)
        })
        .into_iter()
        .collect()
    }
}

pub const MODEL_MAGIC: &[u8; 8] = b"PIVQTM1\0";

impl ToyModel {
    /// `PIVQTM1\0`, five u32 shape fields (pixels, hidden, L, d, K), then
    /// every parameter block as little-endian f64 in [`Params::BLOCKS`] order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = self.shape;
        let mut out = MODEL_MAGIC.to_vec();
        for v in [s.pixels, s.hidden, s.len, s.dim, s.codebook_size] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for block in self.params.blocks() {
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 28 || &bytes[..8] != MODEL_MAGIC {
            return Err(PivqError::parse("not a toy model file"));
        }
        let field = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
        let shape = Shape {
            pixels: field(0),
            hidden: field(1),
            len: field(2),
            dim: field(3),
            codebook_size: field(4),
        };
        if [shape.pixels, shape.hidden, shape.len, shape.dim, shape.codebook_size].contains(&0) {
            return Err(PivqError::parse("zero-sized model"));
        }
        let mut model = ToyModel::new(shape, &mut Rng::new(0));
        let body = &bytes[28..];
        let needed: usize = model.params.blocks().iter().map(|b| b.len() * 8).sum();
        if body.len() != needed {
            return Err(PivqError::parse(format!(
                "expected {needed} parameter bytes, found {}",
                body.len()
            )));
        }
        let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for block in model.params.blocks_mut() {
            for v in block.iter_mut() {
                *v = values.next().unwrap();
            }
        }
        if !model.params.is_finite() {
            return Err(PivqError::parse("non-finite parameter"));
        }
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: u64,
    pub reconstruction: f64,
    pub codebook: f64,
    pub commitment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyMetrics {
    pub steps: u64,
    pub initial_heldout_mse: f64,
    pub final_heldout_mse: f64,
    /// `1 − final / initial`.
    pub mse_reduction: f64,
    pub reinit_steps: Vec<u64>,
    /// Usage over the held-out set with the final model.
    pub heldout_k_data: usize,
    pub heldout_max_k_img: usize,
    pub loss_curve: Vec<LossPoint>,
}

pub struct ToyRun {
    pub model: ToyModel,
    pub metrics: ToyMetrics,
    pub train: Vec<SyntheticSample>,
    pub heldout: Vec<SyntheticSample>,
}

/// Trains with SGD (optional momentum) on L1 reconstruction plus the VQ
/// terms. Quantization starts at `T_q`; the codebook is refit with KMeans++
/// to the last `W` steps of encoder outputs at `T_q + m·W`, `m < reinit_count`.
///
/// Streams: `seed.child(0)` training data, `child(1)` held-out data,
/// `child(2)` parameters, `child(3)` minibatches, `child(4 + step)` refits.
pub fn train_toy(cfg: &ToyConfig, exec: Execution) -> Result<ToyRun> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let world = SyntheticWorld::new(cfg);
    let train = world.generate(cfg.train_samples, &mut root.child(0));
    let heldout = world.generate(cfg.heldout_samples, &mut root.child(1));
    let mut model = ToyModel::from_config(cfg, &mut root.child(2));
    let mut batch_rng = root.child(3);

    let initial_heldout_mse = model.mse(&heldout, exec)?;
    let mut velocity = Params::zeros_like(&model.params);
    let mut window = WindowBuffer::new(cfg.window as usize);
    let mut reinit_steps = Vec::new();
    let mut loss_curve = Vec::new();
    let mut running = LossParts::default();
    let mut running_n = 0u64;

    for step in 0..cfg.steps {
        if reinit_schedule_hit(step, cfg.quantize_start, cfg.window, cfg.reinit_count) {
            let samples = window.samples();
            if !samples.is_empty() {
                let cb = kmeanspp_init(
                    &samples,
                    cfg.codebook_size,
                    cfg.lloyd_iters,
                    &mut root.child(4 + step),
                    exec,
                )?;
                model.params.codebook = cb.as_flat().to_vec();
                reinit_steps.push(step);
            }
        }
        let quantize = step >= cfg.quantize_start;
        let batch: Vec<usize> = (0..cfg.batch_size).map(|_| batch_rng.below(train.len())).collect();
        let model_ref = &model;
        let per_sample = par::map(exec, &batch, |&i| -> Result<(Params, LossParts, Vec<f64>)> {
            let (_, _, cache) = model_ref.forward(&train[i].image, quantize)?;
            let loss = model_ref.loss(&cache, cfg.commitment_beta);
            let grad_out = ToyModel::l1_grad(&cache);
            let grads = model_ref.backward(&cache, &grad_out, 1.0, cfg.commitment_beta)?;
            Ok((grads, loss, cache.z_e))
        });

        let mut total = Params::zeros_like(&model.params);
        let mut step_z = Vec::with_capacity(cfg.batch_size * cfg.codes_per_sample);
        let inv = 1.0 / cfg.batch_size as f64;
        for item in per_sample {
            let (g, loss, z) = item?;
            total.axpy(inv, &g);
            running.reconstruction += loss.reconstruction;
            running.codebook += loss.codebook;
            running.commitment += loss.commitment;
            running_n += 1;
            step_z.extend(ToyModel::embeddings(&z, cfg.dim));
        }
        window.push(step_z);

        velocity.scale(cfg.momentum);
        velocity.axpy(1.0, &total);
        model.params.axpy(-cfg.learning_rate, &velocity);
        if !model.params.is_finite() {
            return Err(PivqError::invalid(format!("training diverged at step {step}")));
        }

        if (step + 1) % cfg.log_every.max(1) == 0 || step + 1 == cfg.steps {
            let n = running_n.max(1) as f64;
            loss_curve.push(LossPoint {
                step: step + 1,
                reconstruction: running.reconstruction / n,
                codebook: running.codebook / n,
                commitment: running.commitment / n,
            });
            running = LossParts::default();
            running_n = 0;
        }
    }

    let final_heldout_mse = model.mse(&heldout, exec)?;
    let sets = model.encode_sets(&heldout, exec)?;
    let mut usage = UsageStats::new(cfg.codebook_size);
    for s in &sets {
        usage.record(s.codes())?;
    }
    let metrics = ToyMetrics {
        steps: cfg.steps,
        initial_heldout_mse,
        final_heldout_mse,
        mse_reduction: 1.0 - final_heldout_mse / initial_heldout_mse,
        reinit_steps,
        heldout_k_data: usage.dataset_usage(),
        heldout_max_k_img: usage.max_per_image_usage,
        loss_curve,
    };
    Ok(ToyRun {
        model,
        metrics,
        train,
        heldout,
    })
}
