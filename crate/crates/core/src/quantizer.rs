//! Nearest-neighbour and matching quantization.

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_assignment, CostMatrix};
use crate::error::{check_dim, PivqError, Result};
use crate::par::{self, Execution};
use crate::types::{squared_distance, CodeSet, Codebook, DistanceMatrix, Embedding, UsageStats};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nearest,
    #[default]
    Matching,
}

impl std::str::FromStr for Method {
    type Err = PivqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Method::Nearest),
            "matching" => Ok(Method::Matching),
            other => Err(PivqError::invalid(format!("unknown method {other:?}"))),
        }
    }
}

/// Distance used to build the matching cost. Plain Euclidean by default;
/// squared distances generally move the optimum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Squared,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizationResult {
    /// One code per input embedding, in input order.
    pub indices: Vec<usize>,
    /// `quantized[j] == codebook.entry(indices[j])`.
    pub quantized: Vec<Embedding>,
    pub code_set: CodeSet,
    pub stats: UsageStats,
}

impl QuantizationResult {
    fn build(cb: &Codebook, indices: Vec<usize>) -> Self {
        let quantized = indices
            .iter()
            .map(|&i| Embedding::new(cb.entry(i).to_vec()).expect("codebook entries are finite"))
            .collect();
        let code_set = CodeSet::from_indices(&indices);
        let stats = UsageStats::from_indices(cb.len(), &indices).expect("indices in range");
        QuantizationResult {
            indices,
            quantized,
            code_set,
            stats,
        }
    }

    /// Number of distinct codes in this sample (`K_img`).
    pub fn per_image_usage(&self) -> usize {
        self.code_set.len()
    }
}

fn check_embeddings(cb: &Codebook, zs: &[Embedding]) -> Result<()> {
    zs.iter().try_for_each(|z| check_dim(cb.dim(), z.dim()))
}

/// `K × L` matrix of `‖e_i − z_j‖₂`.
pub fn distance_matrix(cb: &Codebook, zs: &[Embedding]) -> Result<DistanceMatrix> {
    distance_matrix_with(cb, zs, Metric::Euclidean)
}

pub fn distance_matrix_with(
    cb: &Codebook,
    zs: &[Embedding],
    metric: Metric,
) -> Result<DistanceMatrix> {
    check_embeddings(cb, zs)?;
    let (k, l) = (cb.len(), zs.len());
    let mut values = Vec::with_capacity(k * l);
    for e in cb.entries() {
        for z in zs {
            let d2 = squared_distance(e, z.as_slice());
            values.push(match metric {
                Metric::Euclidean => d2.sqrt(),
                Metric::Squared => d2,
            });
        }
    }
    Ok(DistanceMatrix::from_raw(k, l, values))
}

/// Index of the closest codebook entry, lowest index on ties.
pub fn nearest_index(cb: &Codebook, z: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, e) in cb.entries().enumerate() {
        let d = squared_distance(e, z);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Independent per-embedding quantization; codes may repeat.
pub fn nearest_quantize(cb: &Codebook, zs: &[Embedding]) -> Result<QuantizationResult> {
    check_embeddings(cb, zs)?;
    let indices = zs.iter().map(|z| nearest_index(cb, z.as_slice())).collect();
    Ok(QuantizationResult::build(cb, indices))
}

/// Globally optimal one-to-one quantization: the `L` embeddings take `L`
/// distinct codes minimising the total Euclidean distance. Requires `K ≥ L`.
pub fn matching_quantize(cb: &Codebook, zs: &[Embedding]) -> Result<QuantizationResult> {
    matching_quantize_with(cb, zs, Metric::Euclidean)
}

pub fn matching_quantize_with(
    cb: &Codebook,
    zs: &[Embedding],
    metric: Metric,
) -> Result<QuantizationResult> {
    if cb.len() < zs.len() {
        return Err(PivqError::CodebookTooSmall {
            k: cb.len(),
            l: zs.len(),
        });
    }
    let dm = distance_matrix_with(cb, zs, metric)?;
    let cost = CostMatrix::new(dm.rows(), dm.cols(), dm.values().to_vec())?;
    let assignment = solve_assignment(&cost);
    Ok(QuantizationResult::build(cb, assignment.mapping))
}

pub fn quantize(cb: &Codebook, zs: &[Embedding], method: Method) -> Result<QuantizationResult> {
    match method {
        Method::Nearest => nearest_quantize(cb, zs),
        Method::Matching => matching_quantize(cb, zs),
    }
}

/// Quantizes many samples, fanning out per sample when `exec` allows.
pub fn quantize_batch(
    cb: &Codebook,
    samples: &[Vec<Embedding>],
    method: Method,
    metric: Metric,
    exec: Execution,
) -> Result<Vec<QuantizationResult>> {
    par::map(exec, samples, |zs| match method {
        Method::Nearest => nearest_quantize(cb, zs),
        Method::Matching => matching_quantize_with(cb, zs, metric),
    })
    .into_iter()
    .collect()
}

/// Straight-through quantization of one vector.
///
/// The forward value is `z_q`. Backward copies the gradient arriving at the
/// decoder input onto the encoder output unchanged; nothing flows through the
/// choice of code.
#[derive(Clone, Debug, PartialEq)]
pub struct StraightThrough {
    value: Embedding,
}

impl StraightThrough {
    pub fn value(&self) -> &Embedding {
        &self.value
    }

    pub fn backward(&self, grad: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.value.dim(), grad.len())?;
        Ok(grad.to_vec())
    }
}

pub fn straight_through(z_e: &Embedding, z_q: &Embedding) -> Result<StraightThrough> {
    check_dim(z_e.dim(), z_q.dim())?;
    Ok(StraightThrough {
        value: z_q.clone(),
    })
}

/// Folds one sample's result into running usage counters.
pub fn accumulate_usage(mut stats: UsageStats, result: &QuantizationResult) -> Result<UsageStats> {
    stats.record(&result.indices)?;
    Ok(stats)
}
