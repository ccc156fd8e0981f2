//! Value types shared across the crate. Everything here is immutable once
//! built, so it can be handed to worker threads freely.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, PivqError, Result};

/// A single latent vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(PivqError::NonFinite(pos));
        }
        Ok(Embedding(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Embedding(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = PivqError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `‖a − b‖₂`, failing on a dimension mismatch.
pub fn euclidean_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(squared_distance(a.as_slice(), b.as_slice()).sqrt())
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// An ordered list of `K ≥ 1` vectors of a common dimension.
///
/// Entries are stored contiguously, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    dim: usize,
    data: Vec<f64>,
}

impl Codebook {
    pub fn new(entries: Vec<Embedding>) -> Result<Self> {
        let first = entries.first().ok_or(PivqError::EmptyCodebook)?;
        let dim = first.dim();
        let mut data = Vec::with_capacity(entries.len() * dim);
        for e in &entries {
            check_dim(dim, e.dim())?;
            data.extend_from_slice(e.as_slice());
        }
        Ok(Codebook { dim, data })
    }

    /// Builds a codebook from `K·dim` row-major values.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(PivqError::EmptyCodebook);
        }
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(PivqError::invalid(format!(
                "{} values cannot be split into entries of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(PivqError::NonFinite(pos));
        }
        Ok(Codebook { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of entries, `K`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn entry(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn entries(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_embeddings(&self) -> Vec<Embedding> {
        self.entries().map(|e| Embedding(e.to_vec())).collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn entry_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// A set of distinct code indices, stored sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct CodeSet(Vec<usize>);

impl CodeSet {
    /// Builds a set from codes in any order; duplicates are an error.
    pub fn new(mut codes: Vec<usize>) -> Result<Self> {
        codes.sort_unstable();
        if let Some(w) = codes.windows(2).find(|w| w[0] == w[1]) {
            return Err(PivqError::DuplicateCode(w[0]));
        }
        Ok(CodeSet(codes))
    }

    /// Builds a set from codes that may repeat, keeping one copy of each.
    pub fn from_indices(indices: &[usize]) -> Self {
        let mut codes = indices.to_vec();
        codes.sort_unstable();
        codes.dedup();
        CodeSet(codes)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, code: usize) -> bool {
        self.0.binary_search(&code).is_ok()
    }

    pub fn codes(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn max_code(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn check_range(&self, k: usize) -> Result<()> {
        match self.max_code() {
            Some(code) if code >= k => Err(PivqError::CodeOutOfRange { code, k }),
            _ => Ok(()),
        }
    }

    pub fn intersection(&self, other: &CodeSet) -> CodeSet {
        CodeSet(self.iter().filter(|&c| other.contains(c)).collect())
    }

    pub fn difference(&self, other: &CodeSet) -> CodeSet {
        CodeSet(self.iter().filter(|&c| !other.contains(c)).collect())
    }

    pub fn union(&self, other: &CodeSet) -> CodeSet {
        let set: BTreeSet<usize> = self.iter().chain(other.iter()).collect();
        CodeSet(set.into_iter().collect())
    }

    /// Size of the symmetric difference.
    pub fn hamming(&self, other: &CodeSet) -> usize {
        self.difference(other).len() + other.difference(self).len()
    }

    pub fn is_subset(&self, other: &CodeSet) -> bool {
        self.iter().all(|c| other.contains(c))
    }
}

impl TryFrom<Vec<usize>> for CodeSet {
    type Error = PivqError;

    fn try_from(codes: Vec<usize>) -> Result<Self> {
        CodeSet::new(codes)
    }
}

impl From<CodeSet> for Vec<usize> {
    fn from(s: CodeSet) -> Self {
        s.0
    }
}

impl fmt::Display for CodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}}")
    }
}

/// `K × L` Euclidean distances between codebook entries (rows) and
/// embeddings (columns), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub(crate) fn from_raw(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        DistanceMatrix { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// An injective map from embedding columns to codebook rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `mapping[j]` is the row chosen for column `j`.
    pub mapping: Vec<usize>,
    pub total_cost: f64,
}

/// Codebook usage counters, per sample and over everything seen so far.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageStats {
    /// Use count per codebook entry.
    pub histogram: Vec<u64>,
    /// Largest number of distinct codes observed in a single sample.
    pub max_per_image_usage: usize,
    pub samples: u64,
}

impl UsageStats {
    pub fn new(k: usize) -> Self {
        UsageStats {
            histogram: vec![0; k],
            max_per_image_usage: 0,
            samples: 0,
        }
    }

    /// Stats for a single sample's indices.
    pub fn from_indices(k: usize, indices: &[usize]) -> Result<Self> {
        let mut stats = UsageStats::new(k);
        stats.record(indices)?;
        Ok(stats)
    }

    pub fn codebook_size(&self) -> usize {
        self.histogram.len()
    }

    /// Number of codes used at least once (`K_data`).
    pub fn dataset_usage(&self) -> usize {
        self.histogram.iter().filter(|&&c| c > 0).count()
    }

    /// Number of codes never used.
    pub fn dead_codes(&self) -> usize {
        self.codebook_size() - self.dataset_usage()
    }

    pub fn record(&mut self, indices: &[usize]) -> Result<()> {
        let k = self.histogram.len();
        if let Some(&code) = indices.iter().find(|&&c| c >= k) {
            return Err(PivqError::CodeOutOfRange { code, k });
        }
        for &i in indices {
            self.histogram[i] += 1;
        }
        let k_img = CodeSet::from_indices(indices).len();
        self.max_per_image_usage = self.max_per_image_usage.max(k_img);
        self.samples += 1;
        Ok(())
    }

    /// Associative, commutative merge: histogram addition and max of `K_img`.
    pub fn merge(&mut self, other: &UsageStats) -> Result<()> {
        check_dim(self.histogram.len(), other.histogram.len())?;
        for (a, b) in self.histogram.iter_mut().zip(&other.histogram) {
            *a += b;
        }
        self.max_per_image_usage = self.max_per_image_usage.max(other.max_per_image_usage);
        self.samples += other.samples;
        Ok(())
    }
}
