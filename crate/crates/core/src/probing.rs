//! Linear probes on code-presence features.
//!
//! Each sample becomes a `K`-dimensional 0/1 vector (1 where the code occurs
//! in its set). One L2-regularised logistic regression per binary attribute is
//! fit by full-batch gradient descent and scored by stratified k-fold
//! cross-validation against a majority-class baseline.

use serde::{Deserialize, Serialize};

use crate::error::{PivqError, Result};
use crate::par::{self, Execution};
use crate::rng::Rng;
use crate::types::CodeSet;

/// Binary presence features, stored sparsely as one sorted code list per row.
#[derive(Clone, Debug, PartialEq)]
pub struct PresenceMatrix {
    k: usize,
    rows: Vec<CodeSet>,
}

impl PresenceMatrix {
    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &CodeSet {
        &self.rows[i]
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.rows[i].len()
    }

    pub fn dense_row(&self, i: usize) -> Vec<u8> {
        let mut out = vec![0u8; self.k];
        for c in self.rows[i].iter() {
            out[c] = 1;
        }
        out
    }

    fn subset(&self, idx: &[usize]) -> PresenceMatrix {
        PresenceMatrix {
            k: self.k,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

pub fn build_presence<'a, I>(codes: I, k: usize) -> Result<PresenceMatrix>
where
    I: IntoIterator<Item = &'a CodeSet>,
{
    let rows = codes
        .into_iter()
        .map(|c| c.check_range(k).map(|_| c.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(PresenceMatrix { k, rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticHyper {
    pub l2: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        LogisticHyper {
            l2: 1e-2,
            epochs: 300,
            lr: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Set when the training labels had a single class; the model then
    /// predicts that class for everything.
    pub degenerate: bool,
}

impl LogisticModel {
    pub fn logit(&self, row: &CodeSet) -> f64 {
        self.bias + row.iter().map(|c| self.weights[c]).sum::<f64>()
    }

    pub fn predict(&self, row: &CodeSet) -> bool {
        self.logit(row) >= 0.0
    }

    pub fn accuracy(&self, x: &PresenceMatrix, y: &[bool]) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        let hits = (0..x.rows()).filter(|&i| self.predict(x.row(i)) == y[i]).count();
        hits as f64 / y.len() as f64
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Minimises `mean log-loss + (l2 / 2)‖w‖²` (bias unpenalised) by full-batch
/// gradient descent from zero.
pub fn fit_logistic(x: &PresenceMatrix, y: &[bool], hyper: &LogisticHyper) -> Result<LogisticModel> {
    if x.rows() != y.len() {
        return Err(PivqError::DimensionMismatch {
            expected: x.rows(),
            actual: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(PivqError::invalid("need at least two samples"));
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        let only = positives > 0;
        return Ok(LogisticModel {
            weights: vec![0.0; x.cols()],
            bias: if only { 1.0 } else { -1.0 },
            degenerate: true,
        });
    }

    let n = y.len() as f64;
    let mut w = vec![0.0; x.cols()];
    let mut b = 0.0;
    let mut gw = vec![0.0; x.cols()];
    for _ in 0..hyper.epochs {
        gw.fill(0.0);
        let mut gb = 0.0;
        for (i, &label) in y.iter().enumerate() {
            let row = x.row(i);
            let z = b + row.iter().map(|c| w[c]).sum::<f64>();
            let r = sigmoid(z) - if label { 1.0 } else { 0.0 };
            gb += r;
            for c in row.iter() {
                gw[c] += r;
            }
        }
        for (wc, g) in w.iter_mut().zip(&gw) {
            *wc -= hyper.lr * (g / n + hyper.l2 * *wc);
        }
        b -= hyper.lr * gb / n;
    }
    Ok(LogisticModel {
        weights: w,
        bias: b,
        degenerate: false,
    })
}

/// Assigns every sample to one of `folds` held-out folds, stratified by label:
/// each class is shuffled and dealt round-robin, continuing the rotation from
/// one class to the next.
pub fn stratified_folds(y: &[bool], folds: usize, rng: &mut Rng) -> Vec<usize> {
    let mut fold_of = vec![0usize; y.len()];
    let mut next = 0usize;
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        rng.shuffle(&mut idx);
        for i in idx {
            fold_of[i] = next % folds;
            next += 1;
        }
    }
    fold_of
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub attribute: String,
    pub folds: usize,
    pub samples: usize,
    pub cv_accuracy_mean: f64,
    pub cv_accuracy_std: f64,
    /// Majority class of each training fold, scored on its held-out fold.
    pub baseline_accuracy_mean: f64,
    pub baseline_accuracy_std: f64,
    /// Frequency of the most common label over all samples.
    pub majority_frequency: f64,
    pub fold_accuracies: Vec<f64>,
    pub degenerate: bool,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn cross_validate(
    x: &PresenceMatrix,
    y: &[bool],
    folds: usize,
    hyper: &LogisticHyper,
    rng: &mut Rng,
) -> Result<ProbeEntry> {
    if folds < 2 {
        return Err(PivqError::invalid("need at least two folds"));
    }
    if y.len() < folds {
        return Err(PivqError::invalid(format!(
            "{} samples cannot fill {folds} folds",
            y.len()
        )));
    }
    if x.rows() != y.len() {
        return Err(PivqError::DimensionMismatch {
            expected: x.rows(),
            actual: y.len(),
        });
    }
    let fold_of = stratified_folds(y, folds, rng);
    let mut accs = Vec::with_capacity(folds);
    let mut base = Vec::with_capacity(folds);
    let mut degenerate = false;
    for f in 0..folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let y_train: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let y_test: Vec<bool> = test.iter().map(|&i| y[i]).collect();
        let model = fit_logistic(&x.subset(&train), &y_train, hyper)?;
        degenerate |= model.degenerate;
        accs.push(model.accuracy(&x.subset(&test), &y_test));

        let pos = y_train.iter().filter(|&&v| v).count();
        let majority = 2 * pos > y_train.len();
        let hits = y_test.iter().filter(|&&v| v == majority).count();
        base.push(hits as f64 / y_test.len() as f64);
    }
    let (cv_mean, cv_std) = mean_std(&accs);
    let (b_mean, b_std) = mean_std(&base);
    let pos = y.iter().filter(|&&v| v).count();
    Ok(ProbeEntry {
        attribute: String::new(),
        folds,
        samples: y.len(),
        cv_accuracy_mean: cv_mean,
        cv_accuracy_std: cv_std,
        baseline_accuracy_mean: b_mean,
        baseline_accuracy_std: b_std,
        majority_frequency: pos.max(y.len() - pos) as f64 / y.len() as f64,
        fold_accuracies: accs,
        degenerate,
    })
}

/// Binary attribute table.
#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    pub names: Vec<String>,
    /// `values[a][i]` is attribute `a` of sample `i`.
    pub values: Vec<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub folds: usize,
    pub codebook_size: usize,
    pub attributes: Vec<ProbeEntry>,
}

/// Probes every attribute; attribute `a` uses `rng.child(a)` for its folds.
pub fn probe(
    x: &PresenceMatrix,
    labels: &Labels,
    folds: usize,
    hyper: &LogisticHyper,
    rng: &Rng,
    exec: Execution,
) -> Result<ProbeReport> {
    let entries = par::map_range(exec, labels.names.len(), |a| {
        let mut child = rng.child(a as u64);
        cross_validate(x, &labels.values[a], folds, hyper, &mut child).map(|mut e| {
            e.attribute = labels.names[a].clone();
            e
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ProbeReport {
        folds,
        codebook_size: x.cols(),
        attributes: entries,
    })
}
