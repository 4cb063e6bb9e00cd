//! Model parameters and the local objective.
//!
//! The detector is a linear scorer over fused features: a parameter vector
//! of length `dim_f + 1` holds `dim_f` weights followed by one bias. The
//! local objective is the mean binary logistic loss, and local training is
//! plain SGD with an inverse-decay step size.

use crate::error::ParamError;
use serde::{Deserialize, Serialize};

/// Flat real-valued model parameters. Entries are finite and the length is
/// fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self, ParamError> {
        if values.is_empty() {
            return Err(ParamError::EmptyVector);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ParamError::NonFinite { index, value });
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "parameter dimension must be positive");
        ParamVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    fn check_dim(&self, other: &ParamVector) -> Result<(), ParamError> {
        if self.dim() != other.dim() {
            return Err(ParamError::DimMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector, ParamError> {
        self.check_dim(other)?;
        Ok(ParamVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector, ParamError> {
        self.check_dim(other)?;
        Ok(ParamVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn scale(&self, factor: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) -> Result<(), ParamError> {
        self.check_dim(other)?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64, ParamError> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn count_nonzero(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = ParamError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        ParamVector::new(values)
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Inverse-decay step size `alpha0 / (1 + decay * t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub alpha0: f64,
    #[serde(default)]
    pub decay: f64,
}

impl LrSchedule {
    pub fn new(alpha0: f64, decay: f64) -> Result<Self, ParamError> {
        let s = LrSchedule { alpha0, decay };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(alpha0: f64) -> Result<Self, ParamError> {
        Self::new(alpha0, 0.0)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.alpha0.is_finite() && self.alpha0 > 0.0) {
            return Err(ParamError::BadRate(self.alpha0));
        }
        if !(self.decay.is_finite() && self.decay >= 0.0) {
            return Err(ParamError::BadRate(self.decay));
        }
        Ok(())
    }
}

/// Step size at local step `t`.
pub fn lr_at(schedule: &LrSchedule, t: u64) -> f64 {
    schedule.alpha0 / (1.0 + schedule.decay * t as f64)
}

/// Owned labelled feature table. Rows are stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
}

impl LabeledBatch {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<u8>) -> Result<Self, ParamError> {
        if labels.is_empty() {
            return Err(ParamError::EmptyBatch);
        }
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(ParamError::RaggedBatch {
                features: if dim == 0 { 0 } else { features.len() / dim },
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(ParamError::BadLabel(bad));
        }
        if let Some((index, &value)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ParamError::NonFinite { index, value });
        }
        Ok(LabeledBatch {
            dim,
            features,
            labels,
        })
    }

    /// Builds a batch from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self, ParamError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(ParamError::DimMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        if rows.len() != labels.len() {
            return Err(ParamError::RaggedBatch {
                features: rows.len(),
                labels: labels.len(),
            });
        }
        Self::new(dim, rows.concat(), labels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn view(&self) -> Batch<'_> {
        Batch {
            dim: self.dim,
            features: &self.features,
            labels: &self.labels,
        }
    }

    /// Contiguous sub-range of rows. Panics if the range is out of bounds.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Batch<'_> {
        Batch {
            dim: self.dim,
            features: &self.features[range.start * self.dim..range.end * self.dim],
            labels: &self.labels[range],
        }
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<LabeledBatch, ParamError> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        LabeledBatch::new(self.dim, features, labels)
    }

    /// Concatenates batches with equal feature dimension.
    pub fn concat(parts: &[&LabeledBatch]) -> Result<LabeledBatch, ParamError> {
        let dim = parts.first().ok_or(ParamError::EmptyBatch)?.dim;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.dim != dim {
                return Err(ParamError::DimMismatch {
                    expected: dim,
                    actual: p.dim,
                });
            }
            features.extend_from_slice(&p.features);
            labels.extend_from_slice(&p.labels);
        }
        LabeledBatch::new(dim, features, labels)
    }
}

/// Borrowed view over labelled rows, used for minibatches.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    dim: usize,
    features: &'a [f64],
    labels: &'a [u8],
}

impl<'a> Batch<'a> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn rows(&self) -> impl Iterator<Item = (&'a [f64], u8)> + 'a {
        self.features
            .chunks_exact(self.dim)
            .zip(self.labels.iter().copied())
    }
}

impl<'a> From<&'a LabeledBatch> for Batch<'a> {
    fn from(b: &'a LabeledBatch) -> Self {
        b.view()
    }
}

fn check_model(theta: &ParamVector, batch: &Batch<'_>) -> Result<(), ParamError> {
    if batch.is_empty() {
        return Err(ParamError::EmptyBatch);
    }
    if theta.dim() != batch.dim + 1 {
        return Err(ParamError::DimMismatch {
            expected: batch.dim + 1,
            actual: theta.dim(),
        });
    }
    Ok(())
}

/// Linear score `w·x + b`. `theta` must have length `x.len() + 1`.
pub fn score(theta: &[f64], x: &[f64]) -> f64 {
    let (w, b) = theta.split_at(x.len());
    w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b[0]
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn signed(label: u8) -> f64 {
    2.0 * f64::from(label) - 1.0
}

/// Mean logistic loss of the linear scorer over `batch`.
pub fn local_loss<'a>(theta: &ParamVector, batch: impl Into<Batch<'a>>) -> Result<f64, ParamError> {
    let batch = batch.into();
    check_model(theta, &batch)?;
    let t = theta.as_slice();
    let total: f64 = batch
        .rows()
        .map(|(x, y)| softplus(-signed(y) * score(t, x)))
        .sum();
    Ok(total / batch.len() as f64)
}

/// Analytic gradient of [`local_loss`] with respect to `theta`.
pub fn local_gradient<'a>(
    theta: &ParamVector,
    batch: impl Into<Batch<'a>>,
) -> Result<ParamVector, ParamError> {
    let batch = batch.into();
    check_model(theta, &batch)?;
    let t = theta.as_slice();
    let d = batch.dim;
    let mut grad = vec![0.0; d + 1];
    for (x, y) in batch.rows() {
        let ys = signed(y);
        // d/ds softplus(-y s) = -y * sigmoid(-y s)
        let g = -ys * sigmoid(-ys * score(t, x));
        for (gi, xi) in grad[..d].iter_mut().zip(x) {
            *gi += g * xi;
        }
        grad[d] += g;
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(ParamVector(grad))
}

/// One gradient step `theta - rate * grad`. A zero rate is allowed and
/// returns `theta` unchanged.
pub fn sgd_step(theta: &ParamVector, grad: &ParamVector, rate: f64) -> Result<ParamVector, ParamError> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(ParamError::BadRate(rate));
    }
    theta.check_dim(grad)?;
    Ok(ParamVector(
        theta
            .0
            .iter()
            .zip(&grad.0)
            .map(|(t, g)| t - rate * g)
            .collect(),
    ))
}

/// Mean of the per-client losses.
pub fn global_loss(local_losses: &[f64]) -> Result<f64, ParamError> {
    if local_losses.is_empty() {
        return Err(ParamError::EmptyLosses);
    }
    Ok(local_losses.iter().sum::<f64>() / local_losses.len() as f64)
}

/// Runs `epochs` passes of minibatch SGD over `data` in row order, starting
/// the step-size schedule at `*step` and advancing it once per minibatch.
pub fn train_epochs(
    theta: &mut ParamVector,
    data: &LabeledBatch,
    schedule: &LrSchedule,
    epochs: usize,
    batch_size: usize,
    step: &mut u64,
) -> Result<(), ParamError> {
    let batch_size = batch_size.max(1);
    for _ in 0..epochs {
        let mut start = 0;
        while start < data.len() {
            let end = (start + batch_size).min(data.len());
            let grad = local_gradient(theta, data.slice(start..end))?;
            *theta = sgd_step(theta, &grad, lr_at(schedule, *step))?;
            *step += 1;
            start = end;
        }
    }
    Ok(())
}

/// Minibatches per epoch for a shard of `n` rows.
pub fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size.max(1))
}
