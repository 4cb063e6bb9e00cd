//! Gaussian class-conditional multimodal data.
//!
//! Each sample draws a label with probability `threat_fraction` of being a
//! threat, then one `dim_f`-vector per modality from
//! `N(class_means[modality][label], noise_std^2 I)`. With a shared isotropic
//! covariance the Bayes-optimal accuracy of any fused (linear) view has a
//! closed form, which [`bayes_accuracy`] evaluates.

use crate::error::{DataError, FusionError, ParamError};
use crate::fusion::{extract_and_fuse, ExtractorKind, ExtractorSpec, FusionWeights, RawRecord};
use crate::params::LabeledBatch;
use crate::rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Samples per independently seeded generation block.
pub const BLOCK_SIZE: usize = 4096;

/// Bayes accuracy each modality should have on its own in the
/// complementary scenario.
pub const UNIMODAL_TARGET: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub modalities: usize,
    pub dim_f: usize,
    /// Per modality: `[benign mean, threat mean]`, each of length `dim_f`.
    pub class_means: Vec<[Vec<f64>; 2]>,
    pub noise_std: f64,
    pub n_samples: usize,
    pub threat_fraction: f64,
    pub dirichlet_beta: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |s: String| Err(DataError::InvalidSpec(s));
        if self.modalities == 0 || self.dim_f == 0 {
            return bad("modalities and dim_f must be positive".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            return bad(format!("noise_std must be positive, got {}", self.noise_std));
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive".into());
        }
        if !(self.threat_fraction > 0.0 && self.threat_fraction < 1.0) {
            return bad(format!("threat_fraction must lie in (0, 1), got {}", self.threat_fraction));
        }
        if !(self.dirichlet_beta.is_finite() && self.dirichlet_beta > 0.0) {
            return bad(format!("dirichlet_beta must be positive, got {}", self.dirichlet_beta));
        }
        if self.class_means.len() != self.modalities {
            return bad(format!(
                "class_means has {} modalities, expected {}",
                self.class_means.len(),
                self.modalities
            ));
        }
        for (k, pair) in self.class_means.iter().enumerate() {
            for mean in pair {
                if mean.len() != self.dim_f {
                    return bad(format!("class mean for modality {k} has length {}, expected {}", mean.len(), self.dim_f));
                }
                if mean.iter().any(|v| !v.is_finite()) {
                    return bad(format!("class mean for modality {k} is not finite"));
                }
            }
        }
        Ok(())
    }
}

/// Class means for `m` modalities that all differ only along coordinate 0,
/// with benign at `-distance/2` and threat at `+distance/2`.
pub fn aligned_means(m: usize, dim_f: usize, distance: f64) -> Vec<[Vec<f64>; 2]> {
    (0..m)
        .map(|_| {
            let mut benign = vec![0.0; dim_f];
            let mut threat = vec![0.0; dim_f];
            benign[0] = -distance / 2.0;
            threat[0] = distance / 2.0;
            [benign, threat]
        })
        .collect()
}

/// Raw per-modality features and labels. Row `i` stores `m * dim_f` values,
/// modality-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    modalities: usize,
    dim_f: usize,
    values: Vec<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(modalities: usize, dim_f: usize, values: Vec<f64>, labels: Vec<u8>) -> Result<Self, DataError> {
        if modalities == 0 || dim_f == 0 || values.len() != labels.len() * modalities * dim_f {
            return Err(DataError::Format(format!(
                "{} values do not form {} rows of {modalities} x {dim_f}",
                values.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(DataError::Format("labels must be 0 or 1".into()));
        }
        Ok(Dataset {
            modalities,
            dim_f,
            values,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn modalities(&self) -> usize {
        self.modalities
    }

    pub fn dim_f(&self) -> usize {
        self.dim_f
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn row_width(&self) -> usize {
        self.modalities * self.dim_f
    }

    /// Feature vector of modality `k` for sample `i`.
    pub fn modality(&self, i: usize, k: usize) -> &[f64] {
        let start = i * self.row_width() + k * self.dim_f;
        &self.values[start..start + self.dim_f]
    }

    /// Per-modality raw records of sample `i`.
    pub fn raw_records(&self, i: usize) -> Vec<RawRecord> {
        (0..self.modalities)
            .map(|k| RawRecord::Numeric(self.modality(i, k).to_vec()))
            .collect()
    }

    /// Rows `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let w = self.row_width();
        let mut values = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            values.extend_from_slice(&self.values[i * w..(i + 1) * w]);
        }
        Dataset {
            modalities: self.modalities,
            dim_f: self.dim_f,
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Leading `fraction` of rows for training, the rest for testing.
    pub fn split(&self, train_fraction: f64) -> (Dataset, Dataset) {
        let cut = ((self.len() as f64) * train_fraction).round() as usize;
        let cut = cut.min(self.len());
        let train: Vec<usize> = (0..cut).collect();
        let test: Vec<usize> = (cut..self.len()).collect();
        (self.subset(&train), self.subset(&test))
    }

    /// Runs the extractors and fusion on every sample.
    pub fn fused(&self, extractors: &[ExtractorSpec], weights: &FusionWeights) -> Result<LabeledBatch, DataError> {
        if weights.len() != self.modalities {
            return Err(FusionError::WeightCount {
                weights: weights.len(),
                features: self.modalities,
            }
            .into());
        }
        let all_identity = extractors.len() == self.modalities
            && extractors
                .iter()
                .enumerate()
                .all(|(k, e)| e.modality == k && e.kind == ExtractorKind::Identity);
        let mut features = Vec::with_capacity(self.len() * self.dim_f);
        if all_identity {
            // Same arithmetic as `fuse`, without per-sample allocation.
            let w = weights.as_slice();
            for i in 0..self.len() {
                let mut out = vec![0.0; self.dim_f];
                for (k, wk) in w.iter().enumerate() {
                    for (o, x) in out.iter_mut().zip(self.modality(i, k)) {
                        *o += wk * x;
                    }
                }
                features.extend_from_slice(&out);
            }
        } else {
            for i in 0..self.len() {
                let v = extract_and_fuse(extractors, &self.raw_records(i), weights)?;
                if v.len() != self.dim_f {
                    return Err(FusionError::DimMismatch {
                        expected: self.dim_f,
                        actual: v.len(),
                    }
                    .into());
                }
                features.extend_from_slice(&v);
            }
        }
        if self.is_empty() {
            return Err(ParamError::EmptyBatch.into());
        }
        Ok(LabeledBatch::new(self.dim_f, features, self.labels.clone())?)
    }
}

fn generate_block(spec: &SyntheticSpec, block: usize, count: usize) -> (Vec<f64>, Vec<u8>) {
    let mut rng = rng::stream_rng(spec.seed, &[rng::stream::DATA, block as u64]);
    let mut values = Vec::with_capacity(count * spec.modalities * spec.dim_f);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let label = u8::from(rng.random::<f64>() < spec.threat_fraction);
        labels.push(label);
        for pair in &spec.class_means {
            for &mu in &pair[label as usize] {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(mu + spec.noise_std * z);
            }
        }
    }
    (values, labels)
}

/// Draws `spec.n_samples` samples. Blocks of [`BLOCK_SIZE`] samples have
/// their own seeded streams, so the result does not depend on how many
/// threads generate it.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let blocks = spec.n_samples.div_ceil(BLOCK_SIZE);
    let parts: Vec<(Vec<f64>, Vec<u8>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let count = BLOCK_SIZE.min(spec.n_samples - b * BLOCK_SIZE);
            generate_block(spec, b, count)
        })
        .collect();
    let mut values = Vec::with_capacity(spec.n_samples * spec.modalities * spec.dim_f);
    let mut labels = Vec::with_capacity(spec.n_samples);
    for (v, l) in parts {
        values.extend(v);
        labels.extend(l);
    }
    Dataset::new(spec.modalities, spec.dim_f, values, labels)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Bayes accuracy of a two-class problem with standardized mean distance
/// `d` and prior `p_threat`.
pub fn bayes_accuracy_for_distance(d: f64, p_threat: f64) -> f64 {
    let p0 = 1.0 - p_threat;
    if d <= 0.0 {
        return p0.max(p_threat);
    }
    let phi = std_normal();
    let t = d / 2.0 + (p0 / p_threat).ln() / d;
    p0 * phi.cdf(t) + p_threat * phi.cdf(d - t)
}

/// Bayes-optimal accuracy of a detector that only sees the fused feature
/// `sum_k w_k X_k`.
pub fn bayes_accuracy(spec: &SyntheticSpec, weights: &FusionWeights) -> f64 {
    let w = weights.as_slice();
    let sum_sq: f64 = w.iter().map(|x| x * x).sum();
    let mut gap = vec![0.0; spec.dim_f];
    for (wk, pair) in w.iter().zip(&spec.class_means) {
        for (g, (m0, m1)) in gap.iter_mut().zip(pair[0].iter().zip(&pair[1])) {
            *g += wk * (m1 - m0);
        }
    }
    let gap_norm = gap.iter().map(|g| g * g).sum::<f64>().sqrt();
    let d = if sum_sq > 0.0 {
        gap_norm / (spec.noise_std * sum_sq.sqrt())
    } else {
        0.0
    };
    bayes_accuracy_for_distance(d, spec.threat_fraction)
}

/// Standardized distance at which a single modality reaches `target` Bayes
/// accuracy, found by bisection.
pub fn distance_for_accuracy(target: f64, p_threat: f64) -> Option<f64> {
    if bayes_accuracy_for_distance(0.0, p_threat) >= target || target >= 1.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bayes_accuracy_for_distance(mid, p_threat) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Rewrites the class means so every modality alone has Bayes accuracy
/// [`UNIMODAL_TARGET`] while their equal-weight fusion is much stronger.
///
/// All modalities separate the classes along the same coordinate. Their
/// noise is independent, so equal-weight fusion shrinks the noise by
/// `sqrt(m)` and the fused standardized distance grows by the same factor.
pub fn make_complementary(spec: &SyntheticSpec) -> Result<SyntheticSpec, DataError> {
    if spec.modalities < 2 {
        return Err(DataError::InvalidSpec(format!(
            "the complementary scenario needs at least 2 modalities, got {}",
            spec.modalities
        )));
    }
    let d = distance_for_accuracy(UNIMODAL_TARGET, spec.threat_fraction).ok_or_else(|| {
        DataError::InvalidSpec(format!(
            "threat_fraction {} already gives majority-class accuracy above {UNIMODAL_TARGET}",
            spec.threat_fraction
        ))
    })?;
    let mut out = spec.clone();
    out.class_means = aligned_means(spec.modalities, spec.dim_f, d * spec.noise_std);
    out.validate()?;
    Ok(out)
}
