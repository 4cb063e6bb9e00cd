//! Top-k magnitude sparsification of client updates.

use crate::error::CompressionError;
use crate::params::ParamVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CompressionMode {
    #[default]
    None,
    Topk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CompressionSpec {
    pub mode: CompressionMode,
    /// Coordinates kept in top-k mode.
    #[serde(default)]
    pub k: usize,
}

impl CompressionSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn topk(k: usize) -> Self {
        CompressionSpec {
            mode: CompressionMode::Topk,
            k,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), CompressionError> {
        if self.mode == CompressionMode::Topk {
            if self.k == 0 {
                return Err(CompressionError::ZeroK);
            }
            if self.k > dim {
                return Err(CompressionError::KTooLarge { k: self.k, dim });
            }
        }
        Ok(())
    }
}

/// Sparse vector: strictly increasing indices with their values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: u32,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(dim: u32, indices: Vec<u32>, values: Vec<f64>) -> Result<Self, CompressionError> {
        if indices.len() != values.len() {
            return Err(CompressionError::Ragged {
                indices: indices.len(),
                values: values.len(),
            });
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CompressionError::UnsortedIndices);
        }
        if let Some(&index) = indices.iter().find(|&&i| i >= dim) {
            return Err(CompressionError::IndexOutOfRange { index, dim });
        }
        Ok(SparseVector { dim, indices, values })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// An update as it travels on the wire.
#[derive(Debug, Clone, PartialEq)]
pub enum EncodedUpdate {
    Dense(ParamVector),
    Sparse(SparseVector),
}

impl EncodedUpdate {
    pub fn dim(&self) -> usize {
        match self {
            EncodedUpdate::Dense(v) => v.dim(),
            EncodedUpdate::Sparse(s) => s.dim as usize,
        }
    }
}

/// Encodes `update` according to `spec`. Top-k keeps the `k` entries of
/// largest magnitude; ties go to the lower index.
pub fn compress(update: &ParamVector, spec: &CompressionSpec) -> Result<EncodedUpdate, CompressionError> {
    spec.validate(update.dim())?;
    match spec.mode {
        CompressionMode::None => Ok(EncodedUpdate::Dense(update.clone())),
        CompressionMode::Topk => {
            let v = update.as_slice();
            let mut order: Vec<u32> = (0..v.len() as u32).collect();
            let by_magnitude = |a: &u32, b: &u32| {
                v[*b as usize]
                    .abs()
                    .total_cmp(&v[*a as usize].abs())
                    .then(a.cmp(b))
            };
            if spec.k < order.len() {
                order.select_nth_unstable_by(spec.k - 1, by_magnitude);
                order.truncate(spec.k);
            }
            order.sort_unstable();
            let values = order.iter().map(|&i| v[i as usize]).collect();
            Ok(EncodedUpdate::Sparse(SparseVector {
                dim: v.len() as u32,
                indices: order,
                values,
            }))
        }
    }
}

/// Expands an encoded update back to a dense vector.
pub fn decompress(encoded: &EncodedUpdate) -> ParamVector {
    match encoded {
        EncodedUpdate::Dense(v) => v.clone(),
        EncodedUpdate::Sparse(s) => {
            let mut out = vec![0.0; s.dim as usize];
            for (&i, &x) in s.indices.iter().zip(&s.values) {
                out[i as usize] = x;
            }
            ParamVector::new(out).expect("sparse values are finite")
        }
    }
}
