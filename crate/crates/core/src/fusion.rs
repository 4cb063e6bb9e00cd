//! Per-modality feature extraction and weighted-sum fusion.
//!
//! Every extractor emits exactly `dim_f` values so modality features can be
//! summed element-wise. Extractors are deterministic stand-ins: identity for
//! pre-featurized numeric records, a fixed affine map for raw numeric
//! records (image/traffic), and token hashing with counts for text.

use crate::error::FusionError;
use serde::{Deserialize, Serialize};

/// A raw record for one modality.
#[derive(Debug, Clone, PartialEq)]
pub enum RawRecord {
    Numeric(Vec<f64>),
    Text(String),
}

impl RawRecord {
    fn shape(&self) -> String {
        match self {
            RawRecord::Numeric(v) => format!("numeric[{}]", v.len()),
            RawRecord::Text(_) => "text".to_string(),
        }
    }
}

/// Extractor kind and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtractorKind {
    /// Numeric record of length `dim_f`, passed through.
    Identity,
    /// `matrix * raw + offset`; `matrix` is `dim_f` rows of `input_dim` columns.
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    /// Lower-cased alphanumeric tokens hashed into `buckets` count bins.
    HashText { buckets: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ExtractorEntry", from = "ExtractorEntry")]
pub struct ExtractorSpec {
    pub modality: usize,
    pub kind: ExtractorKind,
}

/// Config-file form of an extractor: `{ kind = "...", modality = k, ... }`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum ExtractorEntry {
    Identity {
        modality: usize,
    },
    Affine {
        modality: usize,
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    HashText {
        modality: usize,
        buckets: usize,
    },
}

impl From<ExtractorEntry> for ExtractorSpec {
    fn from(e: ExtractorEntry) -> Self {
        let (modality, kind) = match e {
            ExtractorEntry::Identity { modality } => (modality, ExtractorKind::Identity),
            ExtractorEntry::Affine { modality, matrix, offset } => (modality, ExtractorKind::Affine { matrix, offset }),
            ExtractorEntry::HashText { modality, buckets } => (modality, ExtractorKind::HashText { buckets }),
        };
        ExtractorSpec { modality, kind }
    }
}

impl From<ExtractorSpec> for ExtractorEntry {
    fn from(s: ExtractorSpec) -> Self {
        let modality = s.modality;
        match s.kind {
            ExtractorKind::Identity => ExtractorEntry::Identity { modality },
            ExtractorKind::Affine { matrix, offset } => ExtractorEntry::Affine { modality, matrix, offset },
            ExtractorKind::HashText { buckets } => ExtractorEntry::HashText { modality, buckets },
        }
    }
}

impl ExtractorSpec {
    pub fn identity(modality: usize) -> Self {
        ExtractorSpec {
            modality,
            kind: ExtractorKind::Identity,
        }
    }

    /// Width of the emitted feature, if fixed by the extractor itself.
    pub fn output_dim(&self) -> Option<usize> {
        match &self.kind {
            ExtractorKind::Identity => None,
            ExtractorKind::Affine { matrix, .. } => Some(matrix.len()),
            ExtractorKind::HashText { buckets } => Some(*buckets),
        }
    }

    /// Checks internal consistency against the shared feature width.
    pub fn validate(&self, dim_f: usize) -> Result<(), FusionError> {
        let bad = |reason: String| FusionError::BadExtractor {
            modality: self.modality,
            reason,
        };
        match &self.kind {
            ExtractorKind::Identity => Ok(()),
            ExtractorKind::Affine { matrix, offset } => {
                if matrix.len() != dim_f || offset.len() != dim_f {
                    return Err(bad(format!(
                        "affine map must have {dim_f} rows and offsets, has {} and {}",
                        matrix.len(),
                        offset.len()
                    )));
                }
                let cols = matrix[0].len();
                if cols == 0 || matrix.iter().any(|r| r.len() != cols) {
                    return Err(bad("affine rows must be non-empty and equally long".into()));
                }
                if matrix.iter().flatten().chain(offset).any(|v| !v.is_finite()) {
                    return Err(bad("affine coefficients must be finite".into()));
                }
                Ok(())
            }
            ExtractorKind::HashText { buckets } => {
                if *buckets != dim_f {
                    return Err(bad(format!("hash-text needs {dim_f} buckets, has {buckets}")));
                }
                Ok(())
            }
        }
    }
}

/// A feature vector tagged with its modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityFeature {
    pub modality: usize,
    pub vector: Vec<f64>,
}

/// Fused feature vector and its label (1 = threat).
#[derive(Debug, Clone, PartialEq)]
pub struct FusedSample {
    pub vector: Vec<f64>,
    pub label: u8,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Runs one extractor on one raw record.
pub fn extract(spec: &ExtractorSpec, raw: &RawRecord) -> Result<ModalityFeature, FusionError> {
    let mismatch = |expected: &str| FusionError::ShapeMismatch {
        modality: spec.modality,
        expected: expected.to_string(),
        actual: raw.shape(),
    };
    let vector = match (&spec.kind, raw) {
        (ExtractorKind::Identity, RawRecord::Numeric(v)) => v.clone(),
        (ExtractorKind::Affine { matrix, offset }, RawRecord::Numeric(v)) => {
            let cols = matrix.first().map_or(0, Vec::len);
            if v.len() != cols {
                return Err(mismatch(&format!("numeric[{cols}]")));
            }
            matrix
                .iter()
                .zip(offset)
                .map(|(row, o)| row.iter().zip(v).map(|(a, x)| a * x).sum::<f64>() + o)
                .collect()
        }
        (ExtractorKind::HashText { buckets }, RawRecord::Text(s)) => {
            let mut counts = vec![0.0; *buckets];
            if *buckets > 0 {
                for token in s
                    .split(|c: char| !c.is_alphanumeric())
                    .filter(|t| !t.is_empty())
                {
                    let h = fnv1a(token.to_lowercase().as_bytes());
                    counts[(h % *buckets as u64) as usize] += 1.0;
                }
            }
            counts
        }
        (ExtractorKind::HashText { .. }, _) => return Err(mismatch("text")),
        (_, RawRecord::Text(_)) => return Err(mismatch("numeric")),
    };
    Ok(ModalityFeature {
        modality: spec.modality,
        vector,
    })
}

/// Per-modality fusion weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights(Vec<f64>);

impl FusionWeights {
    /// Non-negative finite weights. The all-zero vector is accepted.
    pub fn new(weights: Vec<f64>) -> Result<Self, FusionError> {
        if weights.is_empty() {
            return Err(FusionError::NoFeatures);
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(FusionError::BadWeight { index, value });
        }
        Ok(FusionWeights(weights))
    }

    pub fn uniform(m: usize) -> Self {
        FusionWeights(vec![1.0 / m as f64; m])
    }

    /// All weight on modality `k`.
    pub fn one_hot(m: usize, k: usize) -> Self {
        let mut w = vec![0.0; m];
        w[k] = 1.0;
        FusionWeights(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, a: f64) -> Result<Self, FusionError> {
        Self::new(self.0.iter().map(|w| w * a).collect())
    }
}

/// Rescales weights to sum to one.
pub fn normalize_weights(w: &FusionWeights) -> Result<FusionWeights, FusionError> {
    let total: f64 = w.0.iter().sum();
    if total <= 0.0 {
        return Err(FusionError::ZeroWeights);
    }
    Ok(FusionWeights(w.0.iter().map(|v| v / total).collect()))
}

/// Element-wise weighted sum of modality features. Features may arrive in
/// any order but must cover modalities `0..m` exactly once.
pub fn fuse(features: &[ModalityFeature], w: &FusionWeights) -> Result<Vec<f64>, FusionError> {
    let m = w.len();
    if features.is_empty() {
        return Err(FusionError::NoFeatures);
    }
    if features.len() > m {
        // Surplus features are either duplicates or out of range; report which.
        let mut seen = vec![false; m];
        for f in features {
            if f.modality >= m {
                return Err(FusionError::ModalityOutOfRange { id: f.modality, count: m });
            }
            if std::mem::replace(&mut seen[f.modality], true) {
                return Err(FusionError::DuplicateModality(f.modality));
            }
        }
    }
    let mut slots: Vec<Option<&ModalityFeature>> = vec![None; m];
    for f in features {
        let slot = slots
            .get_mut(f.modality)
            .ok_or(FusionError::ModalityOutOfRange { id: f.modality, count: m })?;
        if slot.replace(f).is_some() {
            return Err(FusionError::DuplicateModality(f.modality));
        }
    }
    let dim = features[0].vector.len();
    let mut out = vec![0.0; dim];
    // Summation follows modality order regardless of input order.
    for (k, slot) in slots.iter().enumerate() {
        let f = slot.ok_or(FusionError::MissingModality(k))?;
        if f.vector.len() != dim {
            return Err(FusionError::DimMismatch {
                expected: dim,
                actual: f.vector.len(),
            });
        }
        let wk = w.0[k];
        for (o, x) in out.iter_mut().zip(&f.vector) {
            *o += wk * x;
        }
    }
    Ok(out)
}

/// Extracts every modality of one sample and fuses the results.
pub fn extract_and_fuse(
    extractors: &[ExtractorSpec],
    raw: &[RawRecord],
    w: &FusionWeights,
) -> Result<Vec<f64>, FusionError> {
    if extractors.len() != raw.len() {
        return Err(FusionError::WeightCount {
            weights: extractors.len(),
            features: raw.len(),
        });
    }
    let features = extractors
        .iter()
        .map(|e| {
            let r = raw.get(e.modality).ok_or(FusionError::ModalityOutOfRange {
                id: e.modality,
                count: raw.len(),
            })?;
            extract(e, r)
        })
        .collect::<Result<Vec<_>, _>>()?;
    fuse(&features, w)
}
