//! Weighted aggregation of client vectors and the synchronization error.

use crate::error::{AggregateError, ParamError};
use crate::params::ParamVector;
use serde::{Deserialize, Serialize};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// How node contributions are weighted during aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NodeWeighting {
    /// `p_i = 1/N`: the plain mean.
    #[default]
    Uniform,
    /// `p_i = n_i / sum_j n_j`.
    SampleProportional,
}

/// Node weights for clients holding `sample_counts[i]` samples each.
pub fn node_weights(mode: NodeWeighting, sample_counts: &[usize]) -> Vec<f64> {
    let n = sample_counts.len();
    match mode {
        NodeWeighting::Uniform => vec![1.0 / n as f64; n],
        NodeWeighting::SampleProportional => {
            let total: usize = sample_counts.iter().sum();
            sample_counts
                .iter()
                .map(|&c| c as f64 / total as f64)
                .collect()
        }
    }
}

/// `sum_i p_i * updates[i]`, summed in slice order.
pub fn aggregate(updates: &[ParamVector], p: &[f64]) -> Result<ParamVector, AggregateError> {
    let first = updates.first().ok_or(AggregateError::Empty)?;
    if updates.len() != p.len() {
        return Err(AggregateError::CountMismatch {
            updates: updates.len(),
            weights: p.len(),
        });
    }
    let sum: f64 = p.iter().sum();
    if p.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(AggregateError::BadWeights(sum));
    }
    let dim = first.dim();
    let mut out = vec![0.0; dim];
    for (index, (u, w)) in updates.iter().zip(p).enumerate() {
        if u.dim() != dim {
            return Err(AggregateError::DimMismatch {
                index,
                expected: dim,
                actual: u.dim(),
            });
        }
        for (o, v) in out.iter_mut().zip(u.as_slice()) {
            *o += w * v;
        }
    }
    Ok(ParamVector::new(out).expect("convex combination of finite vectors is finite"))
}

/// `sum_i ||clients[i] - global||^2`.
pub fn sync_error(clients: &[ParamVector], global: &ParamVector) -> Result<f64, ParamError> {
    clients
        .iter()
        .map(|c| c.sub(global).map(|d| d.norm_sq()))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn aggregate_examples() {
        let u = pv(&[1.5, -2.0]);
        assert_eq!(aggregate(&[u.clone()], &[1.0]).unwrap(), u);
        let mean = aggregate(&[pv(&[1.0, 2.0]), pv(&[3.0, 4.0])], &[0.5, 0.5]).unwrap();
        assert_eq!(mean, pv(&[2.0, 3.0]));
        let w = aggregate(&[pv(&[0.0, 0.0]), pv(&[4.0, 8.0])], &[0.25, 0.75]).unwrap();
        assert_eq!(w, pv(&[3.0, 6.0]));
    }

    #[test]
    fn aggregate_errors() {
        assert_eq!(aggregate(&[], &[]), Err(AggregateError::Empty));
        assert!(matches!(
            aggregate(&[pv(&[1.0]), pv(&[1.0, 2.0])], &[0.5, 0.5]),
            Err(AggregateError::DimMismatch { index: 1, .. })
        ));
        assert!(matches!(
            aggregate(&[pv(&[1.0]), pv(&[2.0])], &[0.5, 0.6]),
            Err(AggregateError::BadWeights(_))
        ));
        assert!(matches!(
            aggregate(&[pv(&[1.0])], &[0.5, 0.5]),
            Err(AggregateError::CountMismatch { .. })
        ));
    }

    #[test]
    fn weights() {
        assert_eq!(node_weights(NodeWeighting::Uniform, &[3, 9]), vec![0.5, 0.5]);
        assert_eq!(
            node_weights(NodeWeighting::SampleProportional, &[1, 3]),
            vec![0.25, 0.75]
        );
    }

    #[test]
    fn sync_error_examples() {
        let g = pv(&[0.5, -1.0]);
        assert_eq!(sync_error(&[g.clone(), g.clone()], &g).unwrap(), 0.0);
        assert_eq!(sync_error(&[pv(&[0.0]), pv(&[2.0])], &pv(&[1.0])).unwrap(), 2.0);
        assert!(sync_error(&[pv(&[0.0])], &pv(&[1.0, 1.0])).is_err());
    }

    proptest! {
        #[test]
        fn sync_error_is_quadratically_homogeneous(
            vs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..6),
            g in prop::collection::vec(-5.0f64..5.0, 3),
            c in -4.0f64..4.0,
        ) {
            let clients: Vec<_> = vs.iter().map(|v| pv(v)).collect();
            let g = pv(&g);
            let base = sync_error(&clients, &g).unwrap();
            let scaled: Vec<_> = clients.iter().map(|v| v.scale(c)).collect();
            let s = sync_error(&scaled, &g.scale(c)).unwrap();
            prop_assert!((s - c * c * base).abs() <= 1e-9 * (1.0 + s.abs()));
        }
    }
}
