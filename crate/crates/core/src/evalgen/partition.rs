//! Label-skewed partitioning across clients.
//!
//! For each class, the share going to each client is drawn from a
//! symmetric Dirichlet with concentration `beta`: large `beta` approaches an
//! IID split, small `beta` concentrates each class on few clients.

use crate::error::DataError;
use crate::rng;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};

/// Attempts before giving up on a draw that leaves some client empty.
pub const MAX_ATTEMPTS: usize = 100;

fn dirichlet(beta: f64, n: usize, rng: &mut impl rand::Rng) -> Option<Vec<f64>> {
    let gamma = Gamma::new(beta, 1.0).ok()?;
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    (total > 0.0 && total.is_finite()).then(|| draws.iter().map(|g| g / total).collect())
}

/// Splits sample indices `0..labels.len()` into `n_clients` disjoint
/// shards. Each shard's indices are sorted ascending.
pub fn partition(labels: &[u8], n_clients: usize, beta: f64, seed: u64) -> Result<Vec<Vec<usize>>, DataError> {
    if n_clients == 0 {
        return Err(DataError::InvalidSpec("need at least one client".into()));
    }
    if labels.len() < n_clients {
        return Err(DataError::TooFewSamples {
            samples: labels.len(),
            clients: n_clients,
        });
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(DataError::InvalidSpec(format!("dirichlet_beta must be positive, got {beta}")));
    }
    if n_clients == 1 {
        return Ok(vec![(0..labels.len()).collect()]);
    }
    let mut rng = rng::stream_rng(seed, &[rng::stream::PARTITION, n_clients as u64]);
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[usize::from(l.min(1))].push(i);
    }
    for _ in 0..MAX_ATTEMPTS {
        let mut shards: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
        let mut ok = true;
        for class in &by_class {
            let Some(props) = dirichlet(beta, n_clients, &mut rng) else {
                ok = false;
                break;
            };
            let mut members = class.clone();
            members.shuffle(&mut rng);
            let mut start = 0usize;
            let mut cum = 0.0;
            for (c, p) in props.iter().enumerate() {
                cum += p;
                let end = if c + 1 == n_clients {
                    members.len()
                } else {
                    ((cum * members.len() as f64).round() as usize).clamp(start, members.len())
                };
                shards[c].extend_from_slice(&members[start..end]);
                start = end;
            }
        }
        if ok && shards.iter().all(|s| !s.is_empty()) {
            for s in &mut shards {
                s.sort_unstable();
            }
            return Ok(shards);
        }
    }
    Err(DataError::PartitionFailed(MAX_ATTEMPTS))
}
