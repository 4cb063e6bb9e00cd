//! Independent numerical oracles for the loss gradient and for the
//! aggregate as the minimizer of the synchronization error.

use fedsec::federation::{aggregate, sync_error};
use fedsec::params::{local_gradient, local_loss, LabeledBatch, ParamVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut impl Rng, dim: usize, scale: f64) -> ParamVector {
    ParamVector::new((0..dim).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn random_batch(rng: &mut impl Rng, dim: usize, n: usize) -> LabeledBatch {
    let features = (0..dim * n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..2u8)).collect();
    LabeledBatch::new(dim, features, labels).unwrap()
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let dim = rng.random_range(1..8);
        let n = rng.random_range(1..20);
        let batch = random_batch(&mut rng, dim, n);
        let theta = random_vec(&mut rng, dim + 1, 1.5);
        let g = local_gradient(&theta, &batch).unwrap();
        for j in 0..=dim {
            let mut plus = theta.as_slice().to_vec();
            let mut minus = plus.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (local_loss(&ParamVector::new(plus).unwrap(), &batch).unwrap()
                - local_loss(&ParamVector::new(minus).unwrap(), &batch).unwrap())
                / (2.0 * h);
            let a = g.as_slice()[j];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-5, "max relative error {worst}");
}

/// Gradient descent on sum_i ||theta_i - g||^2, an oracle that knows
/// nothing about averaging.
fn descend(clients: &[ParamVector]) -> Vec<f64> {
    let dim = clients[0].dim();
    let mut g = vec![0.0; dim];
    let step = 0.5 / clients.len() as f64;
    for _ in 0..200 {
        let mut grad = vec![0.0; dim];
        for c in clients {
            for (gr, (gj, cj)) in grad.iter_mut().zip(g.iter().zip(c.as_slice())) {
                *gr += 2.0 * (gj - cj);
            }
        }
        for (gj, gr) in g.iter_mut().zip(&grad) {
            *gj -= step * gr;
        }
    }
    g
}

#[test]
fn uniform_aggregate_minimizes_sync_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let n = rng.random_range(1..=10);
        let dim = rng.random_range(1..=16);
        let clients: Vec<ParamVector> = (0..n).map(|_| random_vec(&mut rng, dim, 5.0)).collect();
        let p = vec![1.0 / n as f64; n];
        let agg = aggregate(&clients, &p).unwrap();
        let oracle = descend(&clients);
        for (a, o) in agg.as_slice().iter().zip(&oracle) {
            assert!((a - o).abs() < 1e-6, "{a} vs {o}");
        }
        let best = sync_error(&clients, &agg).unwrap();
        for _ in 0..1000 {
            let g = random_vec(&mut rng, dim, 6.0);
            assert!(best <= sync_error(&clients, &g).unwrap());
        }
    }
}

#[test]
fn first_order_condition_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..3 {
        let clients: Vec<ParamVector> = (0..4).map(|_| random_vec(&mut rng, 6, 3.0)).collect();
        let agg = aggregate(&clients, &[0.25; 4]).unwrap();
        for j in 0..6 {
            let d: f64 = clients.iter().map(|c| 2.0 * (agg.as_slice()[j] - c.as_slice()[j])).sum();
            assert!(d.abs() < 1e-12, "{d}");
        }
    }
}
