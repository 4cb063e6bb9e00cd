//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use fedsec::evalgen::bayes_accuracy;
use fedsec::federation::{
    aggregate, decode_message, encode_message, run_round_async, run_round_sync, sync_error, AsyncServer,
    ClientConfig, ClientState, CompressionSpec, EncodedUpdate, GlobalState, InlineTransport, InverseStaleness,
    RoundMessage, SparseVector,
};
use fedsec::params::{local_gradient, local_loss, LabeledBatch, LrSchedule, ParamVector};
use fedsec::privacy::{noise_seed, perturb, privatize, DpConfig};
use fedsec::runner::{
    compare_models, run_experiment, seed_list, sweep_dataset_size, train_centralized, ExperimentConfig, Prepared,
    RoundMode, RoundRow,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rvec(rng: &mut impl Rng, dim: usize, scale: f64) -> ParamVector {
    ParamVector::new((0..dim).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn aggregation_minimizes_sync_error() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_gap: f64 = 0.0;
    for set in 0..100 {
        let n = rng.random_range(1..=10);
        let dim = rng.random_range(1..=16);
        let clients: Vec<ParamVector> = (0..n).map(|_| rvec(&mut rng, dim, 5.0)).collect();
        let agg = aggregate(&clients, &vec![1.0 / n as f64; n]).unwrap();
        // Gradient descent on the synchronization objective.
        let mut g = vec![0.0; dim];
        for _ in 0..200 {
            for (j, gj) in g.iter_mut().enumerate() {
                let grad: f64 = clients.iter().map(|c| 2.0 * (*gj - c.as_slice()[j])).sum();
                *gj -= grad * 0.5 / n as f64;
            }
        }
        for (a, o) in agg.as_slice().iter().zip(&g) {
            worst_gap = worst_gap.max((a - o).abs());
        }
        let best = sync_error(&clients, &agg).unwrap();
        for _ in 0..1000 {
            let cand = rvec(&mut rng, dim, 6.0);
            if sync_error(&clients, &cand).unwrap() < best {
                return Err(format!("set {set}: a random centre beat the aggregate"));
            }
        }
    }
    check(
        worst_gap < 1e-6,
        format!("max |aggregate - numerical minimizer| = {worst_gap:.2e}; 100 sets x 1000 candidates beaten"),
    )
}

fn gradient_matches_finite_differences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let dim = rng.random_range(1..10);
        let n = rng.random_range(1..30);
        let features = (0..dim * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let batch = LabeledBatch::new(dim, features, labels).unwrap();
        let theta = rvec(&mut rng, dim + 1, 1.5);
        let g = local_gradient(&theta, &batch).unwrap();
        for j in 0..=dim {
            let shifted = |s: f64| {
                let mut v = theta.as_slice().to_vec();
                v[j] += s;
                local_loss(&ParamVector::new(v).unwrap(), &batch).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let a = g.as_slice()[j];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3));
        }
    }
    check(worst < 1e-5, format!("max relative error {worst:.2e}"))
}

fn noise_has_the_configured_spread() -> Outcome {
    let input = [0.5, -1.0, 2.0, 0.0];
    let x = ParamVector::new(input.to_vec()).unwrap();
    let cfg = DpConfig::gaussian(1.0, 1.0, 1e-5).unwrap();
    let draws = 100_000;
    let mut sum = [0.0; 4];
    let mut sum_sq = [0.0; 4];
    for r in 0..draws {
        let y = perturb(&x, &cfg, noise_seed(7, 0, r));
        for j in 0..4 {
            let d = y.as_slice()[j] - input[j];
            sum[j] += d;
            sum_sq[j] += d * d;
        }
    }
    let n = f64::from(draws);
    let bound = 3.0 / n.sqrt();
    let mut detail = Vec::new();
    for j in 0..4 {
        let mean = sum[j] / n;
        let sd = (sum_sq[j] / n - mean * mean).sqrt();
        detail.push(format!("sd{j}={sd:.4}"));
        if !(0.98..=1.02).contains(&sd) || mean.abs() > bound {
            return Err(format!("coordinate {j}: sd {sd}, mean offset {mean}"));
        }
    }
    let off = DpConfig::default();
    let zero = DpConfig {
        enabled: true,
        sigma: 0.0,
        ..DpConfig::gaussian(1.0, 0.1, 1e-5).unwrap()
    };
    let big = ParamVector::new(vec![30.0, -4.0, 0.25, 1e-3]).unwrap();
    if privatize(&big, &zero, 3) != privatize(&big, &off, 3) || privatize(&big, &zero, 3) != big {
        return Err("sigma = 0 update differs from the privacy-off update".into());
    }
    let mut base = small_default();
    base.rounds = 5;
    let mut z = base.clone();
    z.dp = zero;
    let (a, b) = (run_experiment(&base).unwrap(), run_experiment(&z).unwrap());
    check(
        a.theta == b.theta && untimed(&a.rows) == untimed(&b.rows),
        format!("{}; sigma = 0 run bit-identical to privacy off", detail.join(" ")),
    )
}

/// Rows with the wall-clock fields cleared.
fn untimed(rows: &[RoundRow]) -> Vec<RoundRow> {
    rows.iter()
        .map(|r| RoundRow {
            train_seconds: 0.0,
            cumulative_train_seconds: 0.0,
            detect_seconds: 0.0,
            ..r.clone()
        })
        .collect()
}

fn small_default() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.n_samples = 2_000;
    cfg
}

fn csv_bytes(dir: &Path) -> Vec<Vec<u8>> {
    ["metrics.csv", "summary.csv"]
        .iter()
        .map(|f| fs::read(dir.join(f)).unwrap_or_default())
        .collect()
}

fn runs_are_reproducible() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "[dp]\nenabled = true\nsigma = 0.5\n").map_err(|e| e.to_string())?;
    let mut seen = Vec::new();
    for (mode, extra) in [("single", &[][..]), ("multi", &["--threaded"][..])] {
        let mut pair = Vec::new();
        for i in 0..2 {
            let out = dir.path().join(format!("{mode}{i}"));
            let status = Command::new(env!("CARGO_BIN_EXE_fedsec"))
                .args(["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()])
                .args(extra)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{mode} run failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            pair.push(csv_bytes(&out));
        }
        if pair[0] != pair[1] || pair[0][0].is_empty() {
            return Err(format!("{mode}-worker runs differ"));
        }
        seen.push(pair.remove(0));
    }
    check(
        seen[0] == seen[1],
        "metrics.csv and summary.csv identical across repeated single- and multi-worker runs".into(),
    )
}

fn single_client_matches_centralized() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.clients = 1;
    let fed = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let prepared = Prepared::new(&cfg).map_err(|e| e.to_string())?;
    let (train, test) = prepared.fused(&cfg, &cfg.fusion_weights().unwrap()).map_err(|e| e.to_string())?;
    let cen = train_centralized(&cfg, &train, &test).map_err(|e| e.to_string())?;
    let gap = fed
        .theta
        .as_slice()
        .iter()
        .zip(cen.theta.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(gap < 1e-9, format!("max parameter gap {gap:.2e} after {} rounds", cfg.rounds))
}

fn fusion_ordering() -> Outcome {
    let cfg = ExperimentConfig::default();
    let seeds = seed_list(1, 5);
    let cmp = compare_models(&cfg, &seeds, None).map_err(|e| e.to_string())?;
    let fused = cmp.accuracy("federated-fusion").unwrap();
    let m = cfg.data.modalities;
    // Best single modality by mean test accuracy over seeds.
    let best_uni = (0..m)
        .map(|k| cmp.seeds.iter().map(|s| s.unimodal_federated[k]).sum::<f64>() / seeds.len() as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let spec = cfg.synthetic_spec().unwrap();
    let bayes = bayes_accuracy(&spec, &cfg.fusion_weights().unwrap());
    let detail = format!(
        "fused-federated {fused:.4}, best unimodal federated {best_uni:.4}, fused Bayes {bayes:.4} ({} clients, {} rounds, {} samples, {} seeds)",
        cfg.clients,
        cfg.rounds,
        cfg.data.n_samples,
        seeds.len()
    );
    check(fused - best_uni >= 0.10 && bayes >= 0.95 && fused >= 0.93, detail)
}

fn accuracy_grows_with_data() -> Outcome {
    let sizes = [1_000, 10_000, 100_000];
    let t = sweep_dataset_size(&ExperimentConfig::default(), &sizes, &seed_list(1, 5), None).map_err(|e| e.to_string())?;
    let acc: Vec<f64> = t.rows.iter().map(|r| r.mean_accuracy).collect();
    let ok = acc.windows(2).all(|w| w[1] >= w[0] - 0.01);
    check(ok, format!("mean accuracy at {sizes:?}: {acc:.4?}"))
}

fn privacy_costs_accuracy() -> Outcome {
    let sigmas = [0.0, 0.1, 1.0, 10.0];
    let mut acc = Vec::new();
    for &sigma in &sigmas {
        let mut cfg = ExperimentConfig::default();
        cfg.dp.enabled = true;
        cfg.dp.sigma = sigma;
        let mut total = 0.0;
        for seed in seed_list(1, 5) {
            cfg.seed = seed;
            total += run_experiment(&cfg).map_err(|e| e.to_string())?.summary.accuracy;
        }
        acc.push(total / 5.0);
    }
    let ok = acc.windows(2).all(|w| w[1] <= w[0] + 0.01);
    check(ok, format!("mean accuracy at sigma {sigmas:?}: {acc:.4?}"))
}

fn random_message(rng: &mut ChaCha8Rng) -> RoundMessage {
    let dim = rng.random_range(1..64);
    let vals = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim)
            .map(|_| f64::from_bits(rng.next_u64()))
            .map(|x| if x.is_finite() { x } else { -0.0 })
            .collect()
    };
    match rng.random_range(0..4) {
        0 => RoundMessage::GlobalBroadcast {
            round: rng.random(),
            theta: ParamVector::new(vals(rng)).unwrap(),
        },
        1 => RoundMessage::ClientUpdate {
            client_id: rng.random(),
            round: rng.random(),
            update: EncodedUpdate::Dense(ParamVector::new(vals(rng)).unwrap()),
            n_samples: rng.random(),
            train_seconds: rng.random_range(0.0..100.0),
        },
        2 => {
            let all = vals(rng);
            let indices: Vec<u32> = (0..dim as u32).filter(|i| i % 3 == 0).collect();
            let values = indices.iter().map(|&i| all[i as usize]).collect();
            RoundMessage::ClientUpdate {
                client_id: rng.random(),
                round: rng.random(),
                update: EncodedUpdate::Sparse(SparseVector::new(dim as u32, indices, values).unwrap()),
                n_samples: rng.random(),
                train_seconds: 0.5,
            }
        }
        _ => RoundMessage::Shutdown,
    }
}

fn codec_is_robust() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut valid = 0;
    let mut rejected = 0;
    for i in 0..100_000 {
        let len = rng.random_range(0..96);
        let mut bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        if i % 2 == 0 && bytes.len() >= 10 {
            bytes[..5].copy_from_slice(b"FDTP\x01");
            bytes[5] = rng.random_range(0..6);
            let payload = (bytes.len() - 10) as u32;
            bytes[6..10].copy_from_slice(&payload.to_le_bytes());
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| decode_message(&bytes)));
        if started.elapsed() > Duration::from_secs(1) {
            return Err(format!("input {i} took {:?}", started.elapsed()));
        }
        match result {
            Err(_) => return Err(format!("decoder panicked on input {i}")),
            Ok(Ok(msg)) => {
                if encode_message(&msg) != bytes {
                    return Err(format!("input {i} decoded but does not re-encode to itself"));
                }
                valid += 1;
            }
            Ok(Err(_)) => rejected += 1,
        }
    }
    for t in 0..1000 {
        let msg = random_message(&mut rng);
        let bytes = encode_message(&msg);
        match decode_message(&bytes) {
            Ok(back) if back == msg && encode_message(&back) == bytes => {}
            other => return Err(format!("round trip {t} failed: {other:?}")),
        }
    }
    Ok(format!(
        "100000 random inputs: {valid} valid, {rejected} typed errors, 0 panics; 1000 round trips bit-exact"
    ))
}

fn async_agrees_with_sync() -> Outcome {
    let shard = |offset: f64| {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![offset + 0.25 * i as f64 - 1.0]).collect();
        LabeledBatch::from_rows(&rows, (0..8).map(|i| u8::from(i % 3 == 0)).collect()).unwrap()
    };
    let cfg = ClientConfig {
        schedule: LrSchedule::new(0.5, 0.05).unwrap(),
        local_epochs: 2,
        batch_size: 3,
        dp: DpConfig::default(),
        compression: CompressionSpec::none(),
        seed: 3,
    };
    let make = || vec![ClientState::new(0, shard(0.0), cfg.clone()), ClientState::new(1, shard(0.7), cfg.clone())];
    let mut sync = GlobalState::new(ParamVector::zeros(2), vec![0.5, 0.5]);
    let mut ts = InlineTransport::new(make());
    let mut server = AsyncServer::new(
        GlobalState::new(ParamVector::zeros(2), vec![0.5, 0.5]),
        InverseStaleness { base_mix: 0.5 },
        4,
        0,
        3,
    );
    let mut ta = InlineTransport::new(make());
    for _ in 0..20 {
        run_round_sync(&mut sync, &mut ts).map_err(|e| e.to_string())?;
        run_round_async(&mut server, &mut ta).map_err(|e| e.to_string())?;
    }
    let gap = server
        .global
        .theta
        .as_slice()
        .iter()
        .zip(sync.theta.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if gap >= 1e-9 {
        return Err(format!("2-client async/sync gap {gap:.2e}"));
    }
    let mut accs = Vec::new();
    for seed in seed_list(1, 5) {
        let mut c = ExperimentConfig::default();
        c.mode = RoundMode::Async;
        c.seed = seed;
        accs.push(run_experiment(&c).map_err(|e| e.to_string())?.summary.accuracy);
    }
    check(
        accs.iter().all(|&a| a >= 0.90),
        format!("2-client gap {gap:.2e}; async accuracy over 5 seeds {accs:.4?}"),
    )
}

fn main() {
    let criteria: [(u32, &str, Option<u64>, fn() -> Outcome); 10] = [
        (1, "aggregation-synchronization consistency", Some(10), aggregation_minimizes_sync_error),
        (2, "gradient correctness", Some(5), gradient_matches_finite_differences),
        (3, "privacy noise statistics", Some(10), noise_has_the_configured_spread),
        (4, "determinism", None, runs_are_reproducible),
        (5, "federation-of-one equivalence", None, single_client_matches_centralized),
        (6, "fusion ordering", Some(300), fusion_ordering),
        (7, "accuracy vs dataset size", None, accuracy_grows_with_data),
        (8, "privacy/accuracy trade-off", None, privacy_costs_accuracy),
        (9, "protocol robustness", None, codec_is_robust),
        (10, "async consistency", None, async_agrees_with_sync),
    ];
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        let outcome = match (outcome, budget) {
            (Ok(d), Some(b)) if secs >= b as f64 => Err(format!("{d}; took {secs:.1}s, budget {b}s")),
            (o, _) => o,
        };
        match outcome {
            Ok(d) => println!("PASS [{id:>2}] {name}: {d} ({secs:.2}s)"),
            Err(d) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name}: {d} ({secs:.2}s)");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
