//! Whole-federation behaviour: degenerate federations, symmetry,
//! determinism and the agreement of asynchronous and synchronous rounds.

use fedsec::federation::{
    run_round_async, run_round_sync, AsyncServer, ClientConfig, ClientState, CompressionSpec, GlobalState,
    InlineTransport, InverseStaleness, ThreadedTransport, Transport,
};
use fedsec::params::{local_gradient, sgd_step, LabeledBatch, LrSchedule, ParamVector};
use fedsec::privacy::DpConfig;
use fedsec::runner::{run_experiment, train_centralized, ExperimentConfig, Prepared, RoundMode};

fn client_config(alpha0: f64) -> ClientConfig {
    ClientConfig {
        schedule: LrSchedule::new(alpha0, 0.01).unwrap(),
        local_epochs: 1,
        batch_size: 4,
        dp: DpConfig::default(),
        compression: CompressionSpec::none(),
        seed: 5,
    }
}

fn shard(offset: f64, n: usize) -> LabeledBatch {
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![offset + i as f64 * 0.3 - 1.0]).collect();
    let labels = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
    LabeledBatch::from_rows(&rows, labels).unwrap()
}

#[test]
fn federation_of_one_on_one_sample_is_one_sgd_step() {
    let data = LabeledBatch::from_rows(&[vec![0.7, -1.2]], vec![1]).unwrap();
    let cfg = client_config(0.3);
    let start = ParamVector::new(vec![0.1, 0.2, -0.3]).unwrap();
    let mut global = GlobalState::new(start.clone(), vec![1.0]);
    let mut t = InlineTransport::new(vec![ClientState::new(0, data.clone(), cfg)]);
    run_round_sync(&mut global, &mut t).unwrap();
    let expected = sgd_step(&start, &local_gradient(&start, &data).unwrap(), 0.3).unwrap();
    for (a, b) in global.theta.as_slice().iter().zip(expected.as_slice()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn identical_clients_agree_with_any_one_of_them() {
    let cfg = client_config(0.5);
    let clients = (0..4).map(|i| ClientState::new(i, shard(0.0, 9), cfg.clone())).collect();
    let mut global = GlobalState::new(ParamVector::zeros(2), vec![0.25; 4]);
    let mut t = InlineTransport::new(clients);
    let mut alone = ClientState::new(0, shard(0.0, 9), cfg);
    for round in 0..5 {
        let before = global.theta.clone();
        run_round_sync(&mut global, &mut t).unwrap();
        alone.train_round(round, &before).unwrap();
        for (a, b) in global.theta.as_slice().iter().zip(alone.theta.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn threaded_and_inline_rounds_are_bit_identical() {
    let make = || -> Vec<ClientState> {
        (0..3)
            .map(|i| {
                let mut cfg = client_config(0.4);
                cfg.dp = DpConfig::gaussian(0.2, 1.0, 1e-5).unwrap();
                ClientState::new(i, shard(i as f64, 7 + i as usize), cfg)
            })
            .collect()
    };
    let run = |t: &mut dyn Transport| {
        let mut g = GlobalState::new(ParamVector::zeros(2), vec![0.5, 0.25, 0.25]);
        let mut out = Vec::new();
        for _ in 0..6 {
            let o = run_round_sync(&mut g, t).unwrap();
            out.push((g.theta.clone(), o.sync_error));
        }
        t.shutdown().unwrap();
        out
    };
    let a = run(&mut InlineTransport::new(make()));
    let b = run(&mut ThreadedTransport::new(make()));
    let c = run(&mut InlineTransport::new(make()));
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn in_step_async_matches_sync_on_two_clients() {
    let make = || vec![
        ClientState::new(0, shard(0.0, 6), client_config(0.4)),
        ClientState::new(1, shard(0.5, 6), client_config(0.4)),
    ];
    let mut sync = GlobalState::new(ParamVector::zeros(2), vec![0.5, 0.5]);
    let mut ts = InlineTransport::new(make());
    let mut server = AsyncServer::new(
        GlobalState::new(ParamVector::zeros(2), vec![0.5, 0.5]),
        InverseStaleness { base_mix: 0.5 },
        4,
        0,
        9,
    );
    let mut ta = InlineTransport::new(make());
    for _ in 0..10 {
        run_round_sync(&mut sync, &mut ts).unwrap();
        let o = run_round_async(&mut server, &mut ta).unwrap();
        assert_eq!(o.applied, 2);
    }
    for (a, b) in server.global.theta.as_slice().iter().zip(sync.theta.as_slice()) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

fn small_experiment() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.rounds = 8;
    cfg.data.n_samples = 2_000;
    cfg
}

#[test]
fn single_client_run_equals_centralized_training() {
    let mut cfg = small_experiment();
    cfg.clients = 1;
    let fed = run_experiment(&cfg).unwrap();
    let prepared = Prepared::new(&cfg).unwrap();
    let (train, test) = prepared.fused(&cfg, &cfg.fusion_weights().unwrap()).unwrap();
    let cen = train_centralized(&cfg, &train, &test).unwrap();
    for (a, b) in fed.theta.as_slice().iter().zip(cen.theta.as_slice()) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    assert_eq!(fed.summary.accuracy, cen.final_row().accuracy);
}

#[test]
fn zero_noise_privacy_changes_nothing() {
    let plain = run_experiment(&small_experiment()).unwrap();
    let mut cfg = small_experiment();
    cfg.dp = DpConfig {
        enabled: true,
        sigma: 0.0,
        clip_norm: 0.01,
        delta: 1e-5,
    };
    let zero = run_experiment(&cfg).unwrap();
    assert_eq!(plain.theta, zero.theta);
    assert_eq!(plain.rows.iter().map(|r| r.accuracy).collect::<Vec<_>>(), zero.rows.iter().map(|r| r.accuracy).collect::<Vec<_>>());
}

#[test]
fn sparse_updates_still_learn() {
    let mut cfg = small_experiment();
    cfg.compression = CompressionSpec::topk(2);
    let r = run_experiment(&cfg).unwrap();
    assert!(r.summary.accuracy > 0.9, "{}", r.summary.accuracy);
}

#[test]
fn async_runs_keep_learning() {
    let mut cfg = small_experiment();
    cfg.mode = RoundMode::Async;
    cfg.rounds = 20;
    let r = run_experiment(&cfg).unwrap();
    assert_eq!(r.rows.len(), 21);
    assert!(r.summary.accuracy > 0.9, "{}", r.summary.accuracy);
}
