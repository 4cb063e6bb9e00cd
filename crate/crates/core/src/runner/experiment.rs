//! A single experiment: generate, split, partition, train, evaluate.

use crate::error::RunError;
use crate::evalgen::{bayes_accuracy, evaluate, generate, metrics, partition, Dataset, SyntheticSpec, Timings};
use crate::federation::{
    node_weights, run_round_async, run_round_sync, AsyncServer, ClientState, GlobalState, InlineTransport,
    InverseStaleness, RoundOutcome, SocketTransport, ThreadedTransport, Transport,
};
use crate::fusion::FusionWeights;
use crate::params::{global_loss, local_loss, train_epochs, LabeledBatch, ParamVector};
use crate::privacy::composed_epsilon;
use crate::runner::config::{ExperimentConfig, RoundMode, TransportMode};
use std::time::Instant;

/// Metrics after one round. Round 0 is the initial model.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRow {
    pub round: u32,
    pub global_loss: f64,
    pub sync_error: f64,
    pub accuracy: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    /// Cumulative privacy loss; infinite when no noise is added.
    pub epsilon: f64,
    /// Wall-clock training time of this round.
    pub train_seconds: f64,
    pub cumulative_train_seconds: f64,
    pub detect_seconds: f64,
    pub updates_applied: usize,
    pub updates_dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub scenario: String,
    pub clients: usize,
    pub rounds: u32,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub global_loss: f64,
    pub sync_error: f64,
    pub epsilon: f64,
    /// Accuracy of the optimal classifier on the fused features.
    pub bayes_accuracy: f64,
    /// Floating-point operations of local training plus aggregation, counted
    /// analytically rather than measured.
    pub analytic_flops: u64,
    pub train_seconds: f64,
    pub detect_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<RoundRow>,
    pub summary: RunSummary,
    pub theta: ParamVector,
}

impl RunReport {
    pub fn final_row(&self) -> &RoundRow {
        self.rows.last().expect("a report always holds the round-0 row")
    }
}

/// Generated data split into train and test, plus client shard indices
/// into the train split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: SyntheticSpec,
    pub train: Dataset,
    pub test: Dataset,
    pub shards: Vec<Vec<usize>>,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, RunError> {
        let spec = cfg.synthetic_spec()?;
        let data = generate(&spec)?;
        let (train, test) = data.split(cfg.train_fraction);
        let shards = partition(train.labels(), cfg.clients, spec.dirichlet_beta, cfg.seed)?;
        Ok(Prepared {
            spec,
            train,
            test,
            shards,
        })
    }

    /// Fused train and test tables under `weights`.
    pub fn fused(&self, cfg: &ExperimentConfig, weights: &FusionWeights) -> Result<(LabeledBatch, LabeledBatch), RunError> {
        let extractors = cfg.extractors();
        Ok((
            self.train.fused(&extractors, weights)?,
            self.test.fused(&extractors, weights)?,
        ))
    }
}

/// Model parameters and metrics produced by one training procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub rows: Vec<RoundRow>,
    pub theta: ParamVector,
}

impl Trained {
    pub fn final_row(&self) -> &RoundRow {
        self.rows.last().expect("training always records round 0")
    }

    pub fn total_train_seconds(&self) -> f64 {
        self.final_row().cumulative_train_seconds
    }

    pub fn total_detect_seconds(&self) -> f64 {
        self.rows.iter().map(|r| r.detect_seconds).sum()
    }
}

fn epsilon_after(cfg: &ExperimentConfig, round: u32) -> f64 {
    if cfg.dp.is_active() {
        composed_epsilon(&cfg.dp, round).unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    }
}

struct Evaluator<'a> {
    cfg: &'a ExperimentConfig,
    shards: &'a [LabeledBatch],
    test: &'a LabeledBatch,
    cumulative: f64,
}

impl Evaluator<'_> {
    fn row(&mut self, round: u32, theta: &ParamVector, outcome: Option<&RoundOutcome>, train_seconds: f64) -> Result<RoundRow, RunError> {
        let losses = self
            .shards
            .iter()
            .map(|s| local_loss(theta, s))
            .collect::<Result<Vec<_>, _>>()?;
        let (counts, detect_seconds) = evaluate(theta, self.test, self.cfg.threshold)?;
        let m = metrics(
            &counts,
            Timings {
                train_seconds,
                detect_seconds,
            },
        )?;
        self.cumulative += train_seconds;
        Ok(RoundRow {
            round,
            global_loss: global_loss(&losses)?,
            sync_error: outcome.map_or(0.0, |o| o.sync_error),
            accuracy: m.accuracy,
            fpr: m.false_positive_rate,
            fnr: m.false_negative_rate,
            epsilon: if round == 0 { 0.0 } else { epsilon_after(self.cfg, round) },
            train_seconds,
            cumulative_train_seconds: self.cumulative,
            detect_seconds,
            updates_applied: outcome.map_or(0, |o| o.applied),
            updates_dropped: outcome.map_or(0, |o| o.dropped),
        })
    }
}

fn build_transport(cfg: &ExperimentConfig, clients: Vec<ClientState>) -> Result<Box<dyn Transport>, RunError> {
    Ok(match (cfg.transport, cfg.threaded) {
        (TransportMode::Socket, _) => Box::new(SocketTransport::new(clients)?),
        (TransportMode::Sim, true) => Box::new(ThreadedTransport::new(clients)),
        (TransportMode::Sim, false) => Box::new(InlineTransport::new(clients)),
    })
}

/// Federated training of the global model over `shards` (indices into
/// `train`), evaluated on `test` after every round.
pub fn train_federated(
    cfg: &ExperimentConfig,
    train: &LabeledBatch,
    test: &LabeledBatch,
    shards: &[Vec<usize>],
) -> Result<Trained, RunError> {
    let shard_data = shards
        .iter()
        .map(|idx| train.select(idx))
        .collect::<Result<Vec<_>, _>>()?;
    let sizes: Vec<usize> = shard_data.iter().map(LabeledBatch::len).collect();
    let client_cfg = cfg.client_config();
    let clients = shard_data
        .iter()
        .enumerate()
        .map(|(i, s)| ClientState::new(i as u32, s.clone(), client_cfg.clone()))
        .collect();
    let global = GlobalState::new(
        ParamVector::zeros(train.dim() + 1),
        node_weights(cfg.node_weights, &sizes),
    );
    let mut eval = Evaluator {
        cfg,
        shards: &shard_data,
        test,
        cumulative: 0.0,
    };
    let mut rows = vec![eval.row(0, &global.theta, None, 0.0)?];
    let mut transport = build_transport(cfg, clients)?;

    let result = (|| -> Result<ParamVector, RunError> {
        match cfg.mode {
            RoundMode::Sync => {
                let mut global = global;
                for r in 1..=cfg.rounds {
                    let started = Instant::now();
                    let outcome = run_round_sync(&mut global, transport.as_mut())?;
                    let elapsed = started.elapsed().as_secs_f64();
                    rows.push(eval.row(r, &global.theta, Some(&outcome), elapsed)?);
                }
                Ok(global.theta)
            }
            RoundMode::Async => {
                let mut server = AsyncServer::new(
                    global,
                    InverseStaleness {
                        base_mix: cfg.base_mix(),
                    },
                    cfg.async_cfg.max_staleness,
                    cfg.async_cfg.max_delay,
                    cfg.seed,
                );
                for r in 1..=cfg.rounds {
                    let started = Instant::now();
                    let outcome = run_round_async(&mut server, transport.as_mut())?;
                    let elapsed = started.elapsed().as_secs_f64();
                    rows.push(eval.row(r, &server.global.theta, Some(&outcome), elapsed)?);
                }
                Ok(server.global.theta)
            }
        }
    })();
    let closed = transport.shutdown();
    let theta = result?;
    closed?;
    Ok(Trained { rows, theta })
}

/// Pooled training on all of `train` with the same schedule and the same
/// number of epochs as `cfg.rounds` federated rounds.
pub fn train_centralized(cfg: &ExperimentConfig, train: &LabeledBatch, test: &LabeledBatch) -> Result<Trained, RunError> {
    let mut theta = ParamVector::zeros(train.dim() + 1);
    let pooled = std::slice::from_ref(train);
    let mut eval = Evaluator {
        cfg,
        shards: pooled,
        test,
        cumulative: 0.0,
    };
    let mut rows = vec![eval.row(0, &theta, None, 0.0)?];
    let mut step = 0u64;
    for r in 1..=cfg.rounds {
        let started = Instant::now();
        train_epochs(&mut theta, train, &cfg.lr, cfg.local_epochs, cfg.batch_size, &mut step)?;
        let elapsed = started.elapsed().as_secs_f64();
        let mut row = eval.row(r, &theta, None, elapsed)?;
        row.epsilon = f64::INFINITY;
        rows.push(row);
    }
    Ok(Trained { rows, theta })
}

/// Multiply-adds of local training and aggregation, counted as two flops
/// each.
pub fn analytic_flops(cfg: &ExperimentConfig, n_train: usize) -> u64 {
    let d = cfg.model_dim() as u64;
    let per_sample = 4 * d;
    let per_round = cfg.local_epochs as u64 * n_train as u64 * per_sample + 2 * cfg.clients as u64 * d;
    u64::from(cfg.rounds) * per_round
}

/// Runs `cfg` end to end.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
    cfg.validate()?;
    let prepared = Prepared::new(cfg)?;
    let weights = cfg.fusion_weights()?;
    let (train, test) = prepared.fused(cfg, &weights)?;
    let trained = train_federated(cfg, &train, &test, &prepared.shards)?;
    Ok(report(cfg, &prepared.spec, &weights, train.len(), test.len(), trained))
}

pub(crate) fn report(
    cfg: &ExperimentConfig,
    spec: &SyntheticSpec,
    weights: &FusionWeights,
    n_train: usize,
    n_test: usize,
    trained: Trained,
) -> RunReport {
    let last = trained.final_row().clone();
    let summary = RunSummary {
        scenario: cfg.scenario.clone(),
        clients: cfg.clients,
        rounds: cfg.rounds,
        n_train,
        n_test,
        accuracy: last.accuracy,
        fpr: last.fpr,
        fnr: last.fnr,
        global_loss: last.global_loss,
        sync_error: last.sync_error,
        epsilon: if cfg.rounds == 0 { 0.0 } else { epsilon_after(cfg, cfg.rounds) },
        bayes_accuracy: bayes_accuracy(spec, weights),
        analytic_flops: analytic_flops(cfg, n_train),
        train_seconds: trained.total_train_seconds(),
        detect_seconds: trained.total_detect_seconds(),
    };
    RunReport {
        rows: trained.rows,
        summary,
        theta: trained.theta,
    }
}
