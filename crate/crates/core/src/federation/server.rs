//! Aggregation server: synchronous rounds behind a barrier, and an
//! asynchronous mode that applies each update on arrival with a
//! staleness-discounted mixing weight.

use crate::error::ProtocolError;
use crate::federation::aggregate::{aggregate, sync_error};
use crate::federation::compress::decompress;
use crate::federation::protocol::RoundMessage;
use crate::federation::transport::Transport;
use crate::params::ParamVector;
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub theta: ParamVector,
    pub round: u32,
    /// Aggregation weight of each client; sums to one.
    pub node_weights: Vec<f64>,
}

impl GlobalState {
    pub fn new(theta: ParamVector, node_weights: Vec<f64>) -> Self {
        GlobalState {
            theta,
            round: 0,
            node_weights,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.node_weights.len()
    }
}

/// A validated client update, decompressed.
#[derive(Debug, Clone)]
pub struct ReceivedUpdate {
    pub client_id: u32,
    pub round: u32,
    pub delta: ParamVector,
    pub n_samples: u64,
    pub train_seconds: f64,
}

fn unpack(msg: RoundMessage, num_nodes: usize, dim: usize, current: u32) -> Result<ReceivedUpdate, ProtocolError> {
    let RoundMessage::ClientUpdate {
        client_id,
        round,
        update,
        n_samples,
        train_seconds,
    } = msg
    else {
        return Err(ProtocolError::Unexpected("server expected a client update"));
    };
    if client_id as usize >= num_nodes {
        return Err(ProtocolError::UnknownClient(client_id));
    }
    if round > current {
        return Err(ProtocolError::FutureRound {
            client: client_id,
            got: round,
            current,
        });
    }
    if update.dim() != dim {
        return Err(ProtocolError::DimMismatch {
            client: client_id,
            expected: dim,
            got: update.dim(),
        });
    }
    Ok(ReceivedUpdate {
        client_id,
        round,
        delta: decompress(&update),
        n_samples,
        train_seconds,
    })
}

/// What the server observed during one round (or async tick).
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    /// Round index that was completed.
    pub round: u32,
    /// Sum of squared distances between each reporting client model and
    /// the new global model.
    pub sync_error: f64,
    /// Longest client-side training time in the round.
    pub train_seconds: f64,
    pub applied: usize,
    pub dropped: usize,
}

/// Validates a full round of replies and orders them by client id.
pub fn collect_sync_updates(
    global: &GlobalState,
    replies: Vec<RoundMessage>,
) -> Result<Vec<ReceivedUpdate>, ProtocolError> {
    let n = global.num_nodes();
    let mut slots: Vec<Option<ReceivedUpdate>> = vec![None; n];
    let got = replies.len();
    for msg in replies {
        let u = unpack(msg, n, global.theta.dim(), global.round)?;
        if u.round < global.round {
            return Err(ProtocolError::StaleRound {
                client: u.client_id,
                got: u.round,
                current: global.round,
            });
        }
        let slot = &mut slots[u.client_id as usize];
        if slot.is_some() {
            return Err(ProtocolError::DuplicateClient(u.client_id));
        }
        *slot = Some(u);
    }
    slots
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or(ProtocolError::MissingUpdates { expected: n, got })
}

/// Applies a complete, ordered set of updates: `theta += sum_i p_i delta_i`.
pub fn apply_sync_updates(global: &mut GlobalState, updates: &[ReceivedUpdate]) -> Result<RoundOutcome, ProtocolError> {
    let deltas: Vec<ParamVector> = updates.iter().map(|u| u.delta.clone()).collect();
    let step = aggregate(&deltas, &global.node_weights)?;
    let broadcast = global.theta.clone();
    global.theta = broadcast.add(&step)?;
    let locals = deltas
        .iter()
        .map(|d| broadcast.add(d))
        .collect::<Result<Vec<_>, _>>()?;
    let outcome = RoundOutcome {
        round: global.round,
        sync_error: sync_error(&locals, &global.theta)?,
        train_seconds: updates.iter().map(|u| u.train_seconds).fold(0.0, f64::max),
        applied: updates.len(),
        dropped: 0,
    };
    global.round += 1;
    Ok(outcome)
}

/// One synchronous round: broadcast, wait for all clients, aggregate in
/// ascending client order, advance the round.
pub fn run_round_sync(global: &mut GlobalState, transport: &mut dyn Transport) -> Result<RoundOutcome, ProtocolError> {
    let n = global.num_nodes();
    if transport.num_clients() != n {
        return Err(ProtocolError::MissingUpdates {
            expected: n,
            got: transport.num_clients(),
        });
    }
    let targets: Vec<u32> = (0..n as u32).collect();
    let msg = RoundMessage::GlobalBroadcast {
        round: global.round,
        theta: global.theta.clone(),
    };
    let replies = transport.exchange(&targets, &msg)?;
    let updates = collect_sync_updates(global, replies)?;
    apply_sync_updates(global, &updates)
}

/// Mixing weight as a function of staleness.
pub trait StalenessFn {
    fn mix(&self, staleness: u32) -> f64;
}

/// `base_mix / (1 + s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseStaleness {
    pub base_mix: f64,
}

impl StalenessFn for InverseStaleness {
    fn mix(&self, staleness: u32) -> f64 {
        self.base_mix / (1.0 + f64::from(staleness))
    }
}

impl<F: Fn(u32) -> f64> StalenessFn for F {
    fn mix(&self, staleness: u32) -> f64 {
        self(staleness)
    }
}

/// Applies one arriving delta: `theta += beta(s) * delta`.
pub fn apply_async_update(theta: &mut ParamVector, delta: &ParamVector, staleness: u32, f: &dyn StalenessFn) -> Result<(), ProtocolError> {
    theta.axpy(f.mix(staleness), delta)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsyncConfig {
    /// Mixing weight for a fresh update. `None` means `1 / N`.
    #[serde(default)]
    pub base_mix: Option<f64>,
    /// Updates older than this many rounds are dropped.
    pub max_staleness: u32,
    /// Upper bound (inclusive) on simulated delivery delay, in rounds.
    pub max_delay: u32,
}

impl Default for AsyncConfig {
    fn default() -> Self {
        AsyncConfig {
            base_mix: None,
            max_staleness: 4,
            max_delay: 2,
        }
    }
}

struct InFlight {
    arrival: u32,
    update: ReceivedUpdate,
}

/// Asynchronous server. Each tick it hands the current model to every idle
/// client; replies are delivered after a seeded random delay and applied in
/// a seeded random order.
pub struct AsyncServer<S: StalenessFn> {
    pub global: GlobalState,
    staleness: S,
    max_staleness: u32,
    max_delay: u32,
    seed: u64,
    busy: Vec<bool>,
    in_flight: Vec<InFlight>,
    history: VecDeque<(u32, ParamVector)>,
    pub dropped_total: u64,
}

impl<S: StalenessFn> AsyncServer<S> {
    pub fn new(global: GlobalState, staleness: S, max_staleness: u32, max_delay: u32, seed: u64) -> Self {
        let n = global.num_nodes();
        AsyncServer {
            global,
            staleness,
            max_staleness,
            max_delay,
            seed,
            busy: vec![false; n],
            in_flight: Vec::new(),
            history: VecDeque::new(),
            dropped_total: 0,
        }
    }

    fn snapshot(&self, round: u32) -> Option<&ParamVector> {
        self.history.iter().find(|(r, _)| *r == round).map(|(_, t)| t)
    }

    /// One server round of the asynchronous protocol.
    pub fn tick(&mut self, transport: &mut dyn Transport) -> Result<RoundOutcome, ProtocolError> {
        let n = self.global.num_nodes();
        let current = self.global.round;
        let mut rng = rng::stream_rng(self.seed, &[rng::stream::ARRIVAL, u64::from(current)]);

        self.history.push_back((current, self.global.theta.clone()));
        let keep = (self.max_staleness.max(self.max_delay) + 1) as usize;
        while self.history.len() > keep {
            self.history.pop_front();
        }

        let idle: Vec<u32> = (0..n as u32).filter(|&c| !self.busy[c as usize]).collect();
        if !idle.is_empty() {
            let msg = RoundMessage::GlobalBroadcast {
                round: current,
                theta: self.global.theta.clone(),
            };
            let mut fresh = transport
                .exchange(&idle, &msg)?
                .into_iter()
                .map(|m| unpack(m, n, self.global.theta.dim(), current))
                .collect::<Result<Vec<_>, _>>()?;
            fresh.sort_by_key(|u| u.client_id);
            for u in fresh {
                if self.busy[u.client_id as usize] {
                    return Err(ProtocolError::DuplicateClient(u.client_id));
                }
                self.busy[u.client_id as usize] = true;
                let delay = rng.random_range(0..=self.max_delay);
                self.in_flight.push(InFlight {
                    arrival: current + delay,
                    update: u,
                });
            }
        }

        let (mut arriving, pending): (Vec<_>, Vec<_>) =
            self.in_flight.drain(..).partition(|f| f.arrival <= current);
        self.in_flight = pending;
        arriving.sort_by_key(|f| f.update.client_id);
        arriving.shuffle(&mut rng);

        let mut applied = 0;
        let mut dropped = 0;
        let mut train_seconds: f64 = 0.0;
        let mut locals = Vec::new();
        for f in arriving {
            let u = f.update;
            self.busy[u.client_id as usize] = false;
            let staleness = current - u.round;
            if staleness > self.max_staleness {
                dropped += 1;
                continue;
            }
            apply_async_update(&mut self.global.theta, &u.delta, staleness, &self.staleness)?;
            if let Some(base) = self.snapshot(u.round) {
                locals.push(base.add(&u.delta)?);
            }
            train_seconds = train_seconds.max(u.train_seconds);
            applied += 1;
        }
        self.dropped_total += dropped as u64;
        let outcome = RoundOutcome {
            round: current,
            sync_error: sync_error(&locals, &self.global.theta)?,
            train_seconds,
            applied,
            dropped,
        };
        self.global.round += 1;
        Ok(outcome)
    }
}

/// One asynchronous step driven by an explicit staleness function.
pub fn run_round_async<S: StalenessFn>(
    server: &mut AsyncServer<S>,
    transport: &mut dyn Transport,
) -> Result<RoundOutcome, ProtocolError> {
    server.tick(transport)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::compress::EncodedUpdate;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn update(client_id: u32, round: u32, v: &[f64]) -> RoundMessage {
        RoundMessage::ClientUpdate {
            client_id,
            round,
            update: EncodedUpdate::Dense(pv(v)),
            n_samples: 1,
            train_seconds: 0.0,
        }
    }

    #[test]
    fn staleness_weights() {
        let f = InverseStaleness { base_mix: 1.0 };
        assert_eq!(f.mix(0), 1.0);
        assert_eq!(f.mix(3), 0.25);
        let mut theta = pv(&[1.0]);
        apply_async_update(&mut theta, &pv(&[2.0]), 0, &f).unwrap();
        assert_eq!(theta, pv(&[3.0]));
    }

    #[test]
    fn sync_collection_rejects_protocol_violations() {
        let mut g = GlobalState::new(pv(&[0.0]), vec![0.5, 0.5]);
        g.round = 2;
        let ok = collect_sync_updates(&g, vec![update(1, 2, &[1.0]), update(0, 2, &[3.0])]).unwrap();
        assert_eq!(ok.iter().map(|u| u.client_id).collect::<Vec<_>>(), vec![0, 1]);
        assert!(matches!(
            collect_sync_updates(&g, vec![update(0, 1, &[1.0]), update(1, 2, &[1.0])]),
            Err(ProtocolError::StaleRound { client: 0, got: 1, current: 2 })
        ));
        assert!(matches!(
            collect_sync_updates(&g, vec![update(0, 3, &[1.0]), update(1, 2, &[1.0])]),
            Err(ProtocolError::FutureRound { .. })
        ));
        assert!(matches!(
            collect_sync_updates(&g, vec![update(0, 2, &[1.0, 2.0]), update(1, 2, &[1.0])]),
            Err(ProtocolError::DimMismatch { .. })
        ));
        assert!(matches!(
            collect_sync_updates(&g, vec![update(0, 2, &[1.0]), update(0, 2, &[1.0])]),
            Err(ProtocolError::DuplicateClient(0))
        ));
        assert!(matches!(
            collect_sync_updates(&g, vec![update(0, 2, &[1.0])]),
            Err(ProtocolError::MissingUpdates { expected: 2, got: 1 })
        ));
        assert!(matches!(
            collect_sync_updates(&g, vec![update(7, 2, &[1.0])]),
            Err(ProtocolError::UnknownClient(7))
        ));
    }

    #[test]
    fn sync_apply_adds_weighted_delta() {
        let mut g = GlobalState::new(pv(&[1.0, 1.0]), vec![0.25, 0.75]);
        let ups = collect_sync_updates(&g, vec![update(0, 0, &[0.0, 0.0]), update(1, 0, &[4.0, 8.0])]).unwrap();
        let out = apply_sync_updates(&mut g, &ups).unwrap();
        assert_eq!(g.theta, pv(&[4.0, 7.0]));
        assert_eq!(g.round, 1);
        // locals: [1,1] and [5,9]; global [4,7] -> 9+36 + 1+4
        assert_eq!(out.sync_error, 50.0);
    }
}
