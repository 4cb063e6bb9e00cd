//! Client node: local training on a private shard, then clip, perturb and
//! compress the round delta before replying to the server.

use crate::error::ProtocolError;
use crate::federation::compress::{compress, CompressionSpec};
use crate::federation::protocol::RoundMessage;
use crate::params::{batches_per_epoch, train_epochs, LabeledBatch, LrSchedule, ParamVector};
use crate::privacy::{noise_seed, privatize, DpConfig};
use std::time::Instant;

/// Training and upload settings shared by every client of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub schedule: LrSchedule,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub dp: DpConfig,
    pub compression: CompressionSpec,
    /// Base seed; noise streams are derived per (client, round).
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: u32,
    pub shard: LabeledBatch,
    pub theta: ParamVector,
    pub local_step: u64,
    config: ClientConfig,
}

impl ClientState {
    pub fn new(client_id: u32, shard: LabeledBatch, config: ClientConfig) -> Self {
        let dim = shard.dim() + 1;
        ClientState {
            client_id,
            shard,
            theta: ParamVector::zeros(dim),
            local_step: 0,
            config,
        }
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    /// Local steps taken per round.
    pub fn steps_per_round(&self) -> u64 {
        (self.config.local_epochs * batches_per_epoch(self.shard.len(), self.config.batch_size)) as u64
    }

    /// Trains from `theta_global` and returns the privatized, encoded
    /// update for `round`.
    pub fn train_round(&mut self, round: u32, theta_global: &ParamVector) -> Result<RoundMessage, ProtocolError> {
        if theta_global.dim() != self.shard.dim() + 1 {
            return Err(ProtocolError::DimMismatch {
                client: self.client_id,
                expected: self.shard.dim() + 1,
                got: theta_global.dim(),
            });
        }
        let started = Instant::now();
        self.theta = theta_global.clone();
        train_epochs(
            &mut self.theta,
            &self.shard,
            &self.config.schedule,
            self.config.local_epochs,
            self.config.batch_size,
            &mut self.local_step,
        )?;
        let delta = self.theta.sub(theta_global)?;
        let seed = noise_seed(self.config.seed, self.client_id, round);
        let private = privatize(&delta, &self.config.dp, seed);
        let update = compress(&private, &self.config.compression)?;
        Ok(RoundMessage::ClientUpdate {
            client_id: self.client_id,
            round,
            update,
            n_samples: self.shard.len() as u64,
            train_seconds: started.elapsed().as_secs_f64(),
        })
    }

    /// Reacts to one server message. Returns the reply, or `None` on
    /// shutdown.
    pub fn handle(&mut self, msg: &RoundMessage) -> Result<Option<RoundMessage>, ProtocolError> {
        match msg {
            RoundMessage::GlobalBroadcast { round, theta } => self.train_round(*round, theta).map(Some),
            RoundMessage::Shutdown => Ok(None),
            RoundMessage::ClientUpdate { .. } => Err(ProtocolError::Unexpected("client received a client update")),
        }
    }
}
