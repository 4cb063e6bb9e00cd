//! Federated training: clients, server, aggregation, compression and the
//! wire protocol between them.

pub mod aggregate;
pub mod client;
pub mod compress;
pub mod protocol;
pub mod server;
pub mod transport;

pub use aggregate::{aggregate, node_weights, sync_error, NodeWeighting};
pub use client::{ClientConfig, ClientState};
pub use compress::{compress, decompress, CompressionMode, CompressionSpec, EncodedUpdate, SparseVector};
pub use protocol::{decode_message, encode_message, read_message, write_message, RoundMessage};
pub use server::{
    apply_async_update, run_round_async, run_round_sync, AsyncConfig, AsyncServer, GlobalState,
    InverseStaleness, RoundOutcome, StalenessFn,
};
pub use transport::{InlineTransport, SocketTransport, ThreadedTransport, Transport};
