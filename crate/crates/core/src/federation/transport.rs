//! Message transports between the server and its clients.
//!
//! All three carry [`RoundMessage`] values by value: the inline transport
//! steps clients in a deterministic loop on the calling thread, the threaded
//! transport gives each client its own worker and channel, and the socket
//! transport runs each client behind a localhost TCP connection speaking
//! the framed protocol.

use crate::error::ProtocolError;
use crate::federation::client::ClientState;
use crate::federation::protocol::{read_message, write_message, RoundMessage};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender};
use std::thread::JoinHandle;
use std::time::Duration;

pub trait Transport {
    fn num_clients(&self) -> usize;

    /// Delivers `msg` to every client in `targets` and returns one reply per
    /// target, in no particular order.
    fn exchange(&mut self, targets: &[u32], msg: &RoundMessage) -> Result<Vec<RoundMessage>, ProtocolError>;

    /// Sends shutdown to every client and waits for them to stop.
    fn shutdown(&mut self) -> Result<(), ProtocolError>;
}

fn expect_reply(reply: Option<RoundMessage>) -> Result<RoundMessage, ProtocolError> {
    reply.ok_or(ProtocolError::Unexpected("client stopped instead of replying"))
}

/// Single-threaded transport: clients are called in target order.
pub struct InlineTransport {
    clients: Vec<ClientState>,
}

impl InlineTransport {
    pub fn new(clients: Vec<ClientState>) -> Self {
        InlineTransport { clients }
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }
}

impl Transport for InlineTransport {
    fn num_clients(&self) -> usize {
        self.clients.len()
    }

    fn exchange(&mut self, targets: &[u32], msg: &RoundMessage) -> Result<Vec<RoundMessage>, ProtocolError> {
        targets
            .iter()
            .map(|&t| {
                let c = self
                    .clients
                    .get_mut(t as usize)
                    .ok_or(ProtocolError::UnknownClient(t))?;
                expect_reply(c.handle(msg)?)
            })
            .collect()
    }

    fn shutdown(&mut self) -> Result<(), ProtocolError> {
        for c in &mut self.clients {
            c.handle(&RoundMessage::Shutdown)?;
        }
        Ok(())
    }
}

type Reply = Result<RoundMessage, String>;

/// One worker thread per client, fed through its own channel.
pub struct ThreadedTransport {
    inboxes: Vec<Sender<RoundMessage>>,
    replies: Receiver<Reply>,
    workers: Vec<JoinHandle<()>>,
}

impl ThreadedTransport {
    pub fn new(clients: Vec<ClientState>) -> Self {
        let (reply_tx, replies) = mpsc::channel::<Reply>();
        let mut inboxes = Vec::with_capacity(clients.len());
        let mut workers = Vec::with_capacity(clients.len());
        for mut client in clients {
            let (tx, rx) = mpsc::channel::<RoundMessage>();
            let reply_tx = reply_tx.clone();
            inboxes.push(tx);
            workers.push(std::thread::spawn(move || {
                while let Ok(msg) = rx.recv() {
                    match client.handle(&msg) {
                        Ok(Some(reply)) => {
                            if reply_tx.send(Ok(reply)).is_err() {
                                return;
                            }
                        }
                        Ok(None) => return,
                        Err(e) => {
                            let _ = reply_tx.send(Err(e.to_string()));
                            return;
                        }
                    }
                }
            }));
        }
        ThreadedTransport {
            inboxes,
            replies,
            workers,
        }
    }
}

impl Transport for ThreadedTransport {
    fn num_clients(&self) -> usize {
        self.inboxes.len()
    }

    fn exchange(&mut self, targets: &[u32], msg: &RoundMessage) -> Result<Vec<RoundMessage>, ProtocolError> {
        for &t in targets {
            self.inboxes
                .get(t as usize)
                .ok_or(ProtocolError::UnknownClient(t))?
                .send(msg.clone())
                .map_err(|_| ProtocolError::ChannelClosed)?;
        }
        (0..targets.len())
            .map(|_| match self.replies.recv() {
                Ok(Ok(m)) => Ok(m),
                Ok(Err(e)) => Err(ProtocolError::Worker(e)),
                Err(_) => Err(ProtocolError::ChannelClosed),
            })
            .collect()
    }

    fn shutdown(&mut self) -> Result<(), ProtocolError> {
        for tx in self.inboxes.drain(..) {
            let _ = tx.send(RoundMessage::Shutdown);
        }
        for w in self.workers.drain(..) {
            w.join().map_err(|_| ProtocolError::Worker("client worker panicked".into()))?;
        }
        Ok(())
    }
}

impl Drop for ThreadedTransport {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

/// Localhost TCP: one connection per client, framed messages both ways.
/// Only full-population exchanges are supported.
pub struct SocketTransport {
    streams: Vec<TcpStream>,
    workers: Vec<JoinHandle<Result<(), ProtocolError>>>,
}

const SOCKET_TIMEOUT: Duration = Duration::from_secs(120);

fn client_loop(mut client: ClientState, addr: std::net::SocketAddr) -> Result<(), ProtocolError> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(SOCKET_TIMEOUT))?;
    loop {
        let msg = read_message(&mut stream)?;
        match client.handle(&msg)? {
            Some(reply) => write_message(&mut stream, &reply)?,
            None => return Ok(()),
        }
    }
}

impl SocketTransport {
    /// Binds an ephemeral localhost port and connects every client to it.
    pub fn new(clients: Vec<ClientState>) -> Result<Self, ProtocolError> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let n = clients.len();
        let workers = clients
            .into_iter()
            .map(|c| std::thread::spawn(move || client_loop(c, addr)))
            .collect();
        let mut streams = Vec::with_capacity(n);
        for _ in 0..n {
            let (s, _) = listener.accept()?;
            s.set_nodelay(true)?;
            s.set_read_timeout(Some(SOCKET_TIMEOUT))?;
            streams.push(s);
        }
        Ok(SocketTransport { streams, workers })
    }
}

impl Transport for SocketTransport {
    fn num_clients(&self) -> usize {
        self.streams.len()
    }

    fn exchange(&mut self, targets: &[u32], msg: &RoundMessage) -> Result<Vec<RoundMessage>, ProtocolError> {
        if targets.len() != self.streams.len() {
            return Err(ProtocolError::Unsupported("socket transport only broadcasts to all clients"));
        }
        for s in &mut self.streams {
            write_message(s, msg)?;
        }
        self.streams.iter_mut().map(read_message).collect()
    }

    fn shutdown(&mut self) -> Result<(), ProtocolError> {
        for s in &mut self.streams {
            // A client that already failed has closed its end; its error is
            // surfaced by the join below.
            let _ = write_message(s, &RoundMessage::Shutdown);
        }
        self.streams.clear();
        let mut first_err = None;
        for w in self.workers.drain(..) {
            match w.join() {
                Ok(Ok(())) => {}
                Ok(Err(e)) => {
                    first_err.get_or_insert(e);
                }
                Err(_) => {
                    first_err.get_or_insert(ProtocolError::Worker("client thread panicked".into()));
                }
            }
        }
        first_err.map_or(Ok(()), Err)
    }
}

impl Drop for SocketTransport {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}
