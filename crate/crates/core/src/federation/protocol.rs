//! Framed binary protocol between clients and the aggregation server.
//!
//! Frame layout (all integers little-endian):
//!
//! ```text
//! magic "FDTP" | version u8 (=1) | type u8 | payload_len u32 | payload
//! ```
//!
//! Reals are IEEE-754 binary64, little-endian. A vector is a `u32` length
//! followed by that many reals. Payloads by type:
//!
//! | type | message                | payload                                                         |
//! |------|------------------------|-----------------------------------------------------------------|
//! | 0x01 | global broadcast       | round u32, vector                                               |
//! | 0x02 | client update (dense)  | client u32, round u32, n_samples u64, train_seconds f64, vector |
//! | 0x03 | shutdown               | empty                                                           |
//! | 0x04 | client update (sparse) | client u32, round u32, n_samples u64, train_seconds f64, dim u32, nnz u32, nnz × index u32, nnz × f64 |

use crate::error::{DecodeError, ProtocolError};
use crate::federation::compress::{EncodedUpdate, SparseVector};
use crate::params::ParamVector;
use std::io::{Read, Write};

pub const MAGIC: [u8; 4] = *b"FDTP";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 10;
/// Upper bound on payload size accepted from a stream.
pub const MAX_PAYLOAD: u32 = 64 << 20;

const TYPE_BROADCAST: u8 = 0x01;
const TYPE_UPDATE: u8 = 0x02;
const TYPE_SHUTDOWN: u8 = 0x03;
const TYPE_SPARSE_UPDATE: u8 = 0x04;

#[derive(Debug, Clone, PartialEq)]
pub enum RoundMessage {
    GlobalBroadcast {
        round: u32,
        theta: ParamVector,
    },
    ClientUpdate {
        client_id: u32,
        round: u32,
        update: EncodedUpdate,
        n_samples: u64,
        train_seconds: f64,
    },
    Shutdown,
}

impl RoundMessage {
    fn type_byte(&self) -> u8 {
        match self {
            RoundMessage::GlobalBroadcast { .. } => TYPE_BROADCAST,
            RoundMessage::ClientUpdate {
                update: EncodedUpdate::Dense(_),
                ..
            } => TYPE_UPDATE,
            RoundMessage::ClientUpdate {
                update: EncodedUpdate::Sparse(_),
                ..
            } => TYPE_SPARSE_UPDATE,
            RoundMessage::Shutdown => TYPE_SHUTDOWN,
        }
    }
}

fn put_vector(buf: &mut Vec<u8>, v: &[f64]) {
    buf.extend_from_slice(&(v.len() as u32).to_le_bytes());
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

fn encode_payload(msg: &RoundMessage) -> Vec<u8> {
    let mut p = Vec::new();
    match msg {
        RoundMessage::GlobalBroadcast { round, theta } => {
            p.extend_from_slice(&round.to_le_bytes());
            put_vector(&mut p, theta.as_slice());
        }
        RoundMessage::ClientUpdate {
            client_id,
            round,
            update,
            n_samples,
            train_seconds,
        } => {
            p.extend_from_slice(&client_id.to_le_bytes());
            p.extend_from_slice(&round.to_le_bytes());
            p.extend_from_slice(&n_samples.to_le_bytes());
            p.extend_from_slice(&train_seconds.to_le_bytes());
            match update {
                EncodedUpdate::Dense(v) => put_vector(&mut p, v.as_slice()),
                EncodedUpdate::Sparse(s) => {
                    p.extend_from_slice(&s.dim().to_le_bytes());
                    p.extend_from_slice(&(s.nnz() as u32).to_le_bytes());
                    for i in s.indices() {
                        p.extend_from_slice(&i.to_le_bytes());
                    }
                    for x in s.values() {
                        p.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
        RoundMessage::Shutdown => {}
    }
    p
}

/// Serializes one message into a complete frame.
pub fn encode_message(msg: &RoundMessage) -> Vec<u8> {
    let payload = encode_payload(msg);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg.type_byte());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Header {
    kind: u8,
    payload_len: u32,
}

fn parse_header(bytes: &[u8]) -> Result<Header, DecodeError> {
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(DecodeError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(DecodeError::UnsupportedVersion(bytes[4]));
    }
    let kind = bytes[5];
    if !matches!(kind, TYPE_BROADCAST..=TYPE_SPARSE_UPDATE) {
        return Err(DecodeError::UnknownType(kind));
    }
    let payload_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    if payload_len > MAX_PAYLOAD {
        return Err(DecodeError::Oversized(payload_len));
    }
    Ok(Header { kind, payload_len })
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::InvalidPayload("payload shorter than its fields"));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>, DecodeError> {
        let bytes = self.take(n.checked_mul(8).ok_or(DecodeError::InvalidPayload("length overflow"))?)?;
        let v: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(DecodeError::InvalidPayload("non-finite real"));
        }
        Ok(v)
    }

    fn param_vector(&mut self) -> Result<ParamVector, DecodeError> {
        let n = self.u32()? as usize;
        if n == 0 {
            return Err(DecodeError::InvalidPayload("empty vector"));
        }
        ParamVector::new(self.reals(n)?).map_err(|_| DecodeError::InvalidPayload("invalid vector"))
    }

    fn finish(&self) -> Result<(), DecodeError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::InvalidPayload("unused bytes inside payload"))
        }
    }
}

fn decode_payload(kind: u8, payload: &[u8]) -> Result<RoundMessage, DecodeError> {
    let mut c = Cursor { buf: payload };
    let msg = match kind {
        TYPE_BROADCAST => {
            let round = c.u32()?;
            let theta = c.param_vector()?;
            RoundMessage::GlobalBroadcast { round, theta }
        }
        TYPE_UPDATE | TYPE_SPARSE_UPDATE => {
            let client_id = c.u32()?;
            let round = c.u32()?;
            let n_samples = c.u64()?;
            let train_seconds = c.f64()?;
            if !(train_seconds.is_finite() && train_seconds >= 0.0) {
                return Err(DecodeError::InvalidPayload("train_seconds must be finite and non-negative"));
            }
            let update = if kind == TYPE_UPDATE {
                EncodedUpdate::Dense(c.param_vector()?)
            } else {
                let dim = c.u32()?;
                let nnz = c.u32()? as usize;
                if dim == 0 || nnz > dim as usize {
                    return Err(DecodeError::InvalidPayload("sparse shape"));
                }
                let idx_bytes = c.take(nnz * 4)?;
                let indices = idx_bytes
                    .chunks_exact(4)
                    .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                let values = c.reals(nnz)?;
                EncodedUpdate::Sparse(
                    SparseVector::new(dim, indices, values)
                        .map_err(|_| DecodeError::InvalidPayload("sparse indices"))?,
                )
            };
            RoundMessage::ClientUpdate {
                client_id,
                round,
                update,
                n_samples,
                train_seconds,
            }
        }
        TYPE_SHUTDOWN => RoundMessage::Shutdown,
        other => return Err(DecodeError::UnknownType(other)),
    };
    c.finish()?;
    Ok(msg)
}

/// Parses exactly one frame. Bytes beyond the frame are an error.
pub fn decode_message(bytes: &[u8]) -> Result<RoundMessage, DecodeError> {
    let header = parse_header(bytes)?;
    let needed = HEADER_LEN + header.payload_len as usize;
    if bytes.len() < needed {
        return Err(DecodeError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(DecodeError::TrailingBytes(bytes.len() - needed));
    }
    decode_payload(header.kind, &bytes[HEADER_LEN..])
}

/// Writes one frame to a stream.
pub fn write_message<W: Write>(w: &mut W, msg: &RoundMessage) -> Result<(), ProtocolError> {
    w.write_all(&encode_message(msg))?;
    w.flush()?;
    Ok(())
}

/// Reads one frame from a stream.
pub fn read_message<R: Read>(r: &mut R) -> Result<RoundMessage, ProtocolError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    let h = parse_header(&header)?;
    let mut payload = vec![0u8; h.payload_len as usize];
    r.read_exact(&mut payload)?;
    Ok(decode_payload(h.kind, &payload)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn shutdown_is_ten_bytes() {
        let b = encode_message(&RoundMessage::Shutdown);
        assert_eq!(b, vec![b'F', b'D', b'T', b'P', 0x01, 0x03, 0, 0, 0, 0]);
        assert_eq!(decode_message(&b).unwrap(), RoundMessage::Shutdown);
    }

    #[test]
    fn broadcast_payload_length() {
        let msg = RoundMessage::GlobalBroadcast {
            round: 3,
            theta: pv(&[1.0, -2.5]),
        };
        let b = encode_message(&msg);
        assert_eq!(u32::from_le_bytes(b[6..10].try_into().unwrap()), 4 + 4 + 16);
        assert_eq!(b.len(), HEADER_LEN + 24);
        assert_eq!(b[5], 0x01);
        assert_eq!(decode_message(&b).unwrap(), msg);
    }

    #[test]
    fn distinct_errors() {
        let good = encode_message(&RoundMessage::GlobalBroadcast {
            round: 0,
            theta: pv(&[1.0]),
        });
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_message(&bad), Err(DecodeError::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(decode_message(&bad), Err(DecodeError::UnsupportedVersion(2)));
        let mut bad = good.clone();
        bad[5] = 9;
        assert_eq!(decode_message(&bad), Err(DecodeError::UnknownType(9)));
        assert!(matches!(
            decode_message(&good[..good.len() - 1]),
            Err(DecodeError::Truncated { .. })
        ));
        assert!(matches!(decode_message(&good[..4]), Err(DecodeError::Truncated { .. })));
        let mut long = good.clone();
        long.push(0);
        assert_eq!(decode_message(&long), Err(DecodeError::TrailingBytes(1)));
        let mut nan = good.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_message(&nan), Err(DecodeError::InvalidPayload(_))));
    }

    #[test]
    fn sparse_update_round_trip() {
        let msg = RoundMessage::ClientUpdate {
            client_id: 4,
            round: 11,
            update: EncodedUpdate::Sparse(SparseVector::new(6, vec![1, 4], vec![-0.5, 2.0]).unwrap()),
            n_samples: 700,
            train_seconds: 0.25,
        };
        let b = encode_message(&msg);
        assert_eq!(b[5], 0x04);
        assert_eq!(decode_message(&b).unwrap(), msg);
    }

    #[test]
    fn stream_io() {
        let msgs = [
            RoundMessage::GlobalBroadcast {
                round: 1,
                theta: pv(&[0.5, 0.25, -1.0]),
            },
            RoundMessage::ClientUpdate {
                client_id: 2,
                round: 1,
                update: EncodedUpdate::Dense(pv(&[1e-3, 0.0, -0.0])),
                n_samples: 10,
                train_seconds: 0.0,
            },
            RoundMessage::Shutdown,
        ];
        let mut buf = Vec::new();
        for m in &msgs {
            write_message(&mut buf, m).unwrap();
        }
        let mut r = std::io::Cursor::new(buf);
        for m in &msgs {
            assert_eq!(&read_message(&mut r).unwrap(), m);
        }
        assert!(matches!(read_message(&mut r), Err(ProtocolError::Io(_))));
    }
}
