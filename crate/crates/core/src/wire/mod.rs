//! Encrypted and authenticated framing for the IoT ↔ gateway link.
//!
//! ```text
//! magic 4C47 | version 01 | type | payload_len u32 BE | nonce 16 | ciphertext | tag 32
//! ```
//!
//! The nonce is `counter u64 BE ‖ session id u64 BE` and doubles as the
//! initial AES-256-CTR counter block. The tag is HMAC-SHA256 over every
//! preceding byte and is checked before anything else is parsed.

use aes::cipher::{KeyIvInit, StreamCipher};
use hmac::{Hmac, Mac};
use serde::Serialize;
use sha2::Sha256;
use thiserror::Error;

use crate::codec::DecodeError;

mod message;
pub mod transport;

pub use message::{msg_type, Message};

type Aes256Ctr = ctr::Ctr128BE<aes::Aes256>;
type HmacSha256 = Hmac<Sha256>;

pub const MAGIC: [u8; 2] = [0x4C, 0x47];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 2 + 1 + 1 + 4 + 16;
pub const TAG_LEN: usize = 32;
/// Bytes a frame adds on top of its payload.
pub const FRAME_OVERHEAD: usize = HEADER_LEN + TAG_LEN;
/// Top bit of the session id marks the gateway → IoT direction.
pub const RESPONDER_BIT: u64 = 1 << 63;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("frame authentication failed")]
    AuthFailure,
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("nonce counter {counter} not above {last}")]
    NonceReplay { counter: u64, last: u64 },
    #[error("frame from unexpected session {0:#018x}")]
    WrongSession(u64),
    #[error("frame shorter than header and tag")]
    Truncated,
    #[error("malformed payload: {0}")]
    Malformed(#[from] DecodeError),
}

/// Encryption and MAC keys split from a 64-byte pre-shared secret.
#[derive(Clone)]
pub struct LinkKeys {
    enc: [u8; 32],
    mac: [u8; 32],
}

impl LinkKeys {
    pub fn from_secret(secret: &[u8; 64]) -> Self {
        let mut enc = [0u8; 32];
        let mut mac = [0u8; 32];
        enc.copy_from_slice(&secret[..32]);
        mac.copy_from_slice(&secret[32..]);
        LinkKeys { enc, mac }
    }
}

impl std::fmt::Debug for LinkKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("LinkKeys(..)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Nonce {
    pub counter: u64,
    pub session: u64,
}

impl Nonce {
    pub fn to_bytes(&self) -> [u8; 16] {
        let mut b = [0u8; 16];
        b[..8].copy_from_slice(&self.counter.to_be_bytes());
        b[8..].copy_from_slice(&self.session.to_be_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; 16]) -> Self {
        let mut c = [0u8; 8];
        let mut s = [0u8; 8];
        c.copy_from_slice(&b[..8]);
        s.copy_from_slice(&b[8..]);
        Nonce {
            counter: u64::from_be_bytes(c),
            session: u64::from_be_bytes(s),
        }
    }
}

fn mac(keys: &LinkKeys) -> HmacSha256 {
    <HmacSha256 as Mac>::new_from_slice(&keys.mac).expect("HMAC accepts any key length")
}

fn apply_ctr(keys: &LinkKeys, nonce: &Nonce, data: &mut [u8]) {
    let iv = nonce.to_bytes();
    let mut cipher = Aes256Ctr::new(&keys.enc.into(), &iv.into());
    cipher.apply_keystream(data);
}

/// Stateless frame encoding.
pub fn encode_frame(msg: &Message, keys: &LinkKeys, nonce: Nonce) -> Vec<u8> {
    let mut payload = msg.encode_payload();
    apply_ctr(keys, &nonce, &mut payload);
    let mut out = Vec::with_capacity(FRAME_OVERHEAD + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg.msg_type());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&nonce.to_bytes());
    out.extend_from_slice(&payload);
    let mut m = mac(keys);
    m.update(&out);
    out.extend_from_slice(&m.finalize().into_bytes());
    out
}

/// Stateless frame decoding: magic, then tag, then everything else.
/// Replay protection is the session's job.
pub fn decode_frame(bytes: &[u8], keys: &LinkKeys) -> Result<(Nonce, Message), WireError> {
    if bytes.len() < 2 || bytes[..2] != MAGIC {
        return Err(WireError::BadMagic);
    }
    if bytes.len() < FRAME_OVERHEAD {
        return Err(WireError::Truncated);
    }
    let (body, tag) = bytes.split_at(bytes.len() - TAG_LEN);
    let mut m = mac(keys);
    m.update(body);
    m.verify_slice(tag).map_err(|_| WireError::AuthFailure)?;
    if body[2] != VERSION {
        return Err(WireError::UnsupportedVersion(body[2]));
    }
    let t = body[3];
    if !msg_type::is_known(t) {
        return Err(WireError::UnknownType(t));
    }
    let len = u32::from_be_bytes([body[4], body[5], body[6], body[7]]) as usize;
    if len != body.len() - HEADER_LEN {
        return Err(WireError::Malformed(DecodeError::Trailing(
            body.len() - HEADER_LEN,
        )));
    }
    let mut nb = [0u8; 16];
    nb.copy_from_slice(&body[8..24]);
    let nonce = Nonce::from_bytes(&nb);
    let mut payload = body[HEADER_LEN..].to_vec();
    apply_ctr(keys, &nonce, &mut payload);
    Ok((nonce, Message::decode_payload(t, &payload)?))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SessionMetrics {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    /// Frames sent plus frames received.
    pub frame_count: u64,
}

impl SessionMetrics {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_sent + self.bytes_received
    }

    pub fn since(&self, earlier: &SessionMetrics) -> SessionMetrics {
        SessionMetrics {
            bytes_sent: self.bytes_sent - earlier.bytes_sent,
            bytes_received: self.bytes_received - earlier.bytes_received,
            frame_count: self.frame_count - earlier.frame_count,
        }
    }
}

/// One endpoint of a link: numbers outgoing frames and rejects replayed
/// or reordered incoming ones.
#[derive(Debug, Clone)]
pub struct WireSession {
    keys: LinkKeys,
    send_session: u64,
    recv_session: u64,
    next_counter: u64,
    last_received: Option<u64>,
    metrics: SessionMetrics,
}

impl WireSession {
    /// The connecting side (IoT device).
    pub fn initiator(keys: LinkKeys, session_id: u64) -> Self {
        let id = session_id & !RESPONDER_BIT;
        Self::with_ids(keys, id, id | RESPONDER_BIT)
    }

    /// The accepting side (gateway).
    pub fn responder(keys: LinkKeys, session_id: u64) -> Self {
        let id = session_id & !RESPONDER_BIT;
        Self::with_ids(keys, id | RESPONDER_BIT, id)
    }

    fn with_ids(keys: LinkKeys, send_session: u64, recv_session: u64) -> Self {
        WireSession {
            keys,
            send_session,
            recv_session,
            next_counter: 0,
            last_received: None,
            metrics: SessionMetrics::default(),
        }
    }

    pub fn seal(&mut self, msg: &Message) -> Vec<u8> {
        let nonce = Nonce {
            counter: self.next_counter,
            session: self.send_session,
        };
        self.next_counter += 1;
        let frame = encode_frame(msg, &self.keys, nonce);
        self.metrics.bytes_sent += frame.len() as u64;
        self.metrics.frame_count += 1;
        frame
    }

    pub fn open(&mut self, frame: &[u8]) -> Result<Message, WireError> {
        let (nonce, msg) = decode_frame(frame, &self.keys)?;
        if nonce.session != self.recv_session {
            return Err(WireError::WrongSession(nonce.session));
        }
        if let Some(last) = self.last_received {
            if nonce.counter <= last {
                return Err(WireError::NonceReplay {
                    counter: nonce.counter,
                    last,
                });
            }
        }
        self.last_received = Some(nonce.counter);
        self.metrics.bytes_received += frame.len() as u64;
        self.metrics.frame_count += 1;
        Ok(msg)
    }

    pub fn metrics(&self) -> SessionMetrics {
        self.metrics
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys() -> LinkKeys {
        LinkKeys::from_secret(&[0x11; 64])
    }

    #[test]
    fn session_roundtrip_and_replay() {
        let mut iot = WireSession::initiator(keys(), 7);
        let mut gw = WireSession::responder(keys(), 7);
        let f1 = iot.seal(&Message::OpenChannelRequest { capacity: 5 });
        let f2 = iot.seal(&Message::ChannelClosingRequest);
        assert_eq!(
            gw.open(&f1).unwrap(),
            Message::OpenChannelRequest { capacity: 5 }
        );
        assert_eq!(gw.open(&f2).unwrap(), Message::ChannelClosingRequest);
        assert_eq!(
            gw.open(&f1),
            Err(WireError::NonceReplay {
                counter: 0,
                last: 1
            })
        );
        // a frame reflected back to its sender is from the wrong session
        assert_eq!(iot.open(&f1), Err(WireError::WrongSession(7)));
        assert_eq!(gw.metrics().frame_count, 2);
        assert_eq!(gw.metrics().bytes_received, iot.metrics().bytes_sent);
    }

    #[test]
    fn empty_session_metrics() {
        let s = WireSession::initiator(keys(), 1);
        assert_eq!(s.metrics(), SessionMetrics::default());
    }

    #[test]
    fn bit_flip_fails_authentication() {
        let mut f = encode_frame(
            &Message::OpenChannelRequest { capacity: 1 },
            &keys(),
            Nonce {
                counter: 0,
                session: 0,
            },
        );
        f[HEADER_LEN] ^= 0x01;
        assert_eq!(decode_frame(&f, &keys()), Err(WireError::AuthFailure));
    }

    #[test]
    fn unknown_type_after_mac() {
        let k = keys();
        let mut f = encode_frame(
            &Message::ChannelClosingRequest,
            &k,
            Nonce {
                counter: 0,
                session: 0,
            },
        );
        f[3] = 0x99;
        let body_len = f.len() - TAG_LEN;
        let mut m = mac(&k);
        m.update(&f[..body_len]);
        let tag = m.finalize().into_bytes();
        f[body_len..].copy_from_slice(&tag);
        assert_eq!(decode_frame(&f, &k), Err(WireError::UnknownType(0x99)));
    }
}
