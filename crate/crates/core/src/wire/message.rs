//! Message union and fixed-layout payload encoding.
//!
//! Amounts are 8-byte big-endian satoshi, points 33-byte compressed,
//! hashes and scalars 32 bytes, signatures 64 bytes (r ‖ s). Variable
//! fields carry a 4-byte length prefix.

use crate::chain_sim::{Outpoint, Sat, Txid};
use crate::channel::NodeId;
use crate::codec::{DecodeError, Reader, Writer};
use crate::ecdsa::EcdsaSignature;
use crate::group::{Point, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    // IoT link control
    OpenChannelRequest {
        capacity: Sat,
    },
    SendPayment {
        amount: Sat,
        destination: NodeId,
    },
    PaymentSuccess {
        payment_hash: [u8; 32],
    },
    ChannelClosingRequest,
    ChannelClosed {
        reason: String,
    },
    // peer protocol subset
    OpenChannel {
        funding_pubkey: Point,
        capacity: Sat,
        /// Key paid by the IoT output of every commitment.
        iot_payout_key: Point,
        /// Key paid by the gateway fee output.
        gateway_payout_key: Point,
        to_self_delay: u32,
    },
    AcceptChannel {
        payout_key: Point,
        first_commitment_point: Point,
    },
    FundingCreated {
        funding_outpoint: Outpoint,
        signature: EcdsaSignature,
        commitment_point: Point,
    },
    FundingSigned {
        signature: EcdsaSignature,
    },
    FundingLocked {
        next_commitment_point: Point,
    },
    UpdateAddHtlc {
        amount: Sat,
        payment_hash: [u8; 32],
        timeout: u64,
        route: Vec<NodeId>,
        /// Gateway service fee behind this HTLC, so the peer can mirror
        /// the IoT/fee split of both commitment layouts.
        service_fee: Sat,
    },
    UpdateFulfillHtlc {
        payment_hash: [u8; 32],
        preimage: [u8; 32],
    },
    UpdateFailHtlc {
        payment_hash: [u8; 32],
    },
    CommitmentSigned {
        signature: EcdsaSignature,
        htlc_signatures: Vec<EcdsaSignature>,
    },
    RevokeAndAck {
        commitment_secret: Scalar,
        next_commitment_point: Point,
    },
    Shutdown,
    ClosingSigned {
        fee: Sat,
        signature: EcdsaSignature,
    },
    // threshold transport
    ThresholdKeygen {
        round: u8,
        payload: Vec<u8>,
    },
    ThresholdSign {
        round: u8,
        payload: Vec<u8>,
    },
    ThresholdDerive {
        round: u8,
        index: u32,
        tag: u8,
        payload: Vec<u8>,
    },
}

pub mod msg_type {
    pub const OPEN_CHANNEL_REQUEST: u8 = 0x01;
    pub const SEND_PAYMENT: u8 = 0x02;
    pub const PAYMENT_SUCCESS: u8 = 0x03;
    pub const CHANNEL_CLOSING_REQUEST: u8 = 0x04;
    pub const CHANNEL_CLOSED: u8 = 0x05;
    pub const OPEN_CHANNEL: u8 = 32;
    pub const ACCEPT_CHANNEL: u8 = 33;
    pub const FUNDING_CREATED: u8 = 34;
    pub const FUNDING_SIGNED: u8 = 35;
    pub const FUNDING_LOCKED: u8 = 36;
    pub const SHUTDOWN: u8 = 38;
    pub const CLOSING_SIGNED: u8 = 39;
    pub const UPDATE_ADD_HTLC: u8 = 128;
    pub const UPDATE_FULFILL_HTLC: u8 = 130;
    pub const UPDATE_FAIL_HTLC: u8 = 131;
    pub const COMMITMENT_SIGNED: u8 = 132;
    pub const REVOKE_AND_ACK: u8 = 133;
    pub const THRESHOLD_KEYGEN: u8 = 0x40;
    pub const THRESHOLD_SIGN: u8 = 0x41;
    pub const THRESHOLD_DERIVE: u8 = 0x42;

    pub const ALL: [u8; 20] = [
        OPEN_CHANNEL_REQUEST,
        SEND_PAYMENT,
        PAYMENT_SUCCESS,
        CHANNEL_CLOSING_REQUEST,
        CHANNEL_CLOSED,
        OPEN_CHANNEL,
        ACCEPT_CHANNEL,
        FUNDING_CREATED,
        FUNDING_SIGNED,
        FUNDING_LOCKED,
        SHUTDOWN,
        CLOSING_SIGNED,
        UPDATE_ADD_HTLC,
        UPDATE_FULFILL_HTLC,
        UPDATE_FAIL_HTLC,
        COMMITMENT_SIGNED,
        REVOKE_AND_ACK,
        THRESHOLD_KEYGEN,
        THRESHOLD_SIGN,
        THRESHOLD_DERIVE,
    ];

    pub fn is_known(t: u8) -> bool {
        ALL.contains(&t)
    }
}

fn sig(w: &mut Writer, s: &EcdsaSignature) {
    w.bytes(&s.to_bytes());
}

fn read_sig(r: &mut Reader<'_>) -> Result<EcdsaSignature, DecodeError> {
    let b = r.array::<64>()?;
    EcdsaSignature::from_bytes(&b).ok_or(DecodeError::BadScalar)
}

fn read_node(r: &mut Reader<'_>) -> Result<NodeId, DecodeError> {
    Ok(NodeId(r.point()?))
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        use msg_type::*;
        match self {
            Message::OpenChannelRequest { .. } => OPEN_CHANNEL_REQUEST,
            Message::SendPayment { .. } => SEND_PAYMENT,
            Message::PaymentSuccess { .. } => PAYMENT_SUCCESS,
            Message::ChannelClosingRequest => CHANNEL_CLOSING_REQUEST,
            Message::ChannelClosed { .. } => CHANNEL_CLOSED,
            Message::OpenChannel { .. } => OPEN_CHANNEL,
            Message::AcceptChannel { .. } => ACCEPT_CHANNEL,
            Message::FundingCreated { .. } => FUNDING_CREATED,
            Message::FundingSigned { .. } => FUNDING_SIGNED,
            Message::FundingLocked { .. } => FUNDING_LOCKED,
            Message::UpdateAddHtlc { .. } => UPDATE_ADD_HTLC,
            Message::UpdateFulfillHtlc { .. } => UPDATE_FULFILL_HTLC,
            Message::UpdateFailHtlc { .. } => UPDATE_FAIL_HTLC,
            Message::CommitmentSigned { .. } => COMMITMENT_SIGNED,
            Message::RevokeAndAck { .. } => REVOKE_AND_ACK,
            Message::Shutdown => SHUTDOWN,
            Message::ClosingSigned { .. } => CLOSING_SIGNED,
            Message::ThresholdKeygen { .. } => THRESHOLD_KEYGEN,
            Message::ThresholdSign { .. } => THRESHOLD_SIGN,
            Message::ThresholdDerive { .. } => THRESHOLD_DERIVE,
        }
    }

    /// Protocol name as used in traces.
    pub fn name(&self) -> &'static str {
        match self {
            Message::OpenChannelRequest { .. } => "OpenChannelRequest",
            Message::SendPayment { .. } => "SendPayment",
            Message::PaymentSuccess { .. } => "PaymentSuccess",
            Message::ChannelClosingRequest => "ChannelClosingRequest",
            Message::ChannelClosed { .. } => "ChannelClosed",
            Message::OpenChannel { .. } => "open_channel",
            Message::AcceptChannel { .. } => "accept_channel",
            Message::FundingCreated { .. } => "funding_created",
            Message::FundingSigned { .. } => "funding_signed",
            Message::FundingLocked { .. } => "funding_locked",
            Message::UpdateAddHtlc { .. } => "update_add_htlc",
            Message::UpdateFulfillHtlc { .. } => "update_fulfill_htlc",
            Message::UpdateFailHtlc { .. } => "update_fail_htlc",
            Message::CommitmentSigned { .. } => "commitment_signed",
            Message::RevokeAndAck { .. } => "revoke_and_ack",
            Message::Shutdown => "shutdown",
            Message::ClosingSigned { .. } => "closing_signed",
            Message::ThresholdKeygen { .. } => "ThresholdKeygen",
            Message::ThresholdSign { .. } => "ThresholdSign",
            Message::ThresholdDerive { .. } => "ThresholdDerive",
        }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Message::OpenChannelRequest { capacity } => {
                w.u64(*capacity);
            }
            Message::SendPayment {
                amount,
                destination,
            } => {
                w.u64(*amount).point(&destination.0);
            }
            Message::PaymentSuccess { payment_hash } => {
                w.bytes(payment_hash);
            }
            Message::ChannelClosingRequest | Message::Shutdown => {}
            Message::FundingLocked {
                next_commitment_point,
            } => {
                w.point(next_commitment_point);
            }
            Message::ChannelClosed { reason } => {
                w.string(reason);
            }
            Message::OpenChannel {
                funding_pubkey,
                capacity,
                iot_payout_key,
                gateway_payout_key,
                to_self_delay,
            } => {
                w.point(funding_pubkey)
                    .u64(*capacity)
                    .point(iot_payout_key)
                    .point(gateway_payout_key)
                    .u32(*to_self_delay);
            }
            Message::AcceptChannel {
                payout_key,
                first_commitment_point,
            } => {
                w.point(payout_key).point(first_commitment_point);
            }
            Message::FundingCreated {
                funding_outpoint,
                signature,
                commitment_point,
            } => {
                w.bytes(&funding_outpoint.txid.0).u32(funding_outpoint.vout);
                sig(&mut w, signature);
                w.point(commitment_point);
            }
            Message::FundingSigned { signature } => sig(&mut w, signature),
            Message::UpdateAddHtlc {
                amount,
                payment_hash,
                timeout,
                route,
                service_fee,
            } => {
                w.u64(*amount).bytes(payment_hash).u64(*timeout);
                w.u32(route.len() as u32);
                for n in route {
                    w.point(&n.0);
                }
                w.u64(*service_fee);
            }
            Message::UpdateFulfillHtlc {
                payment_hash,
                preimage,
            } => {
                w.bytes(payment_hash).bytes(preimage);
            }
            Message::UpdateFailHtlc { payment_hash } => {
                w.bytes(payment_hash);
            }
            Message::CommitmentSigned {
                signature,
                htlc_signatures,
            } => {
                sig(&mut w, signature);
                w.u32(htlc_signatures.len() as u32);
                for s in htlc_signatures {
                    sig(&mut w, s);
                }
            }
            Message::RevokeAndAck {
                commitment_secret,
                next_commitment_point,
            } => {
                w.scalar(commitment_secret).point(next_commitment_point);
            }
            Message::ClosingSigned { fee, signature } => {
                w.u64(*fee);
                sig(&mut w, signature);
            }
            Message::ThresholdKeygen { round, payload }
            | Message::ThresholdSign { round, payload } => {
                w.u8(*round).var(payload);
            }
            Message::ThresholdDerive {
                round,
                index,
                tag,
                payload,
            } => {
                w.u8(*round).u32(*index).u8(*tag).var(payload);
            }
        }
        w.finish()
    }

    /// Parses a payload of the given type. Unknown types are rejected by
    /// the framing layer before this is called.
    pub fn decode_payload(t: u8, payload: &[u8]) -> Result<Message, DecodeError> {
        use msg_type::*;
        let mut r = Reader::new(payload);
        let m = match t {
            OPEN_CHANNEL_REQUEST => Message::OpenChannelRequest { capacity: r.u64()? },
            SEND_PAYMENT => Message::SendPayment {
                amount: r.u64()?,
                destination: read_node(&mut r)?,
            },
            PAYMENT_SUCCESS => Message::PaymentSuccess {
                payment_hash: r.array()?,
            },
            CHANNEL_CLOSING_REQUEST => Message::ChannelClosingRequest,
            CHANNEL_CLOSED => Message::ChannelClosed {
                reason: r.string()?,
            },
            OPEN_CHANNEL => Message::OpenChannel {
                funding_pubkey: r.point()?,
                capacity: r.u64()?,
                iot_payout_key: r.point()?,
                gateway_payout_key: r.point()?,
                to_self_delay: r.u32()?,
            },
            ACCEPT_CHANNEL => Message::AcceptChannel {
                payout_key: r.point()?,
                first_commitment_point: r.point()?,
            },
            FUNDING_CREATED => Message::FundingCreated {
                funding_outpoint: Outpoint::new(Txid(r.array()?), r.u32()?),
                signature: read_sig(&mut r)?,
                commitment_point: r.point()?,
            },
            FUNDING_SIGNED => Message::FundingSigned {
                signature: read_sig(&mut r)?,
            },
            FUNDING_LOCKED => Message::FundingLocked {
                next_commitment_point: r.point()?,
            },
            UPDATE_ADD_HTLC => {
                let amount = r.u64()?;
                let payment_hash = r.array()?;
                let timeout = r.u64()?;
                let n = r.u32()? as usize;
                if n > r.remaining() / 33 {
                    return Err(DecodeError::TooLong(n));
                }
                let mut route = Vec::with_capacity(n);
                for _ in 0..n {
                    route.push(read_node(&mut r)?);
                }
                Message::UpdateAddHtlc {
                    amount,
                    payment_hash,
                    timeout,
                    route,
                    service_fee: r.u64()?,
                }
            }
            UPDATE_FULFILL_HTLC => Message::UpdateFulfillHtlc {
                payment_hash: r.array()?,
                preimage: r.array()?,
            },
            UPDATE_FAIL_HTLC => Message::UpdateFailHtlc {
                payment_hash: r.array()?,
            },
            COMMITMENT_SIGNED => {
                let signature = read_sig(&mut r)?;
                let n = r.u32()? as usize;
                if n > r.remaining() / 64 {
                    return Err(DecodeError::TooLong(n));
                }
                let mut htlc_signatures = Vec::with_capacity(n);
                for _ in 0..n {
                    htlc_signatures.push(read_sig(&mut r)?);
                }
                Message::CommitmentSigned {
                    signature,
                    htlc_signatures,
                }
            }
            REVOKE_AND_ACK => Message::RevokeAndAck {
                commitment_secret: r.scalar()?,
                next_commitment_point: r.point()?,
            },
            SHUTDOWN => Message::Shutdown,
            CLOSING_SIGNED => Message::ClosingSigned {
                fee: r.u64()?,
                signature: read_sig(&mut r)?,
            },
            THRESHOLD_KEYGEN => Message::ThresholdKeygen {
                round: r.u8()?,
                payload: r.var()?.to_vec(),
            },
            THRESHOLD_SIGN => Message::ThresholdSign {
                round: r.u8()?,
                payload: r.var()?.to_vec(),
            },
            THRESHOLD_DERIVE => Message::ThresholdDerive {
                round: r.u8()?,
                index: r.u32()?,
                tag: r.u8()?,
                payload: r.var()?.to_vec(),
            },
            other => return Err(DecodeError::BadTag("message type", other)),
        };
        r.finish()?;
        Ok(m)
    }
}
