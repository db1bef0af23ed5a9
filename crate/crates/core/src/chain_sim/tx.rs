//! Transactions with predicate-level spend conditions.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec::{DecodeError, Reader, Writer};
use crate::ecdsa::EcdsaSignature;
use crate::group::{sha256, Point};

/// Amounts are integer satoshi.
pub type Sat = u64;
pub const COIN: Sat = 100_000_000;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Txid(pub [u8; 32]);

impl Txid {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Txid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Txid({}..)", &self.to_hex()[..12])
    }
}

impl fmt::Display for Txid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Txid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Txid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("txid must be 32 bytes"))?;
        Ok(Txid(arr))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Outpoint {
    pub txid: Txid,
    pub vout: u32,
}

impl Outpoint {
    pub fn new(txid: Txid, vout: u32) -> Self {
        Outpoint { txid, vout }
    }
}

impl fmt::Display for Outpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.txid, self.vout)
    }
}

/// Who may spend an output, and when.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum SpendCondition {
    KeySpend {
        owner: Point,
    },
    /// Owner after `delay` confirmations of the funding transaction.
    DelayedKeySpend {
        owner: Point,
        delay: u32,
    },
    /// Owner after `delay` confirmations, or the revocation key at any time.
    RevocableDelayed {
        owner: Point,
        delay: u32,
        revocation: Point,
    },
    /// Recipient with the preimage of `payment_hash`, or refund once the
    /// chain reaches absolute height `timeout`.
    HtlcOffered {
        #[serde(with = "hex_32")]
        payment_hash: [u8; 32],
        recipient: Point,
        refund: Point,
        timeout: u64,
    },
    /// Channel funding output under the jointly held key.
    ThresholdFunding {
        joint: Point,
    },
}

impl SpendCondition {
    pub fn keys(&self) -> Vec<Point> {
        match *self {
            SpendCondition::KeySpend { owner } | SpendCondition::DelayedKeySpend { owner, .. } => {
                vec![owner]
            }
            SpendCondition::RevocableDelayed {
                owner, revocation, ..
            } => vec![owner, revocation],
            SpendCondition::HtlcOffered {
                recipient, refund, ..
            } => vec![recipient, refund],
            SpendCondition::ThresholdFunding { joint } => vec![joint],
        }
    }

    fn encode(&self, w: &mut Writer) {
        match self {
            SpendCondition::KeySpend { owner } => {
                w.u8(0).point(owner);
            }
            SpendCondition::DelayedKeySpend { owner, delay } => {
                w.u8(1).point(owner).u32(*delay);
            }
            SpendCondition::RevocableDelayed {
                owner,
                delay,
                revocation,
            } => {
                w.u8(2).point(owner).u32(*delay).point(revocation);
            }
            SpendCondition::HtlcOffered {
                payment_hash,
                recipient,
                refund,
                timeout,
            } => {
                w.u8(3)
                    .bytes(payment_hash)
                    .point(recipient)
                    .point(refund)
                    .u64(*timeout);
            }
            SpendCondition::ThresholdFunding { joint } => {
                w.u8(4).point(joint);
            }
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(match r.u8()? {
            0 => SpendCondition::KeySpend { owner: r.point()? },
            1 => SpendCondition::DelayedKeySpend {
                owner: r.point()?,
                delay: r.u32()?,
            },
            2 => SpendCondition::RevocableDelayed {
                owner: r.point()?,
                delay: r.u32()?,
                revocation: r.point()?,
            },
            3 => SpendCondition::HtlcOffered {
                payment_hash: r.array()?,
                recipient: r.point()?,
                refund: r.point()?,
                timeout: r.u64()?,
            },
            4 => SpendCondition::ThresholdFunding { joint: r.point()? },
            t => return Err(DecodeError::BadTag("spend condition", t)),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Witness {
    Sig {
        pubkey: Point,
        sig: EcdsaSignature,
    },
    /// Signature under the revocation key of a `RevocableDelayed` output.
    RevocationSig {
        sig: EcdsaSignature,
    },
    Preimage {
        #[serde(with = "hex_32")]
        preimage: [u8; 32],
        sig: EcdsaSignature,
    },
    Timeout {
        sig: EcdsaSignature,
    },
}

impl Witness {
    fn encode(&self, w: &mut Writer) {
        match self {
            Witness::Sig { pubkey, sig } => {
                w.u8(0).point(pubkey).bytes(&sig.to_bytes());
            }
            Witness::RevocationSig { sig } => {
                w.u8(1).bytes(&sig.to_bytes());
            }
            Witness::Preimage { preimage, sig } => {
                w.u8(2).bytes(preimage).bytes(&sig.to_bytes());
            }
            Witness::Timeout { sig } => {
                w.u8(3).bytes(&sig.to_bytes());
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxOut {
    pub amount: Sat,
    pub condition: SpendCondition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxIn {
    pub prevout: Outpoint,
    /// `None` while the transaction is still being signed.
    pub witness: Option<Witness>,
}

impl TxIn {
    pub fn unsigned(prevout: Outpoint) -> Self {
        TxIn {
            prevout,
            witness: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTx {
    pub inputs: Vec<TxIn>,
    pub outputs: Vec<TxOut>,
    /// Declared fee; inputs must cover outputs plus this.
    pub fee: Sat,
    /// Distinguishes otherwise identical transactions (faucet coinbases).
    pub nonce: u64,
}

impl SimTx {
    pub fn new(inputs: Vec<TxIn>, outputs: Vec<TxOut>, fee: Sat) -> Self {
        SimTx {
            inputs,
            outputs,
            fee,
            nonce: 0,
        }
    }

    pub fn is_coinbase(&self) -> bool {
        self.inputs.is_empty()
    }

    fn encode_body(&self, w: &mut Writer) {
        w.u32(self.inputs.len() as u32);
        for i in &self.inputs {
            w.bytes(&i.prevout.txid.0).u32(i.prevout.vout);
        }
        w.u32(self.outputs.len() as u32);
        for o in &self.outputs {
            w.u64(o.amount);
            o.condition.encode(w);
        }
        w.u64(self.fee).u64(self.nonce);
    }

    /// Serialization with witnesses stripped. Its SHA-256 is both the txid
    /// and the message every input signature commits to.
    pub fn stripped_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_body(&mut w);
        w.finish()
    }

    pub fn digest(&self) -> [u8; 32] {
        sha256(&self.stripped_bytes())
    }

    pub fn txid(&self) -> Txid {
        Txid(self.digest())
    }

    /// Full serialization including witnesses, used for dumps.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_body(&mut w);
        for i in &self.inputs {
            match &i.witness {
                None => {
                    w.u8(0xff);
                }
                Some(wit) => wit.encode(&mut w),
            }
        }
        w.finish()
    }

    pub fn output_total(&self) -> Sat {
        self.outputs.iter().map(|o| o.amount).sum()
    }

    pub fn outpoint(&self, vout: u32) -> Outpoint {
        Outpoint::new(self.txid(), vout)
    }

    /// Index of the first output whose condition satisfies `pred`.
    pub fn find_output(&self, pred: impl Fn(&SpendCondition) -> bool) -> Option<u32> {
        self.outputs
            .iter()
            .position(|o| pred(&o.condition))
            .map(|i| i as u32)
    }
}

/// Decodes a condition from its canonical bytes (used by round-trip tests).
pub fn decode_condition(bytes: &[u8]) -> Result<SpendCondition, DecodeError> {
    let mut r = Reader::new(bytes);
    let c = SpendCondition::decode(&mut r)?;
    r.finish()?;
    Ok(c)
}

pub fn encode_condition(c: &SpendCondition) -> Vec<u8> {
    let mut w = Writer::new();
    c.encode(&mut w);
    w.finish()
}

pub(crate) mod hex_32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("expected 32 bytes"))
    }
}
