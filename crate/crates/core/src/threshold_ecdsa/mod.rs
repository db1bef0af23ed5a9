//! (2,2)-threshold ECDSA with multiplicative key sharing.
//!
//! The server (gateway) holds `x1` and a Paillier key pair; the client (IoT
//! device) holds `x2` and `c_key = Enc(x1)`. The joint key is
//! `Q = x1·x2·G`. Signing combines both ephemeral shares into `k = k1·k2`
//! and the client finishes `s` homomorphically under the server's Paillier
//! key, so the output is an ordinary ECDSA signature under `Q`.

use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::DecodeError;
use crate::group::{group_order, scalar_is_zero, scalar_to_bytes, Point, Scalar};

pub mod commitment;
pub mod derive;
pub mod dlog;
pub mod keygen;
pub mod paillier;
pub mod sign;

pub use crate::ecdsa::{verify_standard, EcdsaSignature};
pub use derive::{child_tweak, derive_child, derive_public, ChildIndex, KeyPurpose};
pub use dlog::{prove_dlog, verify_dlog, DlogProof};
pub use keygen::{
    keygen, keygen_with_rngs, keygen_with_shares, KeygenClient, KeygenFirstMsg, KeygenSecondMsg,
    KeygenServer, KeygenThirdMsg,
};
pub use paillier::{Ciphertext, PaillierPublicKey, PaillierSecretKey};
pub use sign::{
    sign, sign_with_ephemerals, ClientSignSession, EphemeralKey, ServerSignSession, SignFirstMsg,
    SignFourthMsg, SignSecondMsg, SignSeeds, SignThirdMsg,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ThresholdError {
    #[error("zero-knowledge proof rejected: {0}")]
    ProofRejected(&'static str),
    #[error("secret share outside [1, q-1]")]
    ShareOutOfRange,
    #[error("joint signature failed verification")]
    InvalidSignature,
    #[error("child tweak is zero; choose another index")]
    TweakZero,
    #[error("plaintext not below the Paillier modulus")]
    PlaintextTooLarge,
    #[error("Paillier modulus of {bits} bits below minimum {min}")]
    ModulusTooSmall { bits: usize, min: usize },
    #[error("invalid Paillier key")]
    InvalidPaillierKey,
    #[error("ciphertext out of range")]
    InvalidCiphertext,
    #[error("decommitment does not match commitment")]
    CommitmentMismatch,
    #[error("unsupported group parameters")]
    UnsupportedGroup,
    #[error("degenerate nonce")]
    DegenerateNonce,
    #[error("malformed transcript: {0}")]
    Decode(#[from] DecodeError),
}

/// Curve parameters. Only secp256k1 is supported; other values are
/// rejected by [`GroupParams::ensure_supported`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupParams {
    pub order: BigUint,
    pub generator: Point,
}

impl GroupParams {
    pub fn secp256k1() -> Self {
        GroupParams {
            order: group_order(),
            generator: Point::generator(),
        }
    }

    pub fn ensure_supported(&self) -> Result<(), ThresholdError> {
        if *self == GroupParams::secp256k1() {
            Ok(())
        } else {
            Err(ThresholdError::UnsupportedGroup)
        }
    }
}

impl Default for GroupParams {
    fn default() -> Self {
        Self::secp256k1()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeygenParams {
    pub group: GroupParams,
    pub paillier_bits: usize,
}

impl KeygenParams {
    pub fn with_paillier_bits(bits: usize) -> Self {
        KeygenParams {
            group: GroupParams::secp256k1(),
            paillier_bits: bits,
        }
    }

    /// 1024-bit Paillier modulus for fast test runs.
    pub fn testing() -> Self {
        Self::with_paillier_bits(paillier::MIN_MODULUS_BITS)
    }
}

impl Default for KeygenParams {
    fn default() -> Self {
        Self::with_paillier_bits(paillier::DEFAULT_MODULUS_BITS)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Server,
    Client,
}

/// One party's secret share and its public image. Never serialized.
#[derive(Clone)]
pub struct PartyShare {
    party: Party,
    secret: Scalar,
    public: Point,
}

impl PartyShare {
    pub fn new(party: Party, secret: Scalar) -> Result<Self, ThresholdError> {
        if scalar_is_zero(&secret) {
            return Err(ThresholdError::ShareOutOfRange);
        }
        Ok(PartyShare {
            party,
            secret,
            public: Point::mul_base(&secret),
        })
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn public(&self) -> Point {
        self.public
    }

    pub(crate) fn secret(&self) -> &Scalar {
        &self.secret
    }
}

impl fmt::Debug for PartyShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PartyShare({:?}, {})", self.party, self.public)
    }
}

/// The joint key as seen by one party.
#[derive(Clone, Debug)]
pub struct JointKey {
    /// `Q = x1·x2·G` (or `t·Q` for a derived child).
    pub public: Point,
    /// `Enc(x1)` under the server's Paillier key.
    pub c_key: Ciphertext,
    pub paillier_pk: PaillierPublicKey,
    pub share: PartyShare,
    /// The counterparty's public share.
    pub peer_public: Point,
}

/// Server view: adds the Paillier decryption key.
#[derive(Clone, Debug)]
pub struct ServerKey {
    pub joint: JointKey,
    paillier_sk: PaillierSecretKey,
}

impl ServerKey {
    pub fn public(&self) -> Point {
        self.joint.public
    }

    pub(crate) fn paillier_sk(&self) -> &PaillierSecretKey {
        &self.paillier_sk
    }
}

#[derive(Clone, Debug)]
pub struct ClientKey {
    pub joint: JointKey,
}

impl ClientKey {
    pub fn public(&self) -> Point {
        self.joint.public
    }
}

/// Hash commitment to a point and its proof, opened with `blind`.
pub(crate) fn commit_to(point: &Point, proof: &DlogProof, blind: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"lngate/commit");
    h.update(point.to_bytes());
    h.update(proof.to_bytes());
    h.update(blind);
    h.finalize().into()
}

pub(crate) fn scalar_biguint(s: &Scalar) -> BigUint {
    BigUint::from_bytes_be(&scalar_to_bytes(s))
}
