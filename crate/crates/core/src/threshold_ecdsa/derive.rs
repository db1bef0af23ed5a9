//! Child key derivation by a public multiplicative tweak.
//!
//! `t = H(Q ‖ tag ‖ index) mod q`, child key `Q' = t·Q`. The client scales
//! its share to `t·x2`; the server keeps `x1` and `c_key`, so signing under
//! a child needs no new Paillier material. The tweak is public: anyone
//! holding `Q` can compute child public keys, and a child secret reveals
//! the parent secret.

use serde::{Deserialize, Serialize};

use super::{ClientKey, JointKey, Party, PartyShare, ServerKey, ThresholdError};
use crate::group::{hash_to_scalar, scalar_is_zero, Point, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum KeyPurpose {
    FundingKey = 0,
    CommitmentPoint = 1,
}

impl KeyPurpose {
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(KeyPurpose::FundingKey),
            1 => Some(KeyPurpose::CommitmentPoint),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChildIndex {
    pub index: u32,
    pub purpose: KeyPurpose,
}

impl ChildIndex {
    pub fn funding(index: u32) -> Self {
        ChildIndex {
            index,
            purpose: KeyPurpose::FundingKey,
        }
    }

    pub fn commitment(index: u32) -> Self {
        ChildIndex {
            index,
            purpose: KeyPurpose::CommitmentPoint,
        }
    }
}

pub fn child_tweak(parent: &Point, idx: ChildIndex) -> Scalar {
    hash_to_scalar(&[
        b"lngate/2p-hd",
        &parent.to_bytes(),
        &[idx.purpose.tag()],
        &idx.index.to_be_bytes(),
    ])
}

fn checked_tweak(parent: &Point, idx: ChildIndex) -> Result<Scalar, ThresholdError> {
    let t = child_tweak(parent, idx);
    if scalar_is_zero(&t) {
        return Err(ThresholdError::TweakZero);
    }
    Ok(t)
}

/// Child public key computable by either party (or an observer) offline.
pub fn derive_public(parent: &Point, idx: ChildIndex) -> Result<Point, ThresholdError> {
    Ok(parent * &checked_tweak(parent, idx)?)
}

/// Derives both parties' child views from their parent views.
pub fn derive_child(
    server: &ServerKey,
    client: &ClientKey,
    idx: ChildIndex,
) -> Result<(ServerKey, ClientKey), ThresholdError> {
    Ok((server.derive_child(idx)?, client.derive_child(idx)?))
}

impl ServerKey {
    pub fn derive_child(&self, idx: ChildIndex) -> Result<ServerKey, ThresholdError> {
        let t = checked_tweak(&self.joint.public, idx)?;
        let mut child = self.clone();
        child.joint.public = &self.joint.public * &t;
        child.joint.peer_public = &self.joint.peer_public * &t;
        Ok(child)
    }
}

impl ClientKey {
    pub fn derive_child(&self, idx: ChildIndex) -> Result<ClientKey, ThresholdError> {
        let t = checked_tweak(&self.joint.public, idx)?;
        let share = PartyShare::new(Party::Client, *self.joint.share.secret() * t)?;
        Ok(ClientKey {
            joint: JointKey {
                public: &self.joint.public * &t,
                c_key: self.joint.c_key.clone(),
                paillier_pk: self.joint.paillier_pk.clone(),
                share,
                peer_public: self.joint.peer_public,
            },
        })
    }
}
