//! Jointly held per-state commitment secrets.
//!
//! Each party derives a hardened share from its own secret and the state
//! index: `a_n` (server) and `b_n` (client). The commitment point is
//! `P_n = a_n·b_n·G`, computed as `b_n·(a_n·G)` by the client. The secret
//! `a_n·b_n` exists only after the client releases `b_n`, so the gateway
//! cannot reveal the secret of a state on its own, and revealing one state
//! says nothing about the key shares or any other state.

use super::derive::KeyPurpose;
use super::{ClientKey, Party, PartyShare, ServerKey, ThresholdError};
use crate::group::{hash_to_scalar, scalar_is_zero, scalar_to_bytes, Point, Scalar};

fn share_for(share: &PartyShare, index: u32) -> Result<Scalar, ThresholdError> {
    let party = match share.party() {
        Party::Server => b"S",
        Party::Client => b"C",
    };
    let s = hash_to_scalar(&[
        b"lngate/commitment-share",
        &[KeyPurpose::CommitmentPoint.tag()],
        party,
        &scalar_to_bytes(share.secret()),
        &index.to_be_bytes(),
    ]);
    if scalar_is_zero(&s) {
        return Err(ThresholdError::TweakZero);
    }
    Ok(s)
}

impl ServerKey {
    /// `A_n = a_n·G`, sent to the client to obtain `P_n`.
    pub fn commitment_basepoint(&self, index: u32) -> Result<Point, ThresholdError> {
        Ok(Point::mul_base(&share_for(&self.joint.share, index)?))
    }

    /// Combines the client's released share into the state secret and
    /// checks it against the point agreed earlier.
    pub fn commitment_secret(
        &self,
        index: u32,
        client_share: &Scalar,
        point: &Point,
    ) -> Result<Scalar, ThresholdError> {
        let secret = share_for(&self.joint.share, index)? * client_share;
        if Point::mul_base(&secret) != *point {
            return Err(ThresholdError::CommitmentMismatch);
        }
        Ok(secret)
    }
}

impl ClientKey {
    /// `P_n = b_n·A_n`.
    pub fn commitment_point(&self, index: u32, basepoint: &Point) -> Result<Point, ThresholdError> {
        if basepoint.is_identity() {
            return Err(ThresholdError::ProofRejected("commitment basepoint"));
        }
        Ok(basepoint * &share_for(&self.joint.share, index)?)
    }

    /// Releases `b_n`. Callers must only do this once state `index` is
    /// superseded.
    pub fn commitment_release(&self, index: u32) -> Result<Scalar, ThresholdError> {
        share_for(&self.joint.share, index)
    }
}
