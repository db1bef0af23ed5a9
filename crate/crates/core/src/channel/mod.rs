//! Payment-channel state machine shared by the gateway and the bridge.
//!
//! Payments only flow from the IoT device toward the bridge. Each payment
//! moves `amount` out of the IoT balance, credits the gateway's service fee,
//! and parks `amount - fee` in an HTLC until it settles (to the bridge) or
//! fails (back to the IoT device, fee included).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_sim::{
    hex_32, Sat, CLOSE_TX_FEE, DEFAULT_CONFIRMATION_DEPTH, DEFAULT_HTLC_TIMEOUT,
    DEFAULT_TO_SELF_DELAY,
};
use crate::group::{hash_to_scalar, scalar_is_zero, sha256, Point, Scalar};

mod commitment;

pub use commitment::{
    build_bridge_commitment, build_closing_tx, build_funding_tx, build_gateway_commitment,
    build_penalty_tx, revocation_pubkey, revocation_secret, CommitmentContext, CommitmentTx,
    FeePayer, OutputRole,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("insufficient funds: need {needed} sat, have {available}")]
    InsufficientFunds { needed: Sat, available: Sat },
    #[error("payment too small to carry an HTLC after fees")]
    AmountTooSmall,
    #[error("preimage does not match any pending HTLC")]
    WrongPreimage,
    #[error("no pending HTLC with that payment hash")]
    UnknownHtlc,
    #[error("HTLC timeout at height {timeout} not reached (height {height})")]
    TimeoutNotReached { timeout: u64, height: u64 },
    #[error("state {0} is not superseded")]
    NotYetSuperseded(u64),
    #[error("no revocation secret for this commitment")]
    NotRevoked,
    #[error("revealed secret does not match the commitment point")]
    BadSecret,
    #[error("channel has pending HTLCs")]
    PendingHtlcs,
    #[error("fee balance {available} sat cannot cover close fee {needed}")]
    InsufficientFeeBalance { needed: Sat, available: Sat },
}

/// Node identity: the node's public key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub Point);

impl NodeId {
    pub fn to_bytes(&self) -> [u8; 33] {
        self.0.to_bytes()
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({}..)", &self.0.to_hex()[..12])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub capacity: Sat,
    /// Relative delay D on revocable outputs, in blocks.
    pub to_self_delay: u32,
    /// HTLC timeout w, in blocks after the HTLC is offered.
    pub htlc_timeout: u64,
    pub confirmation_depth: u64,
    /// Gateway service fee in parts per million of the payment amount.
    pub service_fee_ppm: u32,
    /// Bridge forwarding base fee.
    pub base_fee: Sat,
}

impl ChannelParams {
    pub fn new(capacity: Sat, service_fee_ppm: u32) -> Self {
        ChannelParams {
            capacity,
            to_self_delay: DEFAULT_TO_SELF_DELAY,
            htlc_timeout: DEFAULT_HTLC_TIMEOUT,
            confirmation_depth: DEFAULT_CONFIRMATION_DEPTH,
            service_fee_ppm,
            base_fee: 2,
        }
    }
}

/// `round(amount × ppm / 10⁶)`, halves rounded up.
pub fn service_fee(amount: Sat, ppm: u32) -> Sat {
    let num = u128::from(amount) * u128::from(ppm);
    ((num + 500_000) / 1_000_000) as Sat
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Htlc {
    /// Amount locked in the HTLC (payment minus service fee).
    pub amount: Sat,
    #[serde(with = "hex_32")]
    pub payment_hash: [u8; 32],
    /// Absolute block height after which the refund path opens.
    pub timeout: u64,
    pub destination: NodeId,
    /// Service fee charged for this payment; refunded if it fails.
    pub fee: Sat,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelState {
    pub state_num: u64,
    pub capacity: Sat,
    pub iot_balance: Sat,
    pub bridge_balance: Sat,
    pub gateway_fee_balance: Sat,
    pub pending_htlcs: Vec<Htlc>,
    /// On-chain fees already charged against channel balances.
    pub onchain_fees: Sat,
}

impl ChannelState {
    /// State 0: the whole capacity belongs to the IoT device.
    pub fn open(capacity: Sat) -> Self {
        ChannelState {
            state_num: 0,
            capacity,
            iot_balance: capacity,
            bridge_balance: 0,
            gateway_fee_balance: 0,
            pending_htlcs: vec![],
            onchain_fees: 0,
        }
    }

    pub fn htlc_total(&self) -> Sat {
        self.pending_htlcs.iter().map(|h| h.amount).sum()
    }

    /// Balances + HTLCs + charged on-chain fees equal capacity.
    pub fn is_conserved(&self) -> bool {
        self.iot_balance as u128
            + self.bridge_balance as u128
            + self.gateway_fee_balance as u128
            + self.htlc_total() as u128
            + self.onchain_fees as u128
            == self.capacity as u128
    }

    /// Offers a payment using the channel's service fee rate.
    pub fn apply_payment(
        &self,
        params: &ChannelParams,
        amount: Sat,
        payment_hash: [u8; 32],
        destination: NodeId,
        height: u64,
    ) -> Result<(ChannelState, Htlc), ChannelError> {
        let fee = service_fee(amount, params.service_fee_ppm);
        self.apply_payment_with_fee(params, amount, fee, payment_hash, destination, height)
    }

    /// Offers a payment with an explicit fee. The bridge uses this to
    /// mirror the gateway's transition from `update_add_htlc`.
    pub fn apply_payment_with_fee(
        &self,
        params: &ChannelParams,
        amount: Sat,
        fee: Sat,
        payment_hash: [u8; 32],
        destination: NodeId,
        height: u64,
    ) -> Result<(ChannelState, Htlc), ChannelError> {
        if amount > self.iot_balance {
            return Err(ChannelError::InsufficientFunds {
                needed: amount,
                available: self.iot_balance,
            });
        }
        if fee >= amount {
            return Err(ChannelError::AmountTooSmall);
        }
        let htlc = Htlc {
            amount: amount - fee,
            payment_hash,
            timeout: height + params.htlc_timeout,
            destination,
            fee,
        };
        let mut next = self.clone();
        next.state_num += 1;
        next.iot_balance -= amount;
        next.gateway_fee_balance += fee;
        next.pending_htlcs.push(htlc);
        Ok((next, htlc))
    }

    pub fn settle_htlc(&self, preimage: &[u8; 32]) -> Result<ChannelState, ChannelError> {
        let hash = sha256(preimage);
        let idx = self
            .pending_htlcs
            .iter()
            .position(|h| h.payment_hash == hash)
            .ok_or(ChannelError::WrongPreimage)?;
        let mut next = self.clone();
        let htlc = next.pending_htlcs.remove(idx);
        next.state_num += 1;
        next.bridge_balance += htlc.amount;
        Ok(next)
    }

    /// Removes a timed-out HTLC, refunding amount and service fee.
    pub fn fail_htlc(
        &self,
        payment_hash: &[u8; 32],
        height: u64,
    ) -> Result<ChannelState, ChannelError> {
        let idx = self
            .pending_htlcs
            .iter()
            .position(|h| h.payment_hash == *payment_hash)
            .ok_or(ChannelError::UnknownHtlc)?;
        let htlc = self.pending_htlcs[idx];
        if height < htlc.timeout {
            return Err(ChannelError::TimeoutNotReached {
                timeout: htlc.timeout,
                height,
            });
        }
        let mut next = self.clone();
        next.pending_htlcs.remove(idx);
        next.state_num += 1;
        next.iot_balance += htlc.amount + htlc.fee;
        next.gateway_fee_balance -= htlc.fee;
        Ok(next)
    }

    /// Whether the close initiator can cover `CLOSE_TX_FEE`.
    pub fn check_close(&self, payer: FeePayer) -> Result<(), ChannelError> {
        if !self.pending_htlcs.is_empty() {
            return Err(ChannelError::PendingHtlcs);
        }
        match payer {
            FeePayer::Iot if self.iot_balance < CLOSE_TX_FEE => {
                Err(ChannelError::InsufficientFunds {
                    needed: CLOSE_TX_FEE,
                    available: self.iot_balance,
                })
            }
            FeePayer::Gateway if self.gateway_fee_balance < CLOSE_TX_FEE => {
                Err(ChannelError::InsufficientFeeBalance {
                    needed: CLOSE_TX_FEE,
                    available: self.gateway_fee_balance,
                })
            }
            _ => Ok(()),
        }
    }
}

/// Single-party per-state commitment secrets from a seed (the bridge's
/// side; the gateway's secrets are held jointly with the IoT device).
#[derive(Clone)]
pub struct CommitmentSecrets {
    seed: [u8; 32],
}

impl CommitmentSecrets {
    pub fn new(seed: [u8; 32]) -> Self {
        CommitmentSecrets { seed }
    }

    pub fn secret(&self, n: u64) -> Scalar {
        let mut ctr = 0u32;
        loop {
            let s = hash_to_scalar(&[
                b"lngate/commitment-secret",
                &self.seed,
                &n.to_be_bytes(),
                &ctr.to_be_bytes(),
            ]);
            if !scalar_is_zero(&s) {
                return s;
            }
            ctr += 1;
        }
    }

    pub fn point(&self, n: u64) -> Point {
        Point::mul_base(&self.secret(n))
    }

    /// Reveals secret `n` only once `current` has moved past it.
    pub fn reveal(&self, n: u64, current: u64) -> Result<Scalar, ChannelError> {
        if n >= current {
            return Err(ChannelError::NotYetSuperseded(n));
        }
        Ok(self.secret(n))
    }
}

impl fmt::Debug for CommitmentSecrets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CommitmentSecrets(..)")
    }
}

/// Peer secrets received for revoked states, checked against the points
/// the peer announced earlier.
#[derive(Clone, Debug, Default)]
pub struct RevocationStore {
    points: BTreeMap<u64, Point>,
    secrets: BTreeMap<u64, Scalar>,
}

impl RevocationStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_point(&mut self, n: u64, point: Point) {
        self.points.insert(n, point);
    }

    pub fn point(&self, n: u64) -> Option<Point> {
        self.points.get(&n).copied()
    }

    pub fn insert_secret(&mut self, n: u64, secret: Scalar) -> Result<(), ChannelError> {
        match self.points.get(&n) {
            Some(p) if Point::mul_base(&secret) == *p => {
                self.secrets.insert(n, secret);
                Ok(())
            }
            _ => Err(ChannelError::BadSecret),
        }
    }

    pub fn secret(&self, n: u64) -> Result<Scalar, ChannelError> {
        self.secrets
            .get(&n)
            .copied()
            .ok_or(ChannelError::NotRevoked)
    }

    pub fn revoked_states(&self) -> impl Iterator<Item = u64> + '_ {
        self.secrets.keys().copied()
    }

    /// Secret whose point matches `point`, for matching a broadcast
    /// commitment to its state.
    pub fn secret_for_point(&self, point: &Point) -> Option<(u64, Scalar)> {
        self.points
            .iter()
            .find(|(_, p)| *p == point)
            .and_then(|(n, _)| self.secrets.get(n).map(|s| (*n, *s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_sim::COIN;

    fn dest() -> NodeId {
        NodeId(Point::generator())
    }

    #[test]
    fn fee_rounding() {
        assert_eq!(service_fee(COIN, 100_000), COIN / 10);
        assert_eq!(service_fee(1376, 50_000), 69);
        assert_eq!(service_fee(10, 50_000), 1);
        assert_eq!(service_fee(9, 50_000), 0);
    }

    #[test]
    fn payment_then_settle() {
        let p = ChannelParams::new(10 * COIN, 100_000);
        let s0 = ChannelState::open(p.capacity);
        let preimage = [9u8; 32];
        let (s1, htlc) = s0
            .apply_payment(&p, COIN, sha256(&preimage), dest(), 100)
            .unwrap();
        assert_eq!(htlc.amount, 90_000_000);
        assert_eq!(htlc.timeout, 140);
        assert_eq!(s1.gateway_fee_balance, 10_000_000);
        assert!(s1.is_conserved());
        assert_eq!(s1.settle_htlc(&[8u8; 32]), Err(ChannelError::WrongPreimage));
        let s2 = s1.settle_htlc(&preimage).unwrap();
        assert_eq!(s2.bridge_balance, 90_000_000);
        assert_eq!(s2.state_num, 2);
        assert!(s2.is_conserved());
    }

    #[test]
    fn fail_restores_pre_payment_balances() {
        let p = ChannelParams::new(10 * COIN, 100_000);
        let s0 = ChannelState::open(p.capacity);
        let (s1, htlc) = s0.apply_payment(&p, COIN, [1; 32], dest(), 0).unwrap();
        assert!(matches!(
            s1.fail_htlc(&htlc.payment_hash, 39),
            Err(ChannelError::TimeoutNotReached { .. })
        ));
        let s2 = s1.fail_htlc(&htlc.payment_hash, 40).unwrap();
        assert_eq!(s2.iot_balance, s0.iot_balance);
        assert_eq!(s2.gateway_fee_balance, s0.gateway_fee_balance);
    }

    #[test]
    fn overdraft_rejected() {
        let p = ChannelParams::new(1000, 0);
        let s0 = ChannelState::open(p.capacity);
        assert_eq!(
            s0.apply_payment(&p, 1001, [0; 32], dest(), 0).unwrap_err(),
            ChannelError::InsufficientFunds {
                needed: 1001,
                available: 1000
            }
        );
    }

    #[test]
    fn secrets_only_for_superseded_states() {
        let c = CommitmentSecrets::new([3; 32]);
        assert_eq!(c.reveal(2, 2), Err(ChannelError::NotYetSuperseded(2)));
        let s = c.reveal(1, 2).unwrap();
        let mut store = RevocationStore::new();
        store.record_point(1, c.point(1));
        assert_eq!(
            store.insert_secret(1, c.secret(0)),
            Err(ChannelError::BadSecret)
        );
        store.insert_secret(1, s).unwrap();
        assert_eq!(store.secret(1).unwrap(), s);
        assert_eq!(store.secret(2), Err(ChannelError::NotRevoked));
    }
}
