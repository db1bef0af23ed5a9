//! Funding, commitment, closing and penalty transaction builders.
//!
//! Gateway commitment layout:
//!   1. IoT balance     KeySpend(IoT key), no revocation arm
//!   2. bridge balance  KeySpend(bridge key)
//!   3. HTLCs           HtlcOffered (bridge with preimage, IoT after timeout)
//!   4. gateway fees    RevocableDelayed(gateway key, D, revocation key)
//!
//! The bridge's own commitment is the standard layout: its balance is
//! RevocableDelayed, everything else is immediately spendable by its owner.
//! Outputs below the dust limit are dropped and their value joins the fee.

use serde::{Deserialize, Serialize};

use super::{ChannelError, ChannelState};
use crate::chain_sim::{
    Outpoint, Sat, SimTx, SpendCondition, TxIn, TxOut, Witness, CLOSE_TX_FEE, DUST_LIMIT,
    OPEN_TX_FEE, OTHER_TX_FEE,
};
use crate::ecdsa::sign_with_nonce;
use crate::group::{hash_to_scalar, scalar_to_bytes, Point, Scalar};

/// `P + H(P ‖ "rev")·G`.
pub fn revocation_pubkey(point: &Point) -> Point {
    *point + Point::mul_base(&revocation_tweak(point))
}

/// Private key for [`revocation_pubkey`] given the commitment secret.
pub fn revocation_secret(secret: &Scalar) -> Scalar {
    secret + revocation_tweak(&Point::mul_base(secret))
}

fn revocation_tweak(point: &Point) -> Scalar {
    hash_to_scalar(&[b"lngate/revocation", &point.to_bytes(), b"rev"])
}

/// Keys and funding reference shared by every commitment of a channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitmentContext {
    pub funding: Outpoint,
    pub iot_key: Point,
    pub gateway_key: Point,
    pub bridge_key: Point,
    pub to_self_delay: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputRole {
    Iot,
    Bridge,
    Htlc,
    GatewayFees,
}

/// Who pays the on-chain fee of a close.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeePayer {
    Iot,
    Gateway,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CommitmentTx {
    pub state_num: u64,
    pub tx: SimTx,
    /// Role of each output, aligned with `tx.outputs`.
    pub roles: Vec<OutputRole>,
}

impl CommitmentTx {
    pub fn amount_of(&self, role: OutputRole) -> Sat {
        self.tx
            .outputs
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == role)
            .map(|(o, _)| o.amount)
            .sum()
    }

    pub fn vout_of(&self, role: OutputRole) -> Option<u32> {
        self.roles.iter().position(|r| *r == role).map(|i| i as u32)
    }

    pub fn output(&self, role: OutputRole) -> Option<&TxOut> {
        self.vout_of(role).map(|v| &self.tx.outputs[v as usize])
    }

    /// Message the threshold HTLC signature commits to.
    pub fn htlc_sig_message(&self, payment_hash: &[u8; 32]) -> Vec<u8> {
        let mut m = b"lngate/htlc-sig".to_vec();
        m.extend_from_slice(&self.tx.txid().0);
        m.extend_from_slice(payment_hash);
        m
    }
}

struct Layout {
    outputs: Vec<TxOut>,
    roles: Vec<OutputRole>,
    dust: Sat,
}

impl Layout {
    fn new() -> Self {
        Layout {
            outputs: vec![],
            roles: vec![],
            dust: 0,
        }
    }

    fn push(&mut self, role: OutputRole, amount: Sat, condition: SpendCondition) {
        if amount < DUST_LIMIT {
            self.dust += amount;
        } else {
            self.outputs.push(TxOut { amount, condition });
            self.roles.push(role);
        }
    }
}

fn deduct(amount: Sat, payer: Option<FeePayer>, who: FeePayer, fee: Sat) -> Sat {
    if payer == Some(who) {
        amount - fee
    } else {
        amount
    }
}

fn fee_check(state: &ChannelState, payer: Option<FeePayer>) -> Result<Sat, ChannelError> {
    match payer {
        None => Ok(0),
        Some(FeePayer::Iot) if state.iot_balance < CLOSE_TX_FEE => {
            Err(ChannelError::InsufficientFunds {
                needed: CLOSE_TX_FEE,
                available: state.iot_balance,
            })
        }
        Some(FeePayer::Gateway) if state.gateway_fee_balance < CLOSE_TX_FEE => {
            Err(ChannelError::InsufficientFeeBalance {
                needed: CLOSE_TX_FEE,
                available: state.gateway_fee_balance,
            })
        }
        Some(_) => Ok(CLOSE_TX_FEE),
    }
}

fn htlc_condition(ctx: &CommitmentContext, h: &super::Htlc) -> SpendCondition {
    SpendCondition::HtlcOffered {
        payment_hash: h.payment_hash,
        recipient: ctx.bridge_key,
        refund: ctx.iot_key,
        timeout: h.timeout,
    }
}

/// The gateway's commitment for `state`, revocable through `point`.
/// With `payer` set, the close fee is taken from that party's output.
pub fn build_gateway_commitment(
    ctx: &CommitmentContext,
    state: &ChannelState,
    point: &Point,
    payer: Option<FeePayer>,
) -> Result<CommitmentTx, ChannelError> {
    let fee = fee_check(state, payer)?;
    let mut l = Layout::new();
    l.push(
        OutputRole::Iot,
        deduct(state.iot_balance, payer, FeePayer::Iot, fee),
        SpendCondition::KeySpend { owner: ctx.iot_key },
    );
    l.push(
        OutputRole::Bridge,
        state.bridge_balance,
        SpendCondition::KeySpend {
            owner: ctx.bridge_key,
        },
    );
    for h in &state.pending_htlcs {
        l.push(OutputRole::Htlc, h.amount, htlc_condition(ctx, h));
    }
    l.push(
        OutputRole::GatewayFees,
        deduct(state.gateway_fee_balance, payer, FeePayer::Gateway, fee),
        SpendCondition::RevocableDelayed {
            owner: ctx.gateway_key,
            delay: ctx.to_self_delay,
            revocation: revocation_pubkey(point),
        },
    );
    Ok(finish(ctx, state.state_num, l, fee))
}

/// The bridge's commitment for `state`, revocable through the bridge's
/// own commitment point.
pub fn build_bridge_commitment(
    ctx: &CommitmentContext,
    state: &ChannelState,
    bridge_point: &Point,
) -> CommitmentTx {
    let mut l = Layout::new();
    l.push(
        OutputRole::Bridge,
        state.bridge_balance,
        SpendCondition::RevocableDelayed {
            owner: ctx.bridge_key,
            delay: ctx.to_self_delay,
            revocation: revocation_pubkey(bridge_point),
        },
    );
    l.push(
        OutputRole::Iot,
        state.iot_balance,
        SpendCondition::KeySpend { owner: ctx.iot_key },
    );
    for h in &state.pending_htlcs {
        l.push(OutputRole::Htlc, h.amount, htlc_condition(ctx, h));
    }
    l.push(
        OutputRole::GatewayFees,
        state.gateway_fee_balance,
        SpendCondition::KeySpend {
            owner: ctx.gateway_key,
        },
    );
    finish(ctx, state.state_num, l, 0)
}

fn finish(ctx: &CommitmentContext, state_num: u64, l: Layout, fee: Sat) -> CommitmentTx {
    let mut tx = SimTx::new(vec![TxIn::unsigned(ctx.funding)], l.outputs, fee + l.dust);
    tx.nonce = state_num;
    CommitmentTx {
        state_num,
        tx,
        roles: l.roles,
    }
}

/// Mutual close paying every balance to its owner's plain key.
pub fn build_closing_tx(
    ctx: &CommitmentContext,
    state: &ChannelState,
    payer: FeePayer,
) -> Result<CommitmentTx, ChannelError> {
    state.check_close(payer)?;
    let fee = CLOSE_TX_FEE;
    let mut l = Layout::new();
    l.push(
        OutputRole::Iot,
        deduct(state.iot_balance, Some(payer), FeePayer::Iot, fee),
        SpendCondition::KeySpend { owner: ctx.iot_key },
    );
    l.push(
        OutputRole::Bridge,
        state.bridge_balance,
        SpendCondition::KeySpend {
            owner: ctx.bridge_key,
        },
    );
    l.push(
        OutputRole::GatewayFees,
        deduct(
            state.gateway_fee_balance,
            Some(payer),
            FeePayer::Gateway,
            fee,
        ),
        SpendCondition::KeySpend {
            owner: ctx.gateway_key,
        },
    );
    let mut c = finish(ctx, state.state_num, l, fee);
    c.tx.nonce = u64::MAX;
    Ok(c)
}

/// Funding transaction spending an IoT-owned UTXO: output 0 locks
/// `capacity` under the joint key, output 1 (if not dust) returns change.
pub fn build_funding_tx(
    utxo: Outpoint,
    utxo_amount: Sat,
    capacity: Sat,
    joint_key: &Point,
    change_key: &Point,
) -> Result<SimTx, ChannelError> {
    let needed = capacity + OPEN_TX_FEE;
    if utxo_amount < needed {
        return Err(ChannelError::InsufficientFunds {
            needed,
            available: utxo_amount,
        });
    }
    let mut outputs = vec![TxOut {
        amount: capacity,
        condition: SpendCondition::ThresholdFunding { joint: *joint_key },
    }];
    let change = utxo_amount - needed;
    let mut fee = OPEN_TX_FEE;
    if change >= DUST_LIMIT {
        outputs.push(TxOut {
            amount: change,
            condition: SpendCondition::KeySpend { owner: *change_key },
        });
    } else {
        fee += change;
    }
    Ok(SimTx::new(vec![TxIn::unsigned(utxo)], outputs, fee))
}

/// Sweeps every output of `revoked` whose revocation key derives from
/// `secret` to `sweep_to`. Fails with `NotRevoked` when `secret` does not
/// match any revocable output.
pub fn build_penalty_tx(
    revoked: &SimTx,
    secret: &Scalar,
    sweep_to: &Point,
) -> Result<SimTx, ChannelError> {
    let rev_pub = revocation_pubkey(&Point::mul_base(secret));
    let txid = revoked.txid();
    let mut inputs = vec![];
    let mut total: Sat = 0;
    for (vout, out) in revoked.outputs.iter().enumerate() {
        if let SpendCondition::RevocableDelayed { revocation, .. } = out.condition {
            if revocation == rev_pub {
                inputs.push(TxIn::unsigned(Outpoint::new(txid, vout as u32)));
                total += out.amount;
            }
        }
    }
    if inputs.is_empty() {
        return Err(ChannelError::NotRevoked);
    }
    if total < OTHER_TX_FEE + DUST_LIMIT {
        return Err(ChannelError::AmountTooSmall);
    }
    let mut tx = SimTx::new(
        inputs,
        vec![TxOut {
            amount: total - OTHER_TX_FEE,
            condition: SpendCondition::KeySpend { owner: *sweep_to },
        }],
        OTHER_TX_FEE,
    );
    let rev_secret = revocation_secret(secret);
    let digest = tx.digest();
    let nonce = hash_to_scalar(&[
        b"lngate/penalty-nonce",
        &scalar_to_bytes(&rev_secret),
        &digest,
    ]);
    let sig = sign_with_nonce(&rev_secret, &digest, &nonce).ok_or(ChannelError::NotRevoked)?;
    for i in &mut tx.inputs {
        i.witness = Some(Witness::RevocationSig { sig });
    }
    Ok(tx)
}
