//! Deterministic in-memory blockchain.
//!
//! Broadcast validates every input against the confirmed UTXO set and the
//! current tip height, mempool order is FIFO, and blocks are mined only on
//! request. Signatures in witnesses are standard ECDSA over the 32-byte
//! transaction digest.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::ecdsa::verify_standard;
use crate::group::{sha256, Point};

mod tx;

pub(crate) use tx::hex_32;
pub use tx::{
    decode_condition, encode_condition, Outpoint, Sat, SimTx, SpendCondition, TxIn, TxOut, Txid,
    Witness, COIN,
};

pub const OPEN_TX_FEE: Sat = 222;
pub const CLOSE_TX_FEE: Sat = 183;
pub const OTHER_TX_FEE: Sat = 150;
pub const DUST_LIMIT: Sat = 546;
pub const DEFAULT_TO_SELF_DELAY: u32 = 144;
pub const DEFAULT_HTLC_TIMEOUT: u64 = 40;
pub const DEFAULT_CONFIRMATION_DEPTH: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("input {0} witness does not satisfy its spend condition")]
    BadWitness(usize),
    #[error("unknown outpoint {0}")]
    UnknownOutpoint(Outpoint),
    #[error("outpoint {0} already spent")]
    DoubleSpend(Outpoint),
    #[error("input {0} spent before its timelock")]
    PrematureSpend(usize),
    #[error("outputs plus fee exceed inputs")]
    ValueOverflow,
    #[error("transaction has no inputs")]
    NoInputs,
}

/// Evaluation context for one input.
#[derive(Clone, Copy, Debug)]
pub struct SpendContext {
    /// Current tip height.
    pub height: u64,
    /// Confirmations of the transaction that created the spent output.
    pub confirmations: u64,
    /// Digest of the spending transaction.
    pub digest: [u8; 32],
}

/// Reason-carrying predicate evaluation. `Err(PrematureSpend)` when the
/// witness is otherwise correct but a timelock has not elapsed.
pub fn check_spend(
    cond: &SpendCondition,
    wit: &Witness,
    ctx: &SpendContext,
    input: usize,
) -> Result<(), ChainError> {
    let sig_ok = |key: &Point, sig| verify_standard(key, &ctx.digest, sig);
    let bad = Err(ChainError::BadWitness(input));
    match (cond, wit) {
        (SpendCondition::KeySpend { owner }, Witness::Sig { pubkey, sig })
        | (SpendCondition::ThresholdFunding { joint: owner }, Witness::Sig { pubkey, sig }) => {
            if pubkey == owner && sig_ok(owner, sig) {
                Ok(())
            } else {
                bad
            }
        }
        (SpendCondition::DelayedKeySpend { owner, delay }, Witness::Sig { pubkey, sig })
        | (SpendCondition::RevocableDelayed { owner, delay, .. }, Witness::Sig { pubkey, sig }) => {
            if pubkey != owner || !sig_ok(owner, sig) {
                bad
            } else if ctx.confirmations < u64::from(*delay) {
                Err(ChainError::PrematureSpend(input))
            } else {
                Ok(())
            }
        }
        (SpendCondition::RevocableDelayed { revocation, .. }, Witness::RevocationSig { sig }) => {
            if sig_ok(revocation, sig) {
                Ok(())
            } else {
                bad
            }
        }
        (
            SpendCondition::HtlcOffered {
                payment_hash,
                recipient,
                ..
            },
            Witness::Preimage { preimage, sig },
        ) => {
            if sha256(preimage) == *payment_hash && sig_ok(recipient, sig) {
                Ok(())
            } else {
                bad
            }
        }
        (
            SpendCondition::HtlcOffered {
                refund, timeout, ..
            },
            Witness::Timeout { sig },
        ) => {
            if !sig_ok(refund, sig) {
                bad
            } else if ctx.height < *timeout {
                Err(ChainError::PrematureSpend(input))
            } else {
                Ok(())
            }
        }
        _ => bad,
    }
}

/// Pure predicate: does `wit` satisfy `cond` in `ctx`?
pub fn verify_witness(cond: &SpendCondition, wit: &Witness, ctx: &SpendContext) -> bool {
    check_spend(cond, wit, ctx, 0).is_ok()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct UtxoEntry {
    pub output: TxOut,
    /// Height of the block that confirmed the creating transaction.
    pub height: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Block {
    pub height: u64,
    pub txs: Vec<SimTx>,
}

#[derive(Clone, Debug, Default)]
pub struct SimChain {
    blocks: Vec<Block>,
    utxos: BTreeMap<Outpoint, UtxoEntry>,
    spent: BTreeSet<Outpoint>,
    mempool: Vec<SimTx>,
    mempool_spends: BTreeSet<Outpoint>,
    inclusion: HashMap<Txid, u64>,
    minted: Sat,
    fees: Sat,
    faucet_nonce: u64,
}

impl SimChain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of mined blocks; the tip.
    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        height
            .checked_sub(1)
            .and_then(|i| self.blocks.get(i as usize))
    }

    pub fn mempool(&self) -> &[SimTx] {
        &self.mempool
    }

    /// Queues a coinbase paying `amount` to `owner`; it confirms with the
    /// next mined block.
    pub fn faucet(&mut self, owner: Point, amount: Sat) -> Outpoint {
        self.faucet_nonce += 1;
        let tx = SimTx {
            inputs: vec![],
            outputs: vec![TxOut {
                amount,
                condition: SpendCondition::KeySpend { owner },
            }],
            fee: 0,
            nonce: self.faucet_nonce,
        };
        let op = tx.outpoint(0);
        self.mempool.push(tx);
        op
    }

    pub fn confirmations(&self, txid: &Txid) -> u64 {
        match self.inclusion.get(txid) {
            Some(h) => self.height() - h + 1,
            None => 0,
        }
    }

    pub fn is_confirmed(&self, txid: &Txid) -> bool {
        self.inclusion.contains_key(txid)
    }

    pub fn utxo(&self, op: &Outpoint) -> Option<&UtxoEntry> {
        self.utxos.get(op)
    }

    pub fn utxos(&self) -> impl Iterator<Item = (&Outpoint, &UtxoEntry)> {
        self.utxos.iter()
    }

    pub fn is_spent(&self, op: &Outpoint) -> bool {
        self.spent.contains(op)
    }

    /// Confirmed transaction by id.
    pub fn tx(&self, txid: &Txid) -> Option<&SimTx> {
        let h = self.inclusion.get(txid)?;
        self.block(*h)?.txs.iter().find(|t| t.txid() == *txid)
    }

    /// Confirmed transaction spending `op`, if any.
    pub fn spender_of(&self, op: &Outpoint) -> Option<&SimTx> {
        self.blocks
            .iter()
            .flat_map(|b| b.txs.iter())
            .find(|t| t.inputs.iter().any(|i| i.prevout == *op))
    }

    pub fn total_minted(&self) -> Sat {
        self.minted
    }

    pub fn total_fees(&self) -> Sat {
        self.fees
    }

    pub fn utxo_total(&self) -> Sat {
        self.utxos.values().map(|u| u.output.amount).sum()
    }

    /// Sum of confirmed outputs whose condition names `key` alone
    /// (`KeySpend`, `DelayedKeySpend`, or the owner arm of `RevocableDelayed`).
    pub fn balance_of(&self, key: &Point) -> Sat {
        self.utxos
            .values()
            .filter(|u| match u.output.condition {
                SpendCondition::KeySpend { owner }
                | SpendCondition::DelayedKeySpend { owner, .. }
                | SpendCondition::RevocableDelayed { owner, .. } => owner == *key,
                _ => false,
            })
            .map(|u| u.output.amount)
            .sum()
    }

    /// Validates `tx` against the confirmed UTXO set and queues it.
    pub fn broadcast(&mut self, tx: SimTx) -> Result<Txid, ChainError> {
        self.validate(&tx)?;
        for i in &tx.inputs {
            self.mempool_spends.insert(i.prevout);
        }
        let txid = tx.txid();
        self.mempool.push(tx);
        Ok(txid)
    }

    /// Checks `tx` without queuing it.
    pub fn validate(&self, tx: &SimTx) -> Result<(), ChainError> {
        if tx.inputs.is_empty() {
            return Err(ChainError::NoInputs);
        }
        let digest = tx.digest();
        let mut seen = BTreeSet::new();
        let mut input_total: Sat = 0;
        for (idx, input) in tx.inputs.iter().enumerate() {
            let op = input.prevout;
            if !seen.insert(op) || self.spent.contains(&op) || self.mempool_spends.contains(&op) {
                return Err(ChainError::DoubleSpend(op));
            }
            let entry = self.utxos.get(&op).ok_or(ChainError::UnknownOutpoint(op))?;
            let wit = input.witness.as_ref().ok_or(ChainError::BadWitness(idx))?;
            let ctx = SpendContext {
                height: self.height(),
                confirmations: self.height() - entry.height + 1,
                digest,
            };
            check_spend(&entry.output.condition, wit, &ctx, idx)?;
            input_total = input_total
                .checked_add(entry.output.amount)
                .ok_or(ChainError::ValueOverflow)?;
        }
        let needed = tx
            .output_total()
            .checked_add(tx.fee)
            .ok_or(ChainError::ValueOverflow)?;
        if needed > input_total {
            return Err(ChainError::ValueOverflow);
        }
        Ok(())
    }

    /// Mines every queued transaction in FIFO order; returns the new height.
    pub fn mine_block(&mut self) -> u64 {
        let height = self.height() + 1;
        let txs = std::mem::take(&mut self.mempool);
        self.mempool_spends.clear();
        for tx in &txs {
            let txid = tx.txid();
            let mut input_total = 0;
            for i in &tx.inputs {
                if let Some(e) = self.utxos.remove(&i.prevout) {
                    input_total += e.output.amount;
                }
                self.spent.insert(i.prevout);
            }
            if tx.is_coinbase() {
                self.minted += tx.output_total();
            } else {
                self.fees += input_total - tx.output_total();
            }
            for (vout, out) in tx.outputs.iter().enumerate() {
                self.utxos.insert(
                    Outpoint::new(txid, vout as u32),
                    UtxoEntry {
                        output: *out,
                        height,
                    },
                );
            }
            self.inclusion.insert(txid, height);
        }
        self.blocks.push(Block { height, txs });
        height
    }

    pub fn mine_blocks(&mut self, n: u64) -> u64 {
        for _ in 0..n {
            self.mine_block();
        }
        self.height()
    }

    /// JSON dump of blocks (with hex serializations) and the UTXO set.
    pub fn dump_json(&self) -> serde_json::Value {
        let blocks: Vec<_> = self
            .blocks
            .iter()
            .map(|b| {
                let txs: Vec<_> = b
                    .txs
                    .iter()
                    .map(|t| {
                        serde_json::json!({
                            "txid": t.txid().to_hex(),
                            "hex": hex::encode(t.to_bytes()),
                            "tx": t,
                        })
                    })
                    .collect();
                serde_json::json!({ "height": b.height, "txs": txs })
            })
            .collect();
        let utxos: Vec<_> = self
            .utxos
            .iter()
            .map(|(op, e)| {
                serde_json::json!({
                    "outpoint": op.to_string(),
                    "amount": e.output.amount,
                    "height": e.height,
                    "condition": e.output.condition,
                })
            })
            .collect();
        serde_json::json!({
            "height": self.height(),
            "minted": self.minted,
            "fees": self.fees,
            "blocks": blocks,
            "utxos": utxos,
        })
    }
}
