//! The bridge node: an ordinary channel peer. It only speaks the peer
//! protocol subset and checks signatures with the plain ECDSA verifier,
//! so nothing here depends on how the gateway produces its signatures.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ChannelStatus, NodeError};
use crate::chain_sim::{
    Outpoint, Sat, SimChain, SimTx, SpendCondition, TxIn, TxOut, Witness, OTHER_TX_FEE,
};
use crate::channel::{
    build_bridge_commitment, build_closing_tx, build_gateway_commitment, build_penalty_tx,
    ChannelParams, ChannelState, CommitmentContext, CommitmentSecrets, CommitmentTx, FeePayer,
    NodeId, RevocationStore,
};
use crate::ecdsa::{verify_standard, EcdsaSignature, SigningKey};
use crate::group::Point;
use crate::wire::Message;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeBehavior {
    #[default]
    Honest,
    /// On its adversarial turn, broadcasts its own commitment for this state.
    BroadcastRevoked(u64),
}

#[derive(Clone, Debug)]
pub struct BridgeChannel {
    pub params: ChannelParams,
    pub funding_key: Point,
    pub iot_key: Point,
    pub gateway_key: Point,
    pub ctx: Option<CommitmentContext>,
    /// Every agreed state, indexed by state number.
    pub states: Vec<ChannelState>,
    pub proposed: Option<ChannelState>,
    /// Our commitments with the funding signature we received for each.
    pub own_commitments: Vec<(CommitmentTx, EcdsaSignature)>,
    /// Gateway commitments we signed.
    pub gateway_commitments: Vec<CommitmentTx>,
    pub gateway_points: RevocationStore,
    pub status: ChannelStatus,
}

impl BridgeChannel {
    pub fn current(&self) -> &ChannelState {
        self.states.last().expect("channel has state 0")
    }
}

pub struct BridgeNode {
    key: SigningKey,
    secrets: CommitmentSecrets,
    pub(crate) behavior: BridgeBehavior,
    pub(crate) offline_until: u64,
    peers: BTreeSet<NodeId>,
    pub(crate) channel: Option<BridgeChannel>,
    preimages: BTreeMap<[u8; 32], [u8; 32]>,
    forwarding_fees: Sat,
    /// Transactions this node broadcast while watching the chain.
    pub(crate) sweeps: Vec<SimTx>,
}

impl BridgeNode {
    pub fn new(key: SigningKey, secrets_seed: [u8; 32], behavior: BridgeBehavior) -> Self {
        BridgeNode {
            key,
            secrets: CommitmentSecrets::new(secrets_seed),
            behavior,
            offline_until: 0,
            peers: BTreeSet::new(),
            channel: None,
            preimages: BTreeMap::new(),
            forwarding_fees: 0,
            sweeps: vec![],
        }
    }

    pub fn id(&self) -> NodeId {
        NodeId(self.key.public())
    }

    pub fn key(&self) -> Point {
        self.key.public()
    }

    /// Registers a node the bridge has an outgoing channel to.
    pub fn add_peer(&mut self, peer: NodeId) {
        self.peers.insert(peer);
    }

    pub fn channel(&self) -> Option<&BridgeChannel> {
        self.channel.as_ref()
    }

    pub fn forwarding_fees(&self) -> Sat {
        self.forwarding_fees
    }

    pub fn sweeps(&self) -> &[SimTx] {
        &self.sweeps
    }

    pub fn is_online(&self, height: u64) -> bool {
        height >= self.offline_until
    }

    fn chan(&mut self) -> Result<&mut BridgeChannel, NodeError> {
        self.channel.as_mut().ok_or(NodeError::NoChannel)
    }

    /// Handles one peer message and returns the reply, if any.
    pub fn handle(&mut self, msg: Message, chain: &SimChain) -> Result<Option<Message>, NodeError> {
        match msg {
            Message::OpenChannel {
                funding_pubkey,
                capacity,
                iot_payout_key,
                gateway_payout_key,
                to_self_delay,
            } => {
                if self.channel.is_some() {
                    return Err(NodeError::BridgeRejected("channel already exists".into()));
                }
                if capacity == 0 || funding_pubkey.is_identity() {
                    return Err(NodeError::BridgeRejected("bad channel parameters".into()));
                }
                let mut params = ChannelParams::new(capacity, 0);
                params.to_self_delay = to_self_delay;
                self.channel = Some(BridgeChannel {
                    params,
                    funding_key: funding_pubkey,
                    iot_key: iot_payout_key,
                    gateway_key: gateway_payout_key,
                    ctx: None,
                    states: vec![ChannelState::open(capacity)],
                    proposed: None,
                    own_commitments: vec![],
                    gateway_commitments: vec![],
                    gateway_points: RevocationStore::new(),
                    status: ChannelStatus::Opening,
                });
                Ok(Some(Message::AcceptChannel {
                    payout_key: self.key.public(),
                    first_commitment_point: self.secrets.point(0),
                }))
            }
            Message::FundingCreated {
                funding_outpoint,
                signature,
                commitment_point,
            } => {
                let bridge_key = self.key.public();
                let b0 = self.secrets.point(0);
                let c = self.chan()?;
                let ctx = CommitmentContext {
                    funding: funding_outpoint,
                    iot_key: c.iot_key,
                    gateway_key: c.gateway_key,
                    bridge_key,
                    to_self_delay: c.params.to_self_delay,
                };
                let own = build_bridge_commitment(&ctx, c.current(), &b0);
                if !verify_standard(&c.funding_key, &own.tx.digest(), &signature) {
                    return Err(NodeError::BadPeerSignature);
                }
                c.gateway_points.record_point(0, commitment_point);
                let theirs = build_gateway_commitment(&ctx, c.current(), &commitment_point, None)?;
                c.ctx = Some(ctx);
                c.own_commitments.push((own, signature));
                let sig = self.key.sign(&theirs.tx.digest());
                self.chan()?.gateway_commitments.push(theirs);
                Ok(Some(Message::FundingSigned { signature: sig }))
            }
            Message::FundingLocked {
                next_commitment_point,
            } => {
                let b1 = self.secrets.point(1);
                let c = self.chan()?;
                let ctx = c.ctx.ok_or(NodeError::NoChannel)?;
                let funded = chain.utxo(&ctx.funding).is_some_and(|u| {
                    u.output.amount == c.params.capacity
                        && u.output.condition
                            == (SpendCondition::ThresholdFunding {
                                joint: c.funding_key,
                            })
                });
                if !funded || chain.confirmations(&ctx.funding.txid) < c.params.confirmation_depth {
                    return Err(NodeError::FundingTimeout(
                        chain.confirmations(&ctx.funding.txid),
                    ));
                }
                c.gateway_points.record_point(1, next_commitment_point);
                c.status = ChannelStatus::Active;
                Ok(Some(Message::FundingLocked {
                    next_commitment_point: b1,
                }))
            }
            Message::UpdateAddHtlc {
                amount,
                payment_hash,
                timeout,
                route,
                service_fee,
            } => {
                let height = chain.height();
                let c = self.chan()?;
                let destination = *route.last().ok_or(NodeError::RouteFailure)?;
                let base = c.proposed.as_ref().unwrap_or(c.current()).clone();
                let mut params = c.params;
                params.htlc_timeout = timeout.saturating_sub(height);
                let (next, _) = base.apply_payment_with_fee(
                    &params,
                    amount + service_fee,
                    service_fee,
                    payment_hash,
                    destination,
                    height,
                )?;
                c.proposed = Some(next);
                Ok(None)
            }
            Message::CommitmentSigned {
                signature,
                htlc_signatures,
            } => {
                let n = self.chan()?.current().state_num;
                let point = self.secrets.point(n + 1);
                let c = self.chan()?;
                let ctx = c.ctx.ok_or(NodeError::NoChannel)?;
                let next = c.proposed.clone().ok_or(NodeError::Unexpected {
                    got: "commitment_signed".into(),
                    wanted: "an update first",
                })?;
                let own = build_bridge_commitment(&ctx, &next, &point);
                if !verify_standard(&c.funding_key, &own.tx.digest(), &signature)
                    || htlc_signatures.len() != next.pending_htlcs.len()
                {
                    return Err(NodeError::BadPeerSignature);
                }
                for (h, s) in next.pending_htlcs.iter().zip(&htlc_signatures) {
                    if !verify_standard(&c.funding_key, &own.htlc_sig_message(&h.payment_hash), s) {
                        return Err(NodeError::BadPeerSignature);
                    }
                }
                c.own_commitments.push((own, signature));
                let secret = self.secrets.reveal(n, n + 1)?;
                Ok(Some(Message::RevokeAndAck {
                    commitment_secret: secret,
                    next_commitment_point: self.secrets.point(n + 2),
                }))
            }
            Message::RevokeAndAck {
                commitment_secret,
                next_commitment_point,
            } => {
                let c = self.chan()?;
                let next = c.proposed.take().ok_or(NodeError::Unexpected {
                    got: "revoke_and_ack".into(),
                    wanted: "an update first",
                })?;
                let n = c.current().state_num;
                c.gateway_points.insert_secret(n, commitment_secret)?;
                c.gateway_points.record_point(n + 2, next_commitment_point);
                c.states.push(next);
                Ok(None)
            }
            Message::Shutdown => {
                let c = self.chan()?;
                if !c.current().pending_htlcs.is_empty() {
                    return Err(NodeError::Channel(
                        crate::channel::ChannelError::PendingHtlcs,
                    ));
                }
                Ok(Some(Message::Shutdown))
            }
            Message::ClosingSigned { fee, signature } => {
                let c = self.chan()?;
                let ctx = c.ctx.ok_or(NodeError::NoChannel)?;
                let state = c.current().clone();
                let funding_key = c.funding_key;
                let tx = [FeePayer::Iot, FeePayer::Gateway]
                    .into_iter()
                    .filter_map(|p| build_closing_tx(&ctx, &state, p).ok())
                    .find(|t| {
                        t.tx.fee == fee && verify_standard(&funding_key, &t.tx.digest(), &signature)
                    })
                    .ok_or(NodeError::BadPeerSignature)?;
                Ok(Some(Message::ClosingSigned {
                    fee,
                    signature: self.key.sign(&tx.tx.digest()),
                }))
            }
            other => Err(NodeError::Unexpected {
                got: other.name().into(),
                wanted: "a peer message",
            }),
        }
    }

    /// Our `commitment_signed` for the gateway's next commitment, sent after
    /// revoking our previous state.
    pub fn sign_gateway_commitment(&mut self) -> Result<Message, NodeError> {
        let c = self.chan()?;
        let ctx = c.ctx.ok_or(NodeError::NoChannel)?;
        let next = c.proposed.clone().ok_or(NodeError::NoChannel)?;
        let point = c
            .gateway_points
            .point(next.state_num)
            .ok_or(NodeError::NoChannel)?;
        let theirs = build_gateway_commitment(&ctx, &next, &point, None)?;
        let htlc_signatures = next
            .pending_htlcs
            .iter()
            .map(|h| self.key.sign(&theirs.htlc_sig_message(&h.payment_hash)))
            .collect();
        let signature = self.key.sign(&theirs.tx.digest());
        self.chan()?.gateway_commitments.push(theirs);
        Ok(Message::CommitmentSigned {
            signature,
            htlc_signatures,
        })
    }

    /// Drops an update that was never committed (peer reconnect).
    pub fn discard_proposed(&mut self) {
        if let Some(c) = self.channel.as_mut() {
            c.proposed = None;
        }
    }

    /// Forwards a committed HTLC one hop. Returns the destination and the
    /// amount it receives, or `None` if the bridge has no route.
    pub fn forward(&mut self, payment_hash: &[u8; 32]) -> Option<(NodeId, Sat)> {
        let c = self.channel.as_ref()?;
        let h = c
            .current()
            .pending_htlcs
            .iter()
            .find(|h| h.payment_hash == *payment_hash)?;
        if !self.peers.contains(&h.destination) || h.amount <= c.params.base_fee {
            return None;
        }
        let base_fee = c.params.base_fee;
        self.forwarding_fees += base_fee;
        Some((h.destination, h.amount - base_fee))
    }

    pub fn learn_preimage(&mut self, payment_hash: [u8; 32], preimage: [u8; 32]) {
        self.preimages.insert(payment_hash, preimage);
    }

    /// Stages the settlement of an HTLC whose preimage the bridge knows.
    pub fn stage_settle(&mut self, payment_hash: &[u8; 32]) -> Result<(), NodeError> {
        let preimage = *self
            .preimages
            .get(payment_hash)
            .ok_or(NodeError::Unexpected {
                got: "settle".into(),
                wanted: "a known preimage",
            })?;
        let c = self.chan()?;
        if c.proposed.is_some() || c.status != ChannelStatus::Active {
            return Err(NodeError::NoChannel);
        }
        c.proposed = Some(c.current().settle_htlc(&preimage)?);
        Ok(())
    }

    /// Stages the failure of an HTLC that expired without a route.
    pub fn next_fail(&mut self, height: u64) -> Option<Message> {
        let c = self.channel.as_mut()?;
        if c.proposed.is_some() || c.status != ChannelStatus::Active {
            return None;
        }
        let hash = c
            .current()
            .pending_htlcs
            .iter()
            .find(|h| height >= h.timeout && !self.preimages.contains_key(&h.payment_hash))?
            .payment_hash;
        c.proposed = Some(c.current().fail_htlc(&hash, height).ok()?);
        Some(Message::UpdateFailHtlc { payment_hash: hash })
    }

    /// Fully signed commitment for `state`, ready to broadcast.
    pub fn signed_commitment(&self, state: u64) -> Option<SimTx> {
        let c = self.channel.as_ref()?;
        let (commit, sig) = c.own_commitments.get(state as usize)?;
        let mut tx = commit.tx.clone();
        tx.inputs[0].witness = Some(Witness::Sig {
            pubkey: c.funding_key,
            sig: *sig,
        });
        Some(tx)
    }

    /// Unilateral close at the latest state.
    pub fn close(&mut self) -> Result<SimTx, NodeError> {
        let c = self.channel.as_ref().ok_or(NodeError::NoChannel)?;
        let n = c.current().state_num;
        self.signed_commitment(n).ok_or(NodeError::NoChannel)
    }

    /// The configured misbehaviour, if any.
    pub fn cheat(&self) -> Option<SimTx> {
        match self.behavior {
            BridgeBehavior::BroadcastRevoked(n) => self.signed_commitment(n),
            BridgeBehavior::Honest => None,
        }
    }

    /// Watches the chain after a block: penalizes revoked gateway
    /// commitments and claims HTLC outputs it knows preimages for.
    pub fn on_block(&mut self, chain: &SimChain) -> Vec<SimTx> {
        if !self.is_online(chain.height()) {
            return vec![];
        }
        let key = self.key.clone();
        let Some(c) = self.channel.as_mut() else {
            return vec![];
        };
        let Some(ctx) = c.ctx else { return vec![] };
        let Some(spender) = chain.spender_of(&ctx.funding).cloned() else {
            return vec![];
        };
        if !matches!(c.status, ChannelStatus::Closed { .. }) {
            c.status = ChannelStatus::Closed {
                reason: "funding spent".into(),
            };
        }
        let mut out = vec![];
        let penalty = c
            .gateway_points
            .revoked_states()
            .filter_map(|n| c.gateway_points.secret(n).ok())
            .find_map(|s| build_penalty_tx(&spender, &s, &key.public()).ok());
        if let Some(tx) = penalty {
            out.push(tx);
        }
        let txid = spender.txid();
        for (vout, o) in spender.outputs.iter().enumerate() {
            if let SpendCondition::HtlcOffered {
                payment_hash,
                recipient,
                ..
            } = o.condition
            {
                let Some(preimage) = self.preimages.get(&payment_hash) else {
                    continue;
                };
                if recipient != key.public() || o.amount <= OTHER_TX_FEE {
                    continue;
                }
                let mut tx = SimTx::new(
                    vec![TxIn::unsigned(Outpoint::new(txid, vout as u32))],
                    vec![TxOut {
                        amount: o.amount - OTHER_TX_FEE,
                        condition: SpendCondition::KeySpend {
                            owner: key.public(),
                        },
                    }],
                    OTHER_TX_FEE,
                );
                let sig = key.sign(&tx.digest());
                tx.inputs[0].witness = Some(Witness::Preimage {
                    preimage: *preimage,
                    sig,
                });
                out.push(tx);
            }
        }
        // our own commitment: collect the delayed output once it matures
        for (vout, o) in spender.outputs.iter().enumerate() {
            let SpendCondition::RevocableDelayed { owner, delay, .. } = o.condition else {
                continue;
            };
            if owner != key.public()
                || o.amount <= OTHER_TX_FEE
                || chain.confirmations(&txid) < u64::from(delay)
            {
                continue;
            }
            let mut tx = SimTx::new(
                vec![TxIn::unsigned(Outpoint::new(txid, vout as u32))],
                vec![TxOut {
                    amount: o.amount - OTHER_TX_FEE,
                    condition: SpendCondition::KeySpend { owner },
                }],
                OTHER_TX_FEE,
            );
            let sig = key.sign(&tx.digest());
            tx.inputs[0].witness = Some(Witness::Sig { pubkey: owner, sig });
            out.push(tx);
        }
        out.retain(|tx| chain.validate(tx).is_ok());
        self.sweeps.extend(out.iter().cloned());
        out
    }
}
