use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{ChannelStatus, NodeError};
use crate::chain_sim::{SimChain, SimTx, Txid, Witness};
use crate::channel::{
    build_penalty_tx, ChannelParams, ChannelState, CommitmentContext, CommitmentTx, NodeId,
    RevocationStore,
};
use crate::ecdsa::{EcdsaSignature, SigningKey};
use crate::group::{Point, Scalar};
use crate::threshold_ecdsa::ServerKey;
use crate::wire::WireSession;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayBehavior {
    #[default]
    Honest,
    /// On its adversarial turn, gets its commitment for this state signed
    /// and broadcasts it.
    BroadcastRevoked(u64),
    /// Ignores every IoT request once the channel is open.
    Ransom,
    /// Lets revoked bridge commitments confirm without a penalty.
    ColludeWithBridge,
}

/// A payment the gateway has offered and is waiting to hear back about.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PendingPayment {
    pub amount: u64,
    pub destination: NodeId,
}

#[derive(Clone, Debug)]
pub struct GatewayChannel {
    pub ctx: CommitmentContext,
    pub params: ChannelParams,
    pub funding_tx: SimTx,
    pub status: ChannelStatus,
    /// Every agreed state, indexed by state number.
    pub states: Vec<ChannelState>,
    /// Jointly derived commitment points, indexed by state number.
    pub points: Vec<Point>,
    /// Our commitments with the bridge's signature on each.
    pub own_commitments: Vec<(CommitmentTx, EcdsaSignature)>,
    /// Bridge commitments we signed, indexed by state number.
    pub bridge_commitments: Vec<CommitmentTx>,
    pub bridge_points: RevocationStore,
    pub payments: BTreeMap<[u8; 32], PendingPayment>,
    /// Preimages returned by the bridge, not yet settled.
    pub preimages: BTreeMap<[u8; 32], [u8; 32]>,
}

impl GatewayChannel {
    pub fn current(&self) -> &ChannelState {
        self.states.last().expect("channel has state 0")
    }

    pub fn is_active(&self) -> bool {
        self.status == ChannelStatus::Active
    }
}

/// The untrusted service node. Its threshold share alone cannot move
/// channel funds.
pub struct Gateway {
    pub(crate) key: SigningKey,
    pub(crate) link: WireSession,
    pub(crate) behavior: GatewayBehavior,
    pub(crate) params: ChannelParams,
    pub(crate) rng: ChaCha20Rng,
    pub(crate) server: Option<ServerKey>,
    pub(crate) channel: Option<GatewayChannel>,
    pub(crate) offline_until: u64,
    /// State number → digest of the bridge commitment we co-signed.
    pub(crate) signed_states: BTreeMap<u64, [u8; 32]>,
    pub(crate) sweeps: Vec<SimTx>,
    pub(crate) notified_close: bool,
}

impl Gateway {
    pub fn new(
        key: SigningKey,
        link: WireSession,
        params: ChannelParams,
        behavior: GatewayBehavior,
        rng: ChaCha20Rng,
    ) -> Self {
        Gateway {
            key,
            link,
            behavior,
            params,
            rng,
            server: None,
            channel: None,
            offline_until: 0,
            signed_states: BTreeMap::new(),
            sweeps: vec![],
            notified_close: false,
        }
    }

    pub fn key(&self) -> Point {
        self.key.public()
    }

    pub fn behavior(&self) -> GatewayBehavior {
        self.behavior
    }

    pub fn channel(&self) -> Option<&GatewayChannel> {
        self.channel.as_ref()
    }

    pub fn server_key(&self) -> Option<&ServerKey> {
        self.server.as_ref()
    }

    pub fn sweeps(&self) -> &[SimTx] {
        &self.sweeps
    }

    pub fn is_online(&self, height: u64) -> bool {
        height >= self.offline_until
    }

    pub(crate) fn chan(&self) -> Result<&GatewayChannel, NodeError> {
        self.channel.as_ref().ok_or(NodeError::NoChannel)
    }

    pub(crate) fn chan_mut(&mut self) -> Result<&mut GatewayChannel, NodeError> {
        self.channel.as_mut().ok_or(NodeError::NoChannel)
    }

    /// Records that we are about to co-sign the bridge commitment for
    /// `state`. An honest gateway never signs two different ones.
    pub(crate) fn note_signing(&mut self, state: u64, digest: [u8; 32]) -> Result<(), NodeError> {
        match self.signed_states.get(&state) {
            Some(d) if *d != digest && self.behavior == GatewayBehavior::Honest => {
                Err(NodeError::DoubleSign(state))
            }
            _ => {
                self.signed_states.insert(state, digest);
                Ok(())
            }
        }
    }

    /// Our commitment for `state` with the funding witness attached.
    pub(crate) fn finalize(tx: &CommitmentTx, joint: Point, sig: EcdsaSignature) -> SimTx {
        let mut t = tx.tx.clone();
        t.inputs[0].witness = Some(Witness::Sig { pubkey: joint, sig });
        t
    }

    /// Watches the chain after a block: penalizes revoked bridge
    /// commitments. Returns the penalty to broadcast, if any.
    pub fn on_block(&mut self, chain: &SimChain) -> Vec<SimTx> {
        if !self.is_online(chain.height()) || self.behavior == GatewayBehavior::ColludeWithBridge {
            return vec![];
        }
        let key = self.key.public();
        let Some(c) = self.channel.as_ref() else {
            return vec![];
        };
        let Some(spender) = chain.spender_of(&c.ctx.funding) else {
            return vec![];
        };
        let secrets: Vec<Scalar> = c
            .bridge_points
            .revoked_states()
            .filter_map(|n| c.bridge_points.secret(n).ok())
            .collect();
        let out: Vec<SimTx> = secrets
            .iter()
            .find_map(|s| build_penalty_tx(spender, s, &key).ok())
            .filter(|tx| chain.validate(tx).is_ok())
            .into_iter()
            .collect();
        self.sweeps.extend(out.iter().cloned());
        out
    }

    /// Txid of the transaction that spent the funding output, if any.
    pub fn closing_txid(&self, chain: &SimChain) -> Option<Txid> {
        let c = self.channel.as_ref()?;
        chain.spender_of(&c.ctx.funding).map(|t| t.txid())
    }
}
