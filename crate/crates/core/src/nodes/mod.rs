//! The four actors and the flows that connect them.
//!
//! [`Simulation`] owns every actor plus the chain and moves messages
//! between them in a fixed order, so a seed fully determines a run. IoT
//! traffic goes through real encrypted frames; gateway ↔ bridge traffic is
//! encoded and decoded but travels in the clear.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_sim::{ChainError, Sat};
use crate::channel::ChannelError;
use crate::codec::DecodeError;
use crate::threshold_ecdsa::ThresholdError;
use crate::wire::WireError;

mod bridge;
mod destination;
mod gateway;
mod iot;
mod sim;

pub use bridge::{BridgeBehavior, BridgeChannel, BridgeNode};
pub use destination::DestinationNode;
pub use gateway::{Gateway, GatewayBehavior, GatewayChannel};
pub use iot::{IotDevice, ServeError};
pub use sim::{FlowRecord, PaymentOutcome, PaymentStatus, SimConfig, Simulation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NodeError {
    #[error("threshold keygen failed: {0}")]
    KeygenFailed(ThresholdError),
    #[error("bridge rejected the channel: {0}")]
    BridgeRejected(String),
    #[error("funding transaction not confirmed after {0} blocks")]
    FundingTimeout(u64),
    #[error("destination unknown to the bridge; payment left pending")]
    RouteFailure,
    #[error("gateway ignored the request")]
    UncooperativeGateway,
    #[error("IoT link disconnected")]
    Disconnected,
    #[error("{0:?} is offline")]
    Offline(Actor),
    #[error("no usable channel")]
    NoChannel,
    #[error("unexpected message {got} (wanted {wanted})")]
    Unexpected { got: String, wanted: &'static str },
    #[error("peer signature did not verify")]
    BadPeerSignature,
    #[error("commitment index {got} out of order (expected {expected})")]
    DeriveOutOfOrder { got: u32, expected: u32 },
    #[error("honest gateway asked to sign state {0} twice")]
    DoubleSign(u64),
    #[error("invoice amount mismatch")]
    InvoiceMismatch,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

impl From<DecodeError> for NodeError {
    fn from(e: DecodeError) -> Self {
        NodeError::Wire(WireError::Malformed(e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Iot,
    Gateway,
    Bridge,
    Destination,
}

/// One message (or local action, when `from == to`) in the run log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    /// Index into [`Simulation::flows`].
    pub flow: usize,
    /// Protocol step this event belongs to; `None` for unnumbered traffic.
    pub step: Option<u8>,
    pub from: Actor,
    pub to: Actor,
    pub name: String,
    /// Frame size on the IoT link, payload size elsewhere, 0 for local steps.
    pub bytes: usize,
}

impl TraceEvent {
    pub fn is_iot_leg(&self) -> bool {
        matches!(
            (self.from, self.to),
            (Actor::Iot, Actor::Gateway) | (Actor::Gateway, Actor::Iot)
        )
    }

    pub fn is_local(&self) -> bool {
        self.from == self.to
    }
}

/// Lifecycle of a channel as seen by one node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelStatus {
    Opening,
    Active,
    Closed { reason: String },
}

/// Per-actor on-chain holdings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Holdings {
    pub iot: Sat,
    pub gateway: Sat,
    pub bridge: Sat,
}
