//! Reference message sequences for the honest open and pay flows.
//!
//! Only step-labelled events are compared; unnumbered traffic such as
//! invoice fetching and HTLC forwarding is ignored.

use crate::nodes::{Actor, TraceEvent};

use Actor::{Bridge as B, Gateway as G, Iot as I};

pub type Step = (u8, Actor, Actor, &'static str);

pub const OPEN: &[Step] = &[
    (1, I, G, "OpenChannelRequest"),
    (2, G, I, "ThresholdKeygen"),
    (2, I, G, "ThresholdKeygen"),
    (2, G, I, "ThresholdKeygen"),
    (3, G, B, "open_channel"),
    (4, B, G, "accept_channel"),
    (5, G, G, "create_funding_tx"),
    (6, G, I, "ThresholdDerive"),
    (6, I, G, "ThresholdDerive"),
    (7, G, G, "create_commitments"),
    (8, G, I, "ThresholdSign"),
    (8, I, G, "ThresholdSign"),
    (8, G, I, "ThresholdSign"),
    (8, I, G, "ThresholdSign"),
    (9, G, B, "funding_created"),
    (10, B, G, "funding_signed"),
    (11, G, G, "broadcast_funding_tx"),
    (12, G, B, "funding_locked"),
    (13, B, G, "funding_locked"),
];

/// First payment on a fresh channel: one commitment signature plus one
/// HTLC signature, each a four-frame threshold session.
pub const PAY: &[Step] = &[
    (1, I, G, "SendPayment"),
    (2, G, G, "add_htlc"),
    (3, G, B, "update_add_htlc"),
    (4, G, I, "ThresholdSign"),
    (4, I, G, "ThresholdSign"),
    (4, G, I, "ThresholdSign"),
    (4, I, G, "ThresholdSign"),
    (4, G, I, "ThresholdSign"),
    (4, I, G, "ThresholdSign"),
    (4, G, I, "ThresholdSign"),
    (4, I, G, "ThresholdSign"),
    (5, G, B, "commitment_signed"),
    (6, B, G, "revoke_and_ack"),
    (7, G, I, "ThresholdDerive"),
    (7, I, G, "ThresholdDerive"),
    (8, B, G, "commitment_signed"),
    (8, G, B, "revoke_and_ack"),
    (9, G, I, "PaymentSuccess"),
];

/// The step-labelled part of a flow's events.
pub fn labelled(events: &[TraceEvent]) -> Vec<(u8, Actor, Actor, &str)> {
    events
        .iter()
        .filter_map(|e| Some((e.step?, e.from, e.to, e.name.as_str())))
        .collect()
}

/// First position where `events` departs from `golden`, if any.
pub fn mismatch(events: &[TraceEvent], golden: &[Step]) -> Option<usize> {
    let got = labelled(events);
    if got.len() == golden.len() && got.iter().zip(golden).all(|(a, b)| a == b) {
        return None;
    }
    Some(
        got.iter()
            .zip(golden)
            .position(|(a, b)| a != b)
            .unwrap_or(got.len().min(golden.len())),
    )
}
