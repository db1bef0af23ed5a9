//! Channel state after one 1 BTC payment at a 10% service fee, and the
//! gateway commitment transaction that encodes it.

use lngate::chain_sim::{Outpoint, Txid, COIN};
use lngate::channel::{
    build_gateway_commitment, ChannelParams, ChannelState, CommitmentContext, NodeId, OutputRole,
};
use lngate::ecdsa::SigningKey;

fn main() {
    let key = |l| SigningKey::derive(l, 0).public();
    let params = ChannelParams::new(10 * COIN, 100_000);
    let s0 = ChannelState::open(10 * COIN);
    let (s1, htlc) = s0
        .apply_payment(&params, COIN, [7; 32], NodeId(key("dest")), 100)
        .expect("payment");
    println!(
        "HTLC {} sat, fee {} sat, timeout {}",
        htlc.amount, htlc.fee, htlc.timeout
    );

    let ctx = CommitmentContext {
        funding: Outpoint::new(Txid([1; 32]), 0),
        iot_key: key("iot"),
        gateway_key: key("gateway"),
        bridge_key: key("bridge"),
        to_self_delay: params.to_self_delay,
    };
    let commit = build_gateway_commitment(&ctx, &s1, &key("point"), None).expect("commitment");
    for (role, out) in commit.roles.iter().zip(&commit.tx.outputs) {
        println!(
            "{role:?}: {:.8} BTC  {:?}",
            out.amount as f64 / COIN as f64,
            kind(&out.condition)
        );
    }
    println!(
        "bridge output present: {}",
        commit.output(OutputRole::Bridge).is_some()
    );
}

fn kind(c: &lngate::chain_sim::SpendCondition) -> &'static str {
    use lngate::chain_sim::SpendCondition::*;
    match c {
        KeySpend { .. } => "key spend",
        DelayedKeySpend { .. } => "delayed",
        RevocableDelayed { .. } => "revocable, delayed",
        HtlcOffered { .. } => "htlc",
        ThresholdFunding { .. } => "funding",
    }
}
