//! Property checks shared by the property suite and the acceptance target.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use lngate::chain_sim::{ChainError, SimChain, SimTx, SpendCondition, TxIn, TxOut, Witness, COIN};
use lngate::channel::{ChannelParams, ChannelState, NodeId};
use lngate::ecdsa::SigningKey;
use lngate::group::{sha256, Point, Scalar};
use lngate::wire::{decode_frame, encode_frame, LinkKeys, Message, Nonce};

pub const CASES: u32 = 1000;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

// ---- channel ----

#[derive(Clone, Debug)]
pub enum ChanOp {
    Pay(u64),
    Settle(usize),
    Fail(usize),
}

fn chan_op() -> impl Strategy<Value = ChanOp> {
    prop_oneof![
        3 => (1u64..=300_000_000).prop_map(ChanOp::Pay),
        2 => any::<usize>().prop_map(ChanOp::Settle),
        1 => any::<usize>().prop_map(ChanOp::Fail),
    ]
}

pub fn chan_ops() -> impl Strategy<Value = (u32, Vec<ChanOp>)> {
    (0u32..=200_000, prop::collection::vec(chan_op(), 1..40))
}

fn dest() -> NodeId {
    NodeId(SigningKey::derive("prop-dest", 0).public())
}

/// Applies `ops` to a fresh 10 BTC channel, checking after every step that
/// funds are conserved, state numbers advance by one, and the bridge's
/// balance never shrinks.
pub fn check_channel_sequence(ppm: u32, ops: &[ChanOp]) -> Result<(), TestCaseError> {
    let params = ChannelParams::new(10 * COIN, ppm);
    let mut s = ChannelState::open(params.capacity);
    let mut preimages: Vec<[u8; 32]> = vec![];
    let mut height = 100;
    for (i, op) in ops.iter().enumerate() {
        height += 1;
        let next = match op {
            ChanOp::Pay(amount) => {
                let pre = sha256(&(i as u64).to_be_bytes());
                match s.apply_payment(&params, *amount, sha256(&pre), dest(), height) {
                    Ok((next, htlc)) => {
                        prop_assert_eq!(htlc.amount + htlc.fee, *amount);
                        preimages.push(pre);
                        Some(next)
                    }
                    Err(_) => {
                        prop_assert!(*amount > s.iot_balance || fee_floor(*amount, ppm));
                        None
                    }
                }
            }
            ChanOp::Settle(k) if !s.pending_htlcs.is_empty() => {
                let h = s.pending_htlcs[k % s.pending_htlcs.len()];
                let pre = preimages
                    .iter()
                    .find(|p| sha256(*p) == h.payment_hash)
                    .unwrap();
                Some(
                    s.settle_htlc(pre)
                        .map_err(|e| TestCaseError::fail(e.to_string()))?,
                )
            }
            ChanOp::Fail(k) if !s.pending_htlcs.is_empty() => {
                let h = s.pending_htlcs[k % s.pending_htlcs.len()];
                prop_assert!(s.fail_htlc(&h.payment_hash, h.timeout - 1).is_err());
                Some(
                    s.fail_htlc(&h.payment_hash, h.timeout)
                        .map_err(|e| TestCaseError::fail(e.to_string()))?,
                )
            }
            _ => None,
        };
        if let Some(next) = next {
            prop_assert!(next.is_conserved(), "not conserved: {:?}", next);
            prop_assert_eq!(next.capacity, s.capacity);
            prop_assert_eq!(next.state_num, s.state_num + 1);
            prop_assert!(next.bridge_balance >= s.bridge_balance);
            s = next;
        }
    }
    Ok(())
}

fn fee_floor(amount: u64, ppm: u32) -> bool {
    lngate::channel::service_fee(amount, ppm) >= amount
}

pub fn channel_property(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&chan_ops(), |(ppm, ops)| check_channel_sequence(ppm, &ops))
        .map_err(|e| e.to_string())
}

// ---- wire ----

fn point() -> impl Strategy<Value = Point> {
    (1u64..u64::MAX).prop_map(|k| Point::mul_base(&Scalar::from(k)))
}

pub fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        any::<u64>().prop_map(|capacity| Message::OpenChannelRequest { capacity }),
        (any::<u64>(), point()).prop_map(|(amount, p)| Message::SendPayment {
            amount,
            destination: NodeId(p),
        }),
        any::<[u8; 32]>().prop_map(|payment_hash| Message::PaymentSuccess { payment_hash }),
        Just(Message::ChannelClosingRequest),
        "[ -~]{0,40}".prop_map(|reason| Message::ChannelClosed { reason }),
        (any::<[u8; 32]>(), any::<[u8; 32]>()).prop_map(|(payment_hash, preimage)| {
            Message::UpdateFulfillHtlc {
                payment_hash,
                preimage,
            }
        }),
        (1u8..=4, prop::collection::vec(any::<u8>(), 0..600))
            .prop_map(|(round, payload)| Message::ThresholdSign { round, payload }),
        (1u8..=3, prop::collection::vec(any::<u8>(), 0..600))
            .prop_map(|(round, payload)| Message::ThresholdKeygen { round, payload }),
    ]
}

pub type FrameCase = (Message, u64, u64, [u8; 64], prop::sample::Index, u8);

pub fn frame_case() -> impl Strategy<Value = FrameCase> {
    (
        message(),
        any::<u64>(),
        any::<u64>(),
        prop::array::uniform32(any::<u8>()).prop_flat_map(|a| {
            prop::array::uniform32(any::<u8>()).prop_map(move |b| {
                let mut s = [0u8; 64];
                s[..32].copy_from_slice(&a);
                s[32..].copy_from_slice(&b);
                s
            })
        }),
        any::<prop::sample::Index>(),
        1u8..=255,
    )
}

/// Decoding inverts encoding, and flipping any bits of one byte, or
/// truncating the frame, is rejected.
pub fn check_frame(
    (msg, counter, session, secret, pos, flip): FrameCase,
) -> Result<(), TestCaseError> {
    let keys = LinkKeys::from_secret(&secret);
    let nonce = Nonce { counter, session };
    let frame = encode_frame(&msg, &keys, nonce);
    prop_assert_eq!(
        frame.len(),
        lngate::wire::FRAME_OVERHEAD + msg.encode_payload().len()
    );
    let (n, m) = decode_frame(&frame, &keys).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(n, nonce);
    prop_assert_eq!(&m, &msg);

    let mut bad = frame.clone();
    bad[pos.index(frame.len())] ^= flip;
    prop_assert!(decode_frame(&bad, &keys).is_err());
    let cut = pos.index(frame.len());
    prop_assert!(decode_frame(&frame[..cut], &keys).is_err());
    Ok(())
}

pub fn wire_property(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&frame_case(), check_frame)
        .map_err(|e| e.to_string())
}

// ---- chain timelocks ----

pub fn delay_case() -> impl Strategy<Value = (u32, bool)> {
    (1u32..=200, any::<bool>())
}

fn signed(key: &SigningKey, mut tx: SimTx, revocation: bool) -> SimTx {
    let sig = key.sign(&tx.digest());
    let w = if revocation {
        Witness::RevocationSig { sig }
    } else {
        Witness::Sig {
            pubkey: key.public(),
            sig,
        }
    };
    for i in &mut tx.inputs {
        i.witness = Some(w);
    }
    tx
}

/// An output delayed by `delay` blocks is premature for its owner at one
/// confirmation less and spendable at exactly `delay`. A revocable output
/// is spendable with the revocation key at once.
pub fn check_timelock(delay: u32, revocable: bool) -> Result<(), TestCaseError> {
    let owner = SigningKey::derive("owner", u64::from(delay));
    let rev = SigningKey::derive("revocation", u64::from(delay));
    let mut chain = SimChain::new();
    let coin = chain.faucet(owner.public(), COIN);
    chain.mine_block();
    let condition = if revocable {
        SpendCondition::RevocableDelayed {
            owner: owner.public(),
            delay,
            revocation: rev.public(),
        }
    } else {
        SpendCondition::DelayedKeySpend {
            owner: owner.public(),
            delay,
        }
    };
    let lock = SimTx::new(
        vec![TxIn::unsigned(coin)],
        vec![TxOut {
            amount: COIN - 150,
            condition,
        }],
        150,
    );
    let lock = signed(&owner, lock, false);
    let locked = lock.outpoint(0);
    chain
        .broadcast(lock)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;

    let spend = SimTx::new(
        vec![TxIn::unsigned(locked)],
        vec![TxOut {
            amount: COIN - 300,
            condition: SpendCondition::KeySpend {
                owner: owner.public(),
            },
        }],
        150,
    );
    let by_owner = signed(&owner, spend.clone(), false);
    let by_rev = signed(&rev, spend, true);

    let delay = u64::from(delay);
    chain.mine_block();
    if revocable {
        prop_assert_eq!(chain.validate(&by_rev), Ok(()));
    } else {
        prop_assert!(chain.validate(&by_rev).is_err());
    }
    if delay > 1 {
        chain.mine_blocks(delay - 2);
        prop_assert_eq!(chain.confirmations(&locked.txid), delay - 1);
        prop_assert_eq!(
            chain.validate(&by_owner),
            Err(ChainError::PrematureSpend(0))
        );
        chain.mine_block();
    }
    prop_assert_eq!(chain.confirmations(&locked.txid), delay);
    prop_assert_eq!(chain.validate(&by_owner), Ok(()));
    Ok(())
}

pub fn timelock_property(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&delay_case(), |(d, r)| check_timelock(d, r))
        .map_err(|e| e.to_string())
}
