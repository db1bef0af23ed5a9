use serde::Deserialize;

use lngate::channel::NodeId;
use lngate::group::Point;
use lngate::wire::{decode_frame, encode_frame, LinkKeys, Message, Nonce, WireError, WireSession};

#[derive(Deserialize)]
struct Kat {
    secret: String,
    vectors: Vec<Vector>,
}

#[derive(Deserialize)]
struct Vector {
    name: String,
    counter: u64,
    session: u64,
    frame: String,
    amount: Option<u64>,
    destination: Option<String>,
}

fn kat() -> Kat {
    serde_json::from_str(include_str!("fixtures/wire_kat.json")).unwrap()
}

fn keys(k: &Kat) -> LinkKeys {
    let bytes: [u8; 64] = hex::decode(&k.secret).unwrap().try_into().unwrap();
    LinkKeys::from_secret(&bytes)
}

fn message(v: &Vector) -> Message {
    match v.name.as_str() {
        "channel_closing_request" => Message::ChannelClosingRequest,
        "send_payment" => Message::SendPayment {
            amount: v.amount.unwrap(),
            destination: NodeId(
                Point::from_bytes(&hex::decode(v.destination.as_ref().unwrap()).unwrap()).unwrap(),
            ),
        },
        other => panic!("no message for vector {other}"),
    }
}

#[test]
fn frames_match_reference_vectors() {
    let k = kat();
    let keys = keys(&k);
    assert!(!k.vectors.is_empty());
    for v in &k.vectors {
        let nonce = Nonce {
            counter: v.counter,
            session: v.session,
        };
        let want = hex::decode(&v.frame).unwrap();
        assert_eq!(encode_frame(&message(v), &keys, nonce), want, "{}", v.name);
        assert_eq!(
            decode_frame(&want, &keys).unwrap(),
            (nonce, message(v)),
            "{}",
            v.name
        );
    }
}

#[test]
fn wrong_key_fails_authentication() {
    let k = kat();
    let other = LinkKeys::from_secret(&[0x22; 64]);
    for v in &k.vectors {
        let frame = hex::decode(&v.frame).unwrap();
        assert_eq!(decode_frame(&frame, &other), Err(WireError::AuthFailure));
    }
}

#[test]
fn sessions_reject_replay_reorder_and_reflection() {
    let keys = LinkKeys::from_secret(&[3; 64]);
    let mut a = WireSession::initiator(keys.clone(), 9);
    let mut b = WireSession::responder(keys.clone(), 9);
    let f1 = a.seal(&Message::ChannelClosingRequest);
    let f2 = a.seal(&Message::OpenChannelRequest { capacity: 5 });
    assert_eq!(b.open(&f2), Ok(Message::OpenChannelRequest { capacity: 5 }));
    assert!(matches!(b.open(&f1), Err(WireError::NonceReplay { .. })));
    assert!(matches!(b.open(&f2), Err(WireError::NonceReplay { .. })));

    // a frame sent by the initiator cannot be bounced back to it
    let f3 = a.seal(&Message::ChannelClosingRequest);
    assert!(matches!(a.open(&f3), Err(WireError::WrongSession(_))));

    let mut other = WireSession::responder(keys, 10);
    assert!(matches!(other.open(&f3), Err(WireError::WrongSession(_))));
}

#[test]
fn metrics_count_both_directions() {
    let keys = LinkKeys::from_secret(&[4; 64]);
    let mut a = WireSession::initiator(keys.clone(), 1);
    let mut b = WireSession::responder(keys, 1);
    let f = a.seal(&Message::ChannelClosingRequest);
    b.open(&f).unwrap();
    let g = b.seal(&Message::ChannelClosed {
        reason: "bye".into(),
    });
    a.open(&g).unwrap();
    let m = a.metrics();
    assert_eq!(m.bytes_sent, f.len() as u64);
    assert_eq!(m.bytes_received, g.len() as u64);
    assert_eq!(m.frame_count, 2);
    assert_eq!(m.total_bytes(), b.metrics().total_bytes());
}
