//! Encrypted, authenticated frames on the device link.

use lngate::channel::NodeId;
use lngate::ecdsa::SigningKey;
use lngate::wire::{LinkKeys, Message, WireSession};

fn main() {
    let keys = LinkKeys::from_secret(&[0x11; 64]);
    let mut device = WireSession::initiator(keys.clone(), 42);
    let mut gateway = WireSession::responder(keys, 42);

    let msg = Message::SendPayment {
        amount: 1_376,
        destination: NodeId(SigningKey::derive("dest", 0).public()),
    };
    let frame = device.seal(&msg);
    println!("{} byte frame: {}", frame.len(), hex::encode(&frame));
    println!("opened: {:?}", gateway.open(&frame).map(|m| m.name()));
    println!("replayed: {:?}", gateway.open(&frame).err());

    let mut tampered = device.seal(&msg);
    tampered[30] ^= 1;
    println!("tampered: {:?}", gateway.open(&tampered).err());
    println!("device metrics: {:?}", device.metrics());
}
