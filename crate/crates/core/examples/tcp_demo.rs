//! Device and gateway over TCP: joint keygen and one joint signature.
//!
//!     cargo run --example tcp_demo                       # both ends, local port
//!     cargo run --example tcp_demo -- gateway --listen 127.0.0.1:9735
//!     cargo run --example tcp_demo -- iot --connect 127.0.0.1:9735

use std::net::{TcpListener, TcpStream};
use std::thread;

use clap::{Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use lngate::codec::Writer;
use lngate::ecdsa::{verify_standard, SigningKey};
use lngate::nodes::IotDevice;
use lngate::threshold_ecdsa::{
    EphemeralKey, KeygenParams, KeygenSecondMsg, KeygenServer, ServerSignSession, SignFourthMsg,
    SignSecondMsg,
};
use lngate::wire::transport::FramedStream;
use lngate::wire::{LinkKeys, Message, WireSession};

#[derive(Parser)]
struct Args {
    #[command(subcommand)]
    role: Option<Role>,
}

#[derive(Subcommand)]
enum Role {
    Gateway {
        #[arg(long, default_value = "127.0.0.1:9735")]
        listen: String,
    },
    Iot {
        #[arg(long, default_value = "127.0.0.1:9735")]
        connect: String,
    },
}

const SESSION: u64 = 7;

fn keys() -> LinkKeys {
    // provisioned out of band
    LinkKeys::from_secret(&[0x5a; 64])
}

fn gateway(stream: TcpStream) -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut link = FramedStream::new(stream, WireSession::responder(keys(), SESSION));
    let params = KeygenParams::testing();

    let (server, first) = KeygenServer::start(&params, &mut rng)?;
    let Message::ThresholdKeygen { payload, .. } = link.request(&Message::ThresholdKeygen {
        round: 1,
        payload: first.to_bytes(),
    })?
    else {
        return Err("expected keygen round 2".into());
    };
    let (key, third) = server.finish(&KeygenSecondMsg::from_bytes(&payload)?, &mut rng)?;
    link.send(&Message::ThresholdKeygen {
        round: 3,
        payload: third.to_bytes(),
    })?;
    println!("gateway: joint key {}", key.public().to_hex());

    let message = b"open channel".to_vec();
    let (mut session, m1) = ServerSignSession::start(EphemeralKey::random(&mut rng), &mut rng);
    let mut w = Writer::new();
    w.var(&message).bytes(&m1.to_bytes());
    let Message::ThresholdSign { payload, .. } = link.request(&Message::ThresholdSign {
        round: 1,
        payload: w.finish(),
    })?
    else {
        return Err("expected sign round 2".into());
    };
    let m3 = session.reveal(&SignSecondMsg::from_bytes(&payload)?)?;
    let Message::ThresholdSign { payload, .. } = link.request(&Message::ThresholdSign {
        round: 3,
        payload: m3.to_bytes(),
    })?
    else {
        return Err("expected sign round 4".into());
    };
    let sig = session.finish(&key, &message, &SignFourthMsg::from_bytes(&payload)?)?;
    println!(
        "gateway: signature verifies: {}; {} bytes over {} frames",
        verify_standard(&key.public(), &message, &sig),
        link.session.metrics().total_bytes(),
        link.session.metrics().frame_count
    );
    Ok(())
}

fn iot(mut stream: TcpStream) -> Result<(), Box<dyn std::error::Error>> {
    let mut device = IotDevice::new(
        WireSession::initiator(keys(), SESSION),
        SigningKey::derive("iot-wallet", 0),
        SigningKey::derive("iot-payout", 0),
        KeygenParams::testing(),
        ChaCha20Rng::seed_from_u64(2),
    );
    device.serve(&mut stream)?;
    println!(
        "iot: gateway hung up; {} bytes exchanged",
        device.metrics().total_bytes()
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    match Args::parse().role {
        Some(Role::Gateway { listen }) => {
            let listener = TcpListener::bind(&listen)?;
            println!("gateway: listening on {listen}");
            let (stream, peer) = listener.accept()?;
            println!("gateway: device connected from {peer}");
            gateway(stream)
        }
        Some(Role::Iot { connect }) => iot(TcpStream::connect(connect)?),
        None => {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            let addr = listener.local_addr()?;
            let device = thread::spawn(move || {
                iot(TcpStream::connect(addr).expect("connect")).map_err(|e| e.to_string())
            });
            let (stream, _) = listener.accept()?;
            gateway(stream)?;
            device.join().expect("device thread")?;
            Ok(())
        }
    }
}
