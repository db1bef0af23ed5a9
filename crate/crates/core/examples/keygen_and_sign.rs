//! Two parties create a joint secp256k1 key and sign a message together.
//! The result is an ordinary ECDSA signature under the joint public key.

use lngate::ecdsa::verify_standard;
use lngate::threshold_ecdsa::{keygen, sign, KeygenParams, SignSeeds};

fn main() {
    let params = KeygenParams::testing();
    let (server, client) = keygen(1, 2, &params).expect("keygen");
    assert_eq!(server.public(), client.public());
    println!("joint key Q = {}", server.public().to_hex());

    let msg = b"pay 1000 sat for parking";
    let sig = sign(
        msg,
        &server,
        &client,
        SignSeeds {
            server: 3,
            client: 4,
        },
    )
    .expect("sign");
    println!("r = {}", hex::encode(&sig.to_bytes()[..32]));
    println!("s = {}", hex::encode(&sig.to_bytes()[32..]));
    println!("low-s: {}", sig.is_low_s());
    println!(
        "verifies under Q: {}",
        verify_standard(&server.public(), msg, &sig)
    );
    println!(
        "verifies for another message: {}",
        verify_standard(&server.public(), b"other", &sig)
    );
}
