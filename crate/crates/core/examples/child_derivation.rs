//! Child keys derived from a joint key by a public tweak. Each party
//! derives its own view; anyone holding Q can compute the child public key.

use lngate::ecdsa::verify_standard;
use lngate::threshold_ecdsa::{
    derive_child, derive_public, keygen, sign, ChildIndex, KeygenParams, SignSeeds,
};

fn main() {
    let (server, client) = keygen(10, 20, &KeygenParams::testing()).expect("keygen");
    for i in 0..3 {
        let idx = ChildIndex::funding(i);
        let (s, c) = derive_child(&server, &client, idx).expect("derive");
        let expected = derive_public(&server.public(), idx).expect("public derive");
        assert_eq!(s.public(), expected);
        let sig = sign(
            b"child",
            &s,
            &c,
            SignSeeds {
                server: i.into(),
                client: 99,
            },
        )
        .expect("sign");
        println!(
            "child {i}: {}  signature ok: {}",
            expected.to_hex(),
            verify_standard(&expected, b"child", &sig)
        );
    }
}
