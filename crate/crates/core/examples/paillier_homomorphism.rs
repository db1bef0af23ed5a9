//! Additive homomorphism of Paillier encryption, the tool that lets the
//! device finish a signature over the gateway's encrypted key share.

use num_bigint::BigUint;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use lngate::threshold_ecdsa::paillier::generate_keypair;

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let sk = generate_keypair(1024, &mut rng).expect("keypair");
    let pk = sk.public();
    println!("modulus: {} bits", pk.bits());

    let (a, b, k) = (
        BigUint::from(1234u32),
        BigUint::from(5678u32),
        BigUint::from(3u32),
    );
    let ca = pk.encrypt(&a, &mut rng).unwrap();
    let cb = pk.encrypt(&b, &mut rng).unwrap();
    println!("Dec(Enc(a) * Enc(b)) = {}", sk.decrypt(&pk.add(&ca, &cb)));
    println!(
        "Dec(Enc(a) ^ k)      = {}",
        sk.decrypt(&pk.mul_plain(&ca, &k))
    );
    println!("expected              {} and {}", &a + &b, &a * &k);
}
