use k256::ecdsa::hazmat::SignPrimitive;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use lngate::ecdsa::{verify_standard, EcdsaSignature};
use lngate::group::{random_nonzero_scalar, sha256, Point, Scalar};
use lngate::threshold_ecdsa::{
    derive_child, derive_public, keygen, keygen_with_shares, sign_with_ephemerals, ChildIndex,
    EphemeralKey, KeygenParams, SignSeeds, ThresholdError,
};

/// Signature from the k256 crate's own signer for key `x` and nonce `k`,
/// low-s normalized.
fn oracle(x: &Scalar, k: &Scalar, msg: &[u8]) -> [u8; 64] {
    let z = sha256(msg);
    let (sig, _) = x.try_sign_prehashed(*k, &z.into()).expect("oracle signs");
    let sig = sig.normalize_s().unwrap_or(sig);
    sig.to_bytes().into()
}

#[test]
fn joint_signatures_match_single_party_oracle() {
    let params = KeygenParams::testing();
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let x1 = random_nonzero_scalar(&mut rng);
    let x2 = random_nonzero_scalar(&mut rng);
    let (server, client) = keygen_with_shares(x1, x2, &params, &mut rng).unwrap();
    assert_eq!(server.public(), Point::mul_base(&(x1 * x2)));
    for i in 0..10u64 {
        let k1 = random_nonzero_scalar(&mut rng);
        let k2 = random_nonzero_scalar(&mut rng);
        let msg = format!("message {i}");
        let sig = sign_with_ephemerals(
            msg.as_bytes(),
            &server,
            &client,
            EphemeralKey::from_secret(k1).unwrap(),
            EphemeralKey::from_secret(k2).unwrap(),
            SignSeeds {
                server: i,
                client: i + 1000,
            },
        )
        .unwrap();
        assert!(verify_standard(&server.public(), msg.as_bytes(), &sig));
        assert_eq!(
            sig.to_bytes(),
            oracle(&(x1 * x2), &(k1 * k2), msg.as_bytes())
        );
    }
}

#[test]
fn shares_are_range_checked() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let err = keygen_with_shares(
        Scalar::ZERO,
        Scalar::ONE,
        &KeygenParams::testing(),
        &mut rng,
    )
    .err();
    assert_eq!(err, Some(ThresholdError::ShareOutOfRange));
}

#[test]
fn small_paillier_modulus_is_rejected() {
    let err = keygen(1, 2, &KeygenParams::with_paillier_bits(512)).err();
    assert!(
        matches!(err, Some(ThresholdError::ModulusTooSmall { .. })),
        "{err:?}"
    );
}

#[test]
fn derived_children_sign_under_public_derivation() {
    let (server, client) = keygen(3, 4, &KeygenParams::testing()).unwrap();
    for idx in [ChildIndex::funding(0), ChildIndex::commitment(5)] {
        let (s, c) = derive_child(&server, &client, idx).unwrap();
        let q = derive_public(&server.public(), idx).unwrap();
        assert_eq!(s.public(), q);
        assert_eq!(c.public(), q);
        assert_ne!(q, server.public());
        let sig = lngate::threshold_ecdsa::sign(
            b"child",
            &s,
            &c,
            SignSeeds {
                server: 1,
                client: 2,
            },
        )
        .unwrap();
        assert!(verify_standard(&q, b"child", &sig));
        assert!(!verify_standard(&server.public(), b"child", &sig));
    }
}

#[test]
fn signature_bytes_round_trip() {
    let (server, client) = keygen(5, 6, &KeygenParams::testing()).unwrap();
    let sig = lngate::threshold_ecdsa::sign(
        b"m",
        &server,
        &client,
        SignSeeds {
            server: 7,
            client: 8,
        },
    )
    .unwrap();
    assert!(sig.is_low_s());
    assert_eq!(EcdsaSignature::from_bytes(&sig.to_bytes()), Some(sig));
}
