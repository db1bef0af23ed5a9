//! Standard single-party ECDSA over secp256k1 with SHA-256 message digests.
//!
//! This is what an unmodified Lightning peer runs. Threshold signatures
//! produced jointly by the IoT device and the gateway verify here unchanged.

use std::fmt;

use k256::elliptic_curve::scalar::IsHigh;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::group::{
    hash_to_scalar, scalar_from_bytes, scalar_inverse, scalar_is_zero, scalar_reduce,
    scalar_to_bytes, sha256, Point, Scalar,
};

pub const SIGNATURE_LEN: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct EcdsaSignature {
    pub r: Scalar,
    pub s: Scalar,
}

impl EcdsaSignature {
    pub fn is_low_s(&self) -> bool {
        !bool::from(self.s.is_high())
    }

    /// Replaces `s` by `q - s` when `s > (q-1)/2`.
    pub fn normalize_s(self) -> Self {
        if self.is_low_s() {
            self
        } else {
            EcdsaSignature {
                r: self.r,
                s: -self.s,
            }
        }
    }

    pub fn to_bytes(&self) -> [u8; SIGNATURE_LEN] {
        let mut out = [0u8; SIGNATURE_LEN];
        out[..32].copy_from_slice(&scalar_to_bytes(&self.r));
        out[32..].copy_from_slice(&scalar_to_bytes(&self.s));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != SIGNATURE_LEN {
            return None;
        }
        Some(EcdsaSignature {
            r: scalar_from_bytes(&bytes[..32])?,
            s: scalar_from_bytes(&bytes[32..])?,
        })
    }
}

impl fmt::Debug for EcdsaSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EcdsaSignature({})", hex::encode(self.to_bytes()))
    }
}

impl Serialize for EcdsaSignature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for EcdsaSignature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        EcdsaSignature::from_bytes(&bytes).ok_or_else(|| serde::de::Error::custom("bad signature"))
    }
}

/// `H(m)`: SHA-256 of the message, reduced mod q.
pub fn message_scalar(m: &[u8]) -> Scalar {
    scalar_reduce(&sha256(m))
}

/// Reference verifier: true iff `sig` is a valid ECDSA signature on
/// SHA-256(`m`) under `public`.
pub fn verify_standard(public: &Point, m: &[u8], sig: &EcdsaSignature) -> bool {
    if public.is_identity() || scalar_is_zero(&sig.r) || scalar_is_zero(&sig.s) {
        return false;
    }
    let Some(w) = scalar_inverse(&sig.s) else {
        return false;
    };
    let h = message_scalar(m);
    let u1 = h * w;
    let u2 = sig.r * w;
    let x = Point::mul_base(&u1) + public * &u2;
    if x.is_identity() {
        return false;
    }
    x.x_mod_order() == sig.r
}

/// Textbook signing with a caller-chosen nonce: `s = k⁻¹(H(m) + r·x)`.
/// Returns `None` for degenerate nonces (r = 0 or s = 0). The result is
/// low-s normalized.
pub fn sign_with_nonce(secret: &Scalar, m: &[u8], k: &Scalar) -> Option<EcdsaSignature> {
    let k_inv = scalar_inverse(k)?;
    let r = Point::mul_base(k).x_mod_order();
    if scalar_is_zero(&r) {
        return None;
    }
    let s = k_inv * (message_scalar(m) + r * secret);
    if scalar_is_zero(&s) {
        return None;
    }
    Some(EcdsaSignature { r, s }.normalize_s())
}

/// A single-party key, as held by the bridge, the destination, or any
/// party's on-chain wallet.
#[derive(Clone)]
pub struct SigningKey {
    secret: Scalar,
    public: Point,
}

impl SigningKey {
    pub fn from_secret(secret: Scalar) -> Option<Self> {
        if scalar_is_zero(&secret) {
            return None;
        }
        Some(SigningKey {
            secret,
            public: Point::mul_base(&secret),
        })
    }

    /// Deterministic key from a label and seed, for reproducible fixtures.
    pub fn derive(label: &str, seed: u64) -> Self {
        let mut ctr = 0u32;
        loop {
            let s = hash_to_scalar(&[
                b"lngate/key",
                label.as_bytes(),
                &seed.to_be_bytes(),
                &ctr.to_be_bytes(),
            ]);
            if let Some(k) = SigningKey::from_secret(s) {
                return k;
            }
            ctr += 1;
        }
    }

    pub fn public(&self) -> Point {
        self.public
    }

    pub fn secret(&self) -> &Scalar {
        &self.secret
    }

    /// Deterministic nonce derived from the key and message digest.
    pub fn sign(&self, m: &[u8]) -> EcdsaSignature {
        let digest = sha256(m);
        let mut ctr = 0u32;
        loop {
            let k = hash_to_scalar(&[
                b"lngate/nonce",
                &scalar_to_bytes(&self.secret),
                &digest,
                &ctr.to_be_bytes(),
            ]);
            if let Some(sig) = sign_with_nonce(&self.secret, m, &k) {
                return sig;
            }
            ctr += 1;
        }
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigningKey({})", self.public)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_verify_and_tamper() {
        let key = SigningKey::derive("t", 1);
        let sig = key.sign(b"hello");
        assert!(sig.is_low_s());
        assert!(verify_standard(&key.public(), b"hello", &sig));
        assert!(!verify_standard(&key.public(), b"hellO", &sig));
        assert!(!verify_standard(
            &(key.public() + Point::generator()),
            b"hello",
            &sig
        ));
    }

    #[test]
    fn flipping_a_bit_of_r_breaks_verification() {
        let key = SigningKey::derive("t", 2);
        let sig = key.sign(b"m");
        let mut bytes = sig.to_bytes();
        bytes[31] ^= 1;
        let tampered = EcdsaSignature::from_bytes(&bytes).unwrap();
        assert!(!verify_standard(&key.public(), b"m", &tampered));
    }

    #[test]
    fn high_s_is_normalized() {
        let key = SigningKey::derive("t", 3);
        let sig = key.sign(b"x");
        let high = EcdsaSignature {
            r: sig.r,
            s: -sig.s,
        };
        assert!(!high.is_low_s());
        assert_eq!(high.normalize_s(), sig);
        // both forms verify; normalization only affects standardness
        assert!(verify_standard(&key.public(), b"x", &high));
    }

    #[test]
    fn unit_nonce_gives_generator_x() {
        let key = SigningKey::derive("t", 4);
        let sig = sign_with_nonce(key.secret(), b"m", &Scalar::ONE).unwrap();
        assert_eq!(sig.r, Point::generator().x_mod_order());
    }
}
