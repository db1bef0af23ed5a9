//! secp256k1 group helpers shared by every layer.
//!
//! Points travel as 33-byte SEC1 compressed encodings, scalars as 32-byte
//! big-endian integers. The identity point has no wire encoding.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use k256::elliptic_curve::ops::Reduce;
use k256::elliptic_curve::point::AffineCoordinates;
use k256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use k256::elliptic_curve::{Field, PrimeField};
use k256::{AffinePoint, EncodedPoint, FieldBytes, ProjectivePoint, U256};
use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

pub use k256::Scalar;

pub const POINT_LEN: usize = 33;
pub const SCALAR_LEN: usize = 32;

/// A non-identity curve point.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Point(ProjectivePoint);

impl Point {
    pub fn generator() -> Self {
        Point(ProjectivePoint::GENERATOR)
    }

    /// `k·G`.
    pub fn mul_base(k: &Scalar) -> Self {
        Point(ProjectivePoint::GENERATOR * k)
    }

    pub fn is_identity(&self) -> bool {
        self.0 == ProjectivePoint::IDENTITY
    }

    pub fn inner(&self) -> &ProjectivePoint {
        &self.0
    }

    pub fn from_projective(p: ProjectivePoint) -> Self {
        Point(p)
    }

    pub fn to_bytes(&self) -> [u8; POINT_LEN] {
        let enc = self.0.to_affine().to_encoded_point(true);
        let mut out = [0u8; POINT_LEN];
        let bytes = enc.as_bytes();
        if bytes.len() == POINT_LEN {
            out.copy_from_slice(bytes);
        }
        out
    }

    /// Parses a compressed encoding; rejects the identity and off-curve data.
    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != POINT_LEN {
            return None;
        }
        let enc = EncodedPoint::from_bytes(bytes).ok()?;
        let affine: Option<AffinePoint> = AffinePoint::from_encoded_point(&enc).into();
        affine.map(|a| Point(ProjectivePoint::from(a)))
    }

    /// x-coordinate reduced mod q (the ECDSA `r` of a nonce point).
    pub fn x_mod_order(&self) -> Scalar {
        let x: FieldBytes = self.0.to_affine().x();
        <Scalar as Reduce<U256>>::reduce_bytes(&x)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point(self.0 + rhs.0)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point(self.0 - rhs.0)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point(-self.0)
    }
}

impl Mul<&Scalar> for Point {
    type Output = Point;
    fn mul(self, rhs: &Scalar) -> Point {
        Point(self.0 * rhs)
    }
}

impl Mul<&Scalar> for &Point {
    type Output = Point;
    fn mul(self, rhs: &Scalar) -> Point {
        Point(self.0 * rhs)
    }
}

impl PartialOrd for Point {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Point {
    fn cmp(&self, other: &Self) -> Ordering {
        self.to_bytes().cmp(&other.to_bytes())
    }
}

impl std::hash::Hash for Point {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.to_bytes().hash(state)
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Point({})", self.to_hex())
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        Point::from_bytes(&bytes).ok_or_else(|| serde::de::Error::custom("invalid point"))
    }
}

pub fn scalar_to_bytes(s: &Scalar) -> [u8; SCALAR_LEN] {
    s.to_repr().into()
}

/// Canonical decoding: rejects values ≥ q.
pub fn scalar_from_bytes(bytes: &[u8]) -> Option<Scalar> {
    if bytes.len() != SCALAR_LEN {
        return None;
    }
    let fb = FieldBytes::clone_from_slice(bytes);
    Scalar::from_repr(fb).into()
}

/// Interprets 32 bytes as an integer and reduces it mod q.
pub fn scalar_reduce(bytes: &[u8; 32]) -> Scalar {
    let fb = FieldBytes::clone_from_slice(bytes);
    <Scalar as Reduce<U256>>::reduce_bytes(&fb)
}

/// SHA-256 over the concatenated parts, reduced mod q.
pub fn hash_to_scalar(parts: &[&[u8]]) -> Scalar {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    scalar_reduce(&h.finalize().into())
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

pub fn random_nonzero_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
    loop {
        let s = Scalar::random(&mut *rng);
        if !bool::from(s.is_zero()) {
            return s;
        }
    }
}

pub fn scalar_inverse(s: &Scalar) -> Option<Scalar> {
    s.invert().into()
}

pub fn scalar_is_zero(s: &Scalar) -> bool {
    bool::from(s.is_zero())
}

pub fn scalar_to_biguint(s: &Scalar) -> BigUint {
    BigUint::from_bytes_be(&scalar_to_bytes(s))
}

/// Reduces an arbitrary non-negative integer mod q.
pub fn biguint_to_scalar(n: &BigUint) -> Scalar {
    let reduced = n % group_order();
    let bytes = reduced.to_bytes_be();
    let mut buf = [0u8; 32];
    buf[32 - bytes.len()..].copy_from_slice(&bytes);
    scalar_reduce(&buf)
}

/// The prime order q of secp256k1.
pub fn group_order() -> BigUint {
    BigUint::parse_bytes(
        b"FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141",
        16,
    )
    .expect("constant")
}

/// Serde adapter for scalars as 64-char hex strings.
pub mod serde_scalar {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Scalar, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(scalar_to_bytes(v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Scalar, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        scalar_from_bytes(&bytes).ok_or_else(|| serde::de::Error::custom("scalar out of range"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn point_roundtrip_and_identity_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = Point::mul_base(&random_nonzero_scalar(&mut rng));
            assert_eq!(Point::from_bytes(&p.to_bytes()), Some(p));
        }
        assert_eq!(Point::from_bytes(&[0u8; 33]), None);
        assert_eq!(Point::from_bytes(&[2u8; 32]), None);
    }

    #[test]
    fn generator_has_order_q() {
        // (q-1)·G = -G
        let q_minus_one = biguint_to_scalar(&(group_order() - 1u32));
        assert_eq!(Point::mul_base(&q_minus_one), -Point::generator());
        assert_eq!(biguint_to_scalar(&group_order()), Scalar::ZERO);
    }

    #[test]
    fn scalar_bytes_reject_out_of_range() {
        let q = group_order().to_bytes_be();
        assert!(scalar_from_bytes(&q).is_none());
        let one = biguint_to_scalar(&BigUint::from(1u8));
        assert_eq!(scalar_from_bytes(&scalar_to_bytes(&one)), Some(one));
    }
}
