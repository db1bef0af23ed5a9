//! Two-party signing, four messages:
//!
//! 1. server → client: commitment to `(R1, π1)`
//! 2. client → server: `R2`, `π2`
//! 3. server → client: opening of `(R1, π1)`
//! 4. client → server: `c3 = Enc(k2⁻¹·H(m) + ρ·q) ⊕ c_key^(x2·r·k2⁻¹)`
//!
//! The server decrypts `c3`, multiplies by `k1⁻¹`, normalizes to low-s and
//! verifies the result under `Q` before releasing it.

use num_bigint::{BigUint, RandBigInt};
use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::dlog::DlogProof;
use super::paillier::Ciphertext;
use super::{commit_to, scalar_biguint, ClientKey, ServerKey, ThresholdError};
use crate::codec::{Reader, Writer};
use crate::ecdsa::{message_scalar, verify_standard, EcdsaSignature};
use crate::group::{
    biguint_to_scalar, group_order, random_nonzero_scalar, scalar_inverse, scalar_is_zero, Point,
    Scalar,
};

/// One party's signing nonce share `k_i`.
#[derive(Clone)]
pub struct EphemeralKey {
    secret: Scalar,
    public: Point,
}

impl EphemeralKey {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let secret = random_nonzero_scalar(rng);
        EphemeralKey {
            secret,
            public: Point::mul_base(&secret),
        }
    }

    /// Fixed nonce share, for test vectors.
    pub fn from_secret(secret: Scalar) -> Result<Self, ThresholdError> {
        if scalar_is_zero(&secret) {
            return Err(ThresholdError::DegenerateNonce);
        }
        Ok(EphemeralKey {
            secret,
            public: Point::mul_base(&secret),
        })
    }

    pub fn public(&self) -> Point {
        self.public
    }
}

impl std::fmt::Debug for EphemeralKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EphemeralKey({})", self.public)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignFirstMsg {
    pub commitment: [u8; 32],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignSecondMsg {
    pub public_nonce: Point,
    pub proof: DlogProof,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignThirdMsg {
    pub public_nonce: Point,
    pub proof: DlogProof,
    pub blind: [u8; 32],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignFourthMsg {
    pub c3: Ciphertext,
}

impl SignFirstMsg {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.commitment.to_vec()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ThresholdError> {
        let mut r = Reader::new(bytes);
        let commitment = r.array::<32>()?;
        r.finish()?;
        Ok(SignFirstMsg { commitment })
    }
}

impl SignSecondMsg {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.point(&self.public_nonce);
        self.proof.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ThresholdError> {
        let mut r = Reader::new(bytes);
        let public_nonce = r.point()?;
        let proof = DlogProof::decode(&mut r)?;
        r.finish()?;
        Ok(SignSecondMsg {
            public_nonce,
            proof,
        })
    }
}

impl SignThirdMsg {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.point(&self.public_nonce);
        self.proof.encode(&mut w);
        w.bytes(&self.blind);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ThresholdError> {
        let mut r = Reader::new(bytes);
        let public_nonce = r.point()?;
        let proof = DlogProof::decode(&mut r)?;
        let blind = r.array::<32>()?;
        r.finish()?;
        Ok(SignThirdMsg {
            public_nonce,
            proof,
            blind,
        })
    }
}

impl SignFourthMsg {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.c3.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ThresholdError> {
        Ok(SignFourthMsg {
            c3: Ciphertext::from_bytes(bytes),
        })
    }
}

/// Server state across one signing session.
pub struct ServerSignSession {
    eph: EphemeralKey,
    proof: DlogProof,
    blind: [u8; 32],
    peer_nonce: Option<Point>,
}

impl ServerSignSession {
    pub fn start<R: RngCore + CryptoRng>(eph: EphemeralKey, rng: &mut R) -> (Self, SignFirstMsg) {
        let proof = DlogProof::prove(&eph.secret, &eph.public, rng);
        let blind: [u8; 32] = rng.gen();
        let commitment = commit_to(&eph.public, &proof, &blind);
        (
            ServerSignSession {
                eph,
                proof,
                blind,
                peer_nonce: None,
            },
            SignFirstMsg { commitment },
        )
    }

    pub fn reveal(&mut self, msg: &SignSecondMsg) -> Result<SignThirdMsg, ThresholdError> {
        if !msg.proof.verify(&msg.public_nonce) {
            return Err(ThresholdError::ProofRejected("client nonce"));
        }
        self.peer_nonce = Some(msg.public_nonce);
        Ok(SignThirdMsg {
            public_nonce: self.eph.public,
            proof: self.proof,
            blind: self.blind,
        })
    }

    pub fn finish(
        self,
        key: &ServerKey,
        message: &[u8],
        msg: &SignFourthMsg,
    ) -> Result<EcdsaSignature, ThresholdError> {
        let r2 = self
            .peer_nonce
            .ok_or(ThresholdError::ProofRejected("client nonce"))?;
        key.joint.paillier_pk.check_ciphertext(&msg.c3)?;
        let r = (&r2 * &self.eph.secret).x_mod_order();
        if scalar_is_zero(&r) {
            return Err(ThresholdError::DegenerateNonce);
        }
        let s_prime = biguint_to_scalar(&key.paillier_sk().decrypt(&msg.c3));
        let k1_inv = scalar_inverse(&self.eph.secret).ok_or(ThresholdError::DegenerateNonce)?;
        let s = s_prime * k1_inv;
        if scalar_is_zero(&s) {
            return Err(ThresholdError::DegenerateNonce);
        }
        let sig = EcdsaSignature { r, s }.normalize_s();
        if !verify_standard(&key.public(), message, &sig) {
            return Err(ThresholdError::InvalidSignature);
        }
        Ok(sig)
    }
}

/// Client state across one signing session.
pub struct ClientSignSession {
    eph: EphemeralKey,
    commitment: [u8; 32],
}

impl ClientSignSession {
    pub fn respond<R: RngCore + CryptoRng>(
        first: &SignFirstMsg,
        eph: EphemeralKey,
        rng: &mut R,
    ) -> (Self, SignSecondMsg) {
        let proof = DlogProof::prove(&eph.secret, &eph.public, rng);
        let second = SignSecondMsg {
            public_nonce: eph.public,
            proof,
        };
        (
            ClientSignSession {
                eph,
                commitment: first.commitment,
            },
            second,
        )
    }

    pub fn finish<R: RngCore + CryptoRng>(
        self,
        key: &ClientKey,
        message: &[u8],
        msg: &SignThirdMsg,
        rng: &mut R,
    ) -> Result<SignFourthMsg, ThresholdError> {
        if commit_to(&msg.public_nonce, &msg.proof, &msg.blind) != self.commitment {
            return Err(ThresholdError::CommitmentMismatch);
        }
        if !msg.proof.verify(&msg.public_nonce) {
            return Err(ThresholdError::ProofRejected("server nonce"));
        }
        let r = (&msg.public_nonce * &self.eph.secret).x_mod_order();
        if scalar_is_zero(&r) {
            return Err(ThresholdError::DegenerateNonce);
        }
        let k2_inv = scalar_inverse(&self.eph.secret).ok_or(ThresholdError::DegenerateNonce)?;
        let pk = &key.joint.paillier_pk;
        let q = group_order();
        // ρ ∈ [0, q²) masks the plaintext so the server learns only s' mod q.
        let rho = rng.gen_biguint_below(&(&q * &q));
        let masked = scalar_biguint(&(k2_inv * message_scalar(message))) + rho * &q;
        let c1 = pk.encrypt(&masked, rng)?;
        let exponent = scalar_biguint(&(*key.joint.share.secret() * r * k2_inv));
        let c2 = pk.mul_plain(&key.joint.c_key, &exponent);
        Ok(SignFourthMsg {
            c3: pk.add(&c1, &c2),
        })
    }
}

/// Seeds for the two parties' RNGs in a local signing run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SignSeeds {
    pub server: u64,
    pub client: u64,
}

/// Runs all four messages locally with fresh random nonces.
pub fn sign(
    message: &[u8],
    server: &ServerKey,
    client: &ClientKey,
    seeds: SignSeeds,
) -> Result<EcdsaSignature, ThresholdError> {
    let mut srng = ChaCha20Rng::seed_from_u64(seeds.server);
    let mut crng = ChaCha20Rng::seed_from_u64(seeds.client);
    let k1 = EphemeralKey::random(&mut srng);
    let k2 = EphemeralKey::random(&mut crng);
    run(message, server, client, k1, k2, &mut srng, &mut crng)
}

/// Runs all four messages locally with caller-chosen nonce shares.
pub fn sign_with_ephemerals(
    message: &[u8],
    server: &ServerKey,
    client: &ClientKey,
    k1: EphemeralKey,
    k2: EphemeralKey,
    seeds: SignSeeds,
) -> Result<EcdsaSignature, ThresholdError> {
    let mut srng = ChaCha20Rng::seed_from_u64(seeds.server);
    let mut crng = ChaCha20Rng::seed_from_u64(seeds.client);
    run(message, server, client, k1, k2, &mut srng, &mut crng)
}

fn run<R1, R2>(
    message: &[u8],
    server: &ServerKey,
    client: &ClientKey,
    k1: EphemeralKey,
    k2: EphemeralKey,
    srng: &mut R1,
    crng: &mut R2,
) -> Result<EcdsaSignature, ThresholdError>
where
    R1: RngCore + CryptoRng,
    R2: RngCore + CryptoRng,
{
    let (mut s, m1) = ServerSignSession::start(k1, srng);
    let (c, m2) = ClientSignSession::respond(&m1, k2, crng);
    let m3 = s.reveal(&m2)?;
    let m4 = c.finish(client, message, &m3, crng)?;
    s.finish(server, message, &m4)
}

/// The plaintext bound `k2⁻¹·H(m) + ρ·q + x2·r·k2⁻¹·x1 < q³ + q² + q`
/// that the Paillier modulus must exceed.
pub fn plaintext_bound() -> BigUint {
    let q = group_order();
    &q * &q * &q + &q * &q + &q
}

#[cfg(test)]
mod tests {
    use super::super::keygen::keygen_with_shares;
    use super::super::KeygenParams;
    use super::*;

    fn keys(x1: u64, x2: u64) -> (ServerKey, ClientKey) {
        let mut rng = ChaCha20Rng::seed_from_u64(x1 * 31 + x2);
        keygen_with_shares(
            Scalar::from(x1),
            Scalar::from(x2),
            &KeygenParams::testing(),
            &mut rng,
        )
        .unwrap()
    }

    const SEEDS: SignSeeds = SignSeeds {
        server: 7,
        client: 8,
    };

    #[test]
    fn joint_signature_verifies() {
        let (s, c) = keys(11, 13);
        let sig = sign(b"payment", &s, &c, SEEDS).unwrap();
        assert!(sig.is_low_s());
        assert!(verify_standard(&s.public(), b"payment", &sig));
        assert!(!verify_standard(&s.public(), b"paymenT", &sig));
    }

    #[test]
    fn unit_nonces_give_generator_x() {
        let (s, c) = keys(2, 3);
        let k1 = EphemeralKey::from_secret(Scalar::ONE).unwrap();
        let k2 = EphemeralKey::from_secret(Scalar::ONE).unwrap();
        let sig = sign_with_ephemerals(b"m", &s, &c, k1, k2, SEEDS).unwrap();
        assert_eq!(sig.r, Point::generator().x_mod_order());
        // s = H(m) + r·6 with k = 1
        let expected = EcdsaSignature {
            r: sig.r,
            s: message_scalar(b"m") + sig.r * Scalar::from(6u64),
        }
        .normalize_s();
        assert_eq!(sig, expected);
    }

    #[test]
    fn tampered_c3_rejected() {
        let (s, c) = keys(5, 9);
        let mut srng = ChaCha20Rng::seed_from_u64(1);
        let mut crng = ChaCha20Rng::seed_from_u64(2);
        let (mut ss, m1) = ServerSignSession::start(EphemeralKey::random(&mut srng), &mut srng);
        let (cs, m2) = ClientSignSession::respond(&m1, EphemeralKey::random(&mut crng), &mut crng);
        let m3 = ss.reveal(&m2).unwrap();
        let mut m4 = cs.finish(&c, b"x", &m3, &mut crng).unwrap();
        let pk = &c.joint.paillier_pk;
        let one = pk.encrypt(&BigUint::from(1u8), &mut crng).unwrap();
        m4.c3 = pk.add(&m4.c3, &one);
        assert_eq!(
            ss.finish(&s, b"x", &m4).unwrap_err(),
            ThresholdError::InvalidSignature
        );
    }

    #[test]
    fn nonce_commitment_enforced() {
        let (_, c) = keys(5, 9);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (mut ss, m1) = ServerSignSession::start(EphemeralKey::random(&mut rng), &mut rng);
        let (cs, m2) = ClientSignSession::respond(&m1, EphemeralKey::random(&mut rng), &mut rng);
        let mut m3 = ss.reveal(&m2).unwrap();
        let other = EphemeralKey::random(&mut rng);
        m3.public_nonce = other.public;
        m3.proof = DlogProof::prove(&other.secret, &other.public, &mut rng);
        assert_eq!(
            cs.finish(&c, b"x", &m3, &mut rng).unwrap_err(),
            ThresholdError::CommitmentMismatch
        );
    }

    #[test]
    fn min_modulus_exceeds_plaintext_bound() {
        let bound_bits = plaintext_bound().bits() as usize;
        assert!(bound_bits < super::super::paillier::MIN_MODULUS_BITS);
    }

    #[test]
    fn messages_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (mut ss, m1) = ServerSignSession::start(EphemeralKey::random(&mut rng), &mut rng);
        let (_, m2) = ClientSignSession::respond(&m1, EphemeralKey::random(&mut rng), &mut rng);
        let m3 = ss.reveal(&m2).unwrap();
        assert_eq!(SignFirstMsg::from_bytes(&m1.to_bytes()).unwrap(), m1);
        assert_eq!(SignSecondMsg::from_bytes(&m2.to_bytes()).unwrap(), m2);
        assert_eq!(SignThirdMsg::from_bytes(&m3.to_bytes()).unwrap(), m3);
    }
}
