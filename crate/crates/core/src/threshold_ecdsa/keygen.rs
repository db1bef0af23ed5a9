//! Distributed key generation, three messages:
//!
//! 1. server → client: commitment to `(Q1, π1)`
//! 2. client → server: `Q2`, `π2`
//! 3. server → client: opening of `(Q1, π1)`, Paillier modulus, `c_key`,
//!    and the Paillier key proof transcript.
//!
//! Both sides end with `Q = x1·Q2 = x2·Q1`.

use num_bigint::BigUint;
use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::dlog::DlogProof;
use super::paillier::{generate_keypair, Ciphertext, PaillierPublicKey};
use super::{
    commit_to, scalar_biguint, ClientKey, JointKey, KeygenParams, Party, PartyShare, ServerKey,
    ThresholdError,
};
use crate::codec::{Reader, Writer};
use crate::group::{random_nonzero_scalar, Point, Scalar};

/// Transcript slot for the Paillier well-formedness and `x1 ∈ Z_q` range
/// proofs. Those proofs are not implemented; the slot carries this fixed
/// tag and is checked for equality so real proofs can replace it.
pub const PAILLIER_PROOF_PLACEHOLDER: &[u8] = b"lngate/paillier-proofs/unverified-v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeygenFirstMsg {
    pub commitment: [u8; 32],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeygenSecondMsg {
    pub public_share: Point,
    pub proof: DlogProof,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeygenThirdMsg {
    pub public_share: Point,
    pub proof: DlogProof,
    pub blind: [u8; 32],
    pub paillier_modulus: BigUint,
    pub c_key: Ciphertext,
    pub paillier_proof: Vec<u8>,
}

impl KeygenFirstMsg {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.commitment.to_vec()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ThresholdError> {
        let mut r = Reader::new(bytes);
        let commitment = r.array::<32>()?;
        r.finish()?;
        Ok(KeygenFirstMsg { commitment })
    }
}

impl KeygenSecondMsg {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.point(&self.public_share);
        self.proof.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ThresholdError> {
        let mut r = Reader::new(bytes);
        let public_share = r.point()?;
        let proof = DlogProof::decode(&mut r)?;
        r.finish()?;
        Ok(KeygenSecondMsg {
            public_share,
            proof,
        })
    }
}

impl KeygenThirdMsg {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.point(&self.public_share);
        self.proof.encode(&mut w);
        w.bytes(&self.blind)
            .biguint(&self.paillier_modulus)
            .var(&self.c_key.to_bytes())
            .var(&self.paillier_proof);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ThresholdError> {
        let mut r = Reader::new(bytes);
        let public_share = r.point()?;
        let proof = DlogProof::decode(&mut r)?;
        let blind = r.array::<32>()?;
        let paillier_modulus = r.biguint()?;
        let c_key = Ciphertext::from_bytes(r.var()?);
        let paillier_proof = r.var()?.to_vec();
        r.finish()?;
        Ok(KeygenThirdMsg {
            public_share,
            proof,
            blind,
            paillier_modulus,
            c_key,
            paillier_proof,
        })
    }
}

/// Server side between messages 1 and 3.
pub struct KeygenServer {
    params: KeygenParams,
    share: PartyShare,
    proof: DlogProof,
    blind: [u8; 32],
}

impl KeygenServer {
    pub fn start<R: RngCore + CryptoRng>(
        params: &KeygenParams,
        rng: &mut R,
    ) -> Result<(Self, KeygenFirstMsg), ThresholdError> {
        let x1 = random_nonzero_scalar(rng);
        Self::start_with_share(params, x1, rng)
    }

    pub fn start_with_share<R: RngCore + CryptoRng>(
        params: &KeygenParams,
        x1: Scalar,
        rng: &mut R,
    ) -> Result<(Self, KeygenFirstMsg), ThresholdError> {
        params.group.ensure_supported()?;
        let share = PartyShare::new(Party::Server, x1)?;
        let proof = DlogProof::prove(share.secret(), &share.public(), rng);
        let blind: [u8; 32] = rng.gen();
        let commitment = commit_to(&share.public(), &proof, &blind);
        Ok((
            KeygenServer {
                params: params.clone(),
                share,
                proof,
                blind,
            },
            KeygenFirstMsg { commitment },
        ))
    }

    pub fn finish<R: RngCore + CryptoRng>(
        self,
        msg: &KeygenSecondMsg,
        rng: &mut R,
    ) -> Result<(ServerKey, KeygenThirdMsg), ThresholdError> {
        if !msg.proof.verify(&msg.public_share) {
            return Err(ThresholdError::ProofRejected("client key share"));
        }
        let paillier_sk = generate_keypair(self.params.paillier_bits, rng)?;
        let paillier_pk = paillier_sk.public().clone();
        let c_key = paillier_pk.encrypt(&scalar_biguint(self.share.secret()), rng)?;
        let public = msg.public_share * self.share.secret();
        let third = KeygenThirdMsg {
            public_share: self.share.public(),
            proof: self.proof,
            blind: self.blind,
            paillier_modulus: paillier_pk.modulus().clone(),
            c_key: c_key.clone(),
            paillier_proof: PAILLIER_PROOF_PLACEHOLDER.to_vec(),
        };
        let key = ServerKey {
            joint: JointKey {
                public,
                c_key,
                paillier_pk,
                share: self.share,
                peer_public: msg.public_share,
            },
            paillier_sk,
        };
        Ok((key, third))
    }
}

/// Client side between messages 2 and 3.
pub struct KeygenClient {
    params: KeygenParams,
    share: PartyShare,
    commitment: [u8; 32],
}

impl KeygenClient {
    pub fn respond<R: RngCore + CryptoRng>(
        params: &KeygenParams,
        first: &KeygenFirstMsg,
        rng: &mut R,
    ) -> Result<(Self, KeygenSecondMsg), ThresholdError> {
        let x2 = random_nonzero_scalar(rng);
        Self::respond_with_share(params, first, x2, rng)
    }

    pub fn respond_with_share<R: RngCore + CryptoRng>(
        params: &KeygenParams,
        first: &KeygenFirstMsg,
        x2: Scalar,
        rng: &mut R,
    ) -> Result<(Self, KeygenSecondMsg), ThresholdError> {
        params.group.ensure_supported()?;
        let share = PartyShare::new(Party::Client, x2)?;
        let proof = DlogProof::prove(share.secret(), &share.public(), rng);
        let second = KeygenSecondMsg {
            public_share: share.public(),
            proof,
        };
        Ok((
            KeygenClient {
                params: params.clone(),
                share,
                commitment: first.commitment,
            },
            second,
        ))
    }

    pub fn finish(self, msg: &KeygenThirdMsg) -> Result<ClientKey, ThresholdError> {
        if commit_to(&msg.public_share, &msg.proof, &msg.blind) != self.commitment {
            return Err(ThresholdError::CommitmentMismatch);
        }
        if !msg.proof.verify(&msg.public_share) {
            return Err(ThresholdError::ProofRejected("server key share"));
        }
        if msg.paillier_proof != PAILLIER_PROOF_PLACEHOLDER {
            return Err(ThresholdError::ProofRejected("paillier key"));
        }
        let paillier_pk = PaillierPublicKey::from_modulus(msg.paillier_modulus.clone())?;
        if paillier_pk.bits() < self.params.paillier_bits {
            return Err(ThresholdError::ModulusTooSmall {
                bits: paillier_pk.bits(),
                min: self.params.paillier_bits,
            });
        }
        paillier_pk.check_ciphertext(&msg.c_key)?;
        let public = msg.public_share * self.share.secret();
        Ok(ClientKey {
            joint: JointKey {
                public,
                c_key: msg.c_key.clone(),
                paillier_pk,
                share: self.share,
                peer_public: msg.public_share,
            },
        })
    }
}

/// Runs the whole exchange locally with independent seeded RNGs.
pub fn keygen(
    server_seed: u64,
    client_seed: u64,
    params: &KeygenParams,
) -> Result<(ServerKey, ClientKey), ThresholdError> {
    let mut srng = ChaCha20Rng::seed_from_u64(server_seed);
    let mut crng = ChaCha20Rng::seed_from_u64(client_seed);
    keygen_with_rngs(params, &mut srng, &mut crng)
}

pub fn keygen_with_rngs<R1, R2>(
    params: &KeygenParams,
    server_rng: &mut R1,
    client_rng: &mut R2,
) -> Result<(ServerKey, ClientKey), ThresholdError>
where
    R1: RngCore + CryptoRng,
    R2: RngCore + CryptoRng,
{
    let (server, m1) = KeygenServer::start(params, server_rng)?;
    let (client, m2) = KeygenClient::respond(params, &m1, client_rng)?;
    let (skey, m3) = server.finish(&m2, server_rng)?;
    let ckey = client.finish(&m3)?;
    Ok((skey, ckey))
}

/// Keygen with caller-chosen shares (test mode).
pub fn keygen_with_shares<R: RngCore + CryptoRng>(
    x1: Scalar,
    x2: Scalar,
    params: &KeygenParams,
    rng: &mut R,
) -> Result<(ServerKey, ClientKey), ThresholdError> {
    let (server, m1) = KeygenServer::start_with_share(params, x1, rng)?;
    let (client, m2) = KeygenClient::respond_with_share(params, &m1, x2, rng)?;
    let (skey, m3) = server.finish(&m2, rng)?;
    let ckey = client.finish(&m3)?;
    Ok((skey, ckey))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::scalar_is_zero;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn identity_shares_give_generator() {
        let (s, c) = keygen_with_shares(
            Scalar::ONE,
            Scalar::ONE,
            &KeygenParams::testing(),
            &mut rng(1),
        )
        .unwrap();
        assert_eq!(s.public(), Point::generator());
        assert_eq!(c.public(), Point::generator());
    }

    #[test]
    fn multiplicative_sharing() {
        let (s, c) = keygen_with_shares(
            Scalar::from(2u64),
            Scalar::from(3u64),
            &KeygenParams::testing(),
            &mut rng(2),
        )
        .unwrap();
        assert_eq!(s.public(), Point::mul_base(&Scalar::from(6u64)));
        assert_eq!(c.public(), s.public());
    }

    #[test]
    fn zero_share_rejected() {
        let err = keygen_with_shares(
            Scalar::ZERO,
            Scalar::ONE,
            &KeygenParams::testing(),
            &mut rng(3),
        )
        .unwrap_err();
        assert_eq!(err, ThresholdError::ShareOutOfRange);
    }

    #[test]
    fn forged_client_proof_aborts() {
        let params = KeygenParams::testing();
        let mut r = rng(4);
        let (server, m1) = KeygenServer::start(&params, &mut r).unwrap();
        let (_, mut m2) = KeygenClient::respond(&params, &m1, &mut r).unwrap();
        m2.public_share = m2.public_share + Point::generator();
        assert!(matches!(
            server.finish(&m2, &mut r),
            Err(ThresholdError::ProofRejected(_))
        ));
    }

    #[test]
    fn swapped_server_share_fails_commitment() {
        let params = KeygenParams::testing();
        let mut r = rng(5);
        let (server, m1) = KeygenServer::start(&params, &mut r).unwrap();
        let (client, m2) = KeygenClient::respond(&params, &m1, &mut r).unwrap();
        let (_, mut m3) = server.finish(&m2, &mut r).unwrap();
        let other = random_nonzero_scalar(&mut r);
        m3.public_share = Point::mul_base(&other);
        m3.proof = DlogProof::prove(&other, &m3.public_share, &mut r);
        assert_eq!(
            client.finish(&m3).unwrap_err(),
            ThresholdError::CommitmentMismatch
        );
    }

    #[test]
    fn third_message_roundtrip() {
        let params = KeygenParams::testing();
        let mut r = rng(6);
        let (server, m1) = KeygenServer::start(&params, &mut r).unwrap();
        let (_, m2) = KeygenClient::respond(&params, &m1, &mut r).unwrap();
        let (_, m3) = server.finish(&m2, &mut r).unwrap();
        assert_eq!(KeygenThirdMsg::from_bytes(&m3.to_bytes()).unwrap(), m3);
        assert_eq!(KeygenSecondMsg::from_bytes(&m2.to_bytes()).unwrap(), m2);
        assert_eq!(KeygenFirstMsg::from_bytes(&m1.to_bytes()).unwrap(), m1);
        assert!(!scalar_is_zero(&m3.proof.response));
    }
}
