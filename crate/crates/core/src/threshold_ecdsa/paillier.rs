//! Paillier encryption with `g = N + 1`, the additively homomorphic scheme
//! the client uses to finish a signature over the server's encrypted share.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};

use super::ThresholdError;

/// Smallest modulus accepted. The signing protocol needs
/// `N > q³ + q² + q` for the masked plaintext to stay below `N`.
pub const MIN_MODULUS_BITS: usize = 1024;
pub const DEFAULT_MODULUS_BITS: usize = 2048;

#[derive(Clone, PartialEq, Eq)]
pub struct PaillierPublicKey {
    n: BigUint,
    nn: BigUint,
}

impl PaillierPublicKey {
    pub fn from_modulus(n: BigUint) -> Result<Self, ThresholdError> {
        let bits = n.bits() as usize;
        if bits < MIN_MODULUS_BITS || n.is_even() {
            return Err(ThresholdError::ModulusTooSmall {
                bits,
                min: MIN_MODULUS_BITS,
            });
        }
        let nn = &n * &n;
        Ok(PaillierPublicKey { n, nn })
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn modulus_squared(&self) -> &BigUint {
        &self.nn
    }

    pub fn bits(&self) -> usize {
        self.n.bits() as usize
    }

    pub fn encrypt<R: RngCore + CryptoRng>(
        &self,
        m: &BigUint,
        rng: &mut R,
    ) -> Result<Ciphertext, ThresholdError> {
        let r = loop {
            let r = rng.gen_biguint_range(&BigUint::one(), &self.n);
            if r.gcd(&self.n).is_one() {
                break r;
            }
        };
        self.encrypt_with_randomness(m, &r)
    }

    /// `(1 + m·N) · rᴺ mod N²`.
    pub fn encrypt_with_randomness(
        &self,
        m: &BigUint,
        r: &BigUint,
    ) -> Result<Ciphertext, ThresholdError> {
        if m >= &self.n {
            return Err(ThresholdError::PlaintextTooLarge);
        }
        let gm = (BigUint::one() + m * &self.n) % &self.nn;
        let rn = r.modpow(&self.n, &self.nn);
        Ok(Ciphertext((gm * rn) % &self.nn))
    }

    /// Homomorphic addition: decrypts to `a + b mod N`.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        Ciphertext((&a.0 * &b.0) % &self.nn)
    }

    /// Homomorphic scalar multiplication: decrypts to `a·k mod N`.
    pub fn mul_plain(&self, a: &Ciphertext, k: &BigUint) -> Ciphertext {
        Ciphertext(a.0.modpow(k, &self.nn))
    }

    /// Range check applied to ciphertexts received from a peer.
    pub fn check_ciphertext(&self, c: &Ciphertext) -> Result<(), ThresholdError> {
        if c.0.is_zero() || c.0 >= self.nn || !c.0.gcd(&self.n).is_one() {
            return Err(ThresholdError::InvalidCiphertext);
        }
        Ok(())
    }
}

impl fmt::Debug for PaillierPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PaillierPublicKey({} bits)", self.bits())
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext(pub BigUint);

impl Ciphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes_be()
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        Ciphertext(BigUint::from_bytes_be(bytes))
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} bits)", self.0.bits())
    }
}

/// Decryption key; decrypts through the CRT halves modulo p² and q².
#[derive(Clone)]
pub struct PaillierSecretKey {
    public: PaillierPublicKey,
    p: BigUint,
    q: BigUint,
    pp: BigUint,
    qq: BigUint,
    hp: BigUint,
    hq: BigUint,
    q_inv_p: BigUint,
}

impl PaillierSecretKey {
    pub fn from_primes(p: BigUint, q: BigUint) -> Result<Self, ThresholdError> {
        if p == q {
            return Err(ThresholdError::InvalidPaillierKey);
        }
        let n = &p * &q;
        let phi = (&p - 1u32) * (&q - 1u32);
        if !n.gcd(&phi).is_one() {
            return Err(ThresholdError::InvalidPaillierKey);
        }
        let public = PaillierPublicKey::from_modulus(n)?;
        let pp = &p * &p;
        let qq = &q * &q;
        let g = public.modulus() + 1u32;
        let hp = l_function(&g.modpow(&(&p - 1u32), &pp), &p)
            .modinv(&p)
            .ok_or(ThresholdError::InvalidPaillierKey)?;
        let hq = l_function(&g.modpow(&(&q - 1u32), &qq), &q)
            .modinv(&q)
            .ok_or(ThresholdError::InvalidPaillierKey)?;
        let q_inv_p = q.modinv(&p).ok_or(ThresholdError::InvalidPaillierKey)?;
        Ok(PaillierSecretKey {
            public,
            p,
            q,
            pp,
            qq,
            hp,
            hq,
            q_inv_p,
        })
    }

    pub fn public(&self) -> &PaillierPublicKey {
        &self.public
    }

    pub fn decrypt(&self, c: &Ciphertext) -> BigUint {
        let mp =
            (l_function(&c.0.modpow(&(&self.p - 1u32), &self.pp), &self.p) * &self.hp) % &self.p;
        let mq =
            (l_function(&c.0.modpow(&(&self.q - 1u32), &self.qq), &self.q) * &self.hq) % &self.q;
        // Garner recombination: m = mq + q·((mp - mq)·q⁻¹ mod p)
        let diff = (&mp + &self.p - (&mq % &self.p)) % &self.p;
        let h = (diff * &self.q_inv_p) % &self.p;
        mq + h * &self.q
    }
}

impl fmt::Debug for PaillierSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PaillierSecretKey({} bits)", self.public.bits())
    }
}

fn l_function(x: &BigUint, n: &BigUint) -> BigUint {
    (x - 1u32) / n
}

/// Generates a key pair whose modulus has exactly `bits` bits.
pub fn generate_keypair<R: RngCore + CryptoRng>(
    bits: usize,
    rng: &mut R,
) -> Result<PaillierSecretKey, ThresholdError> {
    if bits < MIN_MODULUS_BITS {
        return Err(ThresholdError::ModulusTooSmall {
            bits,
            min: MIN_MODULUS_BITS,
        });
    }
    loop {
        let p = glass_pumpkin::prime::from_rng(bits / 2, rng)
            .map_err(|_| ThresholdError::InvalidPaillierKey)?;
        let q = glass_pumpkin::prime::from_rng(bits - bits / 2, rng)
            .map_err(|_| ThresholdError::InvalidPaillierKey)?;
        if p == q || (&p * &q).bits() as usize != bits {
            continue;
        }
        if let Ok(sk) = PaillierSecretKey::from_primes(p, q) {
            return Ok(sk);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn key() -> PaillierSecretKey {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        generate_keypair(1024, &mut rng).unwrap()
    }

    #[test]
    fn homomorphic_identities() {
        let sk = key();
        let pk = sk.public().clone();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let two = pk.encrypt(&BigUint::from(2u8), &mut rng).unwrap();
        let three = pk.encrypt(&BigUint::from(3u8), &mut rng).unwrap();
        assert_eq!(sk.decrypt(&pk.add(&two, &three)), BigUint::from(5u8));
        assert_eq!(
            sk.decrypt(&pk.mul_plain(&two, &BigUint::from(3u8))),
            BigUint::from(6u8)
        );
    }

    #[test]
    fn modulus_has_requested_size() {
        assert_eq!(key().public().bits(), 1024);
    }

    #[test]
    fn plaintext_at_modulus_rejected() {
        let sk = key();
        let pk = sk.public();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        assert_eq!(
            pk.encrypt(pk.modulus(), &mut rng).unwrap_err(),
            ThresholdError::PlaintextTooLarge
        );
        let top = pk.modulus() - 1u32;
        let c = pk.encrypt(&top, &mut rng).unwrap();
        assert_eq!(sk.decrypt(&c), top);
    }

    #[test]
    fn small_modulus_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        assert!(matches!(
            generate_keypair(512, &mut rng),
            Err(ThresholdError::ModulusTooSmall { bits: 512, .. })
        ));
    }

    #[test]
    fn sum_wraps_mod_n() {
        let sk = key();
        let pk = sk.public();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let a = pk.modulus() - 1u32;
        let ca = pk.encrypt(&a, &mut rng).unwrap();
        let cb = pk.encrypt(&BigUint::from(5u8), &mut rng).unwrap();
        assert_eq!(sk.decrypt(&pk.add(&ca, &cb)), BigUint::from(4u8));
    }
}
