//! Signature schemes behind one key interface.
//!
//! Public keys travel as SubjectPublicKeyInfo DER; the algorithm is read
//! from the encoding. RSA-2048 with PKCS#1 v1.5 padding over SHA-256 is the
//! production scheme. Ed25519 is the fast deterministic stand-in for tests
//! and large randomized scenarios.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rsa::pkcs1v15::{Signature as RsaSignature, SigningKey as RsaSigningKey, VerifyingKey as RsaVerifyingKey};
use rsa::pkcs8::{DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey};
use rsa::signature::{SignatureEncoding, Signer, Verifier};
use rsa::{RsaPrivateKey, RsaPublicKey};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::hash::hash_parts;

pub const RSA_BITS: usize = 2048;

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("unsupported or malformed public key")]
    BadPublicKey,
    #[error("unsupported or malformed private key")]
    BadPrivateKey,
    #[error("key generation failed: {0}")]
    KeyGen(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[serde(alias = "rsa2048")]
    RsaPkcs1Sha256,
    Ed25519,
}

/// A verification key, kept in its SPKI DER encoding.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PublicKey {
    der: Vec<u8>,
    algorithm: Algorithm,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = crate::hash::hash(&self.der);
        write!(f, "PublicKey({:?}, {}..)", self.algorithm, &h.to_hex()[..12])
    }
}

impl PublicKey {
    pub fn from_der(der: &[u8]) -> Result<Self, CryptoError> {
        if RsaPublicKey::from_public_key_der(der).is_ok() {
            return Ok(Self {
                der: der.to_vec(),
                algorithm: Algorithm::RsaPkcs1Sha256,
            });
        }
        if ed25519_dalek::VerifyingKey::from_public_key_der(der).is_ok() {
            return Ok(Self {
                der: der.to_vec(),
                algorithm: Algorithm::Ed25519,
            });
        }
        Err(CryptoError::BadPublicKey)
    }

    pub fn der(&self) -> &[u8] {
        &self.der
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    /// Verifies `sig` over `msg`. Any malformed input yields `false`.
    pub fn verify(&self, msg: &[u8], sig: &[u8]) -> bool {
        match self.algorithm {
            Algorithm::RsaPkcs1Sha256 => {
                let Ok(pk) = RsaPublicKey::from_public_key_der(&self.der) else {
                    return false;
                };
                let Ok(sig) = RsaSignature::try_from(sig) else {
                    return false;
                };
                RsaVerifyingKey::<Sha256>::new(pk).verify(msg, &sig).is_ok()
            }
            Algorithm::Ed25519 => {
                let Ok(vk) = ed25519_dalek::VerifyingKey::from_public_key_der(&self.der) else {
                    return false;
                };
                let Ok(sig) = ed25519_dalek::Signature::from_slice(sig) else {
                    return false;
                };
                vk.verify_strict(msg, &sig).is_ok()
            }
        }
    }
}

#[derive(Clone)]
enum Secret {
    Rsa(Box<RsaSigningKey<Sha256>>, Box<RsaPrivateKey>),
    Ed25519(Box<ed25519_dalek::SigningKey>),
}

type KeyCache = HashMap<(Algorithm, u64, String), KeyPair>;

/// A signing key together with its public half.
#[derive(Clone)]
pub struct KeyPair {
    secret: Secret,
    public: PublicKey,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(algorithm: Algorithm, rng: &mut R) -> Result<Self, CryptoError> {
        match algorithm {
            Algorithm::RsaPkcs1Sha256 => {
                let sk = RsaPrivateKey::new(rng, RSA_BITS).map_err(|e| CryptoError::KeyGen(e.to_string()))?;
                Self::from_rsa(sk)
            }
            Algorithm::Ed25519 => {
                let mut seed = [0u8; 32];
                rng.fill_bytes(&mut seed);
                Self::from_ed25519(ed25519_dalek::SigningKey::from_bytes(&seed))
            }
        }
    }

    /// Deterministic key for `(seed, label)`. Keys are cached process-wide
    /// since RSA generation dominates scenario setup time.
    pub fn derive(algorithm: Algorithm, seed: u64, label: &str) -> Self {
        static CACHE: OnceLock<Mutex<KeyCache>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let id = (algorithm, seed, label.to_owned());
        if let Some(k) = cache.lock().expect("key cache").get(&id) {
            return k.clone();
        }
        let material = hash_parts(&[b"smartcert-key", &seed.to_be_bytes(), label.as_bytes()]);
        let mut rng = ChaCha20Rng::from_seed(material.0);
        let k = Self::generate(algorithm, &mut rng).expect("key generation from a seeded rng");
        cache.lock().expect("key cache").insert(id, k.clone());
        k
    }

    fn from_rsa(sk: RsaPrivateKey) -> Result<Self, CryptoError> {
        let der = sk
            .to_public_key()
            .to_public_key_der()
            .map_err(|_| CryptoError::BadPrivateKey)?
            .into_vec();
        Ok(Self {
            public: PublicKey {
                der,
                algorithm: Algorithm::RsaPkcs1Sha256,
            },
            secret: Secret::Rsa(Box::new(RsaSigningKey::new(sk.clone())), Box::new(sk)),
        })
    }

    fn from_ed25519(sk: ed25519_dalek::SigningKey) -> Result<Self, CryptoError> {
        let der = sk
            .verifying_key()
            .to_public_key_der()
            .map_err(|_| CryptoError::BadPrivateKey)?
            .into_vec();
        Ok(Self {
            public: PublicKey {
                der,
                algorithm: Algorithm::Ed25519,
            },
            secret: Secret::Ed25519(Box::new(sk)),
        })
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn algorithm(&self) -> Algorithm {
        self.public.algorithm
    }

    pub fn sign(&self, msg: &[u8]) -> Vec<u8> {
        match &self.secret {
            Secret::Rsa(sk, _) => sk.sign(msg).to_vec(),
            Secret::Ed25519(sk) => {
                use ed25519_dalek::Signer as _;
                sk.sign(msg).to_bytes().to_vec()
            }
        }
    }

    /// PKCS#8 DER private key.
    pub fn to_pkcs8_der(&self) -> Vec<u8> {
        match &self.secret {
            Secret::Rsa(_, sk) => sk.to_pkcs8_der().expect("encodable RSA key").as_bytes().to_vec(),
            Secret::Ed25519(sk) => sk.to_pkcs8_der().expect("encodable Ed25519 key").as_bytes().to_vec(),
        }
    }

    pub fn from_pkcs8_der(der: &[u8]) -> Result<Self, CryptoError> {
        if let Ok(sk) = RsaPrivateKey::from_pkcs8_der(der) {
            return Self::from_rsa(sk);
        }
        if let Ok(sk) = ed25519_dalek::SigningKey::from_pkcs8_der(der) {
            return Self::from_ed25519(sk);
        }
        Err(CryptoError::BadPrivateKey)
    }
}
