//! Certification authority role: co-signs policies, probes domain endpoints
//! and submits validation proofs.

use thiserror::Error;

use crate::chain::{Address, Chain, ChainError, Transaction, TxId, TxTarget};
use crate::contracts::Policy;
use crate::crypto::{KeyPair, PublicKey};
use crate::handshake::{ca_probe, Endpoint, HandshakeError, ValidationProof};
use crate::hash::Digest;

#[derive(Clone, Debug)]
pub struct CertificateAuthority {
    name: String,
    keys: KeyPair,
    address: Address,
}

impl CertificateAuthority {
    pub fn new(name: impl Into<String>, keys: KeyPair) -> Self {
        let address = Address::from_public_key(keys.public());
        Self {
            name: name.into(),
            keys,
            address,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    /// Signature entry for a policy registration.
    pub fn sign_policy(&self, domain: &str, policy: &Policy) -> (PublicKey, Vec<u8>) {
        (
            self.keys.public().clone(),
            self.keys.sign(&policy.signing_message(domain)),
        )
    }

    /// Probes `endpoint` anchored at the block with hash `anchor`.
    pub fn probe(&self, endpoint: &dyn Endpoint, anchor: &Digest) -> Result<ValidationProof, HandshakeError> {
        ca_probe(endpoint, &self.address, anchor)
    }

    pub fn update_tx(&self, nonce: u64, contract: Address, proof: &ValidationProof) -> Transaction {
        Transaction::new_signed(
            &self.keys,
            nonce,
            TxTarget::Call(contract),
            "update",
            proof.update_args(),
        )
    }

    pub fn revoke_tx(&self, nonce: u64, contract: Address) -> Transaction {
        Transaction::new_signed(&self.keys, nonce, TxTarget::Call(contract), "revoke", Vec::new())
    }

    /// Probes on top of the current head and queues the update.
    pub fn validate(
        &self,
        chain: &mut Chain,
        endpoint: &dyn Endpoint,
        contract: Address,
    ) -> Result<TxId, ValidateError> {
        let proof = self.probe(endpoint, &chain.head_hash())?;
        let nonce = chain.next_nonce(&self.address);
        Ok(chain.submit_tx(self.update_tx(nonce, contract, &proof))?)
    }
}

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error(transparent)]
    Handshake(#[from] HandshakeError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}
