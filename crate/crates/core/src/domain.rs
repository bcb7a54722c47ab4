//! Domain side: certificate assembly, contract deployment and the agent
//! that keeps the stapled certificate fresh.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::ca::CertificateAuthority;
use crate::chain::{Address, Chain, ChainError, Transaction, TxId, TxTarget};
use crate::codec::{DecodeError, Reader, Writer};
use crate::contracts::{self, certificate_labels, CertSnapshot, Policy};
use crate::crypto::{KeyPair, PublicKey};
use crate::handshake::HandshakeServer;
use crate::hash::Digest;
use crate::trie::InclusionProof;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("no SmartCert contract at {0}")]
    UnknownContract(Address),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Contract address plus proofs of its account and the client-visible
/// storage slots, all against the state root of block `anchor`.
///
/// Encoding: `addr (20B) ‖ anchor u64 BE ‖ account proof ‖ slot count u16 BE ‖
/// (label len u8 ‖ label ‖ slot proof)*`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmartCertCertificate {
    pub addr: Address,
    pub anchor: u64,
    pub account_proof: InclusionProof,
    pub slots: Vec<(String, InclusionProof)>,
}

impl SmartCertCertificate {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.addr.0).u64(self.anchor);
        self.account_proof.encode_into(&mut w);
        w.u16(self.slots.len() as u16);
        for (label, p) in &self.slots {
            w.u8(label.len() as u8).raw(label.as_bytes());
            p.encode_into(&mut w);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let addr = Address(r.array()?);
        let anchor = r.u64()?;
        let account_proof = InclusionProof::decode_from(&mut r)?;
        let n = r.u16()?;
        let slots = (0..n)
            .map(|_| {
                let len = r.u8()? as usize;
                let label = std::str::from_utf8(r.take(len)?).map_err(|_| DecodeError::Invalid("slot label"))?;
                Ok((label.to_owned(), InclusionProof::decode_from(&mut r)?))
            })
            .collect::<Result<_, DecodeError>>()?;
        r.finish()?;
        Ok(Self {
            addr,
            anchor,
            account_proof,
            slots,
        })
    }

    /// Slot values as carried by the proofs. Unverified.
    pub fn proven_slots(&self) -> BTreeMap<String, Vec<u8>> {
        self.slots.iter().map(|(l, p)| (l.clone(), p.value.clone())).collect()
    }

    /// Decoded storage snapshot. Unverified; use the client validator.
    pub fn snapshot(&self) -> Result<CertSnapshot, DecodeError> {
        CertSnapshot::load(&self.proven_slots())
    }
}

/// Proofs for `addr` against the head block.
pub fn assemble_certificate(chain: &Chain, addr: &Address) -> Result<SmartCertCertificate, DomainError> {
    let storage = chain.storage(addr).ok_or(DomainError::UnknownContract(*addr))?;
    let labels = certificate_labels(storage).map_err(|_| DomainError::UnknownContract(*addr))?;
    let proof = chain.storage_proof(addr, &labels)?;
    Ok(SmartCertCertificate {
        addr: *addr,
        anchor: chain.height(),
        account_proof: proof.account_proof,
        slots: proof.slots,
    })
}

/// CREATE transaction for a SmartCert contract. Returns the transaction
/// and the address the contract will get.
pub fn create_cert_tx(
    owner: &KeyPair,
    nonce: u64,
    template: &str,
    name: &str,
    keys: &[PublicKey],
    cas: &[Address],
) -> (Transaction, Address) {
    let tx = Transaction::new_signed(
        owner,
        nonce,
        TxTarget::Create {
            template: template.to_owned(),
        },
        "init",
        contracts::init_args(name, keys, cas),
    );
    let addr = Address::contract(&tx.sender_address(), nonce);
    (tx, addr)
}

pub fn new_policy_tx(
    sender: &KeyPair,
    nonce: u64,
    policy_contract: Address,
    name: &str,
    policy: &Policy,
    sigs: &[(PublicKey, Vec<u8>)],
) -> Transaction {
    Transaction::new_signed(
        sender,
        nonce,
        TxTarget::Call(policy_contract),
        "newPolicy",
        contracts::new_policy_args(name, policy, sigs),
    )
}

/// Collects a signature from each CA and queues the `newPolicy` transaction.
pub fn bootstrap_policy(
    chain: &mut Chain,
    sender: &KeyPair,
    name: &str,
    draft: &Policy,
    signers: &[&CertificateAuthority],
) -> Result<TxId, ChainError> {
    let sigs: Vec<_> = signers.iter().map(|ca| ca.sign_policy(name, draft)).collect();
    let nonce = chain.next_nonce(&Address::from_public_key(sender.public()));
    let policy_contract = chain.policy_contract();
    chain.submit_tx(new_policy_tx(sender, nonce, policy_contract, name, draft, &sigs))
}

/// Keeps a handshake server's staple within `period` of the chain head, and
/// restaples as soon as the contract's storage changes.
pub struct DomainAgent {
    pub name: String,
    pub contract: Address,
    pub period: u64,
    server: Arc<HandshakeServer>,
    last_refresh: Option<u64>,
    stapled_root: Option<Digest>,
}

impl DomainAgent {
    pub fn new(name: impl Into<String>, contract: Address, period: u64, server: Arc<HandshakeServer>) -> Self {
        Self {
            name: name.into(),
            contract,
            period,
            server,
            last_refresh: None,
            stapled_root: None,
        }
    }

    pub fn server(&self) -> &Arc<HandshakeServer> {
        &self.server
    }

    pub fn last_refresh(&self) -> Option<u64> {
        self.last_refresh
    }

    /// Restaples unconditionally. On failure the previous staple is kept.
    pub fn refresh(&mut self, chain: &Chain) -> Result<(), DomainError> {
        let cert = assemble_certificate(chain, &self.contract)?;
        self.server.set_staple(Some(cert.encode()));
        self.last_refresh = Some(chain.head().timestamp);
        self.stapled_root = chain.account(&self.contract).map(|a| a.storage_root);
        log::debug!("{}: restapled at block {}", self.name, cert.anchor);
        Ok(())
    }

    /// Restaples if `period` has elapsed since the last refresh or the
    /// contract changed. Returns whether it did.
    pub fn tick(&mut self, chain: &Chain, now: u64) -> Result<bool, DomainError> {
        self.server.set_time(now);
        let changed = chain.account(&self.contract).map(|a| a.storage_root) != self.stapled_root;
        let due = changed || self.last_refresh.is_none_or(|t| now.saturating_sub(t) >= self.period);
        if due {
            if let Err(e) = self.refresh(chain) {
                log::warn!("{}: refresh failed, serving previous staple: {e}", self.name);
                return Err(e);
            }
        }
        Ok(due)
    }
}
