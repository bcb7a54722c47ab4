//! Direct chain driver for contract-level properties: blocks are mined at
//! exact timestamps and every probe is anchored explicitly.

#![allow(dead_code)]

pub mod parity;

use std::sync::Arc;

use smartcert::ca::CertificateAuthority;
use smartcert::chain::{Address, Chain, ChainConfig, Genesis, Receipt, Transaction, TxId, TxTarget};
use smartcert::contracts::cert::TEMPLATE_ID;
use smartcert::contracts::{is_compliant, policy, CaState, CertStorage, Policy, PolicyKind};
use smartcert::crypto::{Algorithm, KeyPair};
use smartcert::domain::{bootstrap_policy, create_cert_tx, new_policy_tx};
use smartcert::handshake::{ca_probe, Clock, HandshakeServer, InProcessEndpoint, ValidationProof};
use smartcert::scenario::DEFAULT_GENESIS_TIME;

pub const G: u64 = DEFAULT_GENESIS_TIME;
pub const NAME: &str = "prop.example";

pub fn key(label: &str) -> KeyPair {
    KeyPair::derive(Algorithm::Ed25519, 99, label)
}

pub struct World {
    pub chain: Chain,
    pub cas: Vec<CertificateAuthority>,
    pub owner: KeyPair,
    pub server: Arc<HandshakeServer>,
    pub mitm: Arc<HandshakeServer>,
    pub contract: Address,
    pub policy: Policy,
}

impl World {
    /// `n_cas` trusted CAs, the first `tracked` of them in the contract.
    /// Policy registered at +15, contract created at +30.
    pub fn new(config: ChainConfig, n_cas: usize, tracked: usize, tweak: impl FnOnce(&mut Policy)) -> Self {
        let cas: Vec<_> = (0..n_cas)
            .map(|i| CertificateAuthority::new(format!("ca{i}"), key(&format!("ca:ca{i}"))))
            .collect();
        let addrs: Vec<Address> = cas.iter().map(|c| c.address()).collect();
        let mut chain = Chain::new(
            config,
            Genesis {
                timestamp: G,
                trusted_cas: addrs.clone(),
            },
        )
        .unwrap();
        let owner = key("owner");
        let owner_addr = Address::from_public_key(owner.public());
        let mut policy = Policy::default_for(&addrs);
        policy.version = 1;
        policy.key_id = Some(owner_addr);
        tweak(&mut policy);
        bootstrap_policy(&mut chain, &owner, NAME, &policy, &[&cas[0]]).unwrap();
        chain.mine_block(G + 15).unwrap();
        assert!(
            chain.block_receipts(1).unwrap()[0].status.is_success(),
            "policy registration failed"
        );

        let tls = key("tls");
        let nonce = chain.next_nonce(&owner_addr);
        let (tx, contract) = create_cert_tx(
            &owner,
            nonce,
            TEMPLATE_ID,
            NAME,
            &[tls.public().clone()],
            &addrs[..tracked],
        );
        chain.submit_tx(tx).unwrap();
        chain.mine_block(G + 30).unwrap();
        assert!(chain.account(&contract).is_some(), "contract creation failed");

        let server = Arc::new(HandshakeServer::new(tls, Clock::manual(G), 1));
        let mitm = Arc::new(HandshakeServer::new(key("mitm"), Clock::manual(G), 2));
        Self {
            chain,
            cas,
            owner,
            server,
            mitm,
            contract,
            policy,
        }
    }

    pub fn head_rel(&self) -> u64 {
        self.chain.head().timestamp - G
    }

    /// Mines an empty block at `rel` unless the head is already there.
    pub fn block_at(&mut self, rel: u64) -> u64 {
        if self.head_rel() != rel {
            self.chain.mine_block(G + rel).unwrap();
        }
        self.chain.height()
    }

    pub fn probe(&self, ca: usize, anchor: u64, wrong_key: bool) -> ValidationProof {
        let srv = if wrong_key { &self.mitm } else { &self.server };
        let hash = self.chain.header_at(anchor).unwrap().hash();
        ca_probe(&InProcessEndpoint::new(srv.clone()), &self.cas[ca].address(), &hash).unwrap()
    }

    pub fn submit_update(&mut self, submitter: usize, proof: &ValidationProof) -> TxId {
        let ca = &self.cas[submitter];
        let nonce = self.chain.next_nonce(&ca.address());
        self.chain.submit_tx(ca.update_tx(nonce, self.contract, proof)).unwrap()
    }

    pub fn submit_revoke(&mut self, by: usize) -> TxId {
        let ca = &self.cas[by];
        let nonce = self.chain.next_nonce(&ca.address());
        self.chain.submit_tx(ca.revoke_tx(nonce, self.contract)).unwrap()
    }

    pub fn submit_owner_revoke(&mut self) -> TxId {
        let nonce = self.chain.next_nonce(&Address::from_public_key(self.owner.public()));
        let tx = Transaction::new_signed(&self.owner, nonce, TxTarget::Call(self.contract), "revoke", Vec::new());
        self.chain.submit_tx(tx).unwrap()
    }

    pub fn mine(&mut self, rel: u64) {
        self.chain.mine_block(G + rel).unwrap();
    }

    pub fn receipt(&self, id: &TxId) -> &Receipt {
        self.chain.receipt(id).expect("mined")
    }

    /// Probe anchored at a block at `anchor_rel`, mined at `mined_rel`.
    pub fn update_at(&mut self, ca: usize, anchor_rel: u64, mined_rel: u64) -> Receipt {
        let anchor = self.block_at(anchor_rel);
        let proof = self.probe(ca, anchor, false);
        let id = self.submit_update(ca, &proof);
        self.mine(mined_rel);
        self.receipt(&id).clone()
    }

    pub fn state(&self) -> CertStorage {
        CertStorage::load(self.chain.storage(&self.contract).unwrap()).unwrap()
    }

    pub fn ca_state(&self, ca: usize) -> CaState {
        self.state().cas[&self.cas[ca].address()]
    }
}

/// Bare chain for policy-contract tests; each submission is mined in its
/// own block 15 s after the previous one.
pub struct PolicyBench {
    pub chain: Chain,
    pub cas: Vec<CertificateAuthority>,
    pub t: u64,
}

impl PolicyBench {
    pub fn new(trusted: usize, untrusted: usize) -> Self {
        let cas: Vec<_> = (0..trusted + untrusted)
            .map(|i| CertificateAuthority::new(format!("ca{i}"), key(&format!("ca:ca{i}"))))
            .collect();
        let trusted_cas = cas[..trusted].iter().map(|c| c.address()).collect();
        let chain = Chain::new(
            ChainConfig::default(),
            Genesis {
                timestamp: G,
                trusted_cas,
            },
        )
        .unwrap();
        Self { chain, cas, t: 0 }
    }

    pub fn trusted(&self) -> Vec<Address> {
        policy::trusted_cas(self.chain.storage(&self.chain.policy_contract()).unwrap()).unwrap()
    }

    pub fn draft(&self, holder: &KeyPair, kind: PolicyKind) -> Policy {
        let mut p = Policy::default_for(&self.trusted());
        p.key_id = Some(Address::from_public_key(holder.public()));
        p.kind = kind;
        p.version = self.current().0.version + 1;
        p
    }

    pub fn current(&self) -> (Policy, bool) {
        policy::lookup(self.chain.storage(&self.chain.policy_contract()).unwrap(), NAME).unwrap()
    }

    pub fn submit(&mut self, sender: &KeyPair, p: &Policy, signers: &[usize]) -> String {
        let sigs: Vec<_> = signers.iter().map(|&i| self.cas[i].sign_policy(NAME, p)).collect();
        let nonce = self.chain.next_nonce(&Address::from_public_key(sender.public()));
        let pc = self.chain.policy_contract();
        let id = self
            .chain
            .submit_tx(new_policy_tx(sender, nonce, pc, NAME, p, &sigs))
            .unwrap();
        self.t += 15;
        self.chain.mine_block(G + self.t).unwrap();
        self.chain.receipt(&id).unwrap().status.code()
    }
}

/// Compliance written out directly: one pass over the tracked CAs with
/// the lifetime test inside the loop.
pub fn oracle_compliant(states: &[(Address, CaState)], created: u64, p: &Policy, now: u64) -> bool {
    let mut i = 0u32;
    for (ca, s) in states {
        let authorized = p.cas.contains(ca);
        let within_budget = match p.max_err {
            None => true,
            Some(m) => s.err_no <= m,
        };
        let alive = now >= created && now - created <= p.max_lifetime;
        if authorized && within_budget && alive {
            i += 1;
        }
    }
    i >= p.min_cas
}

/// `is_compliant` against the oracle over every tracked subset of three CAs,
/// every policy subset, errNo 0..=3 per CA, MAX_ERR 0..=3 or unset, MIN_CAs
/// 1..=3 and a lifetime just within or just exceeded. Returns the number of
/// cases and the disagreements.
pub fn compliance_grid() -> (u64, Vec<String>) {
    let addrs: Vec<Address> = (0..3u8).map(|i| Address([i + 1; 20])).collect();
    let created = 1_000;
    let lifetime = 10_000;
    let mut checked = 0u64;
    let mut disagreements = Vec::new();
    for tracked_mask in 0u8..8 {
        let tracked: Vec<Address> = (0..3)
            .filter(|i| tracked_mask & (1 << i) != 0)
            .map(|i| addrs[i])
            .collect();
        for policy_mask in 0u8..8 {
            for errs in 0..4u64.pow(tracked.len() as u32) {
                let states: Vec<(Address, CaState)> = tracked
                    .iter()
                    .enumerate()
                    .map(|(j, a)| {
                        (
                            *a,
                            CaState {
                                err_no: errs / 4u64.pow(j as u32) % 4,
                                ..CaState::default()
                            },
                        )
                    })
                    .collect();
                let map = states.iter().copied().collect();
                for max_err in [Some(0), Some(1), Some(2), Some(3), None] {
                    for min_cas in 1..=3 {
                        for now in [created + lifetime, created + lifetime + 1] {
                            let mut p = Policy::default_for(&[]);
                            p.cas = (0..3)
                                .filter(|i| policy_mask & (1 << i) != 0)
                                .map(|i| addrs[i])
                                .collect();
                            p.max_err = max_err;
                            p.min_cas = min_cas;
                            p.max_lifetime = lifetime;
                            if is_compliant(&map, created, &p, now) != oracle_compliant(&states, created, &p, now) {
                                disagreements.push(format!(
                                    "tracked {tracked_mask:03b} policy {policy_mask:03b} errs {errs} max_err {max_err:?} min {min_cas} now {now}"
                                ));
                            }
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    (checked, disagreements)
}
