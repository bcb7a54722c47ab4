//! Native contract code: the global policy contract and the SmartCert
//! certificate contract.

pub mod cert;
pub mod layout;
pub mod policy;

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use crate::chain::{code_hash, Address, Contract};
use crate::hash::Digest;

pub use cert::{ca_tag, init_args, is_compliant, probe_random, update_args, CertContract};
pub use layout::{certificate_labels, CaState, CertSnapshot, CertStorage};
pub use policy::{new_policy_args, Policy, PolicyContract, PolicyKind, DEFAULT_MAX_LIFETIME};

/// Address of the policy contract installed at genesis.
pub fn policy_contract_address() -> Address {
    Address::contract(&Address::ZERO, 0)
}

pub fn policy_code_hash() -> Digest {
    code_hash(policy::TEMPLATE_ID, policy::VERSION)
}

/// Code hash clients pin.
pub fn smartcert_code_hash() -> Digest {
    code_hash(cert::TEMPLATE_ID, cert::VERSION)
}

pub fn rogue_code_hash() -> Digest {
    code_hash(cert::ROGUE_TEMPLATE_ID, cert::VERSION)
}

/// Contract code known to the chain, addressable by template id (for
/// CREATE) and by code hash (for calls).
pub struct Registry {
    by_hash: HashMap<Digest, Arc<dyn Contract>>,
    creatable: HashMap<&'static str, Arc<dyn Contract>>,
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            by_hash: HashMap::new(),
            creatable: HashMap::new(),
        }
    }

    /// Policy contract (genesis only), SmartCert and its rogue variant.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register_genesis(Arc::new(PolicyContract));
        r.register(Arc::new(CertContract::honest()));
        r.register(Arc::new(CertContract::rogue()));
        r
    }

    /// Shared instance of [`Registry::standard`].
    pub fn shared() -> Arc<Self> {
        static SHARED: OnceLock<Arc<Registry>> = OnceLock::new();
        SHARED.get_or_init(|| Arc::new(Self::standard())).clone()
    }

    pub fn register(&mut self, code: Arc<dyn Contract>) {
        self.creatable.insert(code.template_id(), code.clone());
        self.by_hash.insert(code.code_hash(), code);
    }

    /// Code that can be dispatched to but not instantiated by a transaction.
    pub fn register_genesis(&mut self, code: Arc<dyn Contract>) {
        self.by_hash.insert(code.code_hash(), code);
    }

    pub fn by_template(&self, template: &str) -> Option<Arc<dyn Contract>> {
        self.creatable.get(template).cloned()
    }

    pub fn by_code_hash(&self, hash: &Digest) -> Option<Arc<dyn Contract>> {
        self.by_hash.get(hash).cloned()
    }
}
