//! Scenario file schema.
//!
//! ```json
//! {
//!   "name": "example",
//!   "seed": 7,
//!   "signature_scheme": "rsa2048",
//!   "chain": { "epoch": 21600, "max_stale": 86400 },
//!   "cas": [{ "name": "ca0" }, { "name": "ca1" }],
//!   "domains": [{ "name": "example.com" }],
//!   "clients": [{ "name": "alice" }],
//!   "timeline": [
//!     { "at": 0, "action": "register_policy", "domain": "example.com", "signers": ["ca0"] },
//!     { "at": 30, "action": "create_cert", "domain": "example.com" },
//!     { "at": 60, "action": "ca_probe", "ca": "ca0", "domain": "example.com" },
//!     { "at": 120, "action": "client_verify", "client": "alice", "domain": "example.com", "expect": "OK" }
//!   ]
//! }
//! ```
//!
//! `at` is in seconds after genesis. Actor references (`sender`, `key_id`,
//! `by`, `signers`, `submit_as`) name a CA, an extra actor, or `owner` for
//! the domain's policy key.

use serde::{Deserialize, Serialize};

use crate::chain::ChainConfig;
use crate::contracts::PolicyKind;
use crate::crypto::Algorithm;

/// Midnight UTC, so epochs that divide a day start at multiples of `at`.
pub const DEFAULT_GENESIS_TIME: u64 = 1_600_041_600;

fn default_genesis_time() -> u64 {
    DEFAULT_GENESIS_TIME
}

fn default_scheme() -> Algorithm {
    Algorithm::RsaPkcs1Sha256
}

fn one_u32() -> u32 {
    1
}

fn one_usize() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn success() -> String {
    "SUCCESS".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    #[serde(default = "default_scheme")]
    pub signature_scheme: Algorithm,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default = "default_genesis_time")]
    pub genesis_time: u64,
    pub cas: Vec<CaSpec>,
    pub domains: Vec<DomainSpec>,
    #[serde(default)]
    pub clients: Vec<ClientSpec>,
    /// Extra keyholders, e.g. an attacker.
    #[serde(default)]
    pub actors: Vec<String>,
    pub timeline: Vec<TimedAction>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaSpec {
    pub name: String,
    /// Installed in the policy contract's trusted list at genesis.
    #[serde(default = "yes")]
    pub trusted: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    /// Number of TLS keys put in the contract.
    #[serde(default = "one_usize")]
    pub keys: usize,
    /// Which of the keys the endpoint signs with.
    #[serde(default)]
    pub server_key: usize,
    /// Staple refresh period; half an epoch if unset.
    #[serde(default)]
    pub refresh_period: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSpec {
    pub name: String,
    /// Defaults to the chain's `max_stale`.
    #[serde(default)]
    pub max_stale: Option<u64>,
    /// Defaults to `max_stale`.
    #[serde(default)]
    pub prune_horizon: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimedAction {
    pub at: u64,
    /// Optional handle so later actions can refer to this one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReplayFrom {
    /// Anchor the probe at this block number.
    Block(u64),
    /// Resubmit the proof captured by the `ca_probe` action with this id.
    Probe(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyAction {
    pub domain: String,
    #[serde(default)]
    pub signers: Vec<String>,
    /// Transaction sender; the domain owner by default.
    #[serde(default)]
    pub sender: Option<String>,
    /// Management key holder, or `none`. The domain owner by default.
    #[serde(default)]
    pub key_id: Option<String>,
    /// Authorized CAs; every trusted CA by default.
    #[serde(default)]
    pub cas: Option<Vec<String>>,
    #[serde(default)]
    pub max_lifetime: Option<u64>,
    #[serde(default)]
    pub max_err: Option<u64>,
    #[serde(default)]
    pub min_cas: Option<u32>,
    #[serde(default)]
    pub version: Option<u64>,
    #[serde(default)]
    pub kind: PolicyKind,
    #[serde(default = "success")]
    pub expect: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    /// Moves the clock to `at`, mining due blocks on the way.
    AdvanceTime {},
    /// Mines `count` blocks at the next block slots.
    Mine {
        #[serde(default = "one_u32")]
        count: u32,
    },
    RegisterPolicy(PolicyAction),
    ReplacePolicy(PolicyAction),
    CreateCert {
        domain: String,
        /// CAs tracked by the contract; the policy's CA set by default.
        #[serde(default)]
        cas: Option<Vec<String>>,
        #[serde(default)]
        sender: Option<String>,
        /// Keys put in the contract: `tls<i>` for the domain's own keys,
        /// `mitm` for the impostor's, or an actor. All own keys by default.
        #[serde(default)]
        keys: Option<Vec<String>>,
        #[serde(default)]
        template: Option<String>,
        #[serde(default = "success")]
        expect: String,
    },
    CaProbe {
        ca: String,
        domain: String,
        /// Delay between probing and submitting.
        #[serde(default)]
        hold_seconds: u64,
        /// The probe reaches an impostor holding a different key.
        #[serde(default)]
        wrong_key: bool,
        #[serde(default)]
        replay_from: Option<ReplayFrom>,
        /// Submit under another CA's account.
        #[serde(default)]
        submit_as: Option<String>,
        #[serde(default = "success")]
        expect: String,
    },
    /// Expanded at load time into `ca_probe` actions every `every` seconds
    /// from `at` up to (excluding) `until`.
    PeriodicProbes {
        domain: String,
        /// Every trusted CA if unset.
        #[serde(default)]
        cas: Option<Vec<String>>,
        every: u64,
        until: u64,
        /// Extra delay per CA, so probes of different CAs spread out.
        #[serde(default)]
        stagger: u64,
    },
    Revoke {
        domain: String,
        /// A CA name, `owner`/`keyid`, or an actor.
        by: String,
        #[serde(default = "success")]
        expect: String,
    },
    ClientVerify {
        client: String,
        domain: String,
        /// `OK` (alias `ACCEPT`), a reject reason, or `any`.
        expect: String,
        /// Serve this captured certificate instead of the live staple.
        #[serde(default)]
        cert: Option<String>,
        /// The connection reaches an impostor holding a different key.
        #[serde(default)]
        wrong_key: bool,
    },
    /// Stores a freshly assembled certificate under `name`.
    CaptureCert {
        domain: String,
        name: String,
    },
    /// Checks a decoded storage value, e.g. `valid`, `ca.ca0.errNo`,
    /// `policy.sigNo`.
    AssertStorage {
        domain: String,
        path: String,
        equals: serde_json::Value,
    },
}

impl Action {
    pub fn verb(&self) -> &'static str {
        match self {
            Action::AdvanceTime {} => "advance_time",
            Action::Mine { .. } => "mine",
            Action::RegisterPolicy(_) => "register_policy",
            Action::ReplacePolicy(_) => "replace_policy",
            Action::CreateCert { .. } => "create_cert",
            Action::CaProbe { .. } => "ca_probe",
            Action::PeriodicProbes { .. } => "periodic_probes",
            Action::Revoke { .. } => "revoke",
            Action::ClientVerify { .. } => "client_verify",
            Action::CaptureCert { .. } => "capture_cert",
            Action::AssertStorage { .. } => "assert_storage",
        }
    }
}
