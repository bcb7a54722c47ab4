use std::collections::BTreeMap;

use serde::Serialize;

use crate::chain::{Address, Event, TxId};
use crate::contracts::CaState;
use crate::hash::Digest;

/// Everything a run produced. Contains no wall-clock values, so equal seeds
/// give equal reports.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub hash_function: String,
    pub signature_scheme: String,
    pub passed: bool,
    pub failures: Vec<Failure>,
    pub actions: Vec<ActionRecord>,
    pub transactions: Vec<TxRecord>,
    pub verdicts: Vec<VerdictRecord>,
    pub final_states: BTreeMap<String, DomainReport>,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    /// Index into the expanded timeline; `None` for end-of-run checks.
    pub action: Option<usize>,
    pub at: u64,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ActionRecord {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub at: u64,
    pub action: String,
    pub outcome: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct TxRecord {
    pub action: usize,
    pub tx_id: TxId,
    pub block: u64,
    pub status: String,
    pub expected: String,
    pub events: Vec<Event>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerdictRecord {
    pub action: usize,
    pub at: u64,
    pub client: String,
    pub domain: String,
    pub expected: String,
    pub verdict: String,
    /// `H(certificate bytes)` of what the server stapled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Digest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<u64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DomainReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contract: Option<Address>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub storage: Option<StorageReport>,
    pub policy: PolicyReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct StorageReport {
    pub created: u64,
    pub updated: u64,
    pub valid: bool,
    pub revoked: bool,
    pub keys: usize,
    pub revs: Vec<String>,
    pub cas: BTreeMap<String, CaState>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PolicyReport {
    pub registered: bool,
    pub version: u64,
    pub sig_no: u32,
    pub min_cas: u32,
    pub max_err: Option<u64>,
    pub max_lifetime: u64,
    pub key_id: Option<String>,
    pub cas: Vec<String>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Metrics {
    pub blocks: u64,
    pub transactions: usize,
    /// Size of the last certificate each domain stapled.
    pub certificate_bytes: BTreeMap<String, usize>,
    pub chain_log_sha256: Option<Digest>,
}
