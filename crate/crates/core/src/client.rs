//! Client-side certificate validation: a header-only chain view pruned to a
//! time horizon, and the certificate check run against it.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::slot_key;
use crate::chain::{Account, BlockHeader, HEADER_LEN};
use crate::contracts::CertSnapshot;
use crate::domain::SmartCertCertificate;
use crate::hash::Digest;
use crate::trie;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyncError {
    #[error("header {number} does not extend the stored chain")]
    BrokenChain { number: u64 },
}

/// Contiguous window of recent headers, starting from a trusted checkpoint.
#[derive(Clone, Debug)]
pub struct HeaderStore {
    headers: VecDeque<(BlockHeader, Digest)>,
    prune_horizon: u64,
}

impl HeaderStore {
    pub fn new(checkpoint: BlockHeader, prune_horizon: u64) -> Self {
        let h = checkpoint.hash();
        Self {
            headers: VecDeque::from([(checkpoint, h)]),
            prune_horizon,
        }
    }

    pub fn prune_horizon(&self) -> u64 {
        self.prune_horizon
    }

    pub fn newest(&self) -> &BlockHeader {
        &self.headers.back().expect("never empty").0
    }

    pub fn oldest(&self) -> &BlockHeader {
        &self.headers.front().expect("never empty").0
    }

    pub fn len(&self) -> usize {
        self.headers.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bytes taken by the stored headers in canonical encoding.
    pub fn serialized_size(&self) -> usize {
        self.headers.len() * HEADER_LEN
    }

    pub fn get(&self, number: u64) -> Option<&BlockHeader> {
        let first = self.oldest().number;
        let idx = number.checked_sub(first)?;
        self.headers.get(usize::try_from(idx).ok()?).map(|(h, _)| h)
    }

    /// Appends one header after checking it extends the newest one. Headers
    /// already in the store are accepted if they match exactly.
    pub fn append(&mut self, header: BlockHeader) -> Result<bool, SyncError> {
        let (newest, newest_hash) = self.headers.back().expect("never empty");
        if header.number <= newest.number {
            return match self.get(header.number) {
                Some(known) if *known == header => Ok(false),
                Some(_) => Err(SyncError::BrokenChain { number: header.number }),
                // Older than the window; nothing to check it against.
                None => Ok(false),
            };
        }
        if header.number != newest.number + 1
            || header.parent_hash != *newest_hash
            || header.timestamp <= newest.timestamp
        {
            return Err(SyncError::BrokenChain { number: header.number });
        }
        let h = header.hash();
        self.headers.push_back((header, h));
        self.prune();
        Ok(true)
    }

    /// Appends headers in order and returns how many were new. Stops at the
    /// first header that breaks the chain.
    pub fn sync(&mut self, feed: impl IntoIterator<Item = BlockHeader>) -> Result<usize, SyncError> {
        let mut added = 0;
        for h in feed {
            added += self.append(h)? as usize;
        }
        Ok(added)
    }

    fn prune(&mut self) {
        let cutoff = self.newest().timestamp.saturating_sub(self.prune_horizon);
        while self.headers.len() > 1 && self.oldest().timestamp < cutoff {
            self.headers.pop_front();
        }
    }
}

/// What a client pins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustAnchors {
    pub code_hash: Digest,
    pub max_stale: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    DecodeError,
    UnknownRoot,
    ProofInconsistent,
    BadCode,
    BadStorageProof,
    NameMismatch,
    Invalid,
    Stale,
    /// Handshake signature does not verify under the certified keys.
    BadSkeSig,
    /// The server stapled no certificate.
    NoCert,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::DecodeError => "DECODE_ERROR",
            RejectReason::UnknownRoot => "UNKNOWN_ROOT",
            RejectReason::ProofInconsistent => "PROOF_INCONSISTENT",
            RejectReason::BadCode => "BAD_CODE",
            RejectReason::BadStorageProof => "BAD_STORAGE_PROOF",
            RejectReason::NameMismatch => "NAME_MISMATCH",
            RejectReason::Invalid => "INVALID",
            RejectReason::Stale => "STALE",
            RejectReason::BadSkeSig => "BAD_SKE_SIG",
            RejectReason::NoCert => "NO_CERT",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        use RejectReason::*;
        [
            DecodeError,
            UnknownRoot,
            ProofInconsistent,
            BadCode,
            BadStorageProof,
            NameMismatch,
            Invalid,
            Stale,
            BadSkeSig,
            NoCert,
        ]
        .into_iter()
        .find(|r| r.code() == code)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Ok(Box<CertSnapshot>),
    Fail(RejectReason),
}

impl Verdict {
    pub fn code(&self) -> &'static str {
        match self {
            Verdict::Ok(_) => "OK",
            Verdict::Fail(r) => r.code(),
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok(_))
    }
}

/// Certificate checker. Holds no chain handle: everything it needs is the
/// certificate, the stored headers and the pinned anchors.
#[derive(Clone, Copy)]
pub struct Validator<'a> {
    pub headers: &'a HeaderStore,
    pub anchors: TrustAnchors,
}

impl<'a> Validator<'a> {
    pub fn new(headers: &'a HeaderStore, anchors: TrustAnchors) -> Self {
        Self { headers, anchors }
    }

    pub fn verify_bytes(&self, name: &str, cert: &[u8], now: u64) -> Verdict {
        match SmartCertCertificate::decode(cert) {
            Ok(c) => self.verify(name, &c, now),
            Err(_) => Verdict::Fail(RejectReason::DecodeError),
        }
    }

    /// Checks, first failure wins: anchor known, proofs consistent and
    /// rooted, code pinned, slots proven, name, validity, staleness.
    pub fn verify(&self, name: &str, cert: &SmartCertCertificate, now: u64) -> Verdict {
        use RejectReason::*;
        let Some(anchor) = self.headers.get(cert.anchor) else {
            return Verdict::Fail(UnknownRoot);
        };

        let ap = &cert.account_proof;
        if ap.key != cert.addr.state_key() || !trie::verify(&anchor.state_root, ap) {
            return Verdict::Fail(ProofInconsistent);
        }
        let Ok(account) = Account::decode(&ap.value) else {
            return Verdict::Fail(ProofInconsistent);
        };
        let mut labels = BTreeSet::new();
        for (label, p) in &cert.slots {
            if p.key != slot_key(label) || !labels.insert(label.as_str()) {
                return Verdict::Fail(ProofInconsistent);
            }
        }

        if account.code_hash != self.anchors.code_hash {
            return Verdict::Fail(BadCode);
        }
        if !cert.slots.iter().all(|(_, p)| trie::verify(&account.storage_root, p)) {
            return Verdict::Fail(BadStorageProof);
        }

        let Ok(st) = CertSnapshot::load(&cert.proven_slots()) else {
            return Verdict::Fail(DecodeError);
        };
        if st.domain_name != name {
            return Verdict::Fail(NameMismatch);
        }
        if !st.valid {
            return Verdict::Fail(Invalid);
        }
        if now.saturating_sub(st.updated) > self.anchors.max_stale {
            return Verdict::Fail(Stale);
        }
        Verdict::Ok(Box::new(st))
    }
}
