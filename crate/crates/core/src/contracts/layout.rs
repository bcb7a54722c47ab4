//! Storage slot layout of the SmartCert contract.
//!
//! Slot keys are `H(label)`. Integers and flags are 32-byte big-endian words;
//! addresses are left-padded words; strings and DER keys are split into
//! zero-padded 32-byte chunks.
//!
//! | label                     | value                              |
//! |---------------------------|------------------------------------|
//! | `name`                    | `H(domainName)`                    |
//! | `nameRaw:<i>`             | chunk `i` of the UTF-8 name        |
//! | `pkCount`                 | number of public keys              |
//! | `pk:<j>:<i>`              | chunk `i` of key `j` (SPKI DER)    |
//! | `created`, `updated`      | seconds                            |
//! | `revoked`, `valid`        | 0 or 1                             |
//! | `caCount`, `caAddr:<i>`   | tracked CA set, ascending          |
//! | `ca:<addr>:lastUpd`       | per-CA state (also `lastErr`, `errNo`) |
//! | `revCount`, `rev:<i>`     | CAs that voted to revoke           |

use std::collections::BTreeMap;

use serde::Serialize;

use crate::chain::{Address, SlotSource};
use crate::codec::{word, word_value, DecodeError};
use crate::crypto::PublicKey;
use crate::hash::{hash, Digest};

const CHUNK: usize = 32;

/// Longest accepted domain name, in bytes.
pub const MAX_NAME_LEN: usize = 253;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CaState {
    #[serde(rename = "lastUpd")]
    pub last_upd: u64,
    #[serde(rename = "lastErr")]
    pub last_err: u64,
    #[serde(rename = "errNo")]
    pub err_no: u64,
}

/// Full contract state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertStorage {
    pub domain_name: String,
    pub pks: Vec<PublicKey>,
    pub created: u64,
    pub updated: u64,
    pub revoked: bool,
    pub valid: bool,
    /// Revoking CAs in vote order; no duplicates.
    pub revs: Vec<Address>,
    pub cas: BTreeMap<Address, CaState>,
}

/// The client-visible part of the state, carried in certificates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertSnapshot {
    pub domain_name: String,
    pub pks: Vec<PublicKey>,
    pub created: u64,
    pub updated: u64,
    pub revoked: bool,
    pub valid: bool,
}

fn chunks(bytes: &[u8]) -> impl Iterator<Item = Vec<u8>> + '_ {
    bytes.chunks(CHUNK).map(|c| {
        let mut w = vec![0u8; CHUNK];
        w[..c.len()].copy_from_slice(c);
        w
    })
}

fn ca_label(ca: &Address, field: &str) -> String {
    format!("ca:{}:{field}", ca.to_hex())
}

fn flag(v: bool) -> Vec<u8> {
    word(v as u64).to_vec()
}

fn required(src: &dyn SlotSource, label: &str) -> Result<Vec<u8>, DecodeError> {
    src.slot(label).ok_or(DecodeError::Invalid("missing storage slot"))
}

fn read_word(src: &dyn SlotSource, label: &str) -> Result<u64, DecodeError> {
    word_value(&required(src, label)?)
}

fn read_flag(src: &dyn SlotSource, label: &str) -> Result<bool, DecodeError> {
    match read_word(src, label)? {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(DecodeError::Invalid("flag word")),
    }
}

/// Total length of a DER TLV from its header bytes.
fn der_total_len(head: &[u8]) -> Result<usize, DecodeError> {
    let bad = DecodeError::Invalid("public key DER header");
    if head.len() < 2 || head[0] != 0x30 {
        return Err(bad);
    }
    match head[1] {
        n if n < 0x80 => Ok(2 + n as usize),
        0x81 if head.len() >= 3 => Ok(3 + head[2] as usize),
        0x82 if head.len() >= 4 => Ok(4 + u16::from_be_bytes([head[2], head[3]]) as usize),
        _ => Err(bad),
    }
}

fn name_labels(len: usize) -> impl Iterator<Item = String> {
    (0..len.div_ceil(CHUNK)).map(|i| format!("nameRaw:{i}"))
}

fn pk_labels(j: usize, der_len: usize) -> impl Iterator<Item = String> {
    (0..der_len.div_ceil(CHUNK)).map(move |i| format!("pk:{j}:{i}"))
}

fn read_name(src: &dyn SlotSource) -> Result<String, DecodeError> {
    let expected = Digest::from_slice(&required(src, "name")?).ok_or(DecodeError::Invalid("name hash"))?;
    let mut raw = Vec::new();
    for i in 0..MAX_NAME_LEN.div_ceil(CHUNK) {
        match src.slot(&format!("nameRaw:{i}")) {
            Some(c) if c.len() == CHUNK => raw.extend_from_slice(&c),
            Some(_) => return Err(DecodeError::Invalid("name chunk")),
            None => break,
        }
    }
    while raw.last() == Some(&0) {
        raw.pop();
    }
    if hash(&raw) != expected {
        return Err(DecodeError::Invalid("name does not match its hash"));
    }
    String::from_utf8(raw).map_err(|_| DecodeError::Invalid("name encoding"))
}

fn read_pks(src: &dyn SlotSource) -> Result<Vec<PublicKey>, DecodeError> {
    let n = read_word(src, "pkCount")?;
    if n == 0 || n > 16 {
        return Err(DecodeError::Invalid("pkCount"));
    }
    (0..n as usize)
        .map(|j| {
            let first = required(src, &format!("pk:{j}:0"))?;
            let total = der_total_len(&first)?;
            let mut der = Vec::with_capacity(total.next_multiple_of(CHUNK));
            for label in pk_labels(j, total) {
                der.extend_from_slice(&required(src, &label)?);
            }
            if der[total..].iter().any(|&b| b != 0) {
                return Err(DecodeError::Invalid("public key padding"));
            }
            der.truncate(total);
            PublicKey::from_der(&der).map_err(|_| DecodeError::Invalid("public key"))
        })
        .collect()
}

impl CertSnapshot {
    pub fn load(src: &dyn SlotSource) -> Result<Self, DecodeError> {
        Ok(Self {
            domain_name: read_name(src)?,
            pks: read_pks(src)?,
            created: read_word(src, "created")?,
            updated: read_word(src, "updated")?,
            revoked: read_flag(src, "revoked")?,
            valid: read_flag(src, "valid")?,
        })
    }
}

impl CertStorage {
    pub fn snapshot(&self) -> CertSnapshot {
        CertSnapshot {
            domain_name: self.domain_name.clone(),
            pks: self.pks.clone(),
            created: self.created,
            updated: self.updated,
            revoked: self.revoked,
            valid: self.valid,
        }
    }

    /// Every slot of the layout with its value.
    pub fn slots(&self) -> Vec<(String, Vec<u8>)> {
        let mut out = vec![("name".to_owned(), hash(self.domain_name.as_bytes()).0.to_vec())];
        out.extend(name_labels(self.domain_name.len()).zip(chunks(self.domain_name.as_bytes())));
        out.push(("pkCount".into(), word(self.pks.len() as u64).to_vec()));
        for (j, pk) in self.pks.iter().enumerate() {
            out.extend(pk_labels(j, pk.der().len()).zip(chunks(pk.der())));
        }
        out.push(("created".into(), word(self.created).to_vec()));
        out.push(("updated".into(), word(self.updated).to_vec()));
        out.push(("revoked".into(), flag(self.revoked)));
        out.push(("valid".into(), flag(self.valid)));
        out.push(("caCount".into(), word(self.cas.len() as u64).to_vec()));
        for (i, (ca, s)) in self.cas.iter().enumerate() {
            out.push((format!("caAddr:{i}"), ca.to_word().to_vec()));
            out.push((ca_label(ca, "lastUpd"), word(s.last_upd).to_vec()));
            out.push((ca_label(ca, "lastErr"), word(s.last_err).to_vec()));
            out.push((ca_label(ca, "errNo"), word(s.err_no).to_vec()));
        }
        out.push(("revCount".into(), word(self.revs.len() as u64).to_vec()));
        for (i, r) in self.revs.iter().enumerate() {
            out.push((format!("rev:{i}"), r.to_word().to_vec()));
        }
        out
    }

    pub fn load(src: &dyn SlotSource) -> Result<Self, DecodeError> {
        let snap = CertSnapshot::load(src)?;
        let n = read_word(src, "caCount")?;
        let mut cas = BTreeMap::new();
        for i in 0..n {
            let ca = Address::from_word(&required(src, &format!("caAddr:{i}"))?)?;
            let s = CaState {
                last_upd: read_word(src, &ca_label(&ca, "lastUpd"))?,
                last_err: read_word(src, &ca_label(&ca, "lastErr"))?,
                err_no: read_word(src, &ca_label(&ca, "errNo"))?,
            };
            cas.insert(ca, s);
        }
        let r = read_word(src, "revCount")?;
        let revs = (0..r)
            .map(|i| Address::from_word(&required(src, &format!("rev:{i}"))?))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            domain_name: snap.domain_name,
            pks: snap.pks,
            created: snap.created,
            updated: snap.updated,
            revoked: snap.revoked,
            valid: snap.valid,
            revs,
            cas,
        })
    }
}

/// Labels a certificate must prove so that a [`CertSnapshot`] can be decoded.
pub fn certificate_labels(src: &dyn SlotSource) -> Result<Vec<String>, DecodeError> {
    let snap = CertSnapshot::load(src)?;
    let mut labels = vec!["name".to_owned()];
    labels.extend(name_labels(snap.domain_name.len()));
    labels.push("pkCount".into());
    for (j, pk) in snap.pks.iter().enumerate() {
        labels.extend(pk_labels(j, pk.der().len()));
    }
    labels.extend(["created", "updated", "revoked", "valid"].map(String::from));
    Ok(labels)
}
