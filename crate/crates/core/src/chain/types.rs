use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{KeyPair, PublicKey};
use crate::hash::{hash, hash_parts, Digest};
use crate::trie::Key;

/// 20-byte account identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    /// User address: first 20 bytes of `H(public key DER)`.
    pub fn from_public_key(pk: &PublicKey) -> Self {
        Self::from_digest(&hash(pk.der()))
    }

    /// Contract address: first 20 bytes of `H(creator ‖ nonce as u64 BE)`.
    pub fn contract(creator: &Address, nonce: u64) -> Self {
        Self::from_digest(&hash_parts(&[&creator.0, &nonce.to_be_bytes()]))
    }

    fn from_digest(d: &Digest) -> Self {
        let mut a = [0u8; 20];
        a.copy_from_slice(&d.0[..20]);
        Address(a)
    }

    /// Key of this account in the state trie.
    pub fn state_key(&self) -> Key {
        hash(&self.0).0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s.trim_start_matches("0x")).ok()?;
        Some(Address(bytes.try_into().ok()?))
    }

    /// Left-padded 32-byte storage word.
    pub fn to_word(&self) -> [u8; 32] {
        let mut w = [0u8; 32];
        w[12..].copy_from_slice(&self.0);
        w
    }

    pub fn from_word(w: &[u8]) -> Result<Self, DecodeError> {
        if w.len() != 32 || w[..12].iter().any(|&b| b != 0) {
            return Err(DecodeError::Invalid("address word"));
        }
        Ok(Address(w[12..].try_into().expect("20 bytes")))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Address::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 20-byte hex address"))
    }
}

pub const HEADER_LEN: usize = 32 + 8 + 8 + 32 + 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub parent_hash: Digest,
    pub number: u64,
    pub timestamp: u64,
    pub state_root: Digest,
    pub tx_root: Digest,
}

impl BlockHeader {
    /// `parentHash ‖ number ‖ timestamp ‖ stateRoot ‖ txRoot`, integers u64 BE.
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..32].copy_from_slice(self.parent_hash.as_bytes());
        out[32..40].copy_from_slice(&self.number.to_be_bytes());
        out[40..48].copy_from_slice(&self.timestamp.to_be_bytes());
        out[48..80].copy_from_slice(self.state_root.as_bytes());
        out[80..].copy_from_slice(self.tx_root.as_bytes());
        out
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            parent_hash: Digest(r.array()?),
            number: r.u64()?,
            timestamp: r.u64()?,
            state_root: Digest(r.array()?),
            tx_root: Digest(r.array()?),
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let h = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(h)
    }

    pub fn hash(&self) -> Digest {
        hash(&self.encode())
    }
}

pub const ACCOUNT_LEN: usize = 8 + 32 + 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Account {
    pub nonce: u64,
    /// All-zero for user accounts.
    pub code_hash: Digest,
    pub storage_root: Digest,
}

impl Account {
    pub fn user() -> Self {
        Self {
            nonce: 0,
            code_hash: Digest::ZERO,
            storage_root: crate::trie::Trie::new().root(),
        }
    }

    pub fn is_contract(&self) -> bool {
        self.code_hash != Digest::ZERO
    }

    /// `nonce (8B BE) ‖ codeHash ‖ storageRoot`.
    pub fn encode(&self) -> [u8; ACCOUNT_LEN] {
        let mut out = [0u8; ACCOUNT_LEN];
        out[..8].copy_from_slice(&self.nonce.to_be_bytes());
        out[8..40].copy_from_slice(self.code_hash.as_bytes());
        out[40..].copy_from_slice(self.storage_root.as_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let a = Self {
            nonce: r.u64()?,
            code_hash: Digest(r.array()?),
            storage_root: Digest(r.array()?),
        };
        r.finish()?;
        Ok(a)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TxTarget {
    Create { template: String },
    Call(Address),
}

const TARGET_CREATE: u8 = 0x00;
const TARGET_CALL: u8 = 0x01;

/// A signed transaction. The signature covers every preceding field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub sender: PublicKey,
    pub nonce: u64,
    pub target: TxTarget,
    pub method: String,
    pub args: Vec<u8>,
    pub signature: Vec<u8>,
}

pub type TxId = Digest;

impl Transaction {
    pub fn new_signed(keys: &KeyPair, nonce: u64, target: TxTarget, method: &str, args: Vec<u8>) -> Self {
        let mut tx = Self {
            sender: keys.public().clone(),
            nonce,
            target,
            method: method.to_owned(),
            args,
            signature: Vec::new(),
        };
        tx.signature = keys.sign(&tx.signing_bytes());
        tx
    }

    /// `sender DER (u16 len) ‖ nonce ‖ target ‖ method (u16 len) ‖ args (u32 len)`,
    /// where target is `0x00 ‖ template id (u16 len)` or `0x01 ‖ address`.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_unsigned(&mut w);
        w.finish()
    }

    fn write_unsigned(&self, w: &mut Writer) {
        w.var16(self.sender.der()).u64(self.nonce);
        match &self.target {
            TxTarget::Create { template } => {
                w.u8(TARGET_CREATE).var16(template.as_bytes());
            }
            TxTarget::Call(addr) => {
                w.u8(TARGET_CALL).raw(&addr.0);
            }
        }
        w.var16(self.method.as_bytes()).var32(&self.args);
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_unsigned(&mut w);
        w.var16(&self.signature);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let sender = PublicKey::from_der(r.var16()?).map_err(|_| DecodeError::Invalid("sender key"))?;
        let nonce = r.u64()?;
        let target = match r.u8()? {
            TARGET_CREATE => TxTarget::Create {
                template: r.utf8_var16()?.to_owned(),
            },
            TARGET_CALL => TxTarget::Call(Address(r.array()?)),
            _ => return Err(DecodeError::Invalid("transaction target")),
        };
        let method = r.utf8_var16()?.to_owned();
        let args = r.var32()?.to_vec();
        let signature = r.var16()?.to_vec();
        r.finish()?;
        Ok(Self {
            sender,
            nonce,
            target,
            method,
            args,
            signature,
        })
    }

    pub fn id(&self) -> TxId {
        hash(&self.encode())
    }

    pub fn sender_address(&self) -> Address {
        Address::from_public_key(&self.sender)
    }

    pub fn signature_valid(&self) -> bool {
        self.sender.verify(&self.signing_bytes(), &self.signature)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevokeMode {
    /// Revoke iff sender is KEYID or `|p.CAs| - |revs| >= MIN_CAs`.
    #[default]
    Literal,
    /// Revoke iff sender is KEYID or `|revs| >= MIN_CAs`.
    Quorum,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("maxStale ({max_stale}) must exceed epoch ({epoch})")]
    StaleNotAboveEpoch { max_stale: u64, epoch: u64 },
    #[error("{0} must be at least 1")]
    Zero(&'static str),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    /// Seconds between scheduled blocks.
    pub block_interval: u64,
    /// How many previous block hashes contracts may read.
    pub hash_window: u64,
    pub epoch: u64,
    pub max_stale: u64,
    pub revoke_mode: RevokeMode,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            block_interval: 15,
            hash_window: 256,
            epoch: 6 * 3600,
            max_stale: 24 * 3600,
            revoke_mode: RevokeMode::Literal,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.block_interval == 0 {
            return Err(ConfigError::Zero("block_interval"));
        }
        if self.hash_window == 0 {
            return Err(ConfigError::Zero("hash_window"));
        }
        if self.epoch == 0 {
            return Err(ConfigError::Zero("epoch"));
        }
        if self.max_stale <= self.epoch {
            return Err(ConfigError::StaleNotAboveEpoch {
                max_stale: self.max_stale,
                epoch: self.epoch,
            });
        }
        Ok(())
    }
}

/// A notification emitted by a contract and surfaced in the receipt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub contract: Address,
    pub name: String,
    pub attrs: BTreeMap<String, String>,
}

/// Reasons a contract handler aborts; the transaction's effects are discarded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Error)]
pub enum Revert {
    #[error("REVERT_UNAUTHORIZED")]
    Unauthorized,
    #[error("REVERT_INSUFFICIENT_SIGS")]
    InsufficientSigs,
    #[error("REVERT_UNTRUSTED_SIGNER")]
    UntrustedSigner,
    #[error("REVERT_BAD_SIG")]
    BadSig,
    #[error("REVERT_CA_NOT_AUTHORIZED")]
    CaNotAuthorized,
    #[error("REVERT_ALREADY_INVALID")]
    AlreadyInvalid,
    #[error("REVERT_INVALID_POLICY")]
    InvalidPolicy,
    #[error("REVERT_BAD_ARGS")]
    BadArgs,
    #[error("REVERT_UNKNOWN_METHOD")]
    UnknownMethod,
    #[error("REVERT_UNKNOWN_TEMPLATE")]
    UnknownTemplate,
    #[error("REVERT_NO_CONTRACT")]
    NoContract,
    #[error("REVERT_CORRUPT_STORAGE")]
    CorruptStorage,
}

impl Revert {
    pub fn code(&self) -> String {
        self.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxStatus {
    Success,
    Reverted(Revert),
    RejectedNonce,
}

impl TxStatus {
    pub fn code(&self) -> String {
        match self {
            TxStatus::Success => "SUCCESS".into(),
            TxStatus::Reverted(r) => r.code(),
            TxStatus::RejectedNonce => "REJECTED_NONCE".into(),
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, TxStatus::Success)
    }
}

impl Serialize for TxStatus {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.code())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Receipt {
    pub tx_id: TxId,
    pub block: u64,
    pub index: u32,
    pub sender: Address,
    pub method: String,
    pub status: TxStatus,
    /// Address of the contract created by a successful CREATE.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub created: Option<Address>,
    pub events: Vec<Event>,
    /// Storage reads/writes plus signature checks; a rough cost proxy.
    pub op_count: u64,
}
