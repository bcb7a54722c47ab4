//! Global policy contract: maps domain names to validation policies.
//!
//! Storage slots: `trustedCount`, `trusted:<i>` (address words) and
//! `policy:<name>` (canonical policy bytes followed by `sigNo` as u32 BE).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chain::{slot_key, Address, Contract, ExecContext, Revert, SlotSource};
use crate::codec::{word, word_value, DecodeError, Reader, Writer};
use crate::crypto::PublicKey;
use crate::trie::Trie;

pub const TEMPLATE_ID: &str = "smartcert-policy";
pub const VERSION: u32 = 1;

/// Two years, in seconds.
pub const DEFAULT_MAX_LIFETIME: u64 = 2 * 365 * 24 * 3600;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum PolicyKind {
    #[default]
    New,
    Update,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub version: u64,
    pub kind: PolicyKind,
    /// Policy management key id; `None` in the default policy.
    pub key_id: Option<Address>,
    /// CAs authorized to validate the domain's certificates.
    pub cas: BTreeSet<Address>,
    pub max_lifetime: u64,
    /// Per-CA error budget; `None` means unlimited.
    pub max_err: Option<u64>,
    pub min_cas: u32,
    /// Number of distinct CA signatures the policy was registered with.
    pub sig_no: u32,
}

impl Policy {
    /// Policy that applies to names without a registered one.
    pub fn default_for(trusted: &[Address]) -> Self {
        Self {
            version: 0,
            kind: PolicyKind::New,
            key_id: None,
            cas: trusted.iter().copied().collect(),
            max_lifetime: DEFAULT_MAX_LIFETIME,
            max_err: None,
            min_cas: 1,
            sig_no: 0,
        }
    }

    /// The bytes CAs sign (after the domain name):
    /// `version u64 ‖ type u8 ‖ KEYID 20B ‖ CA count u16 ‖ CAs ascending ‖
    /// MAX_LIFETIME u64 ‖ MAX_ERR flag u8 ‖ MAX_ERR u64 ‖ MIN_CAs u32`.
    pub fn canonical(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.version)
            .u8(match self.kind {
                PolicyKind::New => 0,
                PolicyKind::Update => 1,
            })
            .raw(&self.key_id.unwrap_or(Address::ZERO).0)
            .u16(self.cas.len() as u16);
        for ca in &self.cas {
            w.raw(&ca.0);
        }
        w.u64(self.max_lifetime)
            .u8(self.max_err.is_some() as u8)
            .u64(self.max_err.unwrap_or(0))
            .u32(self.min_cas);
        w.finish()
    }

    fn decode_canonical_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let version = r.u64()?;
        let kind = match r.u8()? {
            0 => PolicyKind::New,
            1 => PolicyKind::Update,
            _ => return Err(DecodeError::Invalid("policy type")),
        };
        let key = Address(r.array()?);
        let n = r.u16()?;
        let mut cas = BTreeSet::new();
        let mut prev: Option<Address> = None;
        for _ in 0..n {
            let a = Address(r.array()?);
            if prev.is_some_and(|p| p >= a) {
                return Err(DecodeError::Invalid("policy CA order"));
            }
            prev = Some(a);
            cas.insert(a);
        }
        let max_lifetime = r.u64()?;
        let has_max_err = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(DecodeError::Invalid("MAX_ERR flag")),
        };
        let max_err_value = r.u64()?;
        let min_cas = r.u32()?;
        Ok(Self {
            version,
            kind,
            key_id: (key != Address::ZERO).then_some(key),
            cas,
            max_lifetime,
            max_err: has_max_err.then_some(max_err_value),
            min_cas,
            sig_no: 0,
        })
    }

    pub fn decode_canonical(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let p = Self::decode_canonical_from(&mut r)?;
        r.finish()?;
        Ok(p)
    }

    /// `name ‖ canonical(policy)`.
    pub fn signing_message(&self, name: &str) -> Vec<u8> {
        let mut m = name.as_bytes().to_vec();
        m.extend(self.canonical());
        m
    }

    fn encode_stored(&self) -> Vec<u8> {
        let mut b = self.canonical();
        b.extend_from_slice(&self.sig_no.to_be_bytes());
        b
    }

    fn decode_stored(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let mut p = Self::decode_canonical_from(&mut r)?;
        p.sig_no = r.u32()?;
        r.finish()?;
        Ok(p)
    }
}

fn policy_label(name: &str) -> String {
    format!("policy:{name}")
}

/// Storage installed at genesis.
pub fn genesis_storage(trusted: &[Address]) -> Trie {
    let mut t = Trie::new();
    t.put(slot_key("trustedCount"), word(trusted.len() as u64).to_vec());
    for (i, a) in trusted.iter().enumerate() {
        t.put(slot_key(&format!("trusted:{i}")), a.to_word().to_vec());
    }
    t
}

pub fn trusted_cas(src: &dyn SlotSource) -> Result<Vec<Address>, DecodeError> {
    let n = word_value(&src.slot("trustedCount").ok_or(DecodeError::Invalid("trustedCount"))?)?;
    (0..n)
        .map(|i| Address::from_word(&src.slot(&format!("trusted:{i}")).ok_or(DecodeError::Truncated)?))
        .collect()
}

/// The policy in force for `name` and whether it is a registered one.
pub fn lookup(src: &dyn SlotSource, name: &str) -> Result<(Policy, bool), DecodeError> {
    match src.slot(&policy_label(name)) {
        Some(bytes) => Ok((Policy::decode_stored(&bytes)?, true)),
        None => Ok((Policy::default_for(&trusted_cas(src)?), false)),
    }
}

/// Arguments of `newPolicy`: `name (u16 len) ‖ canonical policy (u32 len) ‖
/// count u16 ‖ (signer SPKI DER (u16 len) ‖ signature (u16 len))*`.
pub fn new_policy_args(name: &str, policy: &Policy, sigs: &[(PublicKey, Vec<u8>)]) -> Vec<u8> {
    let mut w = Writer::new();
    w.var16(name.as_bytes())
        .var32(&policy.canonical())
        .u16(sigs.len() as u16);
    for (pk, sig) in sigs {
        w.var16(pk.der()).var16(sig);
    }
    w.finish()
}

struct NewPolicyArgs {
    name: String,
    policy: Policy,
    sigs: BTreeMap<Address, (PublicKey, Vec<u8>)>,
}

fn decode_new_policy(args: &[u8]) -> Result<NewPolicyArgs, DecodeError> {
    let mut r = Reader::new(args);
    let name = r.utf8_var16()?.to_owned();
    let policy = Policy::decode_canonical(r.var32()?)?;
    let n = r.u16()?;
    let mut sigs = BTreeMap::new();
    for _ in 0..n {
        let pk = PublicKey::from_der(r.var16()?).map_err(|_| DecodeError::Invalid("signer key"))?;
        let sig = r.var16()?.to_vec();
        if sigs.insert(Address::from_public_key(&pk), (pk, sig)).is_some() {
            return Err(DecodeError::Invalid("duplicate signer"));
        }
    }
    r.finish()?;
    Ok(NewPolicyArgs { name, policy, sigs })
}

pub struct PolicyContract;

impl PolicyContract {
    fn new_policy(ctx: &mut ExecContext<'_>, args: &[u8]) -> Result<(), Revert> {
        let NewPolicyArgs { name, mut policy, sigs } = decode_new_policy(args).map_err(|_| Revert::BadArgs)?;
        if name.is_empty() {
            return Err(Revert::BadArgs);
        }
        let trusted = trusted_cas(ctx).map_err(|_| Revert::CorruptStorage)?;
        if policy.min_cas == 0 || !policy.cas.iter().all(|c| trusted.contains(c)) {
            return Err(Revert::InvalidPolicy);
        }
        let (current, registered) = lookup(ctx, &name).map_err(|_| Revert::CorruptStorage)?;

        if registered && policy.kind == PolicyKind::Update {
            if current.key_id != Some(ctx.sender) {
                return Err(Revert::Unauthorized);
            }
            // The replacement threshold is carried over from the replaced policy.
            policy.sig_no = current.sig_no;
        } else if !registered || current.sig_no as usize <= sigs.len() {
            if sigs.is_empty() {
                return Err(Revert::InsufficientSigs);
            }
            let msg = policy.signing_message(&name);
            for (signer, (pk, sig)) in &sigs {
                if !trusted.contains(signer) {
                    return Err(Revert::UntrustedSigner);
                }
                ctx.count_op();
                if !pk.verify(&msg, sig) {
                    return Err(Revert::BadSig);
                }
            }
            policy.sig_no = sigs.len() as u32;
        } else {
            return Err(Revert::InsufficientSigs);
        }

        ctx.store(&policy_label(&name), policy.encode_stored());
        let event = if registered {
            "PolicyReplaced"
        } else {
            "PolicyRegistered"
        };
        ctx.emit(
            event,
            [
                ("name", name),
                ("version", policy.version.to_string()),
                ("sigNo", policy.sig_no.to_string()),
                ("sender", ctx.sender.to_hex()),
            ],
        );
        Ok(())
    }
}

impl Contract for PolicyContract {
    fn template_id(&self) -> &'static str {
        TEMPLATE_ID
    }

    fn version(&self) -> u32 {
        VERSION
    }

    /// Only instantiated at genesis.
    fn init(&self, _ctx: &mut ExecContext<'_>, _args: &[u8]) -> Result<(), Revert> {
        Err(Revert::Unauthorized)
    }

    fn call(&self, ctx: &mut ExecContext<'_>, method: &str, args: &[u8]) -> Result<(), Revert> {
        match method {
            "newPolicy" => Self::new_policy(ctx, args),
            _ => Err(Revert::UnknownMethod),
        }
    }
}
