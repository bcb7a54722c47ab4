//! The per-certificate SmartCert contract.

use std::collections::BTreeMap;

use crate::chain::{Address, Contract, ExecContext, Revert, RevokeMode};
use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::PublicKey;
use crate::hash::hash;

use super::layout::{CaState, CertStorage, MAX_NAME_LEN};
use super::policy::{self, Policy};

pub const TEMPLATE_ID: &str = "smartcert";
pub const ROGUE_TEMPLATE_ID: &str = "smartcert-rogue";
pub const VERSION: u32 = 1;

/// First four bytes of `H(address)`, prefixed to a CA's client random.
pub fn ca_tag(ca: &Address) -> [u8; 4] {
    let d = hash(&ca.0);
    [d.0[0], d.0[1], d.0[2], d.0[3]]
}

/// Client random a CA uses when probing on top of the block with hash `block`.
pub fn probe_random(ca: &Address, block: &crate::hash::Digest) -> [u8; 32] {
    let mut r = [0u8; 32];
    r[..4].copy_from_slice(&ca_tag(ca));
    r[4..].copy_from_slice(&block.0[..28]);
    r
}

/// The compliance predicate, with the lifetime check hoisted out of the CA loop.
pub fn is_compliant(cas: &BTreeMap<Address, CaState>, created: u64, policy: &Policy, now: u64) -> bool {
    if now.saturating_sub(created) > policy.max_lifetime {
        return false;
    }
    let ok = cas
        .iter()
        .filter(|(ca, s)| policy.cas.contains(ca) && policy.max_err.is_none_or(|m| s.err_no <= m))
        .count();
    ok as u64 >= policy.min_cas as u64
}

pub fn valid_domain_name(name: &str) -> bool {
    !name.is_empty() && name.len() <= MAX_NAME_LEN && !name.bytes().any(|b| b == 0 || b.is_ascii_whitespace())
}

/// Arguments of the CREATE transaction: `name (u16 len) ‖ key count u16 ‖
/// SPKI DER (u16 len)* ‖ CA count u16 ‖ addresses (20B)*`.
pub fn init_args(name: &str, keys: &[PublicKey], cas: &[Address]) -> Vec<u8> {
    let mut w = Writer::new();
    w.var16(name.as_bytes()).u16(keys.len() as u16);
    for k in keys {
        w.var16(k.der());
    }
    w.u16(cas.len() as u16);
    for ca in cas {
        w.raw(&ca.0);
    }
    w.finish()
}

/// Arguments of `update`: `cliRnd (32B) ‖ srvRnd (32B) ‖ params (u16 len) ‖ σ (u16 len)`.
pub fn update_args(cli_rnd: &[u8; 32], srv_rnd: &[u8; 32], params: &[u8], sig: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(cli_rnd).raw(srv_rnd).var16(params).var16(sig);
    w.finish()
}

struct InitArgs {
    name: String,
    keys: Vec<PublicKey>,
    cas: Vec<Address>,
}

fn decode_init(args: &[u8]) -> Result<InitArgs, DecodeError> {
    let mut r = Reader::new(args);
    let name = r.utf8_var16()?.to_owned();
    let nk = r.u16()?;
    let keys = (0..nk)
        .map(|_| PublicKey::from_der(r.var16()?).map_err(|_| DecodeError::Invalid("public key")))
        .collect::<Result<Vec<_>, _>>()?;
    let nc = r.u16()?;
    let cas = (0..nc).map(|_| r.array().map(Address)).collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(InitArgs { name, keys, cas })
}

struct UpdateArgs<'b> {
    cli_rnd: [u8; 32],
    srv_rnd: [u8; 32],
    params: &'b [u8],
    sig: &'b [u8],
}

fn decode_update(args: &[u8]) -> Result<UpdateArgs<'_>, DecodeError> {
    let mut r = Reader::new(args);
    let u = UpdateArgs {
        cli_rnd: r.array()?,
        srv_rnd: r.array()?,
        params: r.var16()?,
        sig: r.var16()?,
    };
    r.finish()?;
    Ok(u)
}

fn load(ctx: &ExecContext<'_>) -> Result<CertStorage, Revert> {
    CertStorage::load(ctx).map_err(|_| Revert::CorruptStorage)
}

fn save(ctx: &mut ExecContext<'_>, st: &CertStorage) {
    for (label, value) in st.slots() {
        if ctx.load(&label).as_deref() != Some(value.as_slice()) {
            ctx.store(&label, value);
        }
    }
}

fn policy_for(ctx: &ExecContext<'_>, name: &str) -> Result<(Policy, bool), Revert> {
    policy::lookup(&ctx.foreign(ctx.policy_contract()), name).map_err(|_| Revert::CorruptStorage)
}

/// SmartCert contract code. The rogue variant shares the storage layout but
/// skips every policy and proof check; it exists to exercise code pinning.
pub struct CertContract {
    enforcing: bool,
}

impl CertContract {
    pub const fn honest() -> Self {
        Self { enforcing: true }
    }

    pub const fn rogue() -> Self {
        Self { enforcing: false }
    }

    fn update(&self, ctx: &mut ExecContext<'_>, args: &[u8]) -> Result<(), Revert> {
        let mut st = load(ctx)?;
        let sender = ctx.sender;
        if !st.cas.contains_key(&sender) {
            return Err(Revert::Unauthorized);
        }
        if !st.valid {
            return Err(Revert::AlreadyInvalid);
        }
        let proof = decode_update(args).map_err(|_| Revert::BadArgs)?;
        let now = ctx.now();

        if !self.enforcing {
            st.cas.get_mut(&sender).expect("checked").last_upd = now;
            st.updated = now;
            st.valid = true;
            save(ctx, &st);
            ctx.emit("ValidationOk", [("ca", sender.to_hex())]);
            return Ok(());
        }

        let epoch = ctx.config().epoch;
        let (policy, _) = policy_for(ctx, &st.domain_name)?;

        for (ca, s) in st.cas.iter_mut() {
            let missed = now.saturating_sub(s.last_upd) / epoch;
            if missed >= 1 {
                s.last_err = now - epoch;
                s.err_no += missed;
                s.last_upd += missed * epoch;
                ctx.emit("ValidationError", [("ca", ca.to_hex()), ("missed", missed.to_string())]);
            }
        }

        let epoch_start = now - now % epoch;
        let tag = ca_tag(&sender);
        let mut fresh = false;
        for i in 1.. {
            match ctx.block.last_block_time(i) {
                Ok(t) if t >= epoch_start => {}
                _ => break,
            }
            let h = ctx.block.last_block_hash(i).expect("same window as the timestamp");
            ctx.count_op();
            if proof.cli_rnd[..4] == tag && proof.cli_rnd[4..] == h.0[..28] {
                fresh = true;
                break;
            }
        }

        let mut msg = Vec::with_capacity(64 + proof.params.len());
        msg.extend_from_slice(&proof.cli_rnd);
        msg.extend_from_slice(&proof.srv_rnd);
        msg.extend_from_slice(proof.params);
        let signed = st.pks.iter().any(|pk| {
            ctx.count_op();
            pk.verify(&msg, proof.sig)
        });

        let s = st.cas.get_mut(&sender).expect("checked");
        if fresh && signed {
            s.last_upd = now;
        } else {
            s.last_err = now;
            s.err_no += 1;
        }
        st.updated = now;
        st.valid = is_compliant(&st.cas, st.created, &policy, now);

        save(ctx, &st);
        let valid = st.valid.to_string();
        if fresh && signed {
            ctx.emit("ValidationOk", [("ca", sender.to_hex()), ("valid", valid)]);
        } else {
            ctx.emit(
                "ValidationError",
                [
                    ("ca", sender.to_hex()),
                    ("fresh", fresh.to_string()),
                    ("signature", signed.to_string()),
                    ("valid", valid),
                ],
            );
        }
        Ok(())
    }

    fn revoke(&self, ctx: &mut ExecContext<'_>, args: &[u8]) -> Result<(), Revert> {
        if !args.is_empty() {
            return Err(Revert::BadArgs);
        }
        let mut st = load(ctx)?;
        if !self.enforcing {
            return Ok(());
        }
        if st.revoked {
            return Err(Revert::AlreadyInvalid);
        }
        let sender = ctx.sender;
        let (policy, _) = policy_for(ctx, &st.domain_name)?;
        let is_ca = policy.cas.contains(&sender);
        if is_ca && !st.revs.contains(&sender) {
            st.revs.push(sender);
        }
        let by_key = policy.key_id == Some(sender);
        let by_cas = is_ca
            && match ctx.config().revoke_mode {
                RevokeMode::Literal => policy.cas.len() as i64 - st.revs.len() as i64 >= policy.min_cas as i64,
                RevokeMode::Quorum => st.revs.len() as u64 >= policy.min_cas as u64,
            };
        if by_key || by_cas {
            st.updated = ctx.now();
            st.revoked = true;
            st.valid = false;
            save(ctx, &st);
            ctx.emit(
                "Revoked",
                [("by", sender.to_hex()), ("votes", st.revs.len().to_string())],
            );
            Ok(())
        } else if is_ca {
            save(ctx, &st);
            Ok(())
        } else {
            Err(Revert::Unauthorized)
        }
    }
}

impl Contract for CertContract {
    fn template_id(&self) -> &'static str {
        if self.enforcing {
            TEMPLATE_ID
        } else {
            ROGUE_TEMPLATE_ID
        }
    }

    fn version(&self) -> u32 {
        VERSION
    }

    fn init(&self, ctx: &mut ExecContext<'_>, args: &[u8]) -> Result<(), Revert> {
        let InitArgs { name, keys, cas } = decode_init(args).map_err(|_| Revert::BadArgs)?;
        let mut tracked = BTreeMap::new();
        let now = ctx.now();
        for ca in &cas {
            let fresh = CaState {
                last_upd: now,
                last_err: 0,
                err_no: 0,
            };
            if tracked.insert(*ca, fresh).is_some() {
                return Err(Revert::BadArgs);
            }
        }
        if !valid_domain_name(&name) || keys.is_empty() || keys.len() > 16 || cas.is_empty() {
            return Err(Revert::BadArgs);
        }
        if self.enforcing {
            let (policy, registered) = policy_for(ctx, &name)?;
            if registered && policy.key_id != Some(ctx.sender) {
                return Err(Revert::Unauthorized);
            }
            if !cas.iter().all(|ca| policy.cas.contains(ca)) {
                return Err(Revert::CaNotAuthorized);
            }
        }
        let st = CertStorage {
            domain_name: name,
            pks: keys,
            created: now,
            updated: 0,
            revoked: false,
            valid: true,
            revs: Vec::new(),
            cas: tracked,
        };
        save(ctx, &st);
        ctx.emit(
            "CertCreated",
            [
                ("name", st.domain_name.clone()),
                ("cas", st.cas.len().to_string()),
                ("owner", ctx.sender.to_hex()),
            ],
        );
        Ok(())
    }

    fn call(&self, ctx: &mut ExecContext<'_>, method: &str, args: &[u8]) -> Result<(), Revert> {
        match method {
            "update" => self.update(ctx, args),
            "revoke" => self.revoke(ctx, args),
            _ => Err(Revert::UnknownMethod),
        }
    }
}
