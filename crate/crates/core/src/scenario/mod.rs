//! Scripted end-to-end runs: a JSON timeline of policy registrations,
//! contract creations, CA probes, revocations and client connections.

mod report;
mod runner;
mod schema;

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

pub use report::{
    ActionRecord, DomainReport, Failure, Metrics, PolicyReport, Report, StorageReport, TxRecord, VerdictRecord,
};
pub use runner::{expand_timeline, AssemblyRecord, Runner, ServedRecord};
pub use schema::{
    Action, CaSpec, ClientSpec, DomainSpec, PolicyAction, ReplayFrom, Scenario, TimedAction, DEFAULT_GENESIS_TIME,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Scenarios shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    (
        "honest-3ca-10epochs",
        include_str!("../../scenarios/honest-3ca-10epochs.json"),
    ),
    ("mitm-one-epoch", include_str!("../../scenarios/mitm-one-epoch.json")),
    (
        "mitm-strict-policy",
        include_str!("../../scenarios/mitm-strict-policy.json"),
    ),
    (
        "revoke-then-replay",
        include_str!("../../scenarios/revoke-then-replay.json"),
    ),
    (
        "policy-collusion",
        include_str!("../../scenarios/policy-collusion.json"),
    ),
    (
        "policyless-rogue-ca",
        include_str!("../../scenarios/policyless-rogue-ca.json"),
    ),
    (
        "skipped-validations",
        include_str!("../../scenarios/skipped-validations.json"),
    ),
    ("replayed-proofs", include_str!("../../scenarios/replayed-proofs.json")),
    ("revocation-race", include_str!("../../scenarios/revocation-race.json")),
];

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, json)| parse(json).expect("bundled scenarios parse"))
}

pub fn parse(json: &str) -> Result<Scenario, ScenarioError> {
    let s: Scenario = serde_json::from_str(json)?;
    validate(&s)?;
    Ok(s)
}

pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    parse(&std::fs::read_to_string(path)?)
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// Checks references and ordering before anything runs.
pub fn validate(s: &Scenario) -> Result<(), ScenarioError> {
    s.chain.validate().map_err(|e| invalid(e.to_string()))?;
    let mut names = HashSet::new();
    for n in s.cas.iter().map(|c| &c.name).chain(&s.actors) {
        if n.eq_ignore_ascii_case("owner") || n.eq_ignore_ascii_case("keyid") || n.eq_ignore_ascii_case("none") {
            return Err(invalid(format!("reserved actor name {n}")));
        }
        if !names.insert(n.as_str()) {
            return Err(invalid(format!("duplicate actor name {n}")));
        }
    }
    let cas: HashSet<_> = s.cas.iter().map(|c| c.name.as_str()).collect();
    let domains: HashSet<_> = s.domains.iter().map(|d| d.name.as_str()).collect();
    let clients: HashSet<_> = s.clients.iter().map(|c| c.name.as_str()).collect();
    if domains.len() != s.domains.len() || clients.len() != s.clients.len() {
        return Err(invalid("duplicate domain or client name"));
    }
    for d in &s.domains {
        if d.keys == 0 || d.server_key >= d.keys {
            return Err(invalid(format!(
                "{}: needs at least one key and a valid server_key",
                d.name
            )));
        }
        if d.refresh_period == Some(0) {
            return Err(invalid(format!("{}: refresh_period must be positive", d.name)));
        }
    }
    let actor_ok = |a: &str| names.contains(a) || ["owner", "keyid"].iter().any(|r| a.eq_ignore_ascii_case(r));
    let ca_ok = |c: &str| cas.contains(c);
    let check = |ok: bool, what: &str, i: usize| {
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("timeline[{i}]: unknown {what}")))
        }
    };

    let mut prev = 0;
    for (i, ta) in s.timeline.iter().enumerate() {
        if ta.at < prev {
            return Err(invalid(format!("timeline[{i}]: actions must be sorted by time")));
        }
        prev = ta.at;
        match &ta.action {
            Action::AdvanceTime {} | Action::Mine { .. } => {}
            Action::RegisterPolicy(p) | Action::ReplacePolicy(p) => {
                check(domains.contains(p.domain.as_str()), "domain", i)?;
                for a in p.signers.iter().chain(&p.sender) {
                    check(actor_ok(a), "actor", i)?;
                }
                if let Some(k) = &p.key_id {
                    check(actor_ok(k) || k.eq_ignore_ascii_case("none"), "key_id", i)?;
                }
                for c in p.cas.iter().flatten() {
                    check(ca_ok(c), "CA", i)?;
                }
            }
            Action::CreateCert {
                domain,
                cas: c,
                sender,
                keys,
                ..
            } => {
                check(domains.contains(domain.as_str()), "domain", i)?;
                for k in keys.iter().flatten() {
                    check(k == "mitm" || k.starts_with("tls") || actor_ok(k), "key", i)?;
                }
                for ca in c.iter().flatten() {
                    check(ca_ok(ca), "CA", i)?;
                }
                if let Some(a) = sender {
                    check(actor_ok(a), "actor", i)?;
                }
            }
            Action::CaProbe {
                ca, domain, submit_as, ..
            } => {
                check(domains.contains(domain.as_str()), "domain", i)?;
                check(ca_ok(ca), "CA", i)?;
                if let Some(c) = submit_as {
                    check(ca_ok(c), "CA", i)?;
                }
            }
            Action::PeriodicProbes {
                domain, cas: c, every, ..
            } => {
                check(domains.contains(domain.as_str()), "domain", i)?;
                check(*every > 0, "period (every must be positive)", i)?;
                for ca in c.iter().flatten() {
                    check(ca_ok(ca), "CA", i)?;
                }
            }
            Action::Revoke { domain, by, .. } => {
                check(domains.contains(domain.as_str()), "domain", i)?;
                check(actor_ok(by), "actor", i)?;
            }
            Action::ClientVerify { client, domain, .. } => {
                check(domains.contains(domain.as_str()), "domain", i)?;
                check(clients.contains(client.as_str()), "client", i)?;
            }
            Action::CaptureCert { domain, .. } | Action::AssertStorage { domain, .. } => {
                check(domains.contains(domain.as_str()), "domain", i)?;
            }
        }
    }
    Ok(())
}

/// Parses and runs a scenario.
pub fn run(scenario: Scenario) -> Result<Report, ScenarioError> {
    Ok(Runner::new(scenario)?.run().0)
}
