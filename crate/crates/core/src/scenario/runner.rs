use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

use super::report::{
    ActionRecord, DomainReport, Failure, Metrics, PolicyReport, Report, StorageReport, TxRecord, VerdictRecord,
};
use super::schema::{Action, PolicyAction, ReplayFrom, Scenario, TimedAction};
use super::ScenarioError;
use crate::ca::CertificateAuthority;
use crate::chain::{log as chain_log, Address, BlockHeader, Chain, Genesis, Transaction, TxId};
use crate::client::{HeaderStore, TrustAnchors, Validator};
use crate::contracts::{self, policy, CertStorage, Policy, PolicyKind};
use crate::crypto::{KeyPair, PublicKey};
use crate::domain::{assemble_certificate, create_cert_tx, new_policy_tx, DomainAgent, SmartCertCertificate};
use crate::handshake::{client_connect, Clock, HandshakeServer, InProcessEndpoint, SessionOutcome, ValidationProof};
use crate::hash::{hash, Digest, HASH_NAME};

/// Chain facts at the moment a certificate was assembled. Lets tests judge a
/// served certificate without looking at its proofs.
#[derive(Clone, Debug)]
pub struct AssemblyRecord {
    pub contract: Address,
    pub anchor: u64,
    pub anchor_timestamp: u64,
    pub code_hash: Digest,
    pub storage: CertStorage,
}

/// One client connection as the runner saw it.
#[derive(Clone, Debug)]
pub struct ServedRecord {
    pub client: String,
    pub domain: String,
    pub now: u64,
    pub certificate: Option<Vec<u8>>,
    pub verdict: String,
    /// The client's header window at connection time (oldest, newest number).
    pub window: (u64, u64),
    pub anchors: TrustAnchors,
    pub wrong_key: bool,
}

struct DomainState {
    owner: KeyPair,
    tls: Vec<KeyPair>,
    server_key: usize,
    period: u64,
    server: Arc<HandshakeServer>,
    mitm: Option<Arc<HandshakeServer>>,
    agent: Option<DomainAgent>,
    contract: Option<Address>,
    seed: u64,
}

struct ClientState {
    store: HeaderStore,
    anchors: TrustAnchors,
}

enum OnSuccess {
    Nothing,
    SetContract { domain: String, addr: Address },
}

struct PendingTx {
    id: TxId,
    action: usize,
    expect: String,
    on_success: OnSuccess,
}

struct Deferred {
    time: u64,
    action: usize,
    submitter: String,
    contract: Address,
    proof: ValidationProof,
    expect: String,
}

fn key_label(kind: &str, name: &str) -> String {
    format!("{kind}:{name}")
}

fn normalize_verdict(s: &str) -> String {
    match s.to_ascii_uppercase().as_str() {
        "ACCEPT" => "OK".into(),
        other => other.to_owned(),
    }
}

fn matches(expect: &str, actual: &str) -> bool {
    expect.eq_ignore_ascii_case("any") || normalize_verdict(expect) == normalize_verdict(actual)
}

/// Replaces `periodic_probes` with the `ca_probe` actions it stands for and
/// orders the result by time, keeping file order for equal times.
pub fn expand_timeline(scenario: &Scenario) -> Vec<TimedAction> {
    let trusted: Vec<String> = scenario
        .cas
        .iter()
        .filter(|c| c.trusted)
        .map(|c| c.name.clone())
        .collect();
    let mut out = Vec::new();
    for ta in &scenario.timeline {
        match &ta.action {
            Action::PeriodicProbes {
                domain,
                cas,
                every,
                until,
                stagger,
            } => {
                for (k, ca) in cas.as_ref().unwrap_or(&trusted).iter().enumerate() {
                    let mut t = ta.at + k as u64 * stagger;
                    while t < *until {
                        out.push(TimedAction {
                            at: t,
                            id: None,
                            action: Action::CaProbe {
                                ca: ca.clone(),
                                domain: domain.clone(),
                                hold_seconds: 0,
                                wrong_key: false,
                                replay_from: None,
                                submit_as: None,
                                expect: "SUCCESS".into(),
                            },
                        });
                        t += every;
                    }
                }
            }
            _ => out.push(ta.clone()),
        }
    }
    out.sort_by_key(|a| a.at);
    out
}

/// Drives one scenario against a fresh chain.
pub struct Runner {
    scenario: Scenario,
    timeline: Vec<TimedAction>,
    chain: Chain,
    cas: BTreeMap<String, CertificateAuthority>,
    actors: BTreeMap<String, KeyPair>,
    domains: BTreeMap<String, DomainState>,
    clients: BTreeMap<String, ClientState>,
    pending: Vec<PendingTx>,
    deferred: Vec<Deferred>,
    proofs: HashMap<String, ValidationProof>,
    captures: HashMap<String, Vec<u8>>,
    assemblies: HashMap<Digest, AssemblyRecord>,
    served: Vec<ServedRecord>,
    report: Report,
    now: u64,
    rng: ChaCha20Rng,
}

impl Runner {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        super::validate(&scenario)?;
        let seed = scenario.seed;
        let alg = scenario.signature_scheme;
        let cas: BTreeMap<_, _> = scenario
            .cas
            .iter()
            .map(|c| {
                let keys = KeyPair::derive(alg, seed, &key_label("ca", &c.name));
                (c.name.clone(), CertificateAuthority::new(c.name.clone(), keys))
            })
            .collect();
        let trusted = scenario
            .cas
            .iter()
            .filter(|c| c.trusted)
            .map(|c| cas[&c.name].address())
            .collect();
        let chain = Chain::new(
            scenario.chain.clone(),
            Genesis {
                timestamp: scenario.genesis_time,
                trusted_cas: trusted,
            },
        )
        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let actors = scenario
            .actors
            .iter()
            .map(|a| (a.clone(), KeyPair::derive(alg, seed, &key_label("actor", a))))
            .collect();
        let domains = scenario
            .domains
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let tls: Vec<_> = (0..d.keys)
                    .map(|j| KeyPair::derive(alg, seed, &format!("domain:{}:tls:{j}", d.name)))
                    .collect();
                let dseed = seed ^ (0x5eed_0000 + i as u64);
                let server = Arc::new(HandshakeServer::new(
                    tls[d.server_key].clone(),
                    Clock::manual(scenario.genesis_time),
                    dseed,
                ));
                let state = DomainState {
                    owner: KeyPair::derive(alg, seed, &key_label("owner", &d.name)),
                    tls,
                    server_key: d.server_key,
                    period: d.refresh_period.unwrap_or(scenario.chain.epoch / 2),
                    server,
                    mitm: None,
                    agent: None,
                    contract: None,
                    seed: dseed,
                };
                (d.name.clone(), state)
            })
            .collect();
        let genesis = *chain.head();
        let clients = scenario
            .clients
            .iter()
            .map(|c| {
                let max_stale = c.max_stale.unwrap_or(scenario.chain.max_stale);
                let state = ClientState {
                    store: HeaderStore::new(genesis, c.prune_horizon.unwrap_or(max_stale)),
                    anchors: TrustAnchors {
                        code_hash: contracts::smartcert_code_hash(),
                        max_stale,
                    },
                };
                (c.name.clone(), state)
            })
            .collect();
        let report = Report {
            scenario: scenario.name.clone(),
            seed,
            hash_function: HASH_NAME.into(),
            signature_scheme: format!("{alg:?}"),
            ..Report::default()
        };
        Ok(Self {
            timeline: expand_timeline(&scenario),
            now: scenario.genesis_time,
            rng: ChaCha20Rng::seed_from_u64(seed),
            scenario,
            chain,
            cas,
            actors,
            domains,
            clients,
            pending: Vec::new(),
            deferred: Vec::new(),
            proofs: HashMap::new(),
            captures: HashMap::new(),
            assemblies: HashMap::new(),
            served: Vec::new(),
            report,
        })
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn timeline(&self) -> &[TimedAction] {
        &self.timeline
    }

    pub fn served(&self) -> &[ServedRecord] {
        &self.served
    }

    /// Assembly facts for a certificate, keyed by `H(bytes)`.
    pub fn assembly(&self, cert_hash: &Digest) -> Option<&AssemblyRecord> {
        self.assemblies.get(cert_hash)
    }

    pub fn ca(&self, name: &str) -> Option<&CertificateAuthority> {
        self.cas.get(name)
    }

    pub fn contract_of(&self, domain: &str) -> Option<Address> {
        self.domains.get(domain)?.contract
    }

    /// Runs the whole timeline, then mines until nothing is outstanding.
    pub fn run(mut self) -> (Report, Self) {
        let timeline = std::mem::take(&mut self.timeline);
        for (i, ta) in timeline.iter().enumerate() {
            let t = self.scenario.genesis_time + ta.at;
            if t < self.now {
                self.fail(Some(i), format!("action time {} is behind the clock", ta.at));
                continue;
            }
            self.advance_to(t);
            let outcome = match self.apply(i, ta) {
                Ok(o) => o,
                Err(msg) => {
                    self.fail(Some(i), msg.clone());
                    format!("failed: {msg}")
                }
            };
            self.report.actions.push(ActionRecord {
                index: i,
                id: ta.id.clone(),
                at: ta.at,
                action: ta.action.verb().into(),
                outcome,
            });
        }
        self.timeline = timeline;
        while !self.pending.is_empty() || !self.deferred.is_empty() || !self.chain.pending().is_empty() {
            let next_deferred = self.deferred.iter().map(|d| d.time).min();
            match next_deferred {
                Some(t) if t > self.now => self.advance_to(t),
                _ => {
                    let slot = self.next_slot();
                    self.advance_to(slot);
                }
            }
        }
        self.finish();
        (self.report.clone(), self)
    }

    fn fail(&mut self, action: Option<usize>, message: String) {
        log::warn!("scenario failure at action {action:?}: {message}");
        let at = self.now - self.scenario.genesis_time;
        self.report.failures.push(Failure { action, at, message });
    }

    fn next_slot(&self) -> u64 {
        self.chain.head().timestamp + self.scenario.chain.block_interval
    }

    fn advance_to(&mut self, t: u64) {
        loop {
            let slot = self.next_slot();
            let deferred = self.deferred.iter().map(|d| d.time).min();
            if slot <= t && deferred.is_none_or(|d| slot <= d) {
                self.mine_at(slot);
            } else if let Some(d) = deferred.filter(|&d| d <= t) {
                self.now = self.now.max(d);
                self.submit_deferred(d);
            } else {
                break;
            }
        }
        self.now = self.now.max(t);
        self.set_server_times();
    }

    fn set_server_times(&self) {
        for d in self.domains.values() {
            d.server.set_time(self.now);
            if let Some(m) = &d.mitm {
                m.set_time(self.now);
            }
        }
    }

    fn mine_at(&mut self, ts: u64) {
        let header = match self.chain.mine_block(ts) {
            Ok(h) => h,
            Err(e) => {
                self.fail(None, format!("mining at {ts} failed: {e}"));
                return;
            }
        };
        self.now = ts;
        self.check_receipts(&header);
        self.tick_agents();
    }

    fn check_receipts(&mut self, header: &BlockHeader) {
        let pending = std::mem::take(&mut self.pending);
        for p in pending {
            let Some(r) = self.chain.receipt(&p.id).cloned() else {
                self.pending.push(p);
                continue;
            };
            let status = r.status.code();
            self.report.transactions.push(TxRecord {
                action: p.action,
                tx_id: p.id,
                block: header.number,
                status: status.clone(),
                expected: p.expect.clone(),
                events: r.events.clone(),
            });
            if !matches(&p.expect, &status) {
                self.fail(
                    Some(p.action),
                    format!("transaction {} ended {status}, expected {}", p.id, p.expect),
                );
            }
            if r.status.is_success() {
                if let OnSuccess::SetContract { domain, addr } = p.on_success {
                    self.install_contract(&domain, addr);
                }
            }
        }
    }

    fn install_contract(&mut self, domain: &str, addr: Address) {
        let d = self.domains.get_mut(domain).expect("validated domain");
        d.contract = Some(addr);
        d.agent = Some(DomainAgent::new(domain, addr, d.period, d.server.clone()));
    }

    fn record_assembly(&mut self, cert: &[u8]) {
        let Ok(c) = SmartCertCertificate::decode(cert) else {
            return;
        };
        let (Some(account), Some(storage)) = (self.chain.account(&c.addr), self.chain.storage(&c.addr)) else {
            return;
        };
        let Ok(storage) = CertStorage::load(storage) else {
            return;
        };
        let rec = AssemblyRecord {
            contract: c.addr,
            anchor: c.anchor,
            anchor_timestamp: self.chain.header_at(c.anchor).map(|h| h.timestamp).unwrap_or_default(),
            code_hash: account.code_hash,
            storage,
        };
        self.assemblies.insert(hash(cert), rec);
    }

    fn tick_agents(&mut self) {
        let now = self.now;
        let mut stapled = Vec::new();
        for (name, d) in self.domains.iter_mut() {
            let Some(agent) = d.agent.as_mut() else {
                continue;
            };
            match agent.tick(&self.chain, now) {
                Ok(true) => {
                    if let Some(s) = d.server.staple() {
                        stapled.push((name.clone(), s));
                    }
                }
                Ok(false) => {}
                Err(e) => log::warn!("{name}: {e}"),
            }
        }
        for (name, s) in stapled {
            self.record_assembly(&s);
            self.report.metrics.certificate_bytes.insert(name, s.len());
        }
    }

    fn submit(
        &mut self,
        action: usize,
        tx: Transaction,
        expect: &str,
        on_success: OnSuccess,
    ) -> Result<String, String> {
        let id = self.chain.submit_tx(tx).map_err(|e| e.to_string())?;
        self.pending.push(PendingTx {
            id,
            action,
            expect: expect.to_owned(),
            on_success,
        });
        Ok(format!("submitted {id}"))
    }

    fn submit_deferred(&mut self, t: u64) {
        let (due, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.deferred)
            .into_iter()
            .partition(|d| d.time == t);
        self.deferred = rest;
        for d in due {
            let ca = &self.cas[&d.submitter];
            let tx = ca.update_tx(self.chain.next_nonce(&ca.address()), d.contract, &d.proof);
            if let Err(e) = self.submit(d.action, tx, &d.expect, OnSuccess::Nothing) {
                self.fail(Some(d.action), e);
            }
        }
    }

    fn keypair(&self, domain: &str, who: &str) -> Result<KeyPair, String> {
        if who.eq_ignore_ascii_case("owner") || who.eq_ignore_ascii_case("keyid") {
            return Ok(self
                .domains
                .get(domain)
                .ok_or(format!("unknown domain {domain}"))?
                .owner
                .clone());
        }
        if let Some(ca) = self.cas.get(who) {
            return Ok(ca.keys().clone());
        }
        self.actors.get(who).cloned().ok_or(format!("unknown actor {who}"))
    }

    fn contract_key(&mut self, domain: &str, r: &str) -> Result<PublicKey, String> {
        if r == "mitm" {
            return Ok(self.mitm(domain).identity().public().clone());
        }
        if let Some(i) = r.strip_prefix("tls").and_then(|i| i.parse::<usize>().ok()) {
            let d = &self.domains[domain];
            return d
                .tls
                .get(i)
                .map(|k| k.public().clone())
                .ok_or(format!("{domain} has no key {r}"));
        }
        Ok(self.keypair(domain, r)?.public().clone())
    }

    fn ca_addresses(&self, names: &[String]) -> Result<Vec<Address>, String> {
        names
            .iter()
            .map(|n| self.cas.get(n).map(|c| c.address()).ok_or(format!("unknown CA {n}")))
            .collect()
    }

    fn policy_of(&self, domain: &str) -> (Policy, bool) {
        let storage = self
            .chain
            .storage(&self.chain.policy_contract())
            .expect("policy contract");
        policy::lookup(storage, domain).expect("policy storage decodes")
    }

    fn contract(&self, domain: &str) -> Result<Address, String> {
        self.domains
            .get(domain)
            .ok_or(format!("unknown domain {domain}"))?
            .contract
            .ok_or(format!("{domain} has no contract yet"))
    }

    fn mitm(&mut self, domain: &str) -> Arc<HandshakeServer> {
        let alg = self.scenario.signature_scheme;
        let seed = self.scenario.seed;
        let now = self.now;
        let d = self.domains.get_mut(domain).expect("validated domain");
        let m = d.mitm.get_or_insert_with(|| {
            let keys = KeyPair::derive(alg, seed, &key_label("mitm", domain));
            Arc::new(HandshakeServer::new(keys, Clock::manual(now), d.seed ^ 0xbad))
        });
        // The impostor can always copy the public staple.
        m.set_staple(d.server.staple().map(|s| s.to_vec()));
        m.set_time(now);
        m.clone()
    }

    fn apply(&mut self, index: usize, ta: &TimedAction) -> Result<String, String> {
        match &ta.action {
            Action::AdvanceTime {} => Ok(format!("clock at {}", ta.at)),
            Action::Mine { count } => {
                for _ in 0..*count {
                    let slot = self.next_slot();
                    self.advance_to(slot);
                }
                Ok(format!("height {}", self.chain.height()))
            }
            Action::RegisterPolicy(p) | Action::ReplacePolicy(p) => self.apply_policy(index, p),
            Action::CreateCert {
                domain,
                cas,
                sender,
                keys,
                template,
                expect,
            } => {
                let cas = match cas {
                    Some(names) => self.ca_addresses(names)?,
                    None => self.policy_of(domain).0.cas.into_iter().collect(),
                };
                let owner = self.keypair(domain, sender.as_deref().unwrap_or("owner"))?;
                let keys = match keys {
                    Some(refs) => refs
                        .iter()
                        .map(|r| self.contract_key(domain, r))
                        .collect::<Result<Vec<_>, _>>()?,
                    None => self.domains[domain].tls.iter().map(|k| k.public().clone()).collect(),
                };
                let nonce = self.chain.next_nonce(&Address::from_public_key(owner.public()));
                let template = template.as_deref().unwrap_or(contracts::cert::TEMPLATE_ID);
                let (tx, addr) = create_cert_tx(&owner, nonce, template, domain, &keys, &cas);
                let on_success = OnSuccess::SetContract {
                    domain: domain.clone(),
                    addr,
                };
                self.submit(index, tx, expect, on_success)
                    .map(|s| format!("{s} creating {addr}"))
            }
            Action::CaProbe {
                ca,
                domain,
                hold_seconds,
                wrong_key,
                replay_from,
                submit_as,
                expect,
            } => {
                let contract = self.contract(domain)?;
                let proof = match replay_from {
                    Some(ReplayFrom::Probe(id)) => {
                        self.proofs.get(id).cloned().ok_or(format!("no captured probe {id}"))?
                    }
                    other => {
                        let anchor = match other {
                            Some(ReplayFrom::Block(n)) => self.chain.header_at(*n).map_err(|e| e.to_string())?.hash(),
                            _ => self.chain.head_hash(),
                        };
                        let server = if *wrong_key {
                            self.mitm(domain)
                        } else {
                            self.domains[domain].server.clone()
                        };
                        let prober = self.cas.get(ca).ok_or(format!("unknown CA {ca}"))?;
                        prober
                            .probe(&InProcessEndpoint::new(server), &anchor)
                            .map_err(|e| e.to_string())?
                    }
                };
                if let Some(id) = &ta.id {
                    self.proofs.insert(id.clone(), proof.clone());
                }
                let submitter = submit_as.clone().unwrap_or(ca.clone());
                if !self.cas.contains_key(&submitter) {
                    return Err(format!("unknown CA {submitter}"));
                }
                if *hold_seconds > 0 {
                    self.deferred.push(Deferred {
                        time: self.now + hold_seconds,
                        action: index,
                        submitter,
                        contract,
                        proof,
                        expect: expect.clone(),
                    });
                    return Ok(format!("probed, submitting in {hold_seconds}s"));
                }
                let c = &self.cas[&submitter];
                let tx = c.update_tx(self.chain.next_nonce(&c.address()), contract, &proof);
                self.submit(index, tx, expect, OnSuccess::Nothing)
            }
            Action::PeriodicProbes { .. } => Err("periodic_probes should have been expanded".into()),
            Action::Revoke { domain, by, expect } => {
                let contract = self.contract(domain)?;
                let keys = self.keypair(domain, by)?;
                let nonce = self.chain.next_nonce(&Address::from_public_key(keys.public()));
                let tx = Transaction::new_signed(
                    &keys,
                    nonce,
                    crate::chain::TxTarget::Call(contract),
                    "revoke",
                    Vec::new(),
                );
                self.submit(index, tx, expect, OnSuccess::Nothing)
            }
            Action::ClientVerify {
                client,
                domain,
                expect,
                cert,
                wrong_key,
            } => self.client_verify(index, ta.at, client, domain, expect, cert.as_deref(), *wrong_key),
            Action::CaptureCert { domain, name } => {
                let contract = self.contract(domain)?;
                let cert = assemble_certificate(&self.chain, &contract)
                    .map_err(|e| e.to_string())?
                    .encode();
                self.record_assembly(&cert);
                let len = cert.len();
                self.captures.insert(name.clone(), cert);
                Ok(format!("captured {len} bytes"))
            }
            Action::AssertStorage { domain, path, equals } => {
                let actual = self.read_path(domain, path)?;
                if &actual == equals {
                    Ok(format!("{path} = {actual}"))
                } else {
                    Err(format!("{domain} {path} is {actual}, expected {equals}"))
                }
            }
        }
    }

    fn apply_policy(&mut self, index: usize, p: &PolicyAction) -> Result<String, String> {
        let (current, registered) = self.policy_of(&p.domain);
        let key_id = match p.key_id.as_deref() {
            Some(k) if k.eq_ignore_ascii_case("none") => None,
            k => Some(Address::from_public_key(
                self.keypair(&p.domain, k.unwrap_or("owner"))?.public(),
            )),
        };
        let cas = match &p.cas {
            Some(names) => self.ca_addresses(names)?.into_iter().collect(),
            None => self.chain.genesis().trusted_cas.iter().copied().collect(),
        };
        let policy = Policy {
            version: p.version.unwrap_or(if registered { current.version + 1 } else { 1 }),
            kind: p.kind,
            key_id,
            cas,
            max_lifetime: p.max_lifetime.unwrap_or(contracts::DEFAULT_MAX_LIFETIME),
            max_err: p.max_err,
            min_cas: p.min_cas.unwrap_or(1),
            sig_no: 0,
        };
        let msg = policy.signing_message(&p.domain);
        let sigs = p
            .signers
            .iter()
            .map(|s| {
                let k = self.keypair(&p.domain, s)?;
                Ok((k.public().clone(), k.sign(&msg)))
            })
            .collect::<Result<Vec<_>, String>>()?;
        let sender = self.keypair(&p.domain, p.sender.as_deref().unwrap_or("owner"))?;
        let nonce = self.chain.next_nonce(&Address::from_public_key(sender.public()));
        let tx = new_policy_tx(&sender, nonce, self.chain.policy_contract(), &p.domain, &policy, &sigs);
        let kind = if p.kind == PolicyKind::Update { "update" } else { "new" };
        self.submit(index, tx, &p.expect, OnSuccess::Nothing)
            .map(|s| format!("{s} ({kind}, {} sigs)", sigs.len()))
    }

    #[allow(clippy::too_many_arguments)]
    fn client_verify(
        &mut self,
        index: usize,
        at: u64,
        client: &str,
        domain: &str,
        expect: &str,
        cert: Option<&str>,
        wrong_key: bool,
    ) -> Result<String, String> {
        let server = match cert {
            Some(name) => {
                let bytes = self
                    .captures
                    .get(name)
                    .ok_or(format!("no captured certificate {name}"))?
                    .clone();
                let d = &self.domains[domain];
                let s = HandshakeServer::new(
                    d.tls[d.server_key].clone(),
                    Clock::manual(self.now),
                    d.seed ^ index as u64,
                );
                s.set_staple(Some(bytes));
                Arc::new(s)
            }
            None if wrong_key => self.mitm(domain),
            None => self.domains[domain].server.clone(),
        };
        let c = self.clients.get_mut(client).ok_or(format!("unknown client {client}"))?;
        let newest = c.store.newest().number;
        let feed = self.chain.headers()[(newest + 1) as usize..].to_vec();
        c.store.sync(feed).map_err(|e| e.to_string())?;
        let validator = Validator::new(&c.store, c.anchors);
        let outcome = client_connect(
            &InProcessEndpoint::new(server.clone()),
            domain,
            &validator,
            self.now,
            &mut self.rng,
        )
        .map_err(|e| e.to_string())?;
        let verdict = match &outcome {
            SessionOutcome::Accept(_) => "OK".to_owned(),
            SessionOutcome::Reject(r) => r.code().to_owned(),
        };
        let staple = server.staple().map(|s| s.to_vec());
        let anchor = staple
            .as_deref()
            .and_then(|b| SmartCertCertificate::decode(b).ok())
            .map(|c| c.anchor);
        self.served.push(ServedRecord {
            client: client.into(),
            domain: domain.into(),
            now: self.now,
            certificate: staple.clone(),
            verdict: verdict.clone(),
            window: (c.store.oldest().number, c.store.newest().number),
            anchors: c.anchors,
            wrong_key,
        });
        self.report.verdicts.push(VerdictRecord {
            action: index,
            at,
            client: client.into(),
            domain: domain.into(),
            expected: normalize_verdict(expect),
            verdict: verdict.clone(),
            certificate: staple.as_deref().map(hash),
            anchor,
        });
        if matches(expect, &verdict) {
            Ok(verdict)
        } else {
            Err(format!(
                "{client} got {verdict} for {domain}, expected {}",
                normalize_verdict(expect)
            ))
        }
    }

    fn ca_name(&self, addr: &Address) -> String {
        self.cas
            .values()
            .find(|c| c.address() == *addr)
            .map(|c| c.name().to_owned())
            .unwrap_or_else(|| addr.to_hex())
    }

    fn actor_name(&self, domain: &str, addr: &Address) -> String {
        if Address::from_public_key(self.domains[domain].owner.public()) == *addr {
            return "owner".into();
        }
        if let Some((n, _)) = self
            .actors
            .iter()
            .find(|(_, k)| Address::from_public_key(k.public()) == *addr)
        {
            return n.clone();
        }
        self.ca_name(addr)
    }

    fn read_path(&self, domain: &str, path: &str) -> Result<Value, String> {
        if !self.domains.contains_key(domain) {
            return Err(format!("unknown domain {domain}"));
        }
        if let Some(field) = path.strip_prefix("policy.") {
            let (p, registered) = self.policy_of(domain);
            return Ok(match field {
                "registered" => json!(registered),
                "version" => json!(p.version),
                "sigNo" => json!(p.sig_no),
                "minCAs" | "min_cas" => json!(p.min_cas),
                "maxErr" | "max_err" => json!(p.max_err),
                "maxLifetime" | "max_lifetime" => json!(p.max_lifetime),
                "keyId" | "key_id" => json!(p.key_id.map(|k| self.actor_name(domain, &k))),
                "cas" => json!(p.cas.iter().map(|a| self.ca_name(a)).collect::<Vec<_>>()),
                _ => return Err(format!("unknown path {path}")),
            });
        }
        if path == "contract" {
            return Ok(json!(self.domains[domain].contract.is_some()));
        }
        let addr = self.contract(domain)?;
        let st = CertStorage::load(self.chain.storage(&addr).ok_or("contract has no storage")?)
            .map_err(|e| e.to_string())?;
        if let Some(rest) = path.strip_prefix("ca.") {
            let (name, field) = rest.rsplit_once('.').ok_or(format!("unknown path {path}"))?;
            let ca = self.cas.get(name).ok_or(format!("unknown CA {name}"))?;
            let s = st
                .cas
                .get(&ca.address())
                .ok_or(format!("{name} is not tracked by the contract"))?;
            return Ok(match field {
                "errNo" => json!(s.err_no),
                "lastErr" => json!(s.last_err),
                "lastUpd" => json!(s.last_upd),
                "lastErrAt" => json!(s.last_err.saturating_sub(self.scenario.genesis_time)),
                "lastUpdAt" => json!(s.last_upd.saturating_sub(self.scenario.genesis_time)),
                _ => return Err(format!("unknown path {path}")),
            });
        }
        Ok(match path {
            "valid" => json!(st.valid),
            "revoked" => json!(st.revoked),
            "created" => json!(st.created),
            "updated" => json!(st.updated),
            "createdAt" => json!(st.created.saturating_sub(self.scenario.genesis_time)),
            "updatedAt" => json!(st.updated.saturating_sub(self.scenario.genesis_time)),
            "revCount" => json!(st.revs.len()),
            "revs" => json!(st.revs.iter().map(|a| self.ca_name(a)).collect::<Vec<_>>()),
            "pkCount" => json!(st.pks.len()),
            "name" => json!(st.domain_name),
            _ => return Err(format!("unknown path {path}")),
        })
    }

    fn finish(&mut self) {
        for name in self.domains.keys() {
            let (p, registered) = self.policy_of(name);
            let contract = self.domains[name].contract;
            let storage = contract
                .and_then(|a| self.chain.storage(&a))
                .and_then(|s| CertStorage::load(s).ok())
                .map(|st| StorageReport {
                    created: st.created,
                    updated: st.updated,
                    valid: st.valid,
                    revoked: st.revoked,
                    keys: st.pks.len(),
                    revs: st.revs.iter().map(|a| self.ca_name(a)).collect(),
                    cas: st.cas.iter().map(|(a, s)| (self.ca_name(a), *s)).collect(),
                });
            let policy = PolicyReport {
                registered,
                version: p.version,
                sig_no: p.sig_no,
                min_cas: p.min_cas,
                max_err: p.max_err,
                max_lifetime: p.max_lifetime,
                key_id: p.key_id.map(|k| self.actor_name(name, &k)),
                cas: p.cas.iter().map(|a| self.ca_name(a)).collect(),
            };
            self.report.final_states.insert(
                name.clone(),
                DomainReport {
                    contract,
                    storage,
                    policy,
                },
            );
        }
        let log_bytes = chain_log::encode_log(&self.chain);
        self.report.metrics = Metrics {
            blocks: self.chain.height(),
            transactions: self.chain.receipts().count(),
            certificate_bytes: std::mem::take(&mut self.report.metrics.certificate_bytes),
            chain_log_sha256: Some(hash(&log_bytes)),
        };
        self.report.passed = self.report.failures.is_empty();
    }
}
