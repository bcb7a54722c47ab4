//! Desk-scale measurements: certificate verification latency and CA probe
//! throughput against loopback endpoints.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::chain::Address;
use crate::client::{HeaderStore, TrustAnchors, Validator};
use crate::contracts;
use crate::crypto::{Algorithm, KeyPair};
use crate::domain::assemble_certificate;
use crate::handshake::{ca_probe, serve_tcp, Clock, HandshakeServer, TcpEndpoint, TcpServerHandle};
use crate::hash::hash;
use crate::scenario::{self, Runner};

#[derive(Clone, Debug, Serialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub min_ms: f64,
    pub max_ms: f64,
    pub avg_ms: f64,
    pub median_ms: f64,
}

impl LatencyStats {
    pub fn from_durations(samples: &[Duration]) -> Self {
        assert!(!samples.is_empty(), "no samples");
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let n = ms.len();
        let median = if n % 2 == 1 {
            ms[n / 2]
        } else {
            (ms[n / 2 - 1] + ms[n / 2]) / 2.0
        };
        Self {
            samples: n,
            min_ms: ms[0],
            max_ms: ms[n - 1],
            avg_ms: ms.iter().sum::<f64>() / n as f64,
            median_ms: median,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyBench {
    pub certificate_bytes: usize,
    pub signature_scheme: String,
    pub honest: LatencyStats,
    /// Same certificate with one byte of the last slot proof flipped.
    pub tampered: LatencyStats,
    pub tampered_verdict: String,
}

const FIXTURE: &str = r#"{
  "name": "bench-fixture",
  "seed": 1,
  "signature_scheme": "rsa2048",
  "cas": [{ "name": "ca0" }, { "name": "ca1" }, { "name": "ca2" }],
  "domains": [{ "name": "bench.example" }],
  "timeline": [
    { "at": 0, "action": "register_policy", "domain": "bench.example", "signers": ["ca0", "ca1"], "min_cas": 2, "max_err": 1 },
    { "at": 30, "action": "create_cert", "domain": "bench.example" },
    { "at": 600, "action": "periodic_probes", "domain": "bench.example", "every": 10800, "until": 21600, "stagger": 60 },
    { "at": 21600, "action": "mine" }
  ]
}"#;

/// Times `iterations` verifications of one assembled certificate.
pub fn bench_verify(iterations: usize) -> VerifyBench {
    let iterations = iterations.max(1);
    let (report, runner) = Runner::new(scenario::parse(FIXTURE).expect("fixture parses"))
        .expect("fixture is valid")
        .run();
    assert!(report.passed, "bench fixture failed: {:?}", report.failures);
    let chain = runner.chain();
    let addr = runner.contract_of("bench.example").expect("fixture deploys a contract");
    let cert = assemble_certificate(chain, &addr).expect("assemble").encode();

    let mut store = HeaderStore::new(*chain.header_at(0).expect("genesis"), chain.config().max_stale);
    store.sync(chain.headers().iter().copied()).expect("own chain syncs");
    let validator = Validator::new(
        &store,
        TrustAnchors {
            code_hash: contracts::smartcert_code_hash(),
            max_stale: chain.config().max_stale,
        },
    );
    let now = chain.head().timestamp;
    let time = |bytes: &[u8]| {
        let mut samples = Vec::with_capacity(iterations);
        let mut last = None;
        for _ in 0..iterations {
            let t = Instant::now();
            let v = validator.verify_bytes("bench.example", bytes, now);
            samples.push(t.elapsed());
            last = Some(v);
        }
        (LatencyStats::from_durations(&samples), last.expect("at least one run"))
    };

    let (honest, verdict) = time(&cert);
    assert!(verdict.is_ok(), "fixture certificate rejected: {}", verdict.code());
    let mut bad = cert.clone();
    let i = bad.len() - 40;
    bad[i] ^= 0x01;
    let (tampered, tampered_verdict) = time(&bad);
    VerifyBench {
        certificate_bytes: cert.len(),
        signature_scheme: "rsa2048".into(),
        honest,
        tampered,
        tampered_verdict: tampered_verdict.code().into(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeBench {
    pub endpoints: usize,
    pub parallelism: usize,
    pub seconds: f64,
    pub handshakes: u64,
    pub errors: u64,
    pub rate_per_second: f64,
    pub epoch_seconds: u64,
    /// Certificates one CA can validate per epoch at this rate.
    pub epoch_capacity: u64,
}

/// Loopback servers sharing one RSA identity.
pub struct ProbeFarm {
    servers: Vec<TcpServerHandle>,
}

impl ProbeFarm {
    pub fn start(endpoints: usize) -> std::io::Result<Self> {
        let identity = KeyPair::derive(Algorithm::RsaPkcs1Sha256, 0, "bench:endpoint");
        let servers = (0..endpoints.max(1))
            .map(|i| {
                let srv = Arc::new(HandshakeServer::new(identity.clone(), Clock::Wall, i as u64));
                serve_tcp(srv, "127.0.0.1:0")
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { servers })
    }

    pub fn addrs(&self) -> Vec<SocketAddr> {
        self.servers.iter().map(|s| s.local_addr()).collect()
    }
}

/// Probes the farm's endpoints round-robin from `parallelism` workers for
/// `duration`. A probe counts only if its signature verifies.
pub fn bench_probe(farm: &ProbeFarm, parallelism: usize, duration: Duration, epoch: u64) -> ProbeBench {
    let addrs = Arc::new(farm.addrs());
    let identity = KeyPair::derive(Algorithm::RsaPkcs1Sha256, 0, "bench:endpoint")
        .public()
        .clone();
    let ca = Address::from_public_key(KeyPair::derive(Algorithm::Ed25519, 0, "bench:ca").public());
    let anchor = hash(b"bench anchor");
    let next = Arc::new(AtomicUsize::new(0));
    let ok = Arc::new(AtomicU64::new(0));
    let errors = Arc::new(AtomicU64::new(0));
    let stop = Arc::new(AtomicBool::new(false));

    let start = Instant::now();
    let workers: Vec<_> = (0..parallelism.max(1))
        .map(|_| {
            let (addrs, next, ok, errors, stop, identity) = (
                addrs.clone(),
                next.clone(),
                ok.clone(),
                errors.clone(),
                stop.clone(),
                identity.clone(),
            );
            thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    let addr = addrs[next.fetch_add(1, Ordering::Relaxed) % addrs.len()];
                    match ca_probe(&TcpEndpoint::new(addr), &ca, &anchor) {
                        Ok(p) if p.verifies_under([&identity]) => ok.fetch_add(1, Ordering::Relaxed),
                        _ => errors.fetch_add(1, Ordering::Relaxed),
                    };
                }
            })
        })
        .collect();
    thread::sleep(duration);
    stop.store(true, Ordering::Relaxed);
    for w in workers {
        let _ = w.join();
    }
    let seconds = start.elapsed().as_secs_f64();
    let handshakes = ok.load(Ordering::Relaxed);
    let rate = handshakes as f64 / seconds;
    ProbeBench {
        endpoints: addrs.len(),
        parallelism: parallelism.max(1),
        seconds,
        handshakes,
        errors: errors.load(Ordering::Relaxed),
        rate_per_second: rate,
        epoch_seconds: epoch,
        epoch_capacity: (rate * epoch as f64) as u64,
    }
}
