use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use smartcert::bench::{self, ProbeFarm};
use smartcert::chain::{log as chain_log, Address, Chain};
use smartcert::client::{HeaderStore, TrustAnchors, Validator};
use smartcert::contracts::{self, policy, CertStorage};
use smartcert::crypto::{Algorithm, KeyPair};
use smartcert::domain::{assemble_certificate, DomainAgent};
use smartcert::handshake::{ca_probe, serve_tcp, Clock, HandshakeServer, TcpEndpoint};
use smartcert::scenario::{self, Runner, Scenario, ScenarioError};

const EXIT_CHECK_FAILED: u8 = 2;
const EXIT_PARSE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "smartcert",
    version,
    about = "Smart-contract-managed certificates on a simulated chain"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a bundled scenario by name).
    Run {
        scenario: String,
        /// Write the full JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    #[command(subcommand)]
    Bench(BenchCmd),
    #[command(subcommand)]
    Chain(ChainCmd),
    #[command(subcommand)]
    Contract(ContractCmd),
    #[command(subcommand)]
    Client(ClientCmd),
    #[command(subcommand)]
    Handshake(HandshakeCmd),
    #[command(subcommand)]
    Domain(DomainCmd),
    #[command(subcommand)]
    Key(KeyCmd),
    /// List the bundled scenarios.
    Scenarios,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Handshake throughput against loopback endpoints.
    Probe {
        #[arg(long, default_value_t = 100)]
        endpoints: usize,
        #[arg(long, default_value_t = 32)]
        parallelism: usize,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, default_value_t = 21600)]
        epoch: u64,
    },
    /// Certificate verification latency.
    Verify {
        #[arg(long, default_value_t = 100)]
        iterations: usize,
    },
}

#[derive(Subcommand)]
enum ChainCmd {
    /// Run a scenario and write its chain log.
    Dump {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a chain log, checking every header.
    Load {
        log: PathBuf,
        /// Write one JSON receipt per line.
        #[arg(long)]
        receipts: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ContractCmd {
    /// Print a contract's decoded storage at the head of a chain log.
    Inspect {
        address: String,
        #[arg(long)]
        chain: PathBuf,
        /// Also write the assembled certificate (raw bytes).
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ClientCmd {
    /// Check a certificate against headers taken from a chain log.
    Verify {
        /// Raw or hex-encoded certificate.
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        name: String,
        /// Chain log supplying the headers.
        #[arg(long)]
        headers: PathBuf,
        /// Unix seconds; the newest header's time if unset.
        #[arg(long)]
        now: Option<u64>,
        /// Defaults to the chain's max_stale.
        #[arg(long)]
        max_stale: Option<u64>,
    },
}

#[derive(Subcommand)]
enum HandshakeCmd {
    /// Probe a live endpoint as a CA, anchored at a chain log's head.
    Probe {
        #[arg(long)]
        endpoint: String,
        /// PKCS#8 DER key file, raw or hex.
        #[arg(long)]
        ca_key: PathBuf,
        #[arg(long)]
        chain: PathBuf,
    },
}

#[derive(Subcommand)]
enum DomainCmd {
    /// Serve handshakes stapling a contract's certificate.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum KeyCmd {
    /// Derive the key a scenario would use, e.g. label `ca:ca0`.
    Derive {
        #[arg(long, default_value = "rsa2048")]
        scheme: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        label: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainConfig {
    name: String,
    listen: String,
    chain_log: PathBuf,
    contract: String,
    /// PKCS#8 DER key file, raw or hex.
    key: PathBuf,
    /// Stop after this many seconds; run until killed if unset.
    #[serde(default)]
    run_seconds: Option<u64>,
}

#[derive(Debug)]
enum CliError {
    Parse(String),
    Failed(String),
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Parse(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn parse_err(e: impl std::fmt::Display) -> CliError {
    CliError::Parse(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| parse_err(format!("{}: {e}", path.display())))
}

/// Raw bytes, or hex text if the whole file decodes as hex.
fn read_blob(path: &Path) -> Result<Vec<u8>, CliError> {
    let bytes = read(path)?;
    match std::str::from_utf8(&bytes)
        .ok()
        .and_then(|s| hex::decode(s.trim()).ok())
    {
        Some(decoded) if !decoded.is_empty() => Ok(decoded),
        _ => Ok(bytes),
    }
}

fn load_scenario(arg: &str) -> Result<Scenario, CliError> {
    let path = Path::new(arg);
    if path.exists() {
        return Ok(scenario::load(path)?);
    }
    scenario::bundled(arg).ok_or_else(|| parse_err(format!("{arg}: no such file or bundled scenario")))
}

fn load_chain(path: &Path) -> Result<Chain, CliError> {
    chain_log::replay_log(&read(path)?).map_err(parse_err)
}

fn parse_address(s: &str) -> Result<Address, CliError> {
    Address::from_hex(s).ok_or_else(|| parse_err(format!("bad address {s}")))
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn cmd_run(scenario: &str, report_path: Option<&Path>) -> CliResult {
    let s = load_scenario(scenario)?;
    let report = scenario::run(s)?;
    if let Some(p) = report_path {
        let json = serde_json::to_vec_pretty(&report).expect("serializable");
        fs::write(p, json).map_err(failed)?;
    }
    println!(
        "{}: {} actions, {} transactions, {} verdicts, {} blocks",
        report.scenario,
        report.actions.len(),
        report.metrics.transactions,
        report.verdicts.len(),
        report.metrics.blocks
    );
    for f in &report.failures {
        println!("  FAILED action {:?} at {}: {}", f.action, f.at, f.message);
    }
    if report.passed {
        println!("PASS");
        Ok(())
    } else {
        Err(failed(format!("{} assertion(s) failed", report.failures.len())))
    }
}

fn cmd_bench(cmd: BenchCmd) -> CliResult {
    match cmd {
        BenchCmd::Probe {
            endpoints,
            parallelism,
            seconds,
            epoch,
        } => {
            let farm = ProbeFarm::start(endpoints).map_err(failed)?;
            let b = bench::bench_probe(&farm, parallelism, Duration::from_secs_f64(seconds), epoch);
            print_json(&b);
            eprintln!(
                "{:.1} handshakes/s over {} endpoints with {} workers; {} certificates per {} s epoch",
                b.rate_per_second, b.endpoints, b.parallelism, b.epoch_capacity, b.epoch_seconds
            );
        }
        BenchCmd::Verify { iterations } => {
            let b = bench::bench_verify(iterations);
            print_json(&b);
            let s = &b.honest;
            eprintln!(
                "verify ({} runs, {} B): min {:.3} ms  max {:.3} ms  avg {:.3} ms  median {:.3} ms",
                s.samples, b.certificate_bytes, s.min_ms, s.max_ms, s.avg_ms, s.median_ms
            );
        }
    }
    Ok(())
}

fn cmd_chain(cmd: ChainCmd) -> CliResult {
    match cmd {
        ChainCmd::Dump { scenario, out } => {
            let (report, runner) = Runner::new(load_scenario(&scenario)?)?.run();
            let file = fs::File::create(&out).map_err(failed)?;
            chain_log::write_log(runner.chain(), std::io::BufWriter::new(file)).map_err(failed)?;
            println!("wrote {} blocks to {}", runner.chain().height() + 1, out.display());
            if !report.passed {
                return Err(failed("scenario assertions failed"));
            }
        }
        ChainCmd::Load { log, receipts } => {
            let chain = load_chain(&log)?;
            let head = chain.head();
            print_json(&json!({
                "height": chain.height(),
                "head_hash": chain.head_hash(),
                "head_timestamp": head.timestamp,
                "state_root": head.state_root,
                "transactions": chain.receipts().count(),
            }));
            if let Some(p) = receipts {
                let mut w = std::io::BufWriter::new(fs::File::create(&p).map_err(failed)?);
                for r in chain.receipts() {
                    serde_json::to_writer(&mut w, r).map_err(failed)?;
                    w.write_all(b"\n").map_err(failed)?;
                }
                w.flush().map_err(failed)?;
            }
        }
    }
    Ok(())
}

fn storage_json(st: &CertStorage) -> serde_json::Value {
    json!({
        "domainName": st.domain_name,
        "pks": st.pks.iter().map(|k| hex::encode(k.der())).collect::<Vec<_>>(),
        "created": st.created,
        "updated": st.updated,
        "revoked": st.revoked,
        "valid": st.valid,
        "revs": st.revs,
        "cas": st.cas.iter().map(|(a, s)| (a.to_string(), s)).collect::<std::collections::BTreeMap<_, _>>(),
    })
}

fn cmd_contract(cmd: ContractCmd) -> CliResult {
    let ContractCmd::Inspect {
        address,
        chain,
        certificate,
    } = cmd;
    let chain = load_chain(&chain)?;
    let addr = parse_address(&address)?;
    let account = chain
        .account(&addr)
        .ok_or_else(|| failed(format!("no account {addr}")))?;
    let storage = chain
        .storage(&addr)
        .ok_or_else(|| failed(format!("{addr} is not a contract")))?;
    let kind = if account.code_hash == contracts::smartcert_code_hash() {
        "smartcert"
    } else if account.code_hash == contracts::rogue_code_hash() {
        "smartcert-rogue"
    } else if account.code_hash == contracts::policy_code_hash() {
        "policy"
    } else {
        "unknown"
    };
    let state = if kind == "policy" {
        json!({ "trustedCAs": policy::trusted_cas(storage).map_err(failed)? })
    } else {
        storage_json(&CertStorage::load(storage).map_err(failed)?)
    };
    print_json(&json!({
        "address": addr,
        "template": kind,
        "codeHash": account.code_hash,
        "storageRoot": account.storage_root,
        "nonce": account.nonce,
        "storage": state,
    }));
    if let Some(p) = certificate {
        let cert = assemble_certificate(&chain, &addr).map_err(failed)?;
        fs::write(&p, cert.encode()).map_err(failed)?;
    }
    Ok(())
}

fn cmd_client(cmd: ClientCmd) -> CliResult {
    let ClientCmd::Verify {
        cert,
        name,
        headers,
        now,
        max_stale,
    } = cmd;
    let cert = read_blob(&cert)?;
    let log = chain_log::read_log_headers(&read(&headers)?).map_err(parse_err)?;
    let max_stale = max_stale.unwrap_or(log.config.max_stale);
    let mut store = HeaderStore::new(log.genesis, max_stale);
    store.sync(log.headers).map_err(parse_err)?;
    let now = now.unwrap_or(store.newest().timestamp);
    let validator = Validator::new(
        &store,
        TrustAnchors {
            code_hash: contracts::smartcert_code_hash(),
            max_stale,
        },
    );
    let verdict = validator.verify_bytes(&name, &cert, now);
    println!("{}", verdict.code());
    if verdict.is_ok() {
        Ok(())
    } else {
        Err(failed(format!("certificate rejected: {}", verdict.code())))
    }
}

fn load_key(path: &Path) -> Result<KeyPair, CliError> {
    KeyPair::from_pkcs8_der(&read_blob(path)?).map_err(parse_err)
}

fn cmd_handshake(cmd: HandshakeCmd) -> CliResult {
    let HandshakeCmd::Probe {
        endpoint,
        ca_key,
        chain,
    } = cmd;
    let keys = load_key(&ca_key)?;
    let log = chain_log::read_log_headers(&read(&chain)?).map_err(parse_err)?;
    let head = log.headers.last().copied().unwrap_or(log.genesis);
    let addr = endpoint.parse().map_err(parse_err)?;
    let ca = Address::from_public_key(keys.public());
    let proof = ca_probe(&TcpEndpoint::new(addr), &ca, &head.hash()).map_err(failed)?;
    print_json(&json!({ "ca": ca, "anchor": head.number, "proof": proof.to_hex() }));
    Ok(())
}

fn cmd_domain(cmd: DomainCmd) -> CliResult {
    let DomainCmd::Run { config } = cmd;
    let cfg: DomainConfig = serde_json::from_slice(&read(&config)?).map_err(parse_err)?;
    let chain = load_chain(&cfg.chain_log)?;
    let contract = parse_address(&cfg.contract)?;
    let server = Arc::new(HandshakeServer::new(load_key(&cfg.key)?, Clock::Wall, 0));
    let mut agent = DomainAgent::new(cfg.name.clone(), contract, chain.config().epoch / 2, server.clone());
    agent.refresh(&chain).map_err(failed)?;
    let handle = serve_tcp(server, cfg.listen.as_str()).map_err(failed)?;
    println!("{} serving on {}", cfg.name, handle.local_addr());
    match cfg.run_seconds {
        Some(s) => std::thread::sleep(Duration::from_secs(s)),
        None => loop {
            std::thread::park();
        },
    }
    Ok(())
}

fn cmd_key(cmd: KeyCmd) -> CliResult {
    let KeyCmd::Derive {
        scheme,
        seed,
        label,
        out,
    } = cmd;
    let alg: Algorithm = serde_json::from_value(json!(scheme)).map_err(parse_err)?;
    let keys = KeyPair::derive(alg, seed, &label);
    fs::write(&out, hex::encode(keys.to_pkcs8_der())).map_err(failed)?;
    println!("{}", Address::from_public_key(keys.public()));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_PARSE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run { scenario, report } => cmd_run(&scenario, report.as_deref()),
        Command::Bench(c) => cmd_bench(c),
        Command::Chain(c) => cmd_chain(c),
        Command::Contract(c) => cmd_contract(c),
        Command::Client(c) => cmd_client(c),
        Command::Handshake(c) => cmd_handshake(c),
        Command::Domain(c) => cmd_domain(c),
        Command::Key(c) => cmd_key(c),
        Command::Scenarios => {
            for (name, _) in scenario::BUNDLED {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Parse(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_PARSE)
        }
        Err(CliError::Failed(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
    }
}
