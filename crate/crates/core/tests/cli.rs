use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCENARIO: &str = r#"{
  "name": "cli",
  "seed": 4,
  "signature_scheme": "ed25519",
  "cas": [{ "name": "ca0" }, { "name": "ca1" }],
  "domains": [{ "name": "cli.example" }],
  "clients": [{ "name": "alice" }],
  "timeline": [
    { "at": 0, "action": "register_policy", "domain": "cli.example", "signers": ["ca0"] },
    { "at": 30, "action": "create_cert", "domain": "cli.example" },
    { "at": 600, "action": "ca_probe", "ca": "ca0", "domain": "cli.example" },
    { "at": 900, "action": "client_verify", "client": "alice", "domain": "cli.example", "expect": "OK" },
    { "at": 950, "action": "assert_storage", "domain": "cli.example", "path": "valid", "equals": true }
  ]
}"#;

fn smartcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smartcert"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_reports_pass_and_failure() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("ok.json");
    fs::write(&ok, SCENARIO).unwrap();
    let report = dir.path().join("report.json");
    let out = smartcert(&["run", path(&ok), "--report", path(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["passed"], true);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, SCENARIO.replace("\"equals\": true", "\"equals\": false")).unwrap();
    assert_eq!(code(&smartcert(&["run", path(&bad)])), 2);
}

#[test]
fn unreadable_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.json");
    fs::write(&garbage, "{ not json").unwrap();
    assert_eq!(code(&smartcert(&["run", path(&garbage)])), 3);
    assert_eq!(code(&smartcert(&["run", path(&dir.path().join("missing.json"))])), 3);
    assert_eq!(code(&smartcert(&["run"])), 3);
    assert_eq!(code(&smartcert(&["frobnicate"])), 3);
    assert_eq!(code(&smartcert(&["chain", "load", path(&garbage)])), 3);
}

#[test]
fn dump_inspect_and_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    fs::write(&scenario, SCENARIO).unwrap();
    let log = dir.path().join("chain.log");
    assert_eq!(
        code(&smartcert(&[
            "chain",
            "dump",
            "--scenario",
            path(&scenario),
            "--out",
            path(&log)
        ])),
        0
    );

    let receipts = dir.path().join("receipts.jsonl");
    assert_eq!(
        code(&smartcert(&[
            "chain",
            "load",
            path(&log),
            "--receipts",
            path(&receipts)
        ])),
        0
    );
    let lines = fs::read_to_string(&receipts).unwrap();
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["status"], "SUCCESS");
    let contract = lines
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .find_map(|r| r["created"].as_str().map(str::to_owned))
        .expect("a contract was created");

    let cert = dir.path().join("cert.bin");
    let out = smartcert(&[
        "contract",
        "inspect",
        &contract,
        "--chain",
        path(&log),
        "--certificate",
        path(&cert),
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["template"], "smartcert");
    assert_eq!(v["storage"]["domainName"], "cli.example");

    let verify = |name: &str| {
        smartcert(&[
            "client",
            "verify",
            "--cert",
            path(&cert),
            "--name",
            name,
            "--headers",
            path(&log),
        ])
    };
    let out = verify("cli.example");
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let out = verify("other.example");
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("NAME_MISMATCH"));

    let mut broken = fs::read(&log).unwrap();
    let n = broken.len();
    broken[n - 10] ^= 1;
    fs::write(&log, broken).unwrap();
    assert_ne!(code(&smartcert(&["chain", "load", path(&log)])), 0);
}

#[test]
fn lists_bundled_scenarios_and_derives_keys() {
    let out = smartcert(&["scenarios"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("honest-3ca-10epochs"));

    let dir = tempfile::tempdir().unwrap();
    let key = dir.path().join("k.hex");
    let out = smartcert(&[
        "key",
        "derive",
        "--scheme",
        "ed25519",
        "--seed",
        "1",
        "--label",
        "ca0",
        "--out",
        path(&key),
    ]);
    assert_eq!(code(&out), 0);
    assert!(hex::decode(fs::read_to_string(&key).unwrap().trim()).is_ok());
}
