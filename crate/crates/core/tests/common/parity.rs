//! Random scenarios and an oracle that predicts each client verdict from the
//! chain facts recorded when the served certificate was assembled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use smartcert::hash::hash;
use smartcert::scenario::{Runner, Scenario, ServedRecord};

const HORIZON: u64 = 3 * 86_400;

pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cas = rng.gen_range(2..=4usize);
    let cas: Vec<String> = (0..n_cas).map(|i| format!("ca{i}")).collect();
    let domain = format!("p{seed}.example");
    let rogue = format!("r{seed}.example");
    let with_rogue = rng.gen_bool(0.3);
    let max_stale = [43_200u64, 86_400, 129_600][rng.gen_range(0..3)];

    let mut tl = Vec::new();
    let mut policy = json!({ "at": 0, "action": "register_policy", "domain": domain, "signers": ["ca0"],
        "min_cas": rng.gen_range(1..=n_cas as u32) });
    if rng.gen_bool(0.7) {
        policy["max_err"] = json!(rng.gen_range(0..3u64));
    }
    if rng.gen_bool(0.2) {
        policy["max_lifetime"] = json!(rng.gen_range(40_000..150_000u64));
    }
    tl.push(policy);
    tl.push(json!({ "at": 30, "action": "create_cert", "domain": domain }));
    if with_rogue {
        tl.push(json!({ "at": 45, "action": "create_cert", "domain": rogue, "template": "smartcert-rogue" }));
    }

    for ca in &cas {
        let mut t = rng.gen_range(60..3_000u64);
        while t < HORIZON {
            let mut probe = json!({ "at": t, "action": "ca_probe", "ca": ca, "domain": domain, "expect": "any" });
            match rng.gen_range(0..20) {
                0 | 1 => probe["wrong_key"] = json!(true),
                2 => probe["hold_seconds"] = json!(rng.gen_range(60..30_000u64)),
                _ => {}
            }
            tl.push(probe);
            t += rng.gen_range(3_000..30_000u64);
        }
    }
    if rng.gen_bool(0.3) {
        let by = if rng.gen_bool(0.5) {
            "owner".to_owned()
        } else {
            cas[rng.gen_range(0..n_cas)].clone()
        };
        tl.push(json!({ "at": rng.gen_range(1_000..HORIZON), "action": "revoke", "domain": domain, "by": by, "expect": "any" }));
    }

    let captures: Vec<u64> = (0..2).map(|_| rng.gen_range(600..HORIZON / 2)).collect();
    for (i, at) in captures.iter().enumerate() {
        tl.push(json!({ "at": at, "action": "capture_cert", "domain": domain, "name": format!("cap{i}") }));
    }
    let clients = ["c0", "c1", "c2"];
    for _ in 0..30 {
        let at = rng.gen_range(0..HORIZON + 86_400);
        let client = clients[rng.gen_range(0..3)];
        let target = if with_rogue && rng.gen_bool(0.2) {
            &rogue
        } else {
            &domain
        };
        let mut v = json!({ "at": at, "action": "client_verify", "client": client, "domain": target, "expect": "any" });
        let roll = rng.gen_range(0..10);
        if roll < 2 {
            v["wrong_key"] = json!(true);
        } else if roll < 4 && target == &domain {
            let i = rng.gen_range(0..2);
            if captures[i] < at {
                v["cert"] = json!(format!("cap{i}"));
            }
        }
        tl.push(v);
    }

    tl.sort_by_key(|a| a["at"].as_u64());
    let mut domains = vec![json!({ "name": domain, "keys": rng.gen_range(1..=2) })];
    if with_rogue {
        domains.push(json!({ "name": rogue }));
    }
    let doc: Value = json!({
        "name": format!("parity-{seed}"),
        "seed": seed,
        "signature_scheme": "ed25519",
        "chain": { "block_interval": 15, "hash_window": 256, "epoch": 21_600, "max_stale": max_stale },
        "cas": cas.iter().map(|c| json!({ "name": c })).collect::<Vec<_>>(),
        "domains": domains,
        "clients": [
            { "name": "c0" },
            { "name": "c1", "max_stale": rng.gen_range(3_600..max_stale) },
            { "name": "c2", "prune_horizon": rng.gen_range(1_800..7_200u64) },
        ],
        "timeline": tl,
    });
    serde_json::from_value(doc).expect("generated scenario parses")
}

/// The verdict a correct client must reach, in check order.
pub fn expected_verdict(runner: &Runner, rec: &ServedRecord) -> String {
    let Some(cert) = &rec.certificate else {
        return "NO_CERT".into();
    };
    let a = runner
        .assembly(&hash(cert))
        .expect("every served certificate was assembled by the runner");
    let st = &a.storage;
    let verdict = if a.anchor < rec.window.0 || a.anchor > rec.window.1 {
        "UNKNOWN_ROOT"
    } else if a.code_hash != rec.anchors.code_hash {
        "BAD_CODE"
    } else if st.domain_name != rec.domain {
        "NAME_MISMATCH"
    } else if !st.valid {
        "INVALID"
    } else if rec.now.saturating_sub(st.updated) > rec.anchors.max_stale {
        "STALE"
    } else if rec.wrong_key {
        // Generated domains never certify the impostor's key.
        "BAD_SKE_SIG"
    } else {
        "OK"
    };
    verdict.into()
}

pub struct ParityOutcome {
    pub checked: usize,
    pub mismatches: Vec<String>,
    pub verdicts: std::collections::BTreeMap<String, usize>,
}

pub fn run_parity(seeds: std::ops::Range<u64>) -> ParityOutcome {
    let mut out = ParityOutcome {
        checked: 0,
        mismatches: Vec::new(),
        verdicts: Default::default(),
    };
    for seed in seeds {
        let runner = Runner::new(random_scenario(seed)).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let (report, runner) = runner.run();
        if !report.passed {
            out.mismatches
                .push(format!("seed {seed}: scenario did not run cleanly"));
        }
        for rec in runner.served() {
            let want = expected_verdict(&runner, rec);
            if want != rec.verdict {
                out.mismatches.push(format!(
                    "seed {seed} client {} at {}: got {} want {}",
                    rec.client, rec.now, rec.verdict, want
                ));
            }
            *out.verdicts.entry(rec.verdict.clone()).or_default() += 1;
            out.checked += 1;
        }
    }
    out
}
