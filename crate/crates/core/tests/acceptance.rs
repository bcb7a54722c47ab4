//! One line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{compliance_grid, key, parity, PolicyBench, World, G};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smartcert::bench::{bench_probe, bench_verify, ProbeFarm};
use smartcert::chain::log::encode_log;
use smartcert::chain::{Chain, ChainConfig, Genesis};
use smartcert::client::HeaderStore;
use smartcert::contracts::{CertStorage, PolicyKind};
use smartcert::hash::Digest;
use smartcert::scenario::{self, Report, Runner, BUNDLED};
use smartcert::trie::{self, Trie};

const EPOCH: u64 = 21_600;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn trie_soundness() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut t = Trie::new();
    let mut keys = Vec::with_capacity(10_000);
    while t.len() < 10_000 {
        let k: [u8; 32] = rng.gen();
        let len = rng.gen_range(1..64);
        let v: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        if t.put(k, v).is_none() {
            keys.push(k);
        }
    }
    let root = t.root();
    let mut proofs = Vec::with_capacity(1_000);
    for _ in 0..1_000 {
        let k = keys[rng.gen_range(0..keys.len())];
        let p = t.prove(&k).map_err(|e| e.to_string())?;
        let decoded = trie::InclusionProof::decode(&p.encode()).map_err(|e| e.to_string())?;
        ensure(trie::verify(&root, &p) && trie::verify(&root, &decoded), || {
            "honest proof rejected".into()
        })?;
        proofs.push(p);
    }

    let mut rejected = 0;
    for i in 0..1_000 {
        let mut p = proofs[rng.gen_range(0..proofs.len())].clone();
        let mut r = root;
        let bit = 1u8 << rng.gen_range(0..8);
        let part = match i % 4 {
            0 => {
                let j = rng.gen_range(0..p.value.len());
                p.value[j] ^= bit;
                "value"
            }
            1 => {
                let s = rng.gen_range(0..p.siblings.len());
                p.siblings[s].0[rng.gen_range(0..32)] ^= bit;
                "siblings"
            }
            2 => {
                p.bitmap[rng.gen_range(0..32)] ^= bit;
                "bitmap"
            }
            _ => {
                r.0[rng.gen_range(0..32)] ^= bit;
                "root"
            }
        };
        ensure(!trie::verify(&r, &p), || format!("corrupted {part} accepted"))?;
        rejected += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "1000 proofs verify, {rejected}/1000 corruptions rejected, {elapsed:.1?}"
    ))
}

fn compliance_oracle() -> Result<String, String> {
    let (checked, disagreements) = compliance_grid();
    ensure(disagreements.is_empty(), || {
        format!("{} disagreements, first: {}", disagreements.len(), disagreements[0])
    })?;
    Ok(format!("{checked} cases, 0 disagreements"))
}

fn missed_validations() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cases = 0;
    while cases < 200 {
        let k = rng.gen_range(0..8u64);
        let delta = rng.gen_range(0..EPOCH);
        let first = rng.gen_range(120..EPOCH);
        let second = first + k * EPOCH + delta;
        let after = rng.gen_range(60..EPOCH);
        let third = second + after;
        // A proof mined exactly at an epoch start has no fresh anchor.
        if second.is_multiple_of(EPOCH) || third.is_multiple_of(EPOCH) {
            continue;
        }
        let mut w = World::new(ChainConfig::default(), 2, 2, |p| p.min_cas = 1);
        w.update_at(0, first - 1, first);
        // Another CA's sweeps in between must not change the count.
        for _ in 0..rng.gen_range(0..3) {
            let t = rng.gen_range(first + 2..second - 1);
            if t > w.head_rel() + 1 && t % EPOCH != 0 {
                w.update_at(1, t - 1, t);
            }
        }
        w.update_at(0, second - 1, second);
        let got = w.ca_state(0).err_no;
        ensure(got == k, || format!("k={k} delta={delta}: {got} errors"))?;
        w.update_at(0, third - 1, third);
        let again = w.ca_state(0).err_no;
        ensure(again == k, || {
            format!("k={k} delta={delta}: {} phantom errors", again - k)
        })?;
        cases += 1;
    }
    Ok(format!("{cases} random (k, delta) cases exact"))
}

fn freshness_and_replay() -> Result<String, String> {
    let mut boundary_cases = 0;
    for b in [EPOCH, 2 * EPOCH, 5 * EPOCH] {
        for anchor in (b - 30..=b + 30).step_by(15) {
            for mined in (anchor + 15..=b + 60).step_by(15) {
                let mut w = World::new(ChainConfig::default(), 1, 1, |_| {});
                w.update_at(0, anchor - 300, anchor - 285);
                let before = w.ca_state(0).err_no;
                w.update_at(0, anchor, mined);
                let fresh = G + anchor >= ((G + mined) / EPOCH) * EPOCH;
                let errors = w.ca_state(0).err_no - before;
                ensure(errors == u64::from(!fresh), || {
                    format!("anchor {anchor} mined {mined}: fresh={fresh} but {errors} errors")
                })?;
                boundary_cases += 1;
            }
        }
    }

    let mut held = 0;
    for start in [600, EPOCH - 30, EPOCH, 3 * EPOCH + 15] {
        for extra in [0, 15, 900, EPOCH - 30] {
            let mut w = World::new(ChainConfig::default(), 1, 1, |_| {});
            let anchor = w.block_at(start);
            let proof = w.probe(0, anchor, false);
            let mined = start + EPOCH + extra;
            w.update_at(0, mined - 30, mined - 15);
            let before = w.ca_state(0).err_no;
            let id = w.submit_update(0, &proof);
            w.mine(mined);
            ensure(w.receipt(&id).status.is_success(), || "held proof reverted".into())?;
            ensure(w.ca_state(0).err_no == before + 1, || {
                format!("proof held {} s not an error", EPOCH + extra)
            })?;
            held += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tags = 0;
    for _ in 0..40 {
        let mut w = World::new(ChainConfig::default(), 2, 2, |_| {});
        let anchor = w.block_at(600);
        let mut proof = w.probe(0, anchor, false);
        let submitter = if rng.gen_bool(0.5) {
            1
        } else {
            proof.cli_rnd[rng.gen_range(0..4)] ^= 1 << rng.gen_range(0..8);
            0
        };
        let id = w.submit_update(submitter, &proof);
        w.mine(615);
        ensure(w.receipt(&id).status.is_success(), || "mismatched tag reverted".into())?;
        ensure(w.ca_state(submitter).err_no == 1, || "mismatched tag accepted".into())?;
        tags += 1;
    }
    Ok(format!(
        "{boundary_cases} boundary anchors, {held} held proofs, {tags} tag mismatches"
    ))
}

fn run_bundled(name: &str) -> Result<(Report, Runner), String> {
    let s = scenario::bundled(name).ok_or(format!("no bundled scenario {name}"))?;
    let (report, runner) = Runner::new(s).map_err(|e| e.to_string())?.run();
    if let Some(f) = report.failures.first() {
        return Err(format!("{name}: at {}: {}", f.at, f.message));
    }
    Ok((report, runner))
}

fn storage(runner: &Runner, domain: &str) -> Result<CertStorage, String> {
    let addr = runner.contract_of(domain).ok_or("no contract")?;
    CertStorage::load(runner.chain().storage(&addr).ok_or("no storage")?).map_err(|e| e.to_string())
}

fn honest_scenario() -> Result<String, String> {
    let start = Instant::now();
    let (report, runner) = run_bundled("honest-3ca-10epochs")?;
    let elapsed = start.elapsed();
    let verdicts: Vec<&str> = report.verdicts.iter().map(|v| v.verdict.as_str()).collect();
    ensure(!verdicts.is_empty() && verdicts.iter().all(|v| *v == "OK"), || {
        format!("verdicts {verdicts:?}")
    })?;
    let st = storage(&runner, "example.com")?;
    ensure(st.cas.len() == 3 && st.cas.values().all(|s| s.err_no == 0), || {
        format!("errNo {:?}", st.cas)
    })?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "{} verdicts OK, errNo 0 for 3 CAs, {elapsed:.1?}",
        verdicts.len()
    ))
}

fn attack_scenarios() -> Result<String, String> {
    // The scenario files assert the per-CA error counts and validity themselves.
    let (report, _) = run_bundled("mitm-one-epoch")?;
    let recorded = report.transactions.iter().any(|t| {
        t.events
            .iter()
            .any(|e| e.name == "ValidationError" && e.attrs.get("signature").map(String::as_str) == Some("false"))
    });
    ensure(recorded, || "wrong-key probe not recorded".into())?;
    let (_, strict) = run_bundled("mitm-strict-policy")?;
    ensure(!storage(&strict, "example.com")?.valid, || {
        "strict policy left the contract valid".into()
    })?;

    let (replay, _) = run_bundled("revoke-then-replay")?;
    let at = |t: u64| {
        replay
            .verdicts
            .iter()
            .find(|v| v.at == t)
            .map(|v| v.verdict.clone())
            .unwrap_or_default()
    };
    let stale_edge = [at(87_014), at(87_015), at(87_016)];
    ensure(stale_edge == ["OK", "OK", "STALE"], || {
        format!("replay around maxStale: {stale_edge:?}")
    })?;

    let victim = key("victim");
    let attacker = key("attacker");
    let mut grid = 0;
    for m in 1..=4usize {
        for n in 1..=5usize {
            let mut b = PolicyBench::new(6, 0);
            let p = b.draft(&victim, PolicyKind::New);
            ensure(b.submit(&victim, &p, &(0..m).collect::<Vec<_>>()) == "SUCCESS", || {
                "registration failed".into()
            })?;
            let p = b.draft(&attacker, PolicyKind::New);
            let status = b.submit(&attacker, &p, &(0..n).collect::<Vec<_>>());
            let want = if n >= m { "SUCCESS" } else { "REVERT_INSUFFICIENT_SIGS" };
            ensure(status == want, || format!("m={m} n={n}: {status}"))?;
            if n >= m && n < 6 {
                let p = b.draft(&victim, PolicyKind::New);
                let status = b.submit(&victim, &p, &(0..n + 1).collect::<Vec<_>>());
                ensure(status == "SUCCESS", || {
                    format!("recovery with {} sigs: {status}", n + 1)
                })?;
            }
            grid += 1;
        }
    }
    run_bundled("policy-collusion")?;
    Ok(format!(
        "wrong key recorded, strict policy invalid, replay OK/OK/STALE, {grid} policy m/n cases"
    ))
}

fn client_parity() -> Result<String, String> {
    let out = parity::run_parity(0..50);
    ensure(out.mismatches.is_empty(), || {
        format!("{} mismatches, first: {}", out.mismatches.len(), out.mismatches[0])
    })?;
    let spread: Vec<String> = out.verdicts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Ok(format!(
        "{} served certificates match ({})",
        out.checked,
        spread.join(" ")
    ))
}

fn header_store_bound() -> Result<String, String> {
    let horizon = 3 * 86_400;
    let mut chain = Chain::new(
        ChainConfig::default(),
        Genesis {
            timestamp: G,
            trusted_cas: Vec::new(),
        },
    )
    .map_err(|e| e.to_string())?;
    let mut store = HeaderStore::new(*chain.head(), horizon);
    let mut peak_len = 0;
    let mut peak_bytes = 0;
    for i in 1..=(4 * 86_400 / 15) {
        let h = chain.mine_block(G + 15 * i).map_err(|e| e.to_string())?;
        store.append(h).map_err(|e| e.to_string())?;
        peak_len = peak_len.max(store.len());
        peak_bytes = peak_bytes.max(store.serialized_size());
    }
    ensure(peak_len <= 17_400, || format!("{peak_len} headers"))?;
    ensure(peak_bytes <= 12_000_000, || format!("{peak_bytes} bytes"))?;
    Ok(format!("peak {peak_len} headers, {:.2} MB", peak_bytes as f64 / 1e6))
}

fn performance() -> Result<String, String> {
    let v = bench_verify(100);
    ensure(v.honest.median_ms < 50.0, || {
        format!("verify median {:.3} ms", v.honest.median_ms)
    })?;
    let farm = ProbeFarm::start(100).map_err(|e| e.to_string())?;
    let p = bench_probe(&farm, 32, Duration::from_secs(10), EPOCH);
    ensure(p.rate_per_second >= 50.0, || {
        format!("probe rate {:.1}/s", p.rate_per_second)
    })?;
    Ok(format!(
        "verify median {:.3} ms, probe {:.0}/s over {} endpoints x{} for {:.0} s",
        v.honest.median_ms, p.rate_per_second, p.endpoints, p.parallelism, p.seconds
    ))
}

fn determinism() -> Result<String, String> {
    let mut digests = Vec::new();
    for (name, _) in BUNDLED {
        let dump = || -> Result<Vec<u8>, String> {
            let s = scenario::bundled(name).ok_or("missing")?;
            let (_, runner) = Runner::new(s).map_err(|e| e.to_string())?.run();
            Ok(encode_log(runner.chain()))
        };
        let (a, b) = (dump()?, dump()?);
        ensure(a == b, || format!("{name} dumps differ"))?;
        digests.push(smartcert::hash::hash(&a));
    }
    let distinct: std::collections::BTreeSet<Digest> = digests.iter().copied().collect();
    Ok(format!(
        "{} bundled scenarios byte-identical on rerun ({} distinct dumps)",
        BUNDLED.len(),
        distinct.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, Check); 10] = [
        (1, trie_soundness),
        (2, compliance_oracle),
        (3, missed_validations),
        (4, freshness_and_replay),
        (5, honest_scenario),
        (6, attack_scenarios),
        (7, client_parity),
        (8, header_store_bound),
        (9, performance),
        (10, determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string()) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| Err(e.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n}: FAIL: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
