mod common;

use common::{key, PolicyBench, World, G, NAME};
use smartcert::ca::CertificateAuthority;
use smartcert::chain::{Address, ChainConfig, RevokeMode, Transaction, TxTarget};
use smartcert::contracts::cert::{ROGUE_TEMPLATE_ID, TEMPLATE_ID};
use smartcert::contracts::{self, PolicyKind};
use smartcert::crypto::KeyPair;
use smartcert::domain::{create_cert_tx, new_policy_tx};

#[test]
fn replacement_needs_at_least_as_many_signatures() {
    let victim = key("victim");
    let attacker = key("attacker");
    for m in 1..=4usize {
        for n in 0..=5usize {
            let mut b = PolicyBench::new(6, 0);
            let p = b.draft(&victim, PolicyKind::New);
            assert_eq!(b.submit(&victim, &p, &(0..m).collect::<Vec<_>>()), "SUCCESS");
            let p = b.draft(&attacker, PolicyKind::New);
            let status = b.submit(&attacker, &p, &(0..n).collect::<Vec<_>>());
            if n >= m && n > 0 {
                assert_eq!(status, "SUCCESS", "m={m} n={n}");
                assert_eq!(b.current().0.sig_no as usize, n);
                let p = b.draft(&victim, PolicyKind::New);
                assert_eq!(
                    b.submit(&victim, &p, &(0..(n + 1).min(6)).collect::<Vec<_>>()),
                    "SUCCESS"
                );
                assert_eq!(b.current().0.key_id, Some(Address::from_public_key(victim.public())));
            } else {
                assert_eq!(status, "REVERT_INSUFFICIENT_SIGS", "m={m} n={n}");
                assert_eq!(b.current().0.sig_no as usize, m);
            }
        }
    }
}

#[test]
fn policy_checks() {
    let owner = key("owner");
    let other = key("other");
    let mut b = PolicyBench::new(3, 1);

    let mut p = b.draft(&owner, PolicyKind::New);
    assert_eq!(b.submit(&owner, &p, &[]), "REVERT_INSUFFICIENT_SIGS");
    assert_eq!(b.submit(&owner, &p, &[3]), "REVERT_UNTRUSTED_SIGNER");
    p.min_cas = 0;
    assert_eq!(b.submit(&owner, &p, &[0]), "REVERT_INVALID_POLICY");
    p.min_cas = 1;
    p.cas.insert(b.cas[3].address());
    assert_eq!(b.submit(&owner, &p, &[0]), "REVERT_INVALID_POLICY");
    p.cas.remove(&b.cas[3].address());

    // Signatures over a different policy do not count.
    let sigs = vec![b.cas[0].sign_policy("elsewhere.example", &p)];
    let nonce = b.chain.next_nonce(&Address::from_public_key(owner.public()));
    let pc = b.chain.policy_contract();
    let id = b
        .chain
        .submit_tx(new_policy_tx(&owner, nonce, pc, NAME, &p, &sigs))
        .unwrap();
    b.chain.mine_block(G + 500).unwrap();
    b.t = 500;
    assert_eq!(b.chain.receipt(&id).unwrap().status.code(), "REVERT_BAD_SIG");

    assert_eq!(b.submit(&owner, &p, &[0, 1]), "SUCCESS");
    assert!(b.current().1);

    // UPDATE: only the key holder, no signatures, threshold carried over.
    let mut u = b.draft(&owner, PolicyKind::Update);
    u.min_cas = 2;
    assert_eq!(b.submit(&other, &u, &[]), "REVERT_UNAUTHORIZED");
    assert_eq!(b.submit(&owner, &u, &[]), "SUCCESS");
    let (cur, _) = b.current();
    assert_eq!((cur.min_cas, cur.sig_no), (2, 2));
}

#[test]
fn reverted_transaction_leaves_no_trace() {
    let owner = key("owner");
    let mut b = PolicyBench::new(2, 0);
    let root = b.chain.state_root();
    let p = b.draft(&owner, PolicyKind::New);
    assert_eq!(b.submit(&owner, &p, &[]), "REVERT_INSUFFICIENT_SIGS");
    assert_eq!(b.chain.state_root(), root);
    assert_eq!(b.chain.next_nonce(&Address::from_public_key(owner.public())), 0);
}

fn create(
    w: &mut World,
    sender: &KeyPair,
    template: &str,
    keys: &[KeyPair],
    cas: &[Address],
    at: u64,
) -> (String, Address) {
    let nonce = w.chain.next_nonce(&Address::from_public_key(sender.public()));
    let pks: Vec<_> = keys.iter().map(|k| k.public().clone()).collect();
    let (tx, addr) = create_cert_tx(sender, nonce, template, NAME, &pks, cas);
    let id = w.chain.submit_tx(tx).unwrap();
    w.mine(at);
    (w.receipt(&id).status.code(), addr)
}

fn excluded_addr() -> Address {
    CertificateAuthority::new("ca2", key("ca:ca2")).address()
}

#[test]
fn init_checks() {
    let mut w = World::new(ChainConfig::default(), 3, 2, |p| {
        p.cas.retain(|a| *a != excluded_addr());
    });
    let owner = w.owner.clone();
    let tls = key("tls");
    let addrs: Vec<Address> = w.cas.iter().map(|c| c.address()).collect();
    let authorized: Vec<Address> = w.policy.cas.iter().copied().collect();
    let excluded = *addrs.iter().find(|a| !w.policy.cas.contains(a)).unwrap();

    assert_eq!(
        create(&mut w, &owner, TEMPLATE_ID, std::slice::from_ref(&tls), &[excluded], 45).0,
        "REVERT_CA_NOT_AUTHORIZED"
    );
    assert_eq!(
        create(&mut w, &owner, TEMPLATE_ID, &[], &authorized, 60).0,
        "REVERT_BAD_ARGS"
    );
    assert_eq!(
        create(&mut w, &owner, TEMPLATE_ID, std::slice::from_ref(&tls), &[], 75).0,
        "REVERT_BAD_ARGS"
    );
    let dup = [authorized[0], authorized[0]];
    assert_eq!(
        create(&mut w, &owner, TEMPLATE_ID, std::slice::from_ref(&tls), &dup, 90).0,
        "REVERT_BAD_ARGS"
    );
    let many: Vec<KeyPair> = (0..17).map(|i| key(&format!("k{i}"))).collect();
    assert_eq!(
        create(&mut w, &owner, TEMPLATE_ID, &many, &authorized, 105).0,
        "REVERT_BAD_ARGS"
    );
    assert_eq!(
        create(&mut w, &owner, "no-such-template", std::slice::from_ref(&tls), &authorized, 120).0,
        "REVERT_UNKNOWN_TEMPLATE"
    );

    let (status, addr) = create(&mut w, &owner, TEMPLATE_ID, &many[..16], &authorized, 135);
    assert_eq!(status, "SUCCESS");
    let acct = w.chain.account(&addr).unwrap();
    assert_eq!(acct.code_hash, contracts::smartcert_code_hash());
    let st = smartcert::contracts::CertStorage::load(w.chain.storage(&addr).unwrap()).unwrap();
    assert_eq!(
        (st.pks.len(), st.created, st.updated, st.valid, st.revoked),
        (16, G + 135, 0, true, false)
    );
}

#[test]
fn rogue_template_accepts_anything_but_has_its_own_code_hash() {
    let mut w = World::new(ChainConfig::default(), 2, 2, |_| {});
    let mallory = key("mallory");
    let addrs: Vec<Address> = w.cas.iter().map(|c| c.address()).collect();
    let (status, addr) = create(&mut w, &mallory, ROGUE_TEMPLATE_ID, std::slice::from_ref(&mallory), &addrs, 45);
    assert_eq!(status, "SUCCESS");
    assert_eq!(w.chain.account(&addr).unwrap().code_hash, contracts::rogue_code_hash());
    assert_ne!(contracts::rogue_code_hash(), contracts::smartcert_code_hash());
}

#[test]
fn update_accounting() {
    let mut w = World::new(ChainConfig::default(), 3, 2, |p| {
        p.min_cas = 2;
        p.max_err = Some(0);
    });

    // A CA the contract does not track cannot update.
    let anchor = w.block_at(600);
    let proof = w.probe(2, anchor, false);
    let id = w.submit_update(2, &proof);
    w.mine(615);
    assert_eq!(w.receipt(&id).status.code(), "REVERT_UNAUTHORIZED");

    let r = w.update_at(0, 700, 715);
    assert!(r.status.is_success());
    assert_eq!(r.events[0].name, "ValidationOk");
    let st = w.state();
    assert_eq!((st.updated, st.valid), (G + 715, true));
    assert_eq!(w.ca_state(0).last_upd, G + 715);

    // Impostor answer: error recorded, compliance lost, contract invalid.
    let anchor = w.block_at(800);
    let proof = w.probe(1, anchor, true);
    let id = w.submit_update(1, &proof);
    w.mine(815);
    let r = w.receipt(&id).clone();
    assert!(r.status.is_success());
    assert_eq!(r.events[0].name, "ValidationError");
    assert_eq!(r.events[0].attrs["signature"], "false");
    let s1 = w.ca_state(1);
    assert_eq!((s1.err_no, s1.last_err), (1, G + 815));
    assert!(!w.state().valid);

    let anchor = w.block_at(900);
    let proof = w.probe(0, anchor, false);
    let id = w.submit_update(0, &proof);
    w.mine(915);
    assert_eq!(w.receipt(&id).status.code(), "REVERT_ALREADY_INVALID");
}

#[test]
fn garbage_update_arguments_revert() {
    let mut w = World::new(ChainConfig::default(), 1, 1, |_| {});
    let ca = &w.cas[0];
    let tx = Transaction::new_signed(ca.keys(), 0, TxTarget::Call(w.contract), "update", vec![1, 2, 3]);
    let id = w.chain.submit_tx(tx).unwrap();
    let tx = Transaction::new_signed(ca.keys(), 0, TxTarget::Call(w.contract), "frobnicate", vec![]);
    let id2 = w.chain.submit_tx(tx).unwrap();
    w.mine(45);
    assert_eq!(w.receipt(&id).status.code(), "REVERT_BAD_ARGS");
    // Reverts do not consume the nonce, so the second tx runs at nonce 0 too.
    assert_eq!(w.receipt(&id2).status.code(), "REVERT_UNKNOWN_METHOD");
}

fn revoke_world(mode: RevokeMode, min_cas: u32) -> World {
    World::new(
        ChainConfig {
            revoke_mode: mode,
            ..ChainConfig::default()
        },
        3,
        3,
        |p| p.min_cas = min_cas,
    )
}

#[test]
fn literal_revocation_counts_remaining_cas() {
    // |CAs| - |revs| >= MIN_CAs: with 3 CAs and MIN 2, one vote revokes.
    let mut w = revoke_world(RevokeMode::Literal, 2);
    let id = w.submit_revoke(0);
    w.mine(45);
    assert!(w.receipt(&id).status.is_success());
    assert!(w.state().revoked);

    // With MIN 3 no CA vote can ever trigger; votes accumulate.
    let mut w = revoke_world(RevokeMode::Literal, 3);
    for (i, t) in [(0, 45), (1, 60), (2, 75)] {
        let id = w.submit_revoke(i);
        w.mine(t);
        assert!(w.receipt(&id).status.is_success());
    }
    let st = w.state();
    assert!(!st.revoked && st.valid);
    assert_eq!(st.revs.len(), 3);
}

#[test]
fn quorum_revocation_and_key_holder() {
    let mut w = revoke_world(RevokeMode::Quorum, 2);
    for (i, t) in [(0, 45), (0, 60)] {
        let id = w.submit_revoke(i);
        w.mine(t);
        assert!(w.receipt(&id).status.is_success());
    }
    assert_eq!(w.state().revs.len(), 1);
    assert!(!w.state().revoked);
    let id = w.submit_revoke(1);
    w.mine(75);
    assert!(w.receipt(&id).status.is_success());
    let st = w.state();
    assert!(st.revoked && !st.valid);

    let mut w = revoke_world(RevokeMode::Quorum, 3);
    let id = w.submit_owner_revoke();
    w.mine(45);
    assert!(w.receipt(&id).status.is_success());
    assert!(w.state().revoked);
    let id = w.submit_owner_revoke();
    w.mine(60);
    assert_eq!(w.receipt(&id).status.code(), "REVERT_ALREADY_INVALID");
}

#[test]
fn outsider_cannot_revoke() {
    let mut w = revoke_world(RevokeMode::Literal, 1);
    let mallory = key("mallory");
    let tx = Transaction::new_signed(&mallory, 0, TxTarget::Call(w.contract), "revoke", vec![]);
    let id = w.chain.submit_tx(tx).unwrap();
    let owner = w.owner.clone();
    let nonce = w.chain.next_nonce(&Address::from_public_key(owner.public()));
    let tx = Transaction::new_signed(&owner, nonce, TxTarget::Call(w.contract), "revoke", vec![0]);
    let id2 = w.chain.submit_tx(tx).unwrap();
    w.mine(45);
    assert_eq!(w.receipt(&id).status.code(), "REVERT_UNAUTHORIZED");
    assert_eq!(w.receipt(&id2).status.code(), "REVERT_BAD_ARGS");
    assert!(!w.state().revoked);
}
