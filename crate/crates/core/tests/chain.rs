mod common;

use common::{key, World, G};
use proptest::prelude::*;
use smartcert::chain::log::{encode_log, read_log_headers, replay_log};
use smartcert::chain::{Address, Chain, ChainConfig, ChainError, Genesis, Transaction, TxStatus, TxTarget};

const WINDOW: u64 = 8;

/// A few blocks with successful, reverted and nonce-rejected transactions.
fn busy_world() -> World {
    let mut w = World::new(ChainConfig::default(), 3, 3, |p| p.min_cas = 2);
    w.update_at(0, 600, 615);
    w.update_at(1, 700, 715);
    let anchor = w.block_at(800);
    let proof = w.probe(2, anchor, true);
    w.submit_update(2, &proof);
    let mallory = key("mallory");
    w.chain
        .submit_tx(Transaction::new_signed(
            &mallory,
            0,
            TxTarget::Call(w.contract),
            "revoke",
            Vec::new(),
        ))
        .unwrap();
    w.chain
        .submit_tx(Transaction::new_signed(
            &mallory,
            5,
            TxTarget::Call(w.contract),
            "revoke",
            Vec::new(),
        ))
        .unwrap();
    w.mine(815);
    w.submit_revoke(0);
    w.mine(900);
    w
}

#[test]
fn headers_link_to_their_parents() {
    let w = busy_world();
    let headers = w.chain.headers();
    assert_eq!(headers[0].number, 0);
    for pair in headers.windows(2) {
        assert_eq!(pair[1].parent_hash, pair[0].hash());
        assert_eq!(pair[1].number, pair[0].number + 1);
        assert!(pair[1].timestamp > pair[0].timestamp);
    }
    assert_eq!(w.chain.head_hash(), headers.last().unwrap().hash());
}

#[test]
fn every_transaction_has_one_receipt() {
    let w = busy_world();
    let mut statuses = Vec::new();
    for n in 1..=w.chain.height() {
        let txs = w.chain.block_transactions(n).unwrap();
        let receipts = w.chain.block_receipts(n).unwrap();
        assert_eq!(txs.len(), receipts.len(), "block {n}");
        for (i, (tx, r)) in txs.iter().zip(receipts).enumerate() {
            assert_eq!(r.tx_id, tx.id());
            assert_eq!((r.block, r.index as usize), (n, i));
            assert_eq!(r.sender, tx.sender_address());
            assert_eq!(w.chain.receipt(&tx.id()), Some(r));
            statuses.push(r.status);
        }
    }
    assert_eq!(w.chain.receipts().count(), statuses.len());
    assert!(statuses.contains(&TxStatus::RejectedNonce));
    assert!(statuses.iter().any(|s| matches!(s, TxStatus::Reverted(_))));
}

#[test]
fn replaying_the_log_rebuilds_the_same_chain() {
    let w = busy_world();
    let log = encode_log(&w.chain);
    let replayed = replay_log(&log).unwrap();
    assert_eq!(replayed.headers(), w.chain.headers());
    assert_eq!(replayed.state_root(), w.chain.state_root());
    assert_eq!(encode_log(&replayed), log);
    let headers = read_log_headers(&log).unwrap();
    assert_eq!(headers.genesis, *w.chain.header_at(0).unwrap());
    assert_eq!(headers.headers.as_slice(), &w.chain.headers()[1..]);
}

fn empty_log_len(w: &World) -> usize {
    let genesis = w.chain.genesis().clone();
    encode_log(&Chain::new(w.chain.config().clone(), genesis).unwrap()).len()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    /// Any flipped bit in the block records is caught on replay.
    #[test]
    fn tampered_log_does_not_replay(pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let w = busy_world();
        let mut log = encode_log(&w.chain);
        let start = empty_log_len(&w);
        let i = start + pos.index(log.len() - start);
        log[i] ^= 1 << bit;
        prop_assert!(replay_log(&log).is_err(), "flip at {} of {}", i, log.len());
    }
}

fn window_world() -> World {
    World::new(
        ChainConfig {
            hash_window: WINDOW,
            ..ChainConfig::default()
        },
        1,
        1,
        |_| {},
    )
}

/// Probe anchored at a block, update mined `back` blocks after it.
fn update_back(back: u64) -> u64 {
    let mut w = window_world();
    let anchor = w.block_at(600);
    let proof = w.probe(0, anchor, false);
    for i in 1..back {
        w.mine(600 + 15 * i);
    }
    let id = w.submit_update(0, &proof);
    w.mine(600 + 15 * back);
    assert_eq!(w.receipt(&id).block - anchor, back);
    assert!(w.receipt(&id).status.is_success());
    w.ca_state(0).err_no
}

#[test]
fn anchor_must_lie_in_the_hash_window() {
    assert_eq!(update_back(1), 0);
    assert_eq!(update_back(WINDOW), 0);
    assert_eq!(update_back(WINDOW + 1), 1);
}

#[test]
fn bad_signature_is_refused_at_submission() {
    let mut w = window_world();
    let k = key("someone");
    let mut tx = Transaction::new_signed(&k, 0, TxTarget::Call(w.contract), "revoke", Vec::new());
    tx.nonce = 1;
    assert!(matches!(w.chain.submit_tx(tx.clone()), Err(ChainError::BadSignature)));
    tx.signature = key("other").sign(&tx.signing_bytes());
    assert!(matches!(w.chain.submit_tx(tx), Err(ChainError::BadSignature)));
    assert!(w.chain.pending().is_empty());
}

#[test]
fn nonces_are_consumed_once() {
    let mut w = window_world();
    let owner = w.owner.clone();
    let owner_addr = Address::from_public_key(owner.public());
    let nonce = w.chain.next_nonce(&owner_addr);
    let tx = Transaction::new_signed(&owner, nonce, TxTarget::Call(w.contract), "revoke", Vec::new());
    let id = w.chain.submit_tx(tx.clone()).unwrap();
    w.mine(45);
    assert!(w.receipt(&id).status.is_success());
    assert_eq!(w.chain.account(&owner_addr).unwrap().nonce, nonce + 1);

    let root = w.chain.state_root();
    w.chain.submit_tx(tx.clone()).unwrap();
    w.mine(60);
    let receipts = w.chain.block_receipts(w.chain.height()).unwrap();
    assert_eq!(receipts[0].status, TxStatus::RejectedNonce);
    assert_eq!(w.chain.state_root(), root);

    let ahead = Transaction::new_signed(&owner, nonce + 5, TxTarget::Call(w.contract), "revoke", Vec::new());
    let id = w.chain.submit_tx(ahead).unwrap();
    w.mine(75);
    assert_eq!(w.receipt(&id).status, TxStatus::RejectedNonce);
}

#[test]
fn block_times_strictly_increase() {
    let mut w = window_world();
    let head = w.chain.head().timestamp;
    assert!(matches!(
        w.chain.mine_block(head),
        Err(ChainError::NonMonotonicTimestamp { .. })
    ));
    assert!(w.chain.mine_block(head + 1).is_ok());
}

#[test]
fn identical_inputs_give_identical_chains() {
    let a = busy_world();
    let b = busy_world();
    assert_eq!(encode_log(&a.chain), encode_log(&b.chain));
    let c = Chain::new(
        ChainConfig::default(),
        Genesis {
            timestamp: G + 1,
            trusted_cas: Vec::new(),
        },
    )
    .unwrap();
    assert_ne!(c.header_at(0).unwrap(), a.chain.header_at(0).unwrap());
}
