mod common;

use common::{seeded, Net};
use lisps_core::ledger::{
    sha256, Actions, Block, Call, Chain, ContractState, Contract, Inadmissible, Rejection, Sig, Transaction,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn genesis_hash_matches_reference_vector() {
    // values from tests/vectors/genesis.py
    let net = Net::new();
    assert_eq!(
        hex::encode(net.chain.genesis().hash()),
        "e68fa7b7c77344056c16fd3f010e892ad10efdd1ba8e0d3dd19a8a8fcd000a00"
    );
    assert_eq!(
        hex::encode(net.chain.head().hash()),
        "42dad0f76a5674859c62dbb83ea52fd98293b09ab6f7ed9d7279e091ece5f5b2"
    );
    assert_eq!(net.admin.vid(), "dbc298251c51321b");
}

#[test]
fn equal_blocks_hash_equal() {
    let a = Net::new();
    let b = Net::new();
    assert_eq!(a.chain.head().hash(), b.chain.head().hash());
}

#[test]
fn round_robin_heights_one_to_four() {
    let mut net = Net::new();
    let expected = [1u8, 2, 3, 1];
    for (h, seed) in expected.iter().enumerate() {
        let b = net.mine(&[]);
        assert_eq!(b.height(), h as u64 + 1);
        assert_eq!(b.header.proposer, seeded(*seed).address());
    }
}

#[test]
fn out_of_turn_proposal_rejected() {
    let net = Net::new();
    let c = &net.miners[2];
    assert_eq!(net.chain.propose(1, &[], c).unwrap_err(), Rejection::OutOfTurn { slot: 1 });
    // forged: C signs a block claiming slot 1
    let mut header = net.chain.propose(1, &[], &net.miners[0]).unwrap().header;
    header.proposer = c.address();
    let forged = Block::build(header, vec![], c);
    assert_eq!(net.chain.validate(&forged).unwrap_err(), Rejection::OutOfTurn { slot: 1 });
}

#[test]
fn outsider_block_rejected() {
    let net = Net::new();
    let header = net.chain.propose(1, &[], &net.miners[0]).unwrap().header;
    let outsider = seeded(77);
    let b = Block::build(header, vec![], &outsider);
    assert_eq!(net.chain.validate(&b).unwrap_err(), Rejection::NotMiner);
}

#[test]
fn bad_signature_tx_excluded_from_proposal() {
    let mut net = Net::new();
    let good = net.tx(&net.admin.clone(), Call::Register { address: seeded(20).address() });
    let mut bad = net.tx(&net.admin.clone(), Call::Register { address: seeded(21).address() });
    bad.signature = Sig([5; 64]);
    let b = net.mine(&[bad.clone(), good.clone()]);
    assert_eq!(b.txs, vec![good]);

    // a block that includes it anyway is refused
    let mut next = net.tx(&net.admin.clone(), Call::Register { address: seeded(22).address() });
    next.signature = Sig([5; 64]);
    let slot = net.chain.head().header.slot + 1;
    let mut header = net.chain.propose(slot, &[], net.in_turn(slot)).unwrap().header;
    header.proposer = net.in_turn(slot).address();
    let b = Block::build(header, vec![next], net.in_turn(slot));
    assert_eq!(
        net.chain.validate(&b).unwrap_err(),
        Rejection::Transaction {
            index: 0,
            reason: Inadmissible::Signature
        }
    );
}

#[test]
fn linkage_and_height_checks() {
    let mut net = Net::new();
    net.mine(&[]);
    net.mine(&[]);
    let slot = net.chain.head().header.slot + 1;
    let k = net.in_turn(slot).clone();
    let mut header = net.chain.propose(slot, &[], &k).unwrap().header;
    header.prev_hash = net.chain.block(1).unwrap().hash();
    let b = Block::build(header.clone(), vec![], &k);
    assert_eq!(net.chain.validate(&b).unwrap_err(), Rejection::BrokenLinkage);

    header.prev_hash = net.chain.head_hash();
    header.height = 5;
    let b = Block::build(header, vec![], &k);
    assert!(matches!(net.chain.validate(&b), Err(Rejection::Height { expected: 3, got: 5 })));
    assert_eq!(net.chain.height(), 2);
}

#[test]
fn silent_miner_leaves_gaps_at_its_turns() {
    let mut net = Net::new();
    // miner B (slots 2, 5, ...) never proposes
    let mut slot = 1;
    while net.chain.height() < 6 {
        if (slot - 1) % 3 != 1 {
            let k = net.in_turn(slot).clone();
            let b = net.chain.propose(slot, &[], &k).unwrap();
            net.chain.append(b).unwrap();
        }
        slot += 1;
    }
    let slots: Vec<u64> = net.chain.blocks()[1..].iter().map(|b| b.header.slot).collect();
    assert_eq!(slots, vec![1, 3, 4, 6, 7, 9]);
    assert!(net.chain.blocks()[1..].iter().all(|b| b.header.proposer != net.miners[1].address()));
}

#[test]
fn stale_slot_rejected() {
    let mut net = Net::new();
    net.mine(&[]);
    let k = net.miners[0].clone();
    assert!(matches!(net.chain.propose(1, &[], &k), Err(Rejection::StaleSlot { .. })));
}

#[test]
fn hia_write_once_and_unknown_method_receipt() {
    let mut net = Net::new();
    let edge = seeded(30);
    net.enroll_recorder(&edge, "cam-01");
    let frame = b"FRAME 1\nCAM cam-01\nTS 1.000\nEND 1\n";
    let t1 = net.tx(&edge, Call::Record { key: "cam-01/frame/1".into(), hash: sha256(frame) });
    net.mine(&[t1.clone()]);
    assert!(net.chain.receipt(&t1.id()).unwrap().is_ok());
    let t2 = net.tx(&edge, Call::Record { key: "cam-01/frame/1".into(), hash: sha256(b"other") });
    let t3 = Transaction::new_signed(&edge, t2.nonce + 1, Contract::Acl, "revoke", vec![]);
    net.mine(&[t2.clone(), t3.clone()]);
    assert_eq!(net.chain.receipt(&t2.id()).unwrap().outcome, Err("already recorded".into()));
    assert!(net.chain.receipt(&t3.id()).unwrap().outcome.as_ref().unwrap_err().contains("unknown method"));
    assert_eq!(net.chain.state().hia("cam-01/frame/1").unwrap().hash, sha256(frame));
}

fn random_calls(net: &Net, rng: &mut ChaCha8Rng, users: &[lisps_core::ledger::Keypair]) -> Call {
    let u = &users[rng.gen_range(0..users.len())];
    match rng.gen_range(0..3) {
        0 => Call::Register { address: u.address() },
        1 => Call::Record {
            key: format!("cam-0{}/frame/{}", rng.gen_range(1..3), rng.gen_range(0..40)),
            hash: [rng.gen(); 32],
        },
        _ => Call::Grant {
            subject: u.vid(),
            resource: ["camera/cam-01", "camera/cam-02", "camera", "registry"][rng.gen_range(0..4)].into(),
            actions: Actions::from_bits(rng.gen_range(0..4)).unwrap(),
            expiry_ms: net.chain.head().header.timestamp_ms + rng.gen_range(0..20_000),
        },
    }
}

#[test]
fn replay_of_200_random_txs_matches_live_fold() {
    let mut net = Net::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let users: Vec<_> = (40..46).map(seeded).collect();
    let mut senders = vec![net.admin.clone()];
    // independent live fold applied tx-by-tx outside the chain
    let mut live = ContractState::with_admins(&[net.admin.address()]);
    let mut sent = 0;
    while sent < 200 {
        let mut batch = Vec::new();
        let mut nonces = std::collections::HashMap::new();
        for _ in 0..rng.gen_range(1..12) {
            let s = senders[rng.gen_range(0..senders.len())].clone();
            let n = nonces.entry(s.address()).or_insert_with(|| net.nonce(&s));
            batch.push(Transaction::call(&s, *n, &random_calls(&net, &mut rng, &users)));
            *n += 1;
        }
        let b = net.mine(&batch);
        for tx in &b.txs {
            live.check_admission(tx).unwrap();
            let _ = live.apply(tx, b.height(), b.header.timestamp_ms);
        }
        sent += b.txs.len();
        for u in &users {
            if net.chain.state().identity(&u.address()).is_some() && !senders.iter().any(|s| s.address() == u.address())
            {
                senders.push(u.clone());
            }
        }
    }
    assert_eq!(live.digest(), net.chain.state().digest());
    let replayed = Chain::replay(net.chain.genesis().clone(), &net.chain.blocks()[1..]).unwrap();
    assert_eq!(replayed.state(), net.chain.state());
    assert_eq!(replayed.state().digest(), net.chain.state().digest());
    assert!(net.chain.state().hia_count() > 0);
}

#[test]
fn bit_flip_sweep_detected() {
    let mut net = Net::new();
    let edge = seeded(30);
    net.enroll_recorder(&edge, "cam-01");
    for i in 0..8 {
        let t = net.tx(&edge, Call::Record { key: format!("cam-01/frame/{i}"), hash: sha256(&[i]) });
        net.mine(&[t]);
    }
    assert_eq!(net.chain.height(), 9);
    let encoded: Vec<Vec<u8>> = net.chain.blocks().iter().map(Block::encode).collect();
    let genesis = net.chain.genesis().clone();
    Chain::validate_from_genesis(genesis.clone(), &encoded).unwrap();

    // prefix chains, so each mutation only re-validates from the mutated block on
    let prefixes: Vec<Chain> = (0..encoded.len())
        .map(|h| Chain::replay(genesis.clone(), &net.chain.blocks()[1..h.max(1)]).unwrap())
        .collect();
    let mut checked = 0;
    for (h, bytes) in encoded.iter().enumerate() {
        for pos in 0..bytes.len() {
            for bit in 0..8 {
                let mut m = bytes.clone();
                m[pos] ^= 1 << bit;
                let detected = if h == 0 {
                    let mut all = encoded.clone();
                    all[0] = m;
                    Chain::validate_from_genesis(genesis.clone(), &all).is_err()
                } else {
                    match Block::decode(&m) {
                        Err(_) => true,
                        Ok(b) => prefixes[h].clone().append(b).is_err(),
                    }
                };
                assert!(detected, "undetected flip at block {h} byte {pos} bit {bit}");
                checked += 1;
            }
        }
    }
    assert!(checked > 8 * 1000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tx_encoding_round_trips(seed in any::<u8>(), nonce in 1u64.., key in "[a-z0-9/-]{0,40}", h in any::<[u8; 32]>()) {
        let tx = Transaction::call(&seeded(seed), nonce, &Call::Record { key, hash: h });
        prop_assert_eq!(Transaction::decode(&tx.encode()).unwrap(), tx.clone());
        prop_assert!(tx.verify_signature());
    }

    #[test]
    fn registry_stays_injective(order in proptest::collection::vec(0u8..12, 1..40)) {
        let mut net = Net::new();
        let admin = net.admin.clone();
        let txs: Vec<_> = order.iter().enumerate().map(|(i, s)| {
            Transaction::call(&admin, i as u64 + 1, &Call::Register { address: seeded(100 + s).address() })
        }).collect();
        net.mine(&txs);
        let st = net.chain.state();
        let mut vids = std::collections::HashSet::new();
        for s in order.iter().collect::<std::collections::BTreeSet<_>>() {
            let a = seeded(100 + s).address();
            let e = st.identity(&a).unwrap();
            prop_assert_eq!(&e.vid, &a.vid());
            prop_assert_eq!(st.address_of(&e.vid), Some(a));
            prop_assert!(vids.insert(e.vid.clone()));
        }
    }
}
