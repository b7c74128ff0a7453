mod common;

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use t3_core::chain::{mine, Block, BlockHeader, DirBlockSource, HeaderChain, OutPoint, Transaction, TxIn, TxOut};
use t3_core::crypto::Hash160Mode;
use t3_core::enclave::attest::{measure, BUILD_IDENTITY};
use t3_core::enclave::{OwnershipProof, ProofMode};
use t3_core::harness::gen::EASY_BITS;
use t3_core::harness::{GenConfig, GeneratedChain, UtxoOracle};
use t3_core::service::client::sync_headers_from_server;
use t3_core::service::{parse_keyfile, proof_for, Client, ErrorCode, Message, Node, RunningServer, ServiceError};
use t3_core::store::DuplicatePolicy;
use t3_core::utxo::UtxoRecord;

fn small_chain(seed: u64) -> GeneratedChain {
    GeneratedChain::generate(&GenConfig { seed, blocks: 16, txs_per_block: 5, live_outputs: 120, spent_outputs: 50, ..Default::default() })
        .unwrap()
}

fn answer(client: &mut Client, chain: &GeneratedChain, pkh: &[u8; 20]) -> Result<(u64, BTreeSet<UtxoRecord>), ServiceError> {
    let a = chain.address(pkh).unwrap();
    let r = client.query(OwnershipProof::preimage(a.pkh, a.preimage.clone()), None)?;
    Ok((r.interval, r.real().copied().collect()))
}

#[test]
fn query_round_trip_matches_replay() {
    let chain = small_chain(1);
    let mut oracle = UtxoOracle::new();
    for b in &chain.blocks {
        oracle.apply_raw(&b.encode()).unwrap();
    }
    let (node, report) = Node::init(common::config(1 << 10, 8), &common::source(&chain, usize::MAX), common::ROOT, false).unwrap();
    assert_eq!(report.blocks, 16);
    assert_eq!(report.interval, 16);
    let server = common::serve(node, 2);
    let mut client = common::connect(&server);
    for a in &chain.addresses {
        let (interval, got) = answer(&mut client, &chain, &a.pkh).unwrap();
        assert_eq!(interval, 16);
        assert_eq!(got, oracle.records_for(&a.pkh));
    }
}

#[test]
fn malformed_frame_gets_error_and_connection_survives() {
    let chain = small_chain(2);
    let (node, _) = Node::init(common::config(1 << 10, 2), &common::source(&chain, usize::MAX), common::ROOT, false).unwrap();
    let server = common::serve(node, 1);
    let mut client = common::connect(&server);
    let pkh = *chain.truth.keys().next().unwrap();

    let frame = client.seal_bytes(&[0x10, 0xff]);
    client.send_raw(&frame).unwrap();
    assert_eq!(client.recv().unwrap(), Message::Error(ErrorCode::BadEncoding));
    let frame = client.seal_bytes(&[0x55]);
    client.send_raw(&frame).unwrap();
    assert_eq!(client.recv().unwrap(), Message::Error(ErrorCode::BadEncoding));
    // A well-formed message of the wrong kind.
    assert_eq!(client.request(&Message::Error(ErrorCode::Internal)).unwrap(), Message::Error(ErrorCode::Unexpected));
    // Garbage in place of a sealed frame fails authentication only.
    let mut junk = vec![0, 0, 0, 40];
    junk.extend_from_slice(&[0xAB; 40]);
    client.send_raw(&junk).unwrap();
    assert_eq!(client.recv().unwrap(), Message::Error(ErrorCode::AuthFail));
    assert_eq!(answer(&mut client, &chain, &pkh).unwrap().1, chain.truth[&pkh]);
}

#[test]
fn query_during_sync_is_parked_then_served_with_new_interval() {
    let chain = small_chain(3);
    let (node, _) = Node::init(common::config(1 << 10, 2), &common::source(&chain, usize::MAX), common::ROOT, false).unwrap();
    let server = common::serve(node, 2);
    let store = Arc::clone(&server.node().store);
    let before = store.interval();
    let pkh = *chain.truth.keys().next().unwrap();
    let mut client = common::connect(&server);

    store.begin_sync();
    let handle = {
        let chain = chain.clone();
        std::thread::spawn(move || answer(&mut client, &chain, &pkh))
    };
    assert!(store.wait_parked(1, Duration::from_secs(10)), "query was not parked");
    let new = store.finish_sync().unwrap();
    assert_eq!(new, before + 1);
    let (interval, recs) = handle.join().unwrap().unwrap();
    assert_eq!(interval, new);
    assert_eq!(recs, chain.truth[&pkh]);
    assert!(server.stats().reads_parked >= 1);
}

#[test]
fn init_is_deterministic_in_plaintext() {
    let chain = small_chain(4);
    let a = Node::init(common::config(1 << 10, 8), &common::source(&chain, usize::MAX), common::ROOT, false).unwrap().0;
    let b = Node::init(common::config(1 << 10, 8), &common::source(&chain, usize::MAX), common::ROOT, false).unwrap().0;
    for addr in &chain.addresses {
        assert_eq!(a.store.read_records(&addr.pkh, None).unwrap(), b.store.read_records(&addr.pkh, None).unwrap());
    }
    for bid in 0..64 {
        assert_eq!(a.store.original_read(bid).unwrap(), b.store.original_read(bid).unwrap());
    }
    // Ciphertexts are freshly randomized.
    let img = |n: &Node| n.store.with_snapshot(|s, _| s.levels()[0].tree.image().to_vec());
    assert_ne!(img(&a), img(&b));
}

fn genesis_only() -> Block {
    let cb = Transaction {
        version: 1,
        inputs: vec![TxIn { prevout: OutPoint::NULL, script_sig: vec![0x01, 0x00], sequence: u32::MAX, witness: vec![] }],
        outputs: vec![TxOut { value: 0, script_pubkey: vec![0x6a, 0x01, 0x00] }],
        lock_time: 0,
    };
    let tpl = BlockHeader { version: 1, prev_hash: [0; 32], merkle_root: cb.txid(), time: 0, bits: EASY_BITS, nonce: 0 };
    Block { header: mine(tpl, EASY_BITS, 1 << 20).unwrap().0, txs: vec![cb] }
}

#[test]
fn genesis_only_chain_answers_dummies() {
    let src = t3_core::chain::MemBlockSource { blocks: [(0, genesis_only())].into() };
    let (node, report) = Node::init(common::config(1 << 8, 2), &src, common::ROOT, false).unwrap();
    assert_eq!((report.blocks, report.creates, report.prune.nulldata), (1, 0, 1));
    let server = common::serve(node, 1);
    let mut client = common::connect(&server);
    let pubkey = vec![2u8; 33];
    let pkh = t3_core::crypto::hash160(&pubkey);
    let r = client.query(OwnershipProof::preimage(pkh, pubkey), None).unwrap();
    assert_eq!(r.interval, 1);
    assert_eq!(r.records, vec![UtxoRecord::DUMMY; 2]);
}

#[test]
fn persisted_state_reopens() {
    let chain = small_chain(5);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::config(1 << 10, 8);
    cfg.state_dir = dir.path().to_path_buf();
    let (node, _) = Node::init(cfg, &common::source(&chain, usize::MAX), common::ROOT, true).unwrap();
    let expected: Vec<_> = chain.addresses.iter().map(|a| node.store.read_records(&a.pkh, None).unwrap()).collect();
    drop(node);
    for f in ["original.tree", "snapshot.tree", "original.merkle", "snapshot.merkle", "headers.dat", "state.key", "state.meta"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let node = Node::open(dir.path(), common::ROOT).unwrap();
    assert_eq!(node.tip_height(), Some(15));
    let got: Vec<_> = chain.addresses.iter().map(|a| node.store.read_records(&a.pkh, None).unwrap()).collect();
    assert_eq!(got, expected);
    // A different platform secret cannot unseal the state.
    assert!(Node::open(dir.path(), b"another platform secret").is_err());
}

#[test]
fn ingest_loop_follows_the_block_directory() {
    let chain = small_chain(6);
    let dir = tempfile::tempdir().unwrap();
    let src = DirBlockSource::new(dir.path());
    for h in 0..10 {
        src.put(h, &chain.blocks[h as usize]).unwrap();
    }
    let mut cfg = common::config(1 << 10, 8);
    cfg.poll_interval_ms = 20;
    let (node, _) = Node::init(cfg, &src, common::ROOT, false).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let server = RunningServer::start(Arc::new(node), common::ROOT.to_vec(), listener, 1, Some(Box::new(DirBlockSource::new(dir.path())))).unwrap();
    for h in 10..16 {
        src.put(h, &chain.blocks[h as usize]).unwrap();
    }
    let deadline = Instant::now() + Duration::from_secs(60);
    while server.node().tip_height() != Some(15) {
        assert!(Instant::now() < deadline, "ingest stalled at {:?}", server.node().tip_height());
        std::thread::sleep(Duration::from_millis(20));
    }
    let mut client = common::connect(&server);
    for a in &chain.addresses {
        let (interval, got) = answer(&mut client, &chain, &a.pkh).unwrap();
        assert_eq!(interval, 16);
        assert_eq!(got, chain.truth.get(&a.pkh).cloned().unwrap_or_default());
    }
    let mut local = HeaderChain::new(None);
    assert_eq!(sync_headers_from_server(&mut client, &mut local).unwrap(), 16);
    assert_eq!(local.headers(), server.node().with_chain(|c| c.headers().to_vec()));
}

/// Forwards one connection and records what the client sent.
fn recording_proxy(target: std::net::SocketAddr) -> (std::net::SocketAddr, Arc<Mutex<Vec<u8>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    std::thread::spawn(move || {
        let (mut inbound, _) = listener.accept().unwrap();
        let mut outbound = TcpStream::connect(target).unwrap();
        let (mut in2, mut out2) = (inbound.try_clone().unwrap(), outbound.try_clone().unwrap());
        std::thread::spawn(move || {
            let _ = std::io::copy(&mut out2, &mut in2);
        });
        let mut buf = [0u8; 4096];
        loop {
            match inbound.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    log.lock().unwrap().extend_from_slice(&buf[..n]);
                    if outbound.write_all(&buf[..n]).is_err() {
                        break;
                    }
                }
            }
        }
        let _ = outbound.shutdown(std::net::Shutdown::Both);
    });
    (addr, seen)
}

#[test]
fn client_never_sends_pkh_in_clear() {
    let chain = small_chain(7);
    let (node, _) = Node::init(common::config(1 << 10, 2), &common::source(&chain, usize::MAX), common::ROOT, false).unwrap();
    let server = common::serve(node, 1);
    let (proxy, seen) = recording_proxy(server.local_addr());
    let mut client = Client::connect(proxy, common::ROOT, &measure(BUILD_IDENTITY)).unwrap();
    let targets: Vec<_> = chain.truth.keys().take(5).copied().collect();
    for pkh in &targets {
        answer(&mut client, &chain, pkh).unwrap();
    }
    drop(client);
    std::thread::sleep(Duration::from_millis(100));
    let bytes = seen.lock().unwrap().clone();
    assert!(bytes.len() > 5 * 20);
    for pkh in &targets {
        let pre = &chain.address(pkh).unwrap().preimage;
        assert!(!bytes.windows(20).any(|w| w == pkh), "pkh visible on the wire");
        assert!(!bytes.windows(pre.len()).any(|w| w == &pre[..]), "preimage visible on the wire");
    }
}

#[test]
fn signature_mode_requires_a_signature() {
    let chain = small_chain(8);
    let mut cfg = common::config(1 << 10, 8);
    cfg.proof_mode = ProofMode::Signature;
    let (node, _) = Node::init(cfg, &common::source(&chain, usize::MAX), common::ROOT, false).unwrap();
    let server = common::serve(node, 2);
    let mut client = common::connect(&server);
    let a = chain.addresses.iter().find(|a| a.kind == t3_core::harness::gen::AddressKind::P2pkh && chain.truth.contains_key(&a.pkh)).unwrap();
    let keys = parse_keyfile(&a.keyfile_line()).unwrap();
    let proof = proof_for(&keys, &a.pkh, Hash160Mode::Ripemd, &client.binding_nonce()).unwrap();
    assert!(proof.signature.is_some());
    let r = client.query(proof, None).unwrap();
    assert_eq!(r.real().copied().collect::<BTreeSet<_>>(), chain.truth[&a.pkh]);
    let bare = OwnershipProof::preimage(a.pkh, a.preimage.clone());
    assert!(matches!(client.query(bare, None), Err(ServiceError::Remote(ErrorCode::BadProof))));
    // A signature bound to another session's nonce is refused.
    let mut other = common::connect(&server);
    let stale = proof_for(&keys, &a.pkh, Hash160Mode::Ripemd, &client.binding_nonce()).unwrap();
    assert!(matches!(other.query(stale, None), Err(ServiceError::Remote(ErrorCode::BadProof))));
}

#[test]
fn strict_policy_refuses_a_second_read_in_one_interval() {
    let chain = small_chain(9);
    let mut cfg = common::config(1 << 10, 2);
    cfg.store.duplicate_policy = DuplicatePolicy::Strict;
    let (node, _) = Node::init(cfg, &common::source(&chain, usize::MAX), common::ROOT, false).unwrap();
    let server = common::serve(node, 1);
    let mut client = common::connect(&server);
    let pkh = *chain.truth.keys().next().unwrap();
    answer(&mut client, &chain, &pkh).unwrap();
    assert!(matches!(answer(&mut client, &chain, &pkh), Err(ServiceError::Remote(ErrorCode::DuplicateRead))));
    server.node().store.sync().unwrap();
    assert!(answer(&mut client, &chain, &pkh).is_ok());
}

#[test]
fn wrong_measurement_fails_attestation() {
    let chain = small_chain(10);
    let (node, _) = Node::init(common::config(1 << 8, 2), &common::source(&chain, 2), common::ROOT, false).unwrap();
    let server = common::serve(node, 1);
    assert!(Client::connect(server.local_addr(), common::ROOT, &measure("some other build")).is_err());
    assert!(Client::connect(server.local_addr(), b"wrong root", &measure(BUILD_IDENTITY)).is_err());
    assert!(Client::connect(server.local_addr(), common::ROOT, &measure(BUILD_IDENTITY)).is_ok());
}
