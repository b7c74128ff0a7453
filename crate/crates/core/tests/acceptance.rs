//! The ten acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines always print. Exits nonzero
//! if any criterion that the machine can attain fails; see `scaling_attainable`.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use t3_core::chain::{BlockHeader, ChainError, UpdateBatch};
use t3_core::crypto::hash160;
use t3_core::enclave::{OwnershipProof, Role, Session};
use t3_core::harness::bench::{self, BenchConfig};
use t3_core::harness::trace::plant_anomaly;
use t3_core::harness::{coverage_report, linkage, max_load, uniformity, GenConfig, GeneratedChain, KvOracle, UtxoOracle};
use t3_core::oram::{Oram, OramError, OramParams, Strategy, TraceLog};
use t3_core::service::{ErrorCode, Message, Node, ServiceError};
use t3_core::store::{store_params, ReadRequest, Store, StoreConfig, StoreError, StoreKeys};
use t3_core::utxo::{capacity_for, MapKey, UtxoRecord};

struct Outcome {
    pass: bool,
    detail: String,
    /// Failed, but only because the machine cannot reach the criterion.
    unattainable_here: bool,
}

fn ok(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail, unattainable_here: false }
}

fn run(id: u32, title: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> (bool, bool) {
    let t = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        ok(false, format!("panicked: {}", msg.unwrap_or_default()))
    });
    let elapsed = t.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    let pass = out.pass && in_time;
    let limit_note = limit.map(|l| format!(" (limit {}s)", l.as_secs())).unwrap_or_default();
    println!(
        "criterion {id:>2} {} {title}: {}; {:.1}s{limit_note}",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    );
    (pass, !pass && out.unattainable_here && in_time)
}

fn keys() -> StoreKeys {
    StoreKeys { oram_master: [3; 32], map_key: MapKey::from_bytes([4; 32]) }
}

fn rec(rng: &mut ChaCha20Rng, pkh: [u8; 20]) -> UtxoRecord {
    UtxoRecord::new(rng.gen(), rng.gen_range(0..4), rng.gen_range(1..1_000_000), 1, pkh).unwrap()
}

fn c1_oracle_equivalence() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for s in [Strategy::PathOram, Strategy::CircuitOram] {
        let mut oram = Oram::init(OramParams::new(1 << 10, 16, s), &[9; 32], 1).unwrap();
        let mut kv = KvOracle::new(16);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut mismatches = 0;
        for _ in 0..10_000 {
            let bid = rng.gen_range(0..1 << 10);
            if rng.gen_bool(0.5) {
                let data: [u8; 16] = rng.gen();
                mismatches += (oram.write(bid, &data).unwrap()[..] != kv.write(bid, &data)[..]) as u32;
            } else {
                mismatches += (oram.read(bid).unwrap()[..] != kv.read(bid)[..]) as u32;
            }
        }
        pass &= mismatches == 0;
        details.push(format!("{s}: {mismatches} mismatches in 10^4 ops"));
    }
    ok(pass, details.join(", "))
}

fn c2_stash_bound() -> Outcome {
    let n = 1 << 14;
    let params = OramParams::with_z(n, 4, 8, Strategy::PathOram);
    let bound = 2 * 14 * 4;
    assert_eq!(params.max_stash, bound);
    let mut oram = Oram::init(params, &[5; 32], 3).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut overflows = 0;
    for i in 0..100_000u32 {
        let bid = rng.gen_range(0..n);
        let r = if i % 2 == 0 { oram.write(bid, &i.to_be_bytes().repeat(2)) } else { oram.read(bid) };
        match r {
            Ok(_) => {}
            Err(OramError::StashOverflow { .. }) => overflows += 1,
            Err(e) => panic!("{e}"),
        }
    }
    ok(
        overflows == 0,
        format!("{overflows} overflows in 10^5 accesses, max_stash {bound}, high water per level {:?}", oram.stash_high_water()),
    )
}

fn c3_leaf_uniformity() -> Outcome {
    let n = 1u32 << 14;
    let cfg = StoreConfig::default();
    let store = Store::create(store_params(n, Strategy::CircuitOram, &cfg), keys(), cfg, 5).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let mut seen = BTreeSet::new();
    let mut owners = Vec::new();
    while owners.len() < 10_000 {
        let pubkey: Vec<u8> = (0..33).map(|_| rng.gen()).collect();
        let pkh = hash160(&pubkey);
        if seen.insert(store.bids_for(&pkh, None).unwrap()[0]) {
            owners.push((pkh, pubkey));
        }
    }
    let creates = owners.iter().map(|(pkh, _)| rec(&mut rng, *pkh)).collect();
    store.apply_block(&UpdateBatch { height: 1, creates, ..Default::default() }).unwrap();

    let trace = Arc::new(TraceLog::new());
    store.set_read_trace(Some(Arc::clone(&trace)));
    let session = Session::new(Role::Server, [0; 32], [0; 32]);
    for (pkh, pubkey) in &owners {
        let req = ReadRequest { proof: OwnershipProof::preimage(*pkh, pubkey.clone()), delta: None };
        assert_eq!(store.serve_read(&req, &session).unwrap().real().count(), 1);
    }
    let leaves = trace.read_leaves(0);
    assert_eq!(leaves.len(), 10_000);
    let r = uniformity(&leaves, n);
    let interval = store.interval();
    let link = linkage(&leaves.iter().map(|&l| (interval, l)).collect::<Vec<_>>(), n);
    let control = uniformity(&plant_anomaly(&leaves, n, 10.0), n);
    ok(
        r.p_value > 0.01 && control.p_value < 1e-6,
        format!(
            "{} reads over {} cells: p={:.3} (chi2 p={:.3}, max-load p={:.3}), linkage p={:.3}; planted control p={:.1e}",
            r.samples, r.bins, r.p_value, r.chi2_p, r.max_load_p, link.p_value, control.p_value
        ),
    )
}

fn c4_snapshot_immutability() -> Outcome {
    let n = 1u32 << 12;
    let cfg = StoreConfig::default();
    let store = Arc::new(Store::create(store_params(n, Strategy::CircuitOram, &cfg), keys(), cfg, 7).unwrap());
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let pkhs: Vec<[u8; 20]> = (0..800).map(|_| rng.gen()).collect();
    let creates = pkhs.iter().map(|p| rec(&mut rng, *p)).collect();
    store.apply_block(&UpdateBatch { height: 1, creates, ..Default::default() }).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let save = |prefix: &str| store.with_snapshot(|s, _| s.save(dir.path(), prefix)).unwrap();
    let files = |prefix: &str| -> Vec<Vec<u8>> {
        let levels = store.with_snapshot(|s, _| s.levels().len());
        (0..levels)
            .flat_map(|j| {
                let (t, m) = t3_core::oram::OramState::level_files(dir.path(), prefix, j);
                [std::fs::read(t).unwrap(), std::fs::read(m).unwrap()]
            })
            .collect()
    };
    save("before");
    let evictor = store.spawn_evictor();
    let more: Vec<UtxoRecord> = (0..200)
        .map(|_| {
            let p = rng.gen();
            rec(&mut rng, p)
        })
        .collect();
    std::thread::scope(|sc| {
        for t in 0..4 {
            let (store, pkhs) = (&store, &pkhs);
            sc.spawn(move || {
                for i in 0..250 {
                    store.read_records(&pkhs[(t * 250 + i) % pkhs.len()], None).unwrap();
                }
            });
        }
        let store = &store;
        sc.spawn(move || store.apply_updates(&UpdateBatch { height: 2, creates: more, ..Default::default() }).unwrap());
    });
    let served = store.stats().reads_served;
    save("after");
    let unchanged = files("before") == files("after");
    drop(evictor);

    store.sync().unwrap();
    save("synced");
    store.with_original(|o| o.state().save(dir.path(), "original")).unwrap();
    let equal_after_sync = files("synced") == files("original")
        && store.with_snapshot(|s, _| s.meta()) == store.with_original(|o| o.state().meta());

    let mut agree = 0;
    for _ in 0..100 {
        let bid = rng.gen_range(0..n);
        let snap = store.with_snapshot(|s, _| s.read_once(bid, None)).unwrap();
        agree += (snap == store.original_read(bid).unwrap()) as u32;
    }
    ok(
        served == 1000 && unchanged && equal_after_sync && agree == 100,
        format!(
            "{served} concurrent reads: snapshot files unchanged={unchanged}; after sync equal to original={equal_after_sync}; cross-tree agreement {agree}/100"
        ),
    )
}

fn scaling_attainable() -> bool {
    std::thread::available_parallelism().map_or(1, |n| n.get()) >= 4
}

fn c5_throughput_shape() -> Outcome {
    let cfg = BenchConfig { threads: vec![1, 4], ..Default::default() };
    let (lat, scale) = bench::run(&cfg, |_| {}).unwrap();
    let ratios: Vec<String> = lat.iter().map(|r| format!("{}@2^{} {:.2}", r.strategy, r.n.trailing_zeros(), r.ratio)).collect();
    let latency_ok = lat.len() == 4 && lat.iter().all(|r| r.read_once_median_us < r.standard_median_us);
    let speedups: Vec<String> = scale.iter().filter(|r| r.threads == 4).map(|r| format!("{} x{:.2}", r.strategy, r.speedup)).collect();
    let scaling_ok = scale.iter().filter(|r| r.threads == 4).all(|r| r.speedup >= 2.0);
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    Outcome {
        pass: latency_ok && scaling_ok,
        detail: format!(
            "read_once/standard median ratio [{}] (<1: {latency_ok}); 4-reader speedup at 2^20 [{}] (>=2: {scaling_ok}) on {cpus} cpu(s)",
            ratios.join(", "),
            speedups.join(", ")
        ),
        unattainable_here: latency_ok && !scaling_ok && !scaling_attainable(),
    }
}

fn c6_max_load() -> Outcome {
    let (m, n) = (1u64 << 16, 1u32 << 12);
    let bound = capacity_for(m, n as u64);
    let loads: Vec<u32> = (0..100).map(|seed| max_load(m, n, seed)).collect();
    let within = loads.iter().filter(|&&l| l as u64 <= bound).count();
    ok(
        bound == 44 && within >= 99,
        format!("bound {bound}; {within}/100 seeds within; observed max loads {}..={}", loads.iter().min().unwrap(), loads.iter().max().unwrap()),
    )
}

struct Ledger {
    chain: GeneratedChain,
}

fn c7_ledger_fidelity(l: &Ledger) -> Outcome {
    let chain = &l.chain;
    let mut oracle = UtxoOracle::new();
    for b in &chain.blocks {
        oracle.apply_raw(&b.encode()).unwrap();
    }
    assert_eq!(oracle.by_pkh(), chain.truth, "generator bookkeeping disagrees with replay");

    let mut cfg = common::config(1 << 16, 8);
    cfg.strategy = Strategy::CircuitOram;
    let (node, report) = Node::init(cfg, &common::source(chain, usize::MAX), common::ROOT, false).unwrap();
    let server = common::serve(node, 2);
    let mut client = common::connect(&server);
    let mut wrong = 0;
    let mut emptied_checked = 0;
    for a in &chain.addresses {
        let proof = OwnershipProof::preimage(a.pkh, a.preimage.clone());
        let resp = client.query(proof, None).unwrap();
        let got: BTreeSet<UtxoRecord> = resp.real().copied().collect();
        let want = chain.truth.get(&a.pkh).cloned().unwrap_or_default();
        if want.is_empty() {
            emptied_checked += 1;
        }
        wrong += (got != want || resp.interval != chain.blocks.len() as u64) as u32;
    }
    ok(
        wrong == 0 && emptied_checked > 0 && report.block_full == 0,
        format!(
            "{} blocks, {} outputs, {} spends; {} addresses queried ({} spent to zero), {wrong} mismatches, {} dropped on full blocks",
            chain.blocks.len(),
            chain.outputs_created,
            chain.spends,
            chain.addresses.len(),
            emptied_checked,
            report.block_full
        ),
    )
}

fn c8_adversarial() -> Outcome {
    let gen = GeneratedChain::generate(&GenConfig { blocks: 12, txs_per_block: 4, live_outputs: 60, spent_outputs: 20, ..Default::default() }).unwrap();
    let (node, _) = Node::init(common::config(1 << 10, 2), &common::source(&gen, 10), common::ROOT, false).unwrap();
    let mut checks = Vec::new();

    // Tampered headers: nothing in either tree moves.
    let metas = |node: &Node| (node.store.with_original(|o| o.state().meta()), node.store.with_snapshot(|s, i| (s.meta(), i)));
    let before = metas(&node);
    let genuine = gen.blocks[10].clone();
    let mut bad_link = genuine.clone();
    bad_link.header.prev_hash[0] ^= 1;
    bad_link.header = t3_core::chain::mine(bad_link.header, bad_link.header.bits, 1 << 20).unwrap().0;
    let mut bad_pow = genuine.clone();
    bad_pow.header = BlockHeader { bits: 0x1d00ffff, ..bad_pow.header };
    let link_err = node.ingest_block(10, &bad_link);
    let pow_err = node.ingest_block(10, &bad_pow);
    let rejected = matches!(link_err, Err(ServiceError::Block { source: ChainError::BadLink, .. }))
        && matches!(pow_err, Err(ServiceError::Block { source: ChainError::BadPow, .. }));
    let unchanged = metas(&node) == before && node.tip_height() == Some(9);
    node.ingest_block(10, &genuine).unwrap();
    checks.push(("tampered header rejected, trees unchanged", rejected && unchanged));

    let server = common::serve(node, 1);
    let owner = gen.addresses.iter().find(|a| gen.truth.contains_key(&a.pkh)).unwrap();
    let good_proof = || OwnershipProof::preimage(owner.pkh, owner.preimage.clone());
    let mut client = common::connect(&server);

    // Replay: the same sealed frame twice.
    let frame = client.seal(&Message::Query { delta: 0, proof: good_proof() });
    client.send_raw(&frame).unwrap();
    let first = client.recv().unwrap();
    client.send_raw(&frame).unwrap();
    let replay = client.recv().unwrap();
    let replay_len = client.last_frame_len();
    checks.push((
        "replayed frame -> ReplayDetected",
        matches!(first, Message::QueryResp { .. }) && replay == Message::Error(ErrorCode::ReplayDetected),
    ));

    // Wrong proof: BadProof in a frame the same size as any other error.
    let wrong = OwnershipProof::preimage(owner.pkh, vec![2; 33]);
    let bad = client.query(wrong, None);
    let bad_len = client.last_frame_len();
    let still_ok = client.query(good_proof(), None).is_ok();
    checks.push((
        "wrong proof -> BadProof, constant-size error frame",
        matches!(bad, Err(ServiceError::Remote(ErrorCode::BadProof))) && bad_len == replay_len && still_ok,
    ));

    // Tampered ciphertext in the root bucket, which every path crosses.
    server.node().store.host_mut_snapshot(|s| {
        let tree = &mut s.levels_mut()[0].tree;
        let off = tree.bucket_offset(0) + 20;
        tree.image_mut()[off] ^= 0x40;
    });
    let tampered = client.query(good_proof(), None);
    let direct = server.node().store.read_records(&owner.pkh, None);
    checks.push((
        "tampered bucket -> IntegrityViolation",
        matches!(tampered, Err(ServiceError::Remote(ErrorCode::IntegrityViolation)))
            && matches!(direct, Err(StoreError::Oram(OramError::IntegrityViolation { .. })))
            && client.last_frame_len() == replay_len,
    ));

    let pass = checks.iter().all(|c| c.1);
    ok(pass, checks.iter().map(|(n, p)| format!("{n}: {}", if *p { "ok" } else { "FAILED" })).collect::<Vec<_>>().join("; "))
}

fn c9_coverage(l: &Ledger) -> Outcome {
    let r = coverage_report(&l.chain, 2);
    ok(r.coverage >= 0.92, format!("max_out=2 covers {}/{} UTXOs ({:.2}%) over {} addresses", r.covered, r.utxos, 100.0 * r.coverage, r.addresses))
}

fn c10_response_size(l: &Ledger) -> Outcome {
    let chain = &l.chain;
    let mut lens = Vec::new();
    for max_out in [2usize, 8] {
        let (node, _) = Node::init(common::config(1 << 12, max_out), &common::source(chain, usize::MAX), common::ROOT, false).unwrap();
        let server = common::serve(node, 1);
        let mut client = common::connect(&server);
        let funded = chain.addresses.iter().find(|a| chain.truth.get(&a.pkh).is_some_and(|s| s.len() >= 3)).unwrap();
        let emptied = chain.addresses.iter().find(|a| !chain.truth.contains_key(&a.pkh)).unwrap();
        let stranger = vec![3u8; 33];
        let mut row = Vec::new();
        for (pkh, pre) in [(funded.pkh, funded.preimage.clone()), (emptied.pkh, emptied.preimage.clone()), (hash160(&stranger), stranger)] {
            let resp = client.query(OwnershipProof::preimage(pkh, pre), None).unwrap();
            assert_eq!(resp.records.len(), max_out);
            row.push(client.last_frame_len());
        }
        lens.push((max_out, row));
    }
    let pass = lens.iter().all(|(_, r)| r.iter().all(|&x| x == r[0]));
    ok(
        pass,
        lens.iter()
            .map(|(m, r)| format!("max_out={m}: funded/unfunded/unknown frames {:?} bytes", r))
            .collect::<Vec<_>>()
            .join("; "),
    )
}

fn main() {
    let mut results = vec![
        run(1, "ORAM oracle equivalence", Some(Duration::from_secs(60)), c1_oracle_equivalence),
        run(2, "stash bound", Some(Duration::from_secs(600)), c2_stash_bound),
        run(3, "leaf uniformity", None, c3_leaf_uniformity),
        run(4, "snapshot immutability and sync equality", None, c4_snapshot_immutability),
        run(5, "two-tree throughput shape", None, c5_throughput_shape),
        run(6, "max-load bound", None, c6_max_load),
    ];
    let ledger = Ledger { chain: GeneratedChain::generate(&GenConfig::default()).unwrap() };
    results.extend([
        run(7, "end-to-end ledger fidelity", Some(Duration::from_secs(900)), || c7_ledger_fidelity(&ledger)),
        run(8, "adversarial inputs", None, c8_adversarial),
        run(9, "coverage", None, || c9_coverage(&ledger)),
        run(10, "response-size constancy", None, || c10_response_size(&ledger)),
    ]);

    let passed = results.iter().filter(|r| r.0).count();
    let excused: Vec<usize> = results.iter().enumerate().filter(|(_, r)| r.1).map(|(i, _)| i + 1).collect();
    println!("{passed}/10 criteria pass");
    if !excused.is_empty() {
        println!("not attainable on this machine (fewer than 4 cpus): criterion {excused:?}");
    }
    if results.iter().any(|r| !r.0 && !r.1) {
        std::process::exit(1);
    }
}
