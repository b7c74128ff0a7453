// Build a node from a synthetic chain, serve it on loopback and query a few
// addresses with preimage proofs.

use std::net::TcpListener;
use std::sync::Arc;

use t3_core::chain::MemBlockSource;
use t3_core::enclave::attest::{measure, BUILD_IDENTITY};
use t3_core::enclave::OwnershipProof;
use t3_core::harness::{GenConfig, GeneratedChain};
use t3_core::service::{Client, Node, RunningServer, ServiceConfig};

const ROOT: &[u8] = b"loopback demo root";

fn main() {
    let chain = GeneratedChain::generate(&GenConfig { blocks: 30, live_outputs: 300, spent_outputs: 100, ..Default::default() }).unwrap();
    let source = MemBlockSource { blocks: chain.blocks.iter().cloned().enumerate().map(|(h, b)| (h as u32, b)).collect() };

    let mut cfg = ServiceConfig { n: 1 << 12, persist_on_sync: false, ..Default::default() };
    cfg.store.max_out = 4;
    let (node, report) = Node::init(cfg, &source, ROOT, false).unwrap();
    println!("replayed {} blocks, {} creates, {} spends", report.blocks, report.creates, report.spends);

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let server = RunningServer::start(Arc::new(node), ROOT.to_vec(), listener, 2, None).unwrap();
    let mut client = Client::connect(server.local_addr(), ROOT, &measure(BUILD_IDENTITY)).unwrap();

    for a in chain.addresses.iter().take(5) {
        let resp = client.query(OwnershipProof::preimage(a.pkh, a.preimage.clone()), None).unwrap();
        let real: Vec<_> = resp.real().collect();
        println!(
            "{}: {} outputs at interval {} ({} byte frame)",
            hex(&a.pkh),
            real.len(),
            resp.interval,
            client.last_frame_len()
        );
        for r in real {
            println!("  {}:{} {} sat", r.txid_display(), r.vout, r.amount);
        }
    }
    println!("{:?}", server.stats());
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}
