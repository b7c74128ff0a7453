#![allow(dead_code)]

use std::net::TcpListener;
use std::sync::Arc;

use t3_core::chain::MemBlockSource;
use t3_core::enclave::attest::{measure, BUILD_IDENTITY};
use t3_core::harness::GeneratedChain;
use t3_core::service::{Client, Node, RunningServer, ServiceConfig};

pub const ROOT: &[u8] = b"test attestation root key 32byte";

pub fn source(chain: &GeneratedChain, upto: usize) -> MemBlockSource {
    MemBlockSource { blocks: chain.blocks.iter().take(upto).cloned().enumerate().map(|(h, b)| (h as u32, b)).collect() }
}

pub fn serve(node: Node, readers: usize) -> RunningServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    RunningServer::start(Arc::new(node), ROOT.to_vec(), listener, readers, None).unwrap()
}

pub fn connect(server: &RunningServer) -> Client {
    Client::connect(server.local_addr(), ROOT, &measure(BUILD_IDENTITY)).unwrap()
}

pub fn config(n: u32, max_out: usize) -> ServiceConfig {
    let mut cfg = ServiceConfig { n, seed: Some(11), persist_on_sync: false, ..Default::default() };
    cfg.store.max_out = max_out;
    cfg
}
