// Generate a chain, check the generator's bookkeeping against an independent
// replay, and report how much of the UTXO set max_out=2 covers.

use t3_core::harness::{coverage_report, GenConfig, GeneratedChain, UtxoOracle};

fn main() {
    let cfg = GenConfig::default();
    let chain = GeneratedChain::generate(&cfg).expect("generate");

    let mut oracle = UtxoOracle::new();
    for b in &chain.blocks {
        oracle.apply_raw(&b.encode()).expect("replay");
    }
    assert_eq!(oracle.by_pkh(), chain.truth);

    println!(
        "blocks={} outputs={} spends={} live={} addresses={} emptied={}",
        chain.blocks.len(),
        chain.outputs_created,
        chain.spends,
        chain.live_utxos(),
        chain.truth.len(),
        chain.emptied_addresses().len()
    );
    for (count, addrs) in chain.histogram() {
        println!("  {count} utxos: {addrs} addresses");
    }
    let r = coverage_report(&chain, 2);
    println!("max_out=2 covers {}/{} ({:.1}%)", r.covered, r.utxos, 100.0 * r.coverage);
}
