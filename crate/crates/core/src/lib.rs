//! Oblivious UTXO lookup service: a tree ORAM split into a read-once
//! snapshot for concurrent readers and an original tree for a single writer,
//! behind a simulated attested enclave.

pub mod chain;
pub mod crypto;
pub mod enclave;
pub mod harness;
pub mod oram;
pub mod service;
pub mod store;
pub mod utxo;
