//! Networked LISPS services: ledger miners, edge cameras, the fog node, the scenario
//! orchestrator and benchmarks. `lisps-core` holds the transport-agnostic logic; this crate
//! puts it behind HTTP.

pub mod bench;
pub mod client;
pub mod edge;
pub mod fog;
pub mod keys;
pub mod miner;
pub mod orchestrate;
pub mod proto;
pub mod server;

pub use client::HttpLedger;
pub use server::ServerHandle;
