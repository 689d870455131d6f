//! Core of the LISPS edge/fog public-safety pipeline.
//!
//! The crate is split along service boundaries:
//!
//! * [`edge`] tracks detected people with IoU association and derives movement features.
//! * [`wire`] is the line-oriented text encoding of per-frame feature sets and the
//!   server-side fan-out hub used by the edge HTTP endpoint.
//! * [`fog`] contextualizes features, scores them with a Mamdani fuzzy system, dispatches
//!   alerts and persists the raw stream.
//! * [`ledger`] is the permissioned, hash-chained ledger with round-robin authority
//!   consensus and the built-in registry / hashed-index / access-control contracts.
//! * [`security`] holds the identity, hashed-index and access screening services that sit
//!   on top of the ledger.
//! * [`sim`] generates deterministic labeled scenarios and computes run metrics.
//!
//! Networking lives in the `lisps-node` crate; everything here is transport-agnostic.

pub mod clock;
pub mod config;
pub mod edge;
pub mod fixed;
pub mod fog;
pub mod ledger;
pub mod security;
pub mod sim;
pub mod wire;

pub use fixed::Fixed3;
