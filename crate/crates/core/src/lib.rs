//! Deterministic discrete-event simulator for mobile ad-hoc networks.

pub mod kernel;
pub mod link;
pub mod metrics;
pub mod mobility;
pub mod plot;
pub mod olsr;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod traffic;
