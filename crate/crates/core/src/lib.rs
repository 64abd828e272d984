//! Deterministic simulator for inter-provider agreement contracts.
//!
//! The crate is layered bottom-up:
//!
//! - [`schedule`]: gas constants and pure cost functions
//! - [`state`]: zero-default storage with cold/warm access metering
//! - [`contracts`]: the six agreement contracts over that storage
//! - [`chain`]: mempool, fee-priority block building, 12 s slots
//! - [`workload`]: experiment scenarios, metrics and exports
//! - [`verify`]: the built-in gas delta checks

pub mod chain;
mod config;
pub mod contracts;
pub mod error;
pub mod schedule;
pub mod state;
pub mod verify;
pub mod workload;
