//! Core of a deterministic decentralized federated learning (DFL) simulator
//! with a dual reputation system and moving target defense (MTD).
//!
//! Every node trains a small MLP, publishes its flattened parameters, scores
//! the models it observes by cosine similarity and validation loss, and
//! optionally rewires its neighborhood or reshuffles its aggregation rule
//! before aggregating.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. File formats, the CLI and wall-clock timing live in the `dflmtd`
//! companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod aggregate;
pub mod config;
pub mod data;
pub mod dbscan;
mod error;
pub mod federation;
mod math;
pub mod metrics;
pub mod mtd;
pub mod nn;
pub mod reputation;
pub mod rng;

pub use error::{Error, Result};

/// Identifier of a federation participant, `0..n_nodes`.
pub type NodeId = usize;
