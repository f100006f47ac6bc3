//! Space-time graph filters and space-time graph neural networks (ST-GNNs).
//!
//! The crate covers the whole pipeline used to study ST-GNNs as decentralized
//! controllers:
//!
//! - [`graph`], [`timeline`], [`signal`]: graphs, sampling grids, time warps and
//!   space-time signals.
//! - [`stfilter`]: FIR space-time graph filters and their spectral quantities.
//! - [`stgnn`]: the layered network with exact backpropagation and ADAM training.
//! - [`stability`]: operator distances modulo permutation/translation and the
//!   first-order stability bounds.
//! - [`flocking`], [`planning`]: the two imitation-learning control tasks.
//! - [`experiments`], [`config`], [`cli`]: orchestration used by the
//!   `stgnn-lab` binary.

pub mod assignment;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod flocking;
pub mod graph;
pub mod linalg;
pub mod planning;
pub mod plot;
pub mod signal;
pub mod stfilter;
pub mod stability;
pub mod stgnn;
pub mod timeline;

pub use error::{Error, Result};
