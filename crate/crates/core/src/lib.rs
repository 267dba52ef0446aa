//! Self-adaptive memory-budget control for on-device online continual
//! learning (OCL).
//!
//! The crate is `no_std` (with `alloc`) so the controller can be embedded
//! in a training runtime without pulling in an operating system. Enable the
//! `std` feature for `std::error::Error` impls and the `serde` feature for
//! (de)serialization of configuration and trace types.
//!
//! Layout:
//!
//! - [`metrics`]: accuracy matrix, plasticity and stability.
//! - [`urge`]: the four-factor logistic health score and preference weights.
//! - [`controller`]: decaying threshold, budget updates, knob derivation and
//!   the per-experience control loop.
//! - [`simulator`]: a deterministic stand-in for on-device OCL training,
//!   plus response-model calibration.
//! - [`baselines`]: fixed-knob policies and the 42-point oracle sweep.
//! - [`scenario`]: the resolved, in-memory description of one run.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baselines;
pub mod controller;
mod error;
pub mod metrics;
pub mod scenario;
pub mod simulator;
pub mod urge;

pub use error::{Error, Result};
