//! Event-triggered modified repetitive control with equivalent-input-disturbance
//! (EID) estimation.
//!
//! The crate covers the whole loop: the plant and its exogenous signals, the
//! repetitive internal model, a full-state observer, the EID estimator, the
//! adaptive periodic event-triggered transmission channel, Riccati-based gain
//! synthesis, a deterministic fixed-step closed-loop simulator, and metrics,
//! export and comparison tooling on the resulting traces.
//!
//! With the default `parallel` feature, independent scenario runs (variant
//! comparisons, partition selection, parameter sweeps) are spread over a rayon
//! thread pool; without it the same entry points run sequentially.

// NaN must fail range checks, so negated comparisons are intentional
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod apetm;
pub mod batch;
pub mod config;
pub mod eid;
pub mod error;
pub mod experiment;
pub mod mrc;
pub mod numerics;
pub mod observer;
pub mod plant;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
pub use numerics::{Mat, Vector};
