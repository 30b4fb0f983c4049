//! Core of a desk-scale simulator for two-party private text generation.
//!
//! The crate is `no_std` (with `alloc`) and contains every algorithmic piece:
//!
//! * [`ring`]: fixed-point encoding over the ring of 64-bit integers.
//! * [`mpc`]: additive secret sharing, Beaver multiplication, the in-process
//!   channel and the per-category communication ledger.
//! * [`nonlinear`]: private exp, reciprocal, softmax, activations and layer norm.
//! * [`nn`]: a plaintext decoder-only transformer used as reference semantics.
//! * [`merge`]: constant-attention calibration and the merge compiler.
//! * [`er`]: the embedding-resending generation loop, augmentation and losses.
//! * [`private`]: encrypted generation sessions for all four model variants.
//! * [`scaling`]: log-log least-squares fits used by the benchmark reports.
//!
//! File formats, CSV emission and the command-line front end live in the
//! companion `merge-bench` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod er;
pub mod error;
pub mod fixtures;
pub mod merge;
pub mod mpc;
pub mod nn;
pub mod nonlinear;
pub mod private;
pub mod ring;
pub mod scaling;

pub use error::{Error, Result};
