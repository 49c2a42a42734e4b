//! Coarse-to-fine next-frame-rate sequence generation.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//! a small reverse-mode tensor tape, rotary temporal positions, Multi-Mask
//! conditioning, the transformer denoiser, the flow-matching trainer, the
//! hierarchical inference scheduler with its cost model, and a synthetic
//! continuous-time world used for data and evaluation. File formats, thread
//! pools and the command line live in the `nextrate` companion crate.

#![no_std]
// std is linked under test, which makes the inherent float methods visible.
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod real;
pub mod rng;
pub mod tensor;
pub mod autodiff;
pub mod temporal;
pub mod multimask;
pub mod denoiser;
pub mod exec;
pub mod trainer;
pub mod inference;
pub mod world;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::Tensor;
