//! Dynamic two-layer MLP attention heads with diagonal-plus-low-rank sequence
//! mixing, the oracle paths that check them, and a small training harness.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bench;
pub mod blocked;
pub mod dplr;
pub mod error;
pub mod head;
pub mod labels;
pub mod lagctx;
pub mod memory;
pub mod numerics;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use lagctx::LagContext;
pub use numerics::Matrix;
