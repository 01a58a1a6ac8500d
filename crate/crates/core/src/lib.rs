//! Near-field NOMA with hybrid beamforming for extremely large arrays.
//!
//! The crate models a uniform linear array serving clusters of two users
//! (one high-QoS, one low-QoS) that share a beam through superposition
//! coding and successive interference cancellation.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analog;
pub mod digital;
pub mod error;
pub mod geometry;
pub mod io;
pub mod matching;
pub mod par;
pub mod power;
pub mod rates;
pub mod scenario;

pub use error::{Error, Result};
