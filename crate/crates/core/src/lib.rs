//! Asynchronous multi-agent value factorization over temporal macro-actions.
//!
//! The crate bundles a segmented joint experience replay buffer with
//! decentralized reward accumulation, temporal positional encoding,
//! attention-generated monotone mixing parameters, dual micro/macro TD
//! training, a cooperative box-pushing benchmark, and a brute-force
//! laboratory that verifies the argmax-consistency properties the
//! factorization relies on.

pub mod encoding;
pub mod env;
pub mod numerics;
pub mod replay;
pub mod rng;
