//! Per-layer forward/backward computation and whole-network execution.
//!
//! Design note on batch norm: both training and inference use the stored
//! rolling mean/variance. The backward pass treats them as constants, so
//! every gradient here is exact for the implemented forward map (and
//! finite-difference checks close to machine precision), at the cost of
//! diverging from batch-statistics training as usually practiced.

mod network;
pub mod ops;

pub use network::{backward_pass, forward_pass, forward_traced, ForwardTrace, Head};
