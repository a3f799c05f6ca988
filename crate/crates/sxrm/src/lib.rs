//! Low-rank PSD matrix recovery from low-density measurement operators.

pub mod baseline;
pub mod certify;
pub mod harness;
pub mod numkernel;
pub mod operators;
pub mod recovery;
pub mod sampling;
