//! Simulation of Shor's discrete-logarithm algorithm, both on a single
//! register file and split across `k` chained nodes.

pub mod bits;
pub mod dist;
pub mod dlp;
pub mod harness;
pub mod numtheory;
pub mod phase;
pub mod statevec;
