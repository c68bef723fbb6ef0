//! Deterministic seed derivation for independent RNG substreams.
//!
//! Every randomized stage (sample splits, CV fold assignment, simulation
//! runs) seeds its own generator from a value derived here, so any piece of
//! the pipeline can be reproduced in isolation and evaluated in parallel
//! without shared RNG state.

/// SplitMix64 finalizer; full-period bijection on `u64`.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the substream seed for stream index `stream` of a root seed.
pub fn derive(seed: u64, stream: u64) -> u64 {
    seed ^ splitmix64(stream)
}

/// Two-level derivation (e.g. run index, then stage tag within the run).
pub fn derive2(seed: u64, a: u64, b: u64) -> u64 {
    derive(derive(seed, a), splitmix64(b ^ 0xa076_1d64_78bd_642f))
}
