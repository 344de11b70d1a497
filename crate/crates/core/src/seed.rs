//! Deterministic seed derivation for independent random streams.

/// Derive a child seed from a master seed and a stream index.
///
/// Uses the splitmix64 finalizer, so nearby `(master, stream)` pairs map to
/// statistically unrelated seeds. Every component that needs its own RNG
/// (surrogate k, trial t, ...) takes `derive_seed(master, stream)` instead
/// of sharing a generator, which keeps parallel and serial runs identical.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
