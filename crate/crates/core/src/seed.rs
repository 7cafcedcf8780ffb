/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent RNG seed for sub-stream `index` of `master`.
///
/// `derive_seed(m, i) = splitmix64(splitmix64(m) ^ splitmix64(i + 1))`.
/// Used for per-tree, per-fold and per-user streams so results never depend
/// on the order in which parallel workers run.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_add(1)))
}
