//! Seed splitting. A child seed is the SplitMix64 finalizer folded over the
//! parent seed and each path component, so `derive_seed(s, &[a, b])` is
//! stable across platforms and independent of evaluation order.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(parent.wrapping_add(GOLDEN)), |acc, &part| {
        mix(acc ^ mix(part.wrapping_add(GOLDEN)))
    })
}
