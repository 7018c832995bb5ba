//! Counter-based uniforms keyed by `(seed, index)`.
//!
//! A uniform is a pure function of its key, so any partition of replicate
//! indices across workers reproduces the same stream.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64 random bits for key `(seed, index)`.
#[inline]
pub fn bits(seed: u64, index: u64) -> u64 {
    let s = mix64(seed.wrapping_add(GOLDEN));
    mix64(s ^ mix64(index.wrapping_mul(GOLDEN).wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Uniform on the open interval `(0, 1)` for key `(seed, index)`.
#[inline]
pub fn uniform(seed: u64, index: u64) -> f64 {
    ((bits(seed, index) >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}
