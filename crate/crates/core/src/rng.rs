//! Counter-based random stream used for every stochastic draw in a match.
//!
//! A draw is a pure function of its key tuple: the key words are folded through
//! the SplitMix64 finalizer, `h_0 = 0`, `h_{i+1} = mix64(h_i ^ k_i)`, and the
//! final word `w` is mapped onto `0..n` as `floor(n * w / 2^64)`. No state is
//! carried between draws, so two implementations that agree on this fold agree
//! bit-exactly on every die.

/// Key tag for dice rolls; followed by variant tag, seed, round, seat and die index.
pub const DICE_STREAM: u64 = 0x6c69_6172_7364_6963;
/// Key tag for the naive opponent's choices.
pub const NAIVE_STREAM: u64 = 0x6e61_6976_6570_6c79;

/// SplitMix64 output function.
#[inline]
pub const fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a key tuple into one 64-bit word.
pub fn stream_word(keys: &[u64]) -> u64 {
    keys.iter().fold(0u64, |h, &k| mix64(h ^ k))
}

/// Uniform integer in `0..n` for the given key tuple. `n` must be nonzero.
pub fn uniform_below(keys: &[u64], n: u64) -> u64 {
    debug_assert!(n > 0);
    ((u128::from(stream_word(keys)) * u128::from(n)) >> 64) as u64
}

/// Face in `1..=6` of die `die` held by `seat` in round `round`.
pub fn die_face(variant_tag: u64, seed: u64, round: u32, seat: usize, die: usize) -> u8 {
    let keys = [
        DICE_STREAM,
        variant_tag,
        seed,
        u64::from(round),
        seat as u64,
        die as u64,
    ];
    1 + uniform_below(&keys, 6) as u8
}
