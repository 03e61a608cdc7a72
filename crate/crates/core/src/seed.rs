//! Seed derivation.
//!
//! A single global seed is expanded into independent per-stage seeds with
//! splitmix64 so any stage can be re-run on its own and still reproduce.

/// One round of splitmix64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with an integer stream index.
pub fn mix(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// Mix a seed with a named stream (FNV-1a over the label, then splitmix).
pub fn derive(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix(seed, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_streams_differ() {
        assert_ne!(derive(7, "walks"), derive(7, "skipgram"));
        assert_ne!(mix(7, 1), mix(7, 2));
        assert_eq!(derive(7, "walks"), derive(7, "walks"));
    }
}
