//! Tiny stable hashing for cache keys and run fingerprints.

/// FNV-1a 64-bit hash. Stable across platforms and releases, unlike
/// `std::hash`, so it is safe to persist in cache headers.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hash any serializable value through its canonical JSON encoding.
pub fn hash_json<T: serde::Serialize>(value: &T) -> u64 {
    let text = serde_json::to_string(value).expect("serializable value");
    fnv1a64(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vectors() {
        // Reference FNV-1a values.
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn json_hash_is_stable() {
        let a = hash_json(&("x", 1.5f64, vec![1, 2, 3]));
        let b = hash_json(&("x", 1.5f64, vec![1, 2, 3]));
        let c = hash_json(&("x", 1.5f64, vec![1, 2, 4]));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
