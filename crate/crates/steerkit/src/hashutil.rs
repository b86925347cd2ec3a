//! Tiny stable hashing helpers (FNV-1a), used for canonical config keys,
//! n-gram bucketing and per-stage seed derivation. Stable across runs and
//! platforms, unlike the std hasher.

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Derives a child seed from a base seed and a textual tag.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut buf = Vec::with_capacity(tag.len() + 16);
    buf.extend_from_slice(&base.to_le_bytes());
    buf.extend_from_slice(tag.as_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    fnv1a64(&buf)
}
