//! Small shared helpers.

/// 64-bit FNV-1a over a byte slice.
///
/// Used as the stable, documented digest for canonical graphlet keys and for
/// config fingerprints. Stability across runs and builds matters more than
/// cryptographic strength here; collisions are detected, not assumed away.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET_BASIS: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x00000100000001b3;
    let mut hash = OFFSET_BASIS;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}
