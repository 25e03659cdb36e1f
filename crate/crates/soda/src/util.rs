//! Small shared helpers.

use sha2::{Digest, Sha256};

/// Stable 64-bit digest of a byte string (first 8 bytes of SHA-256).
pub fn hash64(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::hash64;

    #[test]
    fn stable_and_distinct() {
        assert_eq!(hash64(b"abc"), hash64(b"abc"));
        assert_ne!(hash64(b"abc"), hash64(b"abd"));
    }
}
