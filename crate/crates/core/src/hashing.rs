//! Stable hashes and seed derivation.
//!
//! Everything here is defined over SHA-256 of explicitly framed bytes so the
//! values are identical across platforms, builds and releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hashes a sequence of byte fields, length-prefixing each so that
/// `("ab", "c")` and `("a", "bc")` never collide.
fn framed_digest<'a>(fields: impl IntoIterator<Item = &'a [u8]>) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for field in fields {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field);
    }
    hasher.finalize().into()
}

fn first_u64(digest: &[u8; 32]) -> u64 {
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(buf)
}

/// 64-bit content hash of an (instruction, input, output) triple.
pub fn content_hash(instruction: &str, input: &str, output: &str) -> u64 {
    first_u64(&framed_digest([
        instruction.as_bytes(),
        input.as_bytes(),
        output.as_bytes(),
    ]))
}

/// Derives a child seed from a parent seed and a path of labels.
pub fn derive_seed(seed: u64, labels: &[&str]) -> u64 {
    let seed_bytes = seed.to_le_bytes();
    let fields = std::iter::once(&seed_bytes[..]).chain(labels.iter().map(|l| l.as_bytes()));
    first_u64(&framed_digest(fields))
}

/// A ChaCha generator seeded from `seed` and `labels`.
pub fn rng_for(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, labels))
}
