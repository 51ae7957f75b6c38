//! Counter-based random streams keyed by `(seed, tag, replication)`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// A ChaCha20 stream whose key is the SHA-256 of the seed, a purpose tag and
/// the replication index, with the replication index also as stream id.
/// Streams for different arguments share no state.
pub fn stream(seed: u64, tag: &str, rep: u64) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    h.update(rep.to_le_bytes());
    let key: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(rep);
    rng
}
