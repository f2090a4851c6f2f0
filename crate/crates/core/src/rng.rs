//! Deterministic seed derivation and counter-based random streams.
//!
//! Every random quantity in a sample is drawn from a ChaCha8 stream whose key
//! is a SHA-256 digest of the logical coordinates that own it. Transport
//! photons additionally get their own block-counter window inside the
//! column stream, so a photon's draws depend only on
//! `(seed_root, sample_id, column_id, photon_index)` and never on
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Words (u32) reserved per photon inside a column stream.
const PHOTON_WORD_WINDOW: u32 = 32;

fn digest(label: &str, parts: &[u64]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(label.as_bytes());
    for p in parts {
        hasher.update(p.to_le_bytes());
    }
    let out = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&out);
    key
}

/// Derives a child seed from a parent seed, a purpose label and an index.
pub fn derive_seed(parent: u64, label: &str, index: u64) -> u64 {
    let d = digest(label, &[parent, index]);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Per-sample seed: a hash of the dataset seed root and the sample id.
pub fn sample_seed(seed_root: u64, sample_id: u64) -> u64 {
    derive_seed(seed_root, "sample", sample_id)
}

/// A ChaCha8 generator keyed by a 64-bit seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest("stream", &[seed]))
}

/// Photon streams for one A-line column.
#[derive(Clone)]
pub struct ColumnStreams {
    rng: ChaCha8Rng,
}

impl ColumnStreams {
    pub fn new(seed_root: u64, sample_id: u64, column_id: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(digest("transport", &[seed_root, sample_id]));
        rng.set_stream(column_id);
        Self { rng }
    }

    /// Repositions the stream at the start of `photon_index`'s window and
    /// returns it.
    pub fn photon(&mut self, photon_index: u64) -> &mut ChaCha8Rng {
        self.rng
            .set_word_pos(u128::from(photon_index) << PHOTON_WORD_WINDOW);
        &mut self.rng
    }
}
