//! Deterministic random streams keyed by strings and seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::dynamics::TaskSpec;
use crate::field::ControlField;

/// Stream label shared by every optimizer so all methods start from the
/// same field for a given `(task, seed)`.
pub const INIT_STREAM: &str = "init";

/// ChaCha20 stream keyed by `(task, stream, seed)`.
pub fn keyed_rng(task: &str, stream: &str, seed: u64) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(task.as_bytes());
    h.update([0u8]);
    h.update(stream.as_bytes());
    h.update([0u8]);
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}

/// Uniform i.i.d. amplitudes on `[-init_scale, init_scale]`.
pub fn initial_field(task: &TaskSpec, seed: u64) -> ControlField {
    initial_field_from_stream(task, INIT_STREAM, seed)
}

pub fn initial_field_from_stream(task: &TaskSpec, stream: &str, seed: u64) -> ControlField {
    let mut rng = keyed_rng(&task.name, stream, seed);
    let s = task.init_scale;
    ControlField::from_fn(task.channels(), task.slices, |_, _| rng.random_range(-s..=s))
}
