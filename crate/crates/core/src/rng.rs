//! Seeded, platform-independent random streams.
//!
//! Every draw in the crate goes through a ChaCha20 generator keyed by the
//! top-level seed, with an explicit stream id per consumer. Layer `l` of an
//! initializer uses stream `l`, so adding layers never perturbs the draws of
//! earlier layers.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream ids below this value are reserved for per-layer weight draws.
pub const LAYER_STREAMS: u64 = 1 << 16;
pub const DATA_STREAM: u64 = LAYER_STREAMS;
pub const LABEL_STREAM: u64 = LAYER_STREAMS + 1;
/// Monte-Carlo batches use `MC_STREAM_BASE + batch`.
pub const MC_STREAM_BASE: u64 = 1 << 32;

pub fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn layer_stream(seed: u64, layer: usize) -> ChaCha20Rng {
    stream(seed, layer as u64)
}

/// Matrix with iid `N(0, std^2)` entries, filled in column-major order.
pub fn gaussian_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    })
}

pub fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}
