//! Counter-based random streams keyed by `(seed, replica, segment)`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Each replica owns a ChaCha stream; each segment starts at its own block
/// offset inside that stream, so draws for segment `i` do not depend on how
/// many numbers earlier segments consumed.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
    pub master_seed: u64,
    pub replica: u64,
}

/// Words reserved per segment (far more than any segment consumes).
const SEGMENT_WORDS: u128 = 1 << 32;

impl RngStream {
    pub fn new(master_seed: u64, replica: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(replica);
        RngStream { rng, master_seed, replica }
    }

    /// Repositions the stream at the start of `segment`'s block.
    pub fn seek_segment(&mut self, segment: u64) {
        self.rng.set_word_pos(segment as u128 * SEGMENT_WORDS);
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, d: usize) -> DVector<f64> {
        DVector::from_fn(d, |_, _| self.normal())
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}
