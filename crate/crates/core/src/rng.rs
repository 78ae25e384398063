//! Counter-based random streams.
//!
//! Every random draw in the engine comes from a ChaCha8 stream addressed by a
//! [`StreamKey`]: the run seed fixes the key material, the key selects the
//! 64-bit stream id. Work units therefore see the same numbers no matter which
//! worker thread runs them or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Keeps streams of different purposes disjoint
/// even when the remaining key fields coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    PriorDraw = 1,
    FilterInit = 2,
    FilterStep = 3,
    Resample = 4,
    MoveProposal = 5,
    MoveFilter = 6,
    PathPass = 7,
    Simulation = 8,
    Summary = 9,
    Test = 10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub purpose: Purpose,
    /// Parameter-particle identity (or another caller-chosen index).
    pub particle: u64,
    /// Slice index or step counter.
    pub step: u64,
    /// Rejuvenation generation, move number, replicate, ...
    pub round: u64,
}

impl StreamKey {
    pub fn new(purpose: Purpose, particle: u64, step: u64, round: u64) -> Self {
        Self { purpose, particle, step, round }
    }

    fn stream_id(&self) -> u64 {
        let mut h = splitmix64(self.purpose as u64 ^ 0x5eed_0f_a9e5);
        h = splitmix64(h ^ self.particle);
        h = splitmix64(h ^ self.step.rotate_left(21));
        splitmix64(h ^ self.round.rotate_left(42))
    }
}

/// Factory for keyed streams under one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, key: StreamKey) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(key.stream_id());
        rng
    }

    pub fn get(&self, purpose: Purpose, particle: u64, step: u64, round: u64) -> ChaCha8Rng {
        self.stream(StreamKey::new(purpose, particle, step, round))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
