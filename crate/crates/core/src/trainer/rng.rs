use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random sub-streams of one root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Env,
    PolicySampling,
    ReplaySampling,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Env => 2,
            Stream::PolicySampling => 3,
            Stream::ReplaySampling => 4,
        }
    }
}

/// Generator for `(seed, stream, worker)`. Distinct triples give independent
/// ChaCha streams under the same key, so re-seeding one component never shifts
/// the draws of another.
pub fn stream_rng(seed: u64, stream: Stream, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream.tag() << 32) | worker as u64);
    rng
}
