use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream for `(seed, index)`; identical regardless of the
/// order in which indices are visited.
pub(crate) fn child_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
