//! Shared fixtures for the benchmark targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use steer_core::goalspace::GoalVector;

/// Deterministic pseudo-prose of roughly `words` word tokens.
pub fn fixture_text(words: usize) -> String {
    let vocab = [
        "river", "story", "garden", "mountain", "letter", "answer", "window", "market",
        "evening", "bridge", "village", "machine", "journey", "silence", "harbor", "meadow",
        "the", "a", "went", "under", "quickly", "they", "and", "never", "believe", "formal",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut text = String::new();
    for i in 0..words {
        if i > 0 {
            text.push(' ');
        }
        text.push_str(vocab[rng.gen_range(0..vocab.len())]);
        if i % 11 == 10 {
            text.push('.');
        }
    }
    text.push('.');
    text
}

pub fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<GoalVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| GoalVector((0..dim).map(|_| rng.gen()).collect())).collect()
}
