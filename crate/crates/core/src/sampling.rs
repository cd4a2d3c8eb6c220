//! Seeded sampling shared by the zero test, concavity checks and discovery.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniform on `[-2, -0.1] ∪ [0.1, 2]`.
pub fn draw_away_from_zero(rng: &mut ChaCha8Rng) -> f64 {
    let magnitude = rng.random_range(0.1..=2.0);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}
