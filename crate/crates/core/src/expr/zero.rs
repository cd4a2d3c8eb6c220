//! Probabilistic identity testing for expressions the normal form does not
//! reduce to zero (mostly rational identities with sum denominators).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Expr, ExprError, Tape};
use crate::sampling::draw_away_from_zero;

/// Number of admissible sample points that must all vanish.
pub const ZERO_TEST_SAMPLES: usize = 32;
/// Upper bound on draws, counting points rejected for domain errors.
pub const ZERO_TEST_MAX_ATTEMPTS: usize = 256;

const RELATIVE_TOLERANCE: f64 = 1e-9;

/// Decides `e ≡ 0`.
///
/// Returns `true` at once when the normal form is the constant zero.
/// Otherwise evaluates at seeded random points and reports `true` only if
/// every value satisfies `|v| ≤ 1e-9·(1 + m)`, with `m` the largest
/// intermediate magnitude of that evaluation.
pub fn is_zero(e: &Expr, seed: u64) -> Result<bool, ExprError> {
    let e = e.normalize();
    if e.is_zero_const() {
        return Ok(true);
    }
    let vars: Vec<String> = e.free_variables().into_iter().collect();
    let tape = Tape::compile(&e, &vars)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; vars.len()];
    let mut stack = Vec::new();
    let mut accepted = 0;
    for _ in 0..ZERO_TEST_MAX_ATTEMPTS {
        values
            .iter_mut()
            .for_each(|v| *v = draw_away_from_zero(&mut rng));
        match tape.eval_with_magnitude(&values, &mut stack) {
            Ok((v, mag)) => {
                if v.abs() > RELATIVE_TOLERANCE * (1.0 + mag) {
                    return Ok(false);
                }
                accepted += 1;
                if accepted == ZERO_TEST_SAMPLES {
                    return Ok(true);
                }
            }
            Err(ExprError::Domain(_)) => continue,
            Err(other) => return Err(other),
        }
    }
    Err(ExprError::Undecidable {
        attempts: ZERO_TEST_MAX_ATTEMPTS,
    })
}
