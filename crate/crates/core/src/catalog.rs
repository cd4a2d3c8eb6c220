//! Built-in problems with known constants of the motion, used by the tests,
//! the acceptance suite and as templates for problem files.

use crate::ocp::{OcProblem, ProblemError, ProblemSpec};

fn build(
    name: &str,
    states: usize,
    controls: usize,
    horizon: (f64, f64),
    lagrangian: &str,
    dynamics: &[&str],
) -> OcProblem {
    ProblemSpec::from_text(name, states, controls, horizon, lagrangian, dynamics)
        .map_err(ProblemError::from)
        .and_then(ProblemSpec::validate)
        .unwrap_or_else(|e| panic!("built-in problem {name} is invalid: {e}"))
}

/// `L = u1² + u2²` with a quartic central force; conserves the angular
/// momentum `-psi1·x2 + psi2·x1 - psi3·x4 + psi4·x3`.
pub fn quartic_oscillator() -> OcProblem {
    build(
        "quartic_oscillator",
        4,
        2,
        (0.0, 5.0),
        "u1^2 + u2^2",
        &[
            "x3",
            "x4",
            "-x1*(x1^2 + x2^2) + u1",
            "-x2*(x1^2 + x2^2) + u2",
        ],
    )
}

pub const QUARTIC_MOMENTUM: &str = "-psi1*x2 + psi2*x1 - psi3*x4 + psi4*x3";

/// `L = u1²`, `ẋ1 = u1` on `[0, 1]`.
pub fn scalar() -> OcProblem {
    build("scalar", 1, 1, (0.0, 1.0), "u1^2", &["u1"])
}

/// Non-autonomous instance on `[1, 2]` for which `psi1·x1 + H·t` is conserved.
pub fn time_scaled() -> OcProblem {
    build(
        "time_scaled",
        1,
        1,
        (1.0, 2.0),
        "((t*x1)^2 + u1^2)/t",
        &["u1/t^2"],
    )
}

pub const TIME_SCALED_INVARIANT: &str = "psi1*x1 + H*t";

/// `L = u1²`, `ẋ1 = u1·x1`, for which `H·psi1·x1` is conserved.
pub fn bilinear_scalar() -> OcProblem {
    build("bilinear_scalar", 1, 1, (0.0, 1.0), "u1^2", &["u1*x1"])
}

pub const BILINEAR_SCALAR_INVARIANT: &str = "H*psi1*x1";

/// Two-state, two-control problem `ẋ1 = x2`, `ẋ2 = c1·x1·u1 + c2·x1·u2`.
/// The input fields are homogeneous of degree one in `x1`, so
/// `psi1·x1 + psi2·x2` is conserved.
pub fn cubic_spline_homogeneous(c: [i64; 2]) -> OcProblem {
    let second = format!("{}*x1*u1 + {}*x1*u2", c[0], c[1]);
    build(
        "cubic_spline_homogeneous",
        2,
        2,
        (0.0, 1.0),
        "u1^2 + u2^2",
        &["x2", &second],
    )
}

/// Same as [`cubic_spline_homogeneous`] with both input fields equal to
/// `x1²`, which breaks homogeneity.
pub fn cubic_spline_quadratic() -> OcProblem {
    build(
        "cubic_spline_quadratic",
        2,
        2,
        (0.0, 1.0),
        "u1^2 + u2^2",
        &["x2", "x1^2*u1 + x1^2*u2"],
    )
}

pub const CUBIC_SPLINE_MOMENTUM: &str = "psi1*x1 + psi2*x2";
