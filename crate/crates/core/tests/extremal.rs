mod common;

use ocp_invariants::catalog;
use ocp_invariants::expr::parse;
use ocp_invariants::extremal::{
    build_field, integrate, seeded_extremals, ExtremalField, IntegrationOptions, Tolerances,
};
use ocp_invariants::ocp::{build_hamiltonian, eliminate_controls, OcProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field(p: &OcProblem) -> ExtremalField {
    let elim = eliminate_controls(p, &build_hamiltonian(p)).unwrap();
    build_field(p, &elim, p.psi0()).unwrap()
}

fn tol(rtol: f64) -> Tolerances {
    Tolerances {
        rtol,
        atol: rtol * 1e-2,
        ..Tolerances::default()
    }
}

/// Hand-written quartic oscillator extremal field with `psi0 = -1`, so
/// `u = psi[2..4] / 2`.
fn quartic_rhs(_t: f64, y: &[f64]) -> Vec<f64> {
    let (x1, x2, x3, x4) = (y[0], y[1], y[2], y[3]);
    let (p1, p2, p3, p4) = (y[4], y[5], y[6], y[7]);
    let r2 = x1 * x1 + x2 * x2;
    vec![
        x3,
        x4,
        p3 / 2.0 - x1 * r2,
        p4 / 2.0 - x2 * r2,
        p3 * (3.0 * x1 * x1 + x2 * x2) + 2.0 * p4 * x1 * x2,
        2.0 * p3 * x1 * x2 + p4 * (x1 * x1 + 3.0 * x2 * x2),
        -p1,
        -p2,
    ]
}

#[test]
fn quartic_field_matches_hand_derivation() {
    let p = catalog::quartic_oscillator();
    let f = field(&p);
    let symbols = p.symbols();
    let expected = [
        "x3",
        "x4",
        "psi3/2 - x1^3 - x1*x2^2",
        "psi4/2 - x2^3 - x1^2*x2",
        "psi3*(3*x1^2 + x2^2) + 2*psi4*x1*x2",
        "2*psi3*x1*x2 + psi4*(x1^2 + 3*x2^2)",
        "-psi1",
        "-psi2",
    ];
    assert_eq!(f.rhs().len(), expected.len());
    for (got, want) in f.rhs().iter().zip(expected) {
        assert_eq!(got, &parse(want, &symbols).unwrap(), "{want}");
    }
}

#[test]
fn quartic_terminal_state_agrees_with_references() {
    let p = catalog::quartic_oscillator();
    let f = field(&p);
    for psi in [[0.0; 4], [0.3, -0.2, 0.1, 0.4]] {
        let y0: Vec<f64> = [1.0, 0.0, 0.0, 0.5].iter().chain(&psi).copied().collect();
        let (y, _) = f.flow(0.0, &y0, 5.0, &tol(1e-10)).unwrap();
        let (tight, _) = f.flow(0.0, &y0, 5.0, &tol(1e-13)).unwrap();
        let rk4 = common::rk4(quartic_rhs, 0.0, &y0, 5.0, 1e-5);
        let vs_tight = common::max_relative_deviation(&y, &tight);
        let vs_rk4 = common::max_relative_deviation(&y, &rk4);
        assert!(vs_tight <= 1e-7, "tight-tolerance deviation {vs_tight:e}");
        assert!(vs_rk4 <= 1e-7, "RK4 deviation {vs_rk4:e}");
    }
}

fn terminal_deviations(p: &OcProblem, y0: &[f64], rtols: &[f64]) -> Vec<f64> {
    let f = field(p);
    let (a, b) = p.horizon();
    let (reference, _) = f.flow(a, y0, b, &tol(1e-14)).unwrap();
    rtols
        .iter()
        .map(|&r| {
            let (y, _) = f.flow(a, y0, b, &tol(r)).unwrap();
            common::max_relative_deviation(&y, &reference)
        })
        .collect()
}

#[test]
fn halving_tolerance_reduces_deviation() {
    let p = catalog::quartic_oscillator();
    let rtols = [1e-6, 5e-7, 2.5e-7, 1.25e-7, 6.25e-8];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let y0: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dev = terminal_deviations(&p, &y0, &rtols);
        for w in dev.windows(2) {
            assert!(w[1] < w[0], "{y0:?}: deviations {dev:?}");
        }
    }
}

#[test]
fn tighter_tolerance_reduces_deviation_on_random_problems() {
    for seed in 0..5 {
        let p = common::random_quadratic_problem(seed);
        let y0: Vec<f64> = (0..2 * p.state_dim())
            .map(|i| 0.5 - 0.15 * i as f64)
            .collect();
        let dev = terminal_deviations(&p, &y0, &[1e-6, 1e-9]);
        assert!(dev[1] < dev[0], "{}: deviations {dev:?}", p.name());
    }
}

#[test]
fn backward_flow_returns_to_start() {
    let p = catalog::quartic_oscillator();
    let f = field(&p);
    let y0 = [1.0, 0.0, 0.0, 0.5, 0.3, -0.2, 0.1, 0.4];
    let t = tol(1e-10);
    let (y1, fwd) = f.flow(0.0, &y0, 5.0, &t).unwrap();
    let (back, bwd) = f.flow(5.0, &y1, 0.0, &t).unwrap();
    let gap = y0
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let estimate = fwd.accumulated_error + bwd.accumulated_error;
    assert!(
        gap <= 10.0 * estimate + 1e-13,
        "gap {gap:e}, estimate {estimate:e}"
    );
}

#[test]
fn autonomous_hamiltonian_is_conserved() {
    let opts = IntegrationOptions::default();
    let catalog_problems = [
        catalog::quartic_oscillator(),
        catalog::scalar(),
        catalog::bilinear_scalar(),
        catalog::cubic_spline_homogeneous([1, 2]),
    ];
    let random_problems = (0..3).map(common::random_quadratic_problem);
    for p in catalog_problems.into_iter().chain(random_problems) {
        assert!(p.is_autonomous());
        let f = field(&p);
        for tr in seeded_extremals(&f, 5, 17, &opts).unwrap() {
            let (by_value, by_scale) = common::hamiltonian_drift(&tr, f.hamiltonian());
            assert!(
                by_value <= 100.0 * opts.rtol,
                "{}: drift {by_value:e}",
                p.name()
            );
            assert!(by_scale <= by_value);
        }
    }
}

#[test]
fn samples_land_on_the_grid_and_dense_output_interpolates() {
    let p = catalog::quartic_oscillator();
    let f = field(&p);
    let opts = IntegrationOptions {
        samples: 11,
        ..IntegrationOptions::default()
    };
    let tr = integrate(&f, &[1.0, 0.0, 0.0, 0.5], &[0.0; 4], (0.0, 5.0), &opts).unwrap();
    assert_eq!(
        tr.times,
        (0..11).map(|k| k as f64 * 0.5).collect::<Vec<_>>()
    );
    let (x, psi) = tr.dense_state(2.25).unwrap();
    let (direct, _) = f
        .flow(
            0.0,
            &[1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0],
            2.25,
            &tol(1e-12),
        )
        .unwrap();
    let dense: Vec<f64> = x.into_iter().chain(psi).collect();
    assert!(common::max_relative_deviation(&dense, &direct) < 1e-5);
}
