#![allow(dead_code)]

use ocp_invariants::discovery::snap;
use ocp_invariants::expr::{evaluate, Binding, Expr, Func, Tape};
use ocp_invariants::extremal::Trajectory;
use ocp_invariants::ocp::{OcProblem, ProblemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small nonzero integer coefficient.
fn coefficient(rng: &mut ChaCha8Rng) -> i64 {
    let c = rng.random_range(1..=3);
    if rng.random_bool(0.5) {
        c
    } else {
        -c
    }
}

/// Random polynomial of total degree <= `max_degree` in `vars`, with a few
/// terms.
fn random_poly(rng: &mut ChaCha8Rng, vars: &[String], max_degree: usize) -> String {
    let mut terms = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        let degree = rng.random_range(0..=max_degree);
        let mut term = coefficient(rng).to_string();
        for _ in 0..degree {
            term.push('*');
            term.push_str(&vars[rng.random_range(0..vars.len())]);
        }
        terms.push(term);
    }
    terms.join(" + ")
}

/// Autonomous problem with `n <= 3` states and `r <= 2` controls, cost
/// quadratic in `(x, u)` and strictly convex in `u`, dynamics affine in `u`
/// with polynomial drift of degree <= 2, on a horizon short enough that
/// extremals from `[-1, 1]` initial data stay bounded.
pub fn random_quadratic_problem(seed: u64) -> OcProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=3);
    let r = rng.random_range(1..=2);
    let xs: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let mut lagrangian: Vec<String> = (1..=r)
        .map(|j| format!("{}*u{j}^2", rng.random_range(1..=2)))
        .collect();
    lagrangian.push(format!("({})^2", random_poly(&mut rng, &xs[..1], 1)));
    let dynamics: Vec<String> = (0..n)
        .map(|i| {
            let mut d = random_poly(&mut rng, &xs, 2);
            if i < r || rng.random_bool(0.5) {
                d.push_str(&format!(" + {}*u{}", coefficient(&mut rng), i % r + 1));
            }
            d
        })
        .collect();
    let dyn_refs: Vec<&str> = dynamics.iter().map(String::as_str).collect();
    ProblemSpec::from_text(
        &format!("random-{seed}"),
        n,
        r,
        (0.0, 0.25),
        &lagrangian.join(" + "),
        &dyn_refs,
    )
    .expect("generated problem parses")
    .validate()
    .expect("generated problem is valid")
}

/// Random smooth expression over `vars` with depth at most `depth`.
pub fn random_expr(rng: &mut ChaCha8Rng, vars: &[&str], depth: u32) -> Expr {
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.7) {
            Expr::var(vars[rng.random_range(0..vars.len())])
        } else {
            Expr::rational(coefficient(rng), rng.random_range(1..=4))
        };
    }
    let sub = |rng: &mut ChaCha8Rng| random_expr(rng, vars, depth - 1);
    match rng.random_range(0..6) {
        0 => Expr::Sum((0..rng.random_range(2..=3)).map(|_| sub(rng)).collect()),
        1 => Expr::Product((0..2).map(|_| sub(rng)).collect()),
        2 => Expr::Pow(Box::new(sub(rng)), rng.random_range(-2..=3)),
        3 => Expr::Neg(Box::new(sub(rng))),
        4 => {
            let func = [Func::Sin, Func::Cos, Func::Exp][rng.random_range(0..3)];
            Expr::apply(func, sub(rng))
        }
        _ => {
            // log and sqrt of a strictly positive argument
            let arg = Expr::Sum(vec![Expr::Pow(Box::new(sub(rng)), 2), Expr::one()]);
            let func = if rng.random_bool(0.5) {
                Func::Log
            } else {
                Func::Sqrt
            };
            Expr::apply(func, arg)
        }
    }
}

pub fn eval_at(e: &Expr, vars: &[&str], point: &[f64]) -> Option<f64> {
    let binding = Binding::from_pairs(vars.iter().copied().zip(point.iter().copied()));
    evaluate(e, &binding).ok().filter(|v| v.is_finite())
}

/// Central-difference derivative of `e` along `vars[k]`: the fourth-order
/// stencil at steps `h` and `h/2`, combined by Richardson extrapolation.
/// `None` when a stencil point leaves the domain.
pub fn central_difference(e: &Expr, vars: &[&str], point: &[f64], k: usize) -> Option<f64> {
    let at = |offset: f64| {
        let mut p = point.to_vec();
        p[k] += offset;
        eval_at(e, vars, &p)
    };
    let stencil = |h: f64| -> Option<f64> {
        let (f2m, f1m, f1p, f2p) = (at(-2.0 * h)?, at(-h)?, at(h)?, at(2.0 * h)?);
        Some((f2m - 8.0 * f1m + 8.0 * f1p - f2p) / (12.0 * h))
    };
    let h = 1e-3 * (1.0 + point[k].abs());
    let (coarse, fine) = (stencil(h)?, stencil(h / 2.0)?);
    Some(fine + (fine - coarse) / 15.0)
}

/// Classic fixed-step RK4, independent of the adaptive integrator.
pub fn rk4<F>(f: F, t0: f64, y0: &[f64], t1: f64, h: f64) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let steps = ((t1 - t0) / h).abs().ceil() as usize;
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.to_vec();
    let mut t = t0;
    let axpy = |y: &[f64], k: &[f64], a: f64| -> Vec<f64> {
        y.iter().zip(k).map(|(y, k)| y + a * k).collect()
    };
    for _ in 0..steps {
        let k1 = f(t, &y);
        let k2 = f(t + h / 2.0, &axpy(&y, &k1, h / 2.0));
        let k3 = f(t + h / 2.0, &axpy(&y, &k2, h / 2.0));
        let k4 = f(t + h, &axpy(&y, &k3, h));
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
    }
    y
}

pub fn max_relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
        .fold(0.0, f64::max)
}

/// Drift of `h` along `tr` as `(max |ΔH| / (1 + |H0|), max |ΔH| / (1 + S))`,
/// where `S` is the largest intermediate magnitude met while evaluating `h`
/// on the trajectory. The second form measures drift against the size of the
/// terms that cancel inside `H`, which is what the integrator's relative
/// tolerance controls.
pub fn hamiltonian_drift(tr: &Trajectory, h: &Expr) -> (f64, f64) {
    let tape = Tape::compile(h, &tr.slots()).expect("H compiles over trajectory slots");
    let mut stack = Vec::new();
    let mut scale = 0.0_f64;
    let mut values = Vec::with_capacity(tr.len());
    for k in 0..tr.len() {
        let (v, m) = tape.eval_with_magnitude(&tr.values(k), &mut stack).unwrap();
        scale = scale.max(m);
        values.push(v);
    }
    let drift = values
        .iter()
        .map(|v| (v - values[0]).abs())
        .fold(0.0, f64::max);
    (drift / (1.0 + values[0].abs()), drift / (1.0 + scale))
}

/// `a = k·b` for a small rational `k`, with `k` read off one evaluation.
pub fn same_up_to_scale(a: &Expr, b: &Expr) -> bool {
    let vars: Vec<String> = a
        .free_variables()
        .union(&b.free_variables())
        .cloned()
        .collect();
    let binding = Binding::from_pairs(
        vars.iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), 0.3 + 0.17 * i as f64)),
    );
    let (Ok(va), Ok(vb)) = (evaluate(a, &binding), evaluate(b, &binding)) else {
        return false;
    };
    match snap(va / vb) {
        Some(k) => (a - &(&Expr::Const(k) * b)).is_zero_const(),
        None => false,
    }
}
