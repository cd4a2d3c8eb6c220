//! Dormand–Prince 5(4) with an elementary step controller.
//!
//! Output times are hit exactly (steps are clipped to land on them); accepted
//! step endpoints are kept as cubic Hermite knots for dense evaluation in
//! between.

use super::IntegrationError;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order weights minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// First-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
    /// Largest `‖err‖∞` over accepted steps.
    pub max_local_error: f64,
    /// Sum of `‖err‖∞` over accepted steps; a rough global error estimate.
    pub accumulated_error: f64,
}

/// Accepted step endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Knot {
    pub t: f64,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub outputs: Vec<(f64, Vec<f64>)>,
    pub knots: Vec<Knot>,
    pub stats: StepStats,
}

/// Cubic Hermite interpolation between two knots.
pub fn hermite(k0: &Knot, k1: &Knot, t: f64) -> Vec<f64> {
    let h = k1.t - k0.t;
    let s = (t - k0.t) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..k0.y.len())
        .map(|i| h00 * k0.y[i] + h10 * h * k0.dy[i] + h01 * k1.y[i] + h11 * h * k1.dy[i])
        .collect()
}

/// Dense evaluation over a monotone knot sequence; `None` outside the range.
pub fn dense(knots: &[Knot], t: f64) -> Option<Vec<f64>> {
    let first = knots.first()?;
    let last = knots.last()?;
    let forward = last.t >= first.t;
    let (lo, hi) = if forward {
        (first.t, last.t)
    } else {
        (last.t, first.t)
    };
    if !(lo..=hi).contains(&t) {
        return None;
    }
    if knots.len() == 1 {
        return Some(first.y.clone());
    }
    let idx = knots.partition_point(|k| if forward { k.t <= t } else { k.t >= t });
    let i = idx.clamp(1, knots.len() - 1);
    Some(hermite(&knots[i - 1], &knots[i], t))
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], tol: &Tolerances) -> f64 {
    err.iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| e.abs() / (tol.atol + tol.rtol * a.abs().max(b.abs())))
        .fold(0.0, f64::max)
}

fn initial_step<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    dir: f64,
    span: f64,
    tol: &Tolerances,
) -> Result<f64, IntegrationError> {
    let rms = |v: &[f64]| {
        let n = v.len().max(1) as f64;
        (v.iter()
            .zip(y0)
            .map(|(vi, yi)| {
                let sc = tol.atol + tol.rtol * yi.abs();
                (vi / sc).powi(2)
            })
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + dir * h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    sys.rhs(t0 + dir * h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Integrates from `(t0, y0)` through every time in `outputs` (which must be
/// monotone in the direction of integration, starting at or after `t0`).
pub fn solve<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    tol: &Tolerances,
) -> Result<Solution, IntegrationError> {
    let n = sys.dim();
    if y0.len() != n {
        return Err(IntegrationError::DimensionMismatch {
            expected: n,
            found: y0.len(),
        });
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::NonFiniteState { t: t0 });
    }
    if !(tol.rtol > 0.0 && tol.atol > 0.0 && tol.rtol.is_finite() && tol.atol.is_finite()) {
        return Err(IntegrationError::BadTolerance {
            rtol: tol.rtol,
            atol: tol.atol,
        });
    }
    let t_end = outputs.last().copied().unwrap_or(t0);
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    if outputs.iter().any(|t| !t.is_finite())
        || outputs.windows(2).any(|w| (w[1] - w[0]) * dir < 0.0)
        || outputs.first().is_some_and(|t| (t - t0) * dir < 0.0)
    {
        return Err(IntegrationError::BadSpan {
            start: t0,
            end: t_end,
        });
    }

    let mut stats = StepStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    sys.rhs(t, &y, &mut k1)?;
    stats.rhs_evaluations += 1;
    let mut knots = vec![Knot {
        t,
        y: y.clone(),
        dy: k1.clone(),
    }];
    let mut result = Vec::with_capacity(outputs.len());
    let mut next = 0;
    while next < outputs.len() && outputs[next] == t {
        result.push((t, y.clone()));
        next += 1;
    }
    if next == outputs.len() {
        return Ok(Solution {
            outputs: result,
            knots,
            stats,
        });
    }

    let span = (t_end - t0).abs();
    let mut h = initial_step(sys, t, &y, &k1, dir, span, tol)?;
    stats.rhs_evaluations += 1;

    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut last_rejected = false;

    while next < outputs.len() {
        if stats.accepted + stats.rejected >= tol.max_steps {
            return Err(IntegrationError::TooManySteps { t });
        }
        let target = outputs[next];
        let remaining = (target - t).abs();
        let clipped = remaining <= h * (1.0 + 1e-12);
        let step = if clipped { remaining } else { h };
        if step < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(IntegrationError::StepSizeUnderflow { t });
        }
        let hs = dir * step;

        let stages: Result<(), IntegrationError> = (|| {
            for i in 0..n {
                stage[i] = y[i] + hs * A21 * k1[i];
            }
            sys.rhs(t + C2 * hs, &stage, &mut k2)?;
            for i in 0..n {
                stage[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
            }
            sys.rhs(t + C3 * hs, &stage, &mut k3)?;
            for i in 0..n {
                stage[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            sys.rhs(t + C4 * hs, &stage, &mut k4)?;
            for i in 0..n {
                stage[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            sys.rhs(t + C5 * hs, &stage, &mut k5)?;
            for i in 0..n {
                stage[i] = y[i]
                    + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            sys.rhs(t + hs, &stage, &mut k6)?;
            for i in 0..n {
                y5[i] = y[i]
                    + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            sys.rhs(t + hs, &y5, &mut k7)?;
            Ok(())
        })();
        stats.rhs_evaluations += 6;

        let norm = match stages {
            Ok(()) => {
                for i in 0..n {
                    err[i] = hs
                        * (E1 * k1[i]
                            + E3 * k3[i]
                            + E4 * k4[i]
                            + E5 * k5[i]
                            + E6 * k6[i]
                            + E7 * k7[i]);
                }
                error_norm(&err, &y, &y5, tol)
            }
            // A stage left the domain of the field: treat as a failed step.
            Err(IntegrationError::NonFiniteState { .. }) => f64::NAN,
            Err(other) => return Err(other),
        };

        if norm.is_finite() && norm <= 1.0 {
            if y5.iter().any(|v| !v.is_finite()) {
                return Err(IntegrationError::NonFiniteState { t });
            }
            t = if clipped { target } else { t + hs };
            std::mem::swap(&mut y, &mut y5);
            std::mem::swap(&mut k1, &mut k7);
            let local = err.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
            stats.accepted += 1;
            stats.max_local_error = stats.max_local_error.max(local);
            stats.accumulated_error += local;
            knots.push(Knot {
                t,
                y: y.clone(),
                dy: k1.clone(),
            });
            while next < outputs.len() && outputs[next] == t {
                result.push((t, y.clone()));
                next += 1;
            }
            let mut fac = (SAFETY * norm.max(1e-10).powf(-0.2)).clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            let proposed = step * fac;
            h = if clipped { proposed.max(h) } else { proposed };
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = if norm.is_finite() {
                (SAFETY * norm.powf(-0.2)).clamp(FAC_MIN, 1.0)
            } else {
                FAC_MIN
            };
            h = step * fac;
            last_rejected = true;
        }
    }

    Ok(Solution {
        outputs: result,
        knots,
        stats,
    })
}
