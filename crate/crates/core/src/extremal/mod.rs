//! The control-eliminated Hamiltonian system `ẋ = ∂H/∂ψ`, `ψ̇ = -∂H/∂x` and
//! its numerical integration into sampled extremals.
//!
//! Any initial point `(x(a), ψ(a))` integrated through the eliminated field
//! satisfies the Hamiltonian system and the maximality condition, so it is an
//! extremal regardless of boundary conditions.

pub mod dopri;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{Binding, Expr, ExprError, Tape, PSI0, TIME};
use crate::ocp::{build_hamiltonian, ControlElimination, OcProblem};

pub use dopri::{Knot, OdeSystem, StepStats, Tolerances};

pub const DEFAULT_RTOL: f64 = 1e-10;
pub const DEFAULT_ATOL: f64 = 1e-12;
pub const DEFAULT_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t} (stiff or blowing-up extremal)")]
    StepSizeUnderflow { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
    #[error("invalid span [{start}, {end}]")]
    BadSpan { start: f64, end: f64 },
    #[error("tolerances must be positive and finite (rtol = {rtol}, atol = {atol})")]
    BadTolerance { rtol: f64, atol: f64 },
    #[error("expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("at least two samples are required, got {0}")]
    BadSampleCount(usize),
    #[error("psi0 must be <= 0, got {0}")]
    BadPsi0(f64),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Hamiltonian vector field with controls and `psi0` substituted out.
#[derive(Debug, Clone)]
pub struct ExtremalField {
    problem: OcProblem,
    psi0: f64,
    hamiltonian: Expr,
    reduced_hamiltonian: Expr,
    rhs: Vec<Expr>,
    elimination: ControlElimination,
    control_laws: Vec<Expr>,
    rhs_tapes: Vec<Tape>,
    control_tapes: Vec<Tape>,
}

/// Slot layout shared by every tape of a field: `[t, x1..xn, psi1..psin]`.
fn field_slots(p: &OcProblem) -> Vec<String> {
    std::iter::once(TIME.to_string())
        .chain(p.states().iter().cloned())
        .chain(p.costates().iter().cloned())
        .collect()
}

pub fn build_field(
    p: &OcProblem,
    elimination: &ControlElimination,
    psi0: f64,
) -> Result<ExtremalField, IntegrationError> {
    if !(psi0.is_finite() && psi0 <= 0.0) {
        return Err(IntegrationError::BadPsi0(psi0));
    }
    let hamiltonian = build_hamiltonian(p);
    // Substitution is simultaneous, so fold psi0 into the control law first.
    let psi0_only = BTreeMap::from([(PSI0.to_string(), Expr::from_f64(psi0))]);
    let mut reduce: BTreeMap<String, Expr> = elimination
        .map
        .iter()
        .map(|(u, law)| (u.clone(), law.substitute(&psi0_only)))
        .collect();
    reduce.extend(psi0_only);

    let reduced_hamiltonian = hamiltonian.substitute(&reduce);
    let mut rhs = Vec::with_capacity(2 * p.state_dim());
    for psi in p.costates() {
        rhs.push(hamiltonian.diff(psi).substitute(&reduce));
    }
    for x in p.states() {
        rhs.push((-hamiltonian.diff(x)).substitute(&reduce));
    }
    let control_laws: Vec<Expr> = p
        .controls()
        .iter()
        .map(|u| elimination.map[u].substitute(&reduce))
        .collect();

    let slots = field_slots(p);
    let rhs_tapes = rhs
        .iter()
        .map(|e| Tape::compile(e, &slots))
        .collect::<Result<_, _>>()?;
    let control_tapes = control_laws
        .iter()
        .map(|e| Tape::compile(e, &slots))
        .collect::<Result<_, _>>()?;

    Ok(ExtremalField {
        problem: p.clone(),
        psi0,
        hamiltonian,
        reduced_hamiltonian,
        rhs,
        elimination: elimination.clone(),
        control_laws,
        rhs_tapes,
        control_tapes,
    })
}

impl ExtremalField {
    pub fn problem(&self) -> &OcProblem {
        &self.problem
    }

    pub fn psi0(&self) -> f64 {
        self.psi0
    }

    /// `H` with controls symbolic.
    pub fn hamiltonian(&self) -> &Expr {
        &self.hamiltonian
    }

    /// `H` after substituting the control law and the value of `psi0`.
    pub fn reduced_hamiltonian(&self) -> &Expr {
        &self.reduced_hamiltonian
    }

    /// `2n` right-hand sides: `∂H/∂psiᵢ` then `-∂H/∂xᵢ`.
    pub fn rhs(&self) -> &[Expr] {
        &self.rhs
    }

    pub fn elimination(&self) -> &ControlElimination {
        &self.elimination
    }

    /// Control law with `psi0` folded in, one per control.
    pub fn control_laws(&self) -> &[Expr] {
        &self.control_laws
    }

    pub fn dimension(&self) -> usize {
        self.rhs.len()
    }

    fn controls_at(&self, t: f64, y: &[f64], stack: &mut Vec<f64>) -> Result<Vec<f64>, ExprError> {
        let mut values = Vec::with_capacity(y.len() + 1);
        values.push(t);
        values.extend_from_slice(y);
        self.control_tapes
            .iter()
            .map(|tape| tape.eval(&values, stack))
            .collect()
    }

    /// Integrates `(x, ψ)` from `t0` to `t1` in either direction and returns
    /// the final state with step statistics.
    pub fn flow(
        &self,
        t0: f64,
        y0: &[f64],
        t1: f64,
        tol: &Tolerances,
    ) -> Result<(Vec<f64>, StepStats), IntegrationError> {
        let sol = dopri::solve(self, t0, y0, &[t1], tol)?;
        let (_, y) = sol.outputs.into_iter().last().expect("one output");
        Ok((y, sol.stats))
    }
}

impl OdeSystem for ExtremalField {
    fn dim(&self) -> usize {
        self.rhs.len()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError> {
        let mut values = Vec::with_capacity(y.len() + 1);
        values.push(t);
        values.extend_from_slice(y);
        let mut stack = Vec::new();
        for (out, tape) in dy.iter_mut().zip(&self.rhs_tapes) {
            *out = tape
                .eval(&values, &mut stack)
                .map_err(|_| IntegrationError::NonFiniteState { t })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub rtol: f64,
    pub atol: f64,
    pub samples: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            samples: DEFAULT_SAMPLES,
        }
    }
}

/// Time-sampled extremal `(x(t), u(t), ψ₀, ψ(t))`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub costates: Vec<Vec<f64>>,
    pub psi0: f64,
    pub stats: StepStats,
    state_names: Vec<String>,
    control_names: Vec<String>,
    costate_names: Vec<String>,
    knots: Vec<Knot>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn control_names(&self) -> &[String] {
        &self.control_names
    }

    pub fn costate_names(&self) -> &[String] {
        &self.costate_names
    }

    /// Variable names in the slot order used by [`Trajectory::values`].
    pub fn slots(&self) -> Vec<String> {
        std::iter::once(TIME.to_string())
            .chain(self.state_names.iter().cloned())
            .chain(self.control_names.iter().cloned())
            .chain(std::iter::once(PSI0.to_string()))
            .chain(self.costate_names.iter().cloned())
            .collect()
    }

    /// Sample `k` as a value vector in [`Trajectory::slots`] order.
    pub fn values(&self, k: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 + 2 * self.states[k].len() + self.controls[k].len());
        v.push(self.times[k]);
        v.extend_from_slice(&self.states[k]);
        v.extend_from_slice(&self.controls[k]);
        v.push(self.psi0);
        v.extend_from_slice(&self.costates[k]);
        v
    }

    pub fn binding(&self, k: usize) -> Binding {
        Binding::from_pairs(self.slots().into_iter().zip(self.values(k)))
    }

    /// `(x, ψ)` at an arbitrary time inside the span, by cubic Hermite
    /// interpolation between accepted steps.
    pub fn dense_state(&self, t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let y = dopri::dense(&self.knots, t)?;
        let n = self.state_names.len();
        Some((y[..n].to_vec(), y[n..].to_vec()))
    }
}

/// Integrates an extremal from `(x0, psi_init)` over `span`, sampling on a
/// uniform grid of `options.samples` points including both endpoints.
pub fn integrate(
    field: &ExtremalField,
    x0: &[f64],
    psi_init: &[f64],
    span: (f64, f64),
    options: &IntegrationOptions,
) -> Result<Trajectory, IntegrationError> {
    let p = field.problem();
    let n = p.state_dim();
    for given in [x0.len(), psi_init.len()] {
        if given != n {
            return Err(IntegrationError::DimensionMismatch {
                expected: n,
                found: given,
            });
        }
    }
    let (a, b) = p.horizon();
    let (start, end) = span;
    let slack = 1e-12 * (b - a).abs().max(1.0);
    if !(start < end && start >= a - slack && end <= b + slack) {
        return Err(IntegrationError::BadSpan { start, end });
    }
    if options.samples < 2 {
        return Err(IntegrationError::BadSampleCount(options.samples));
    }
    let k_max = options.samples - 1;
    let grid: Vec<f64> = (0..options.samples)
        .map(|k| {
            if k == k_max {
                end
            } else {
                start + (end - start) * (k as f64) / (k_max as f64)
            }
        })
        .collect();

    let y0: Vec<f64> = x0.iter().chain(psi_init).copied().collect();
    let tol = Tolerances {
        rtol: options.rtol,
        atol: options.atol,
        ..Tolerances::default()
    };
    let sol = dopri::solve(field, start, &y0, &grid, &tol)?;

    let mut stack = Vec::new();
    let mut traj = Trajectory {
        times: Vec::with_capacity(grid.len()),
        states: Vec::with_capacity(grid.len()),
        controls: Vec::with_capacity(grid.len()),
        costates: Vec::with_capacity(grid.len()),
        psi0: field.psi0(),
        stats: sol.stats,
        state_names: p.states().to_vec(),
        control_names: p.controls().to_vec(),
        costate_names: p.costates().to_vec(),
        knots: sol.knots,
    };
    for (t, y) in sol.outputs {
        let u = field
            .controls_at(t, &y, &mut stack)
            .map_err(|_| IntegrationError::NonFiniteState { t })?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(IntegrationError::NonFiniteState { t });
        }
        traj.times.push(t);
        traj.states.push(y[..n].to_vec());
        traj.costates.push(y[n..].to_vec());
        traj.controls.push(u);
    }
    Ok(traj)
}

/// `F` at every sample of the trajectory.
pub fn evaluate_along(tr: &Trajectory, f: &Expr) -> Result<Vec<(f64, f64)>, ExprError> {
    let tape = Tape::compile(f, &tr.slots())?;
    let mut stack = Vec::new();
    (0..tr.len())
        .map(|k| Ok((tr.times[k], tape.eval(&tr.values(k), &mut stack)?)))
        .collect()
}

/// Integrates `count` extremals over the whole horizon from initial values
/// drawn uniformly from `[-1, 1]` with a generator seeded by `seed`.
///
/// Draws whose integration fails (blow-up inside the horizon) are replaced,
/// up to `4·count` draws in total; the last failure is returned if the
/// budget runs out.
pub fn seeded_extremals(
    field: &ExtremalField,
    count: usize,
    seed: u64,
    options: &IntegrationOptions,
) -> Result<Vec<Trajectory>, IntegrationError> {
    let n = field.problem().state_dim();
    let span = field.problem().horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut last_error = None;
    for _ in 0..4 * count.max(1) {
        if out.len() == count {
            break;
        }
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let psi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        match integrate(field, &x0, &psi, span, options) {
            Ok(tr) => out.push(tr),
            Err(e) => last_error = Some(e),
        }
    }
    match (out.len() == count, last_error) {
        (false, Some(e)) => Err(e),
        _ => Ok(out),
    }
}

/// Control map with `psi0` folded, keyed by control name.
pub fn control_law_map(field: &ExtremalField) -> BTreeMap<String, Expr> {
    field
        .problem()
        .controls()
        .iter()
        .cloned()
        .zip(field.control_laws().iter().cloned())
        .collect()
}
