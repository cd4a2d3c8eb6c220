//! Optimal control problem model, Pontryagin Hamiltonian and symbolic control
//! elimination through the interior stationarity conditions `∂H/∂u = 0`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{self, is_zero, parse, Binding, Expr, ExprError, PSI0, TIME};
use crate::sampling::draw_away_from_zero;

/// Seed for the internal zero tests and concavity samples of this module.
const ELIMINATION_SEED: u64 = 0x05ee_d0c9;
const CONCAVITY_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProblemError {
    #[error("dimension mismatch: expected {expected} dynamics entries, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("`{name}` may not appear in {location}")]
    ForbiddenSymbol { name: String, location: String },
    #[error("horizon must satisfy a < b, got [{a}, {b}]")]
    BadHorizon { a: f64, b: f64 },
    #[error("psi0 must be a finite value <= 0, got {0}")]
    BadPsi0(f64),
    #[error("state and control dimensions must be at least 1 (states = {states}, controls = {controls})")]
    BadDimension { states: usize, controls: usize },
    #[error("box bounds must give one finite interval low <= high per control")]
    BadControlBounds,
    #[error("controls cannot be eliminated symbolically: {0}")]
    NotSolvable(String),
    #[error("stationary control is not a maximizer of the Hamiltonian: {0}")]
    NotConcave(String),
    #[error("symbolic elimination requires a free control set; box constraints are not supported")]
    BoxControlUnsupported,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Control set `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSet {
    Free,
    Box { low: Vec<f64>, high: Vec<f64> },
}

/// Unvalidated problem data, as read from a file or built in code.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub states: usize,
    pub controls: usize,
    pub horizon: (f64, f64),
    pub lagrangian: Expr,
    pub dynamics: Vec<Expr>,
    pub control_set: ControlSet,
    pub psi0: f64,
}

/// Validated optimal control problem: minimize `∫ L(t,x,u) dt` subject to
/// `ẋ = φ(t,x,u)`, `u ∈ Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct OcProblem {
    name: String,
    horizon: (f64, f64),
    states: Vec<String>,
    controls: Vec<String>,
    costates: Vec<String>,
    lagrangian: Expr,
    dynamics: Vec<Expr>,
    control_set: ControlSet,
    psi0: f64,
}

pub fn state_name(i: usize) -> String {
    format!("x{i}")
}

pub fn control_name(j: usize) -> String {
    format!("u{j}")
}

pub fn costate_name(i: usize) -> String {
    format!("psi{i}")
}

/// Every identifier the parser should accept for a problem of this shape
/// (besides the reserved `t` and `psi0`).
pub fn symbol_table(states: usize, controls: usize) -> Vec<String> {
    (1..=states)
        .map(state_name)
        .chain((1..=controls).map(control_name))
        .chain((1..=states).map(costate_name))
        .collect()
}

impl ProblemSpec {
    /// Parses `lagrangian` and `dynamics` over the problem's symbol table,
    /// with free control set and `psi0 = -1`.
    pub fn from_text(
        name: &str,
        states: usize,
        controls: usize,
        horizon: (f64, f64),
        lagrangian: &str,
        dynamics: &[&str],
    ) -> Result<ProblemSpec, ExprError> {
        let symbols = symbol_table(states, controls);
        Ok(ProblemSpec {
            name: name.to_string(),
            states,
            controls,
            horizon,
            lagrangian: parse(lagrangian, &symbols)?,
            dynamics: dynamics
                .iter()
                .map(|d| parse(d, &symbols))
                .collect::<Result<_, _>>()?,
            control_set: ControlSet::Free,
            psi0: -1.0,
        })
    }

    pub fn with_psi0(mut self, psi0: f64) -> Self {
        self.psi0 = psi0;
        self
    }

    pub fn with_control_set(mut self, control_set: ControlSet) -> Self {
        self.control_set = control_set;
        self
    }

    pub fn validate(self) -> Result<OcProblem, ProblemError> {
        OcProblem::validate(self)
    }
}

impl OcProblem {
    pub fn validate(spec: ProblemSpec) -> Result<OcProblem, ProblemError> {
        let ProblemSpec {
            name,
            states: n,
            controls: r,
            horizon,
            lagrangian,
            dynamics,
            control_set,
            psi0,
        } = spec;
        if n == 0 || r == 0 {
            return Err(ProblemError::BadDimension {
                states: n,
                controls: r,
            });
        }
        if dynamics.len() != n {
            return Err(ProblemError::DimensionMismatch {
                expected: n,
                found: dynamics.len(),
            });
        }
        let (a, b) = horizon;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(ProblemError::BadHorizon { a, b });
        }
        if !(psi0.is_finite() && psi0 <= 0.0) {
            return Err(ProblemError::BadPsi0(psi0));
        }
        if let ControlSet::Box { low, high } = &control_set {
            let ok = low.len() == r
                && high.len() == r
                && low
                    .iter()
                    .zip(high)
                    .all(|(l, h)| l.is_finite() && h.is_finite() && l <= h);
            if !ok {
                return Err(ProblemError::BadControlBounds);
            }
        }

        let states: Vec<String> = (1..=n).map(state_name).collect();
        let controls: Vec<String> = (1..=r).map(control_name).collect();
        let costates: Vec<String> = (1..=n).map(costate_name).collect();

        let check = |e: &Expr, location: String| -> Result<(), ProblemError> {
            for v in e.free_variables() {
                let allowed = v == TIME || states.contains(&v) || controls.contains(&v);
                if !allowed {
                    return Err(ProblemError::ForbiddenSymbol { name: v, location });
                }
            }
            Ok(())
        };
        check(&lagrangian, "the Lagrangian".into())?;
        for (i, phi) in dynamics.iter().enumerate() {
            check(phi, format!("dynamics entry {}", i + 1))?;
        }

        Ok(OcProblem {
            name,
            horizon: (a, b),
            lagrangian: lagrangian.normalize(),
            dynamics: dynamics.iter().map(Expr::normalize).collect(),
            states,
            controls,
            costates,
            control_set,
            psi0,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn horizon(&self) -> (f64, f64) {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.states.len()
    }

    pub fn control_dim(&self) -> usize {
        self.controls.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn controls(&self) -> &[String] {
        &self.controls
    }

    pub fn costates(&self) -> &[String] {
        &self.costates
    }

    pub fn lagrangian(&self) -> &Expr {
        &self.lagrangian
    }

    pub fn dynamics(&self) -> &[Expr] {
        &self.dynamics
    }

    pub fn control_set(&self) -> &ControlSet {
        &self.control_set
    }

    pub fn psi0(&self) -> f64 {
        self.psi0
    }

    /// State, control and costate names; `t` and `psi0` are implicit.
    pub fn symbols(&self) -> Vec<String> {
        symbol_table(self.state_dim(), self.control_dim())
    }

    /// All variable names an expression over this problem may use.
    pub fn variables(&self) -> Vec<String> {
        let mut vars = vec![TIME.to_string()];
        vars.extend(self.states.iter().cloned());
        vars.extend(self.controls.iter().cloned());
        vars.push(PSI0.to_string());
        vars.extend(self.costates.iter().cloned());
        vars
    }

    /// Parse an expression over this problem's variables.
    pub fn parse(&self, text: &str) -> Result<Expr, ExprError> {
        parse(text, &self.symbols())
    }

    /// True when `t` does not appear in `L` or `φ`.
    pub fn is_autonomous(&self) -> bool {
        !self.lagrangian.contains_var(TIME) && !self.dynamics.iter().any(|d| d.contains_var(TIME))
    }
}

/// `H = psi0·L + Σ psiᵢ·φᵢ`, with `psi0` kept symbolic.
pub fn build_hamiltonian(p: &OcProblem) -> Expr {
    let mut terms = vec![Expr::Product(vec![Expr::var(PSI0), p.lagrangian().clone()])];
    for (psi, phi) in p.costates().iter().zip(p.dynamics()) {
        terms.push(Expr::Product(vec![Expr::var(psi.as_str()), phi.clone()]));
    }
    Expr::Sum(terms).normalize()
}

/// `[∂H/∂u1, …, ∂H/∂ur]`.
pub fn stationarity_system(p: &OcProblem, hamiltonian: &Expr) -> Vec<Expr> {
    p.controls().iter().map(|u| hamiltonian.diff(u)).collect()
}

/// Controls expressed through `(t, x, psi0, psi)` by solving `∂H/∂u = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlElimination {
    pub map: BTreeMap<String, Expr>,
    pub stationarity: Vec<Expr>,
}

impl ControlElimination {
    /// Ordered `(control, expression)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Expr)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Solves the stationarity system, which must be linear in `u` with a
/// coefficient matrix that is invertible once `psi0` is bound to the
/// problem's value, and checks that the solution maximizes `H`.
pub fn eliminate_controls(
    p: &OcProblem,
    hamiltonian: &Expr,
) -> Result<ControlElimination, ProblemError> {
    if matches!(p.control_set(), ControlSet::Box { .. }) {
        return Err(ProblemError::BoxControlUnsupported);
    }
    let controls = p.controls();
    let r = controls.len();
    let stationarity = stationarity_system(p, hamiltonian);

    // stationarity_j = Σ_k A_jk u_k + c_j
    let zero_controls: BTreeMap<String, Expr> =
        controls.iter().map(|u| (u.clone(), Expr::zero())).collect();
    let mut coeffs = Vec::with_capacity(r);
    for (j, g) in stationarity.iter().enumerate() {
        let mut row = Vec::with_capacity(r);
        for u in controls {
            let a = g.diff(u);
            if let Some(v) = controls.iter().find(|v| a.contains_var(v)) {
                return Err(ProblemError::NotSolvable(format!(
                    "∂H/∂{} is nonlinear in {v}",
                    controls[j]
                )));
            }
            row.push(a);
        }
        coeffs.push(row);
    }
    let offsets: Vec<Expr> = stationarity
        .iter()
        .map(|g| g.substitute(&zero_controls))
        .collect();

    let solution = solve_linear(&coeffs, &offsets, p.psi0())?;
    let map: BTreeMap<String, Expr> = controls.iter().cloned().zip(solution).collect();

    for (j, g) in stationarity.iter().enumerate() {
        if !is_zero(&g.substitute(&map), ELIMINATION_SEED)? {
            return Err(ProblemError::NotSolvable(format!(
                "substituted solution does not satisfy ∂H/∂{} = 0",
                controls[j]
            )));
        }
    }
    check_concavity(p, &coeffs)?;

    Ok(ControlElimination { map, stationarity })
}

fn psi0_binding(psi0: f64) -> BTreeMap<String, Expr> {
    let value = Expr::from_f64(psi0);
    BTreeMap::from([(PSI0.to_string(), value)])
}

/// Gauss–Jordan elimination on `A·u = -c` in expression arithmetic.
fn solve_linear(a: &[Vec<Expr>], c: &[Expr], psi0: f64) -> Result<Vec<Expr>, ProblemError> {
    let r = c.len();
    let bind = psi0_binding(psi0);
    let mut m: Vec<Vec<Expr>> = a
        .iter()
        .zip(c)
        .map(|(row, cj)| {
            let mut row = row.clone();
            row.push(-cj.clone());
            row
        })
        .collect();

    for col in 0..r {
        // Prefer single-term pivots: their inverses stay exact monomials.
        let mut pivot = None;
        for (row, entries) in m.iter().enumerate().skip(col) {
            let entry = &entries[col];
            if is_zero(&entry.substitute(&bind), ELIMINATION_SEED)? {
                continue;
            }
            let single = !matches!(entry, Expr::Sum(_));
            if pivot.is_none() || single {
                pivot = Some(row);
                if single {
                    break;
                }
            }
        }
        let Some(pr) = pivot else {
            return Err(ProblemError::NotSolvable(
                "coefficient matrix of ∂H/∂u is singular".into(),
            ));
        };
        m.swap(col, pr);
        let inv = Expr::one() / m[col][col].clone();
        let pivot_row: Vec<Expr> = m[col].iter().map(|e| e * &inv).collect();
        for (row, line) in m.iter_mut().enumerate() {
            if row == col || line[col].is_zero_const() {
                continue;
            }
            let factor = line[col].clone();
            for (k, entry) in line.iter_mut().enumerate() {
                *entry = &*entry - &(&factor * &pivot_row[k]);
            }
        }
        m[col] = pivot_row;
    }
    Ok(m.into_iter().map(|row| row[r].clone()).collect())
}

/// The Hessian of `H` in `u` (constant in `u` here) must be negative
/// semidefinite with `psi0` bound, at seeded sample points.
fn check_concavity(p: &OcProblem, hessian: &[Vec<Expr>]) -> Result<(), ProblemError> {
    let r = hessian.len();
    let bind = psi0_binding(p.psi0());
    let bound: Vec<Vec<Expr>> = hessian
        .iter()
        .map(|row| row.iter().map(|e| e.substitute(&bind)).collect())
        .collect();
    let (a, b) = p.horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(ELIMINATION_SEED);
    let vars = p.variables();
    let mut accepted = 0;
    for _ in 0..expr::ZERO_TEST_MAX_ATTEMPTS {
        let mut binding = Binding::new();
        for v in &vars {
            let value = if v == TIME {
                rng.random_range(a..=b)
            } else {
                draw_away_from_zero(&mut rng)
            };
            binding.insert(v.as_str(), value);
        }
        let mut h = DMatrix::zeros(r, r);
        let mut ok = true;
        for j in 0..r {
            for k in 0..r {
                match expr::evaluate(&bound[j][k], &binding) {
                    Ok(v) => h[(j, k)] = v,
                    Err(ExprError::Domain(_)) => ok = false,
                    Err(e) => return Err(e.into()),
                }
            }
        }
        if !ok {
            continue;
        }
        let sym = (&h + h.transpose()) * 0.5;
        let scale = sym.amax().max(1.0);
        let max_eig = sym.symmetric_eigenvalues().max();
        if max_eig > 1e-10 * scale {
            return Err(ProblemError::NotConcave(format!(
                "Hessian of H in u has eigenvalue {max_eig:.3e} > 0"
            )));
        }
        accepted += 1;
        if accepted == CONCAVITY_SAMPLES {
            return Ok(());
        }
    }
    Err(ExprError::Undecidable {
        attempts: expr::ZERO_TEST_MAX_ATTEMPTS,
    }
    .into())
}
