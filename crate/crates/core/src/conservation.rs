//! Residual operator `R(F) = ∂F/∂t + Σ ∂F/∂xᵢ·∂H/∂psiᵢ - Σ ∂F/∂psiᵢ·∂H/∂xᵢ`
//! and the symbolic and numeric conservation checks built on it.
//!
//! `F` is a constant of the motion exactly when `R(F)` vanishes along
//! extremals. For free controls this is decided by substituting the
//! eliminated control law into `R(F)` and testing the result for zero.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::expr::{is_zero, Expr, ExprError, TIME};
use crate::extremal::{evaluate_along, Trajectory};
use crate::ocp::{build_hamiltonian, eliminate_controls, ControlElimination, OcProblem};

/// Identifier that candidate texts may use for the (unreduced) Hamiltonian.
pub const HAMILTONIAN_SYMBOL: &str = "H";

/// Default relative drift tolerance for numeric checks.
pub const DEFAULT_DRIFT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SymbolicStatus {
    ConservedSymbolically,
    NonzeroResidual,
    Undecidable,
}

impl std::fmt::Display for SymbolicStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SymbolicStatus::ConservedSymbolically => "ConservedSymbolically",
            SymbolicStatus::NonzeroResidual => "NonzeroResidual",
            SymbolicStatus::Undecidable => "Undecidable",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftReport {
    pub trajectory: usize,
    pub max_abs_drift: f64,
    pub relative_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericCheck {
    pub tol: f64,
    pub reports: Vec<DriftReport>,
}

impl NumericCheck {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.relative_drift <= self.tol)
    }

    pub fn max_relative_drift(&self) -> f64 {
        self.reports
            .iter()
            .map(|r| r.relative_drift)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationVerdict {
    pub candidate: Expr,
    pub raw_residual: Expr,
    /// `None` when the controls could not be eliminated.
    pub reduced_residual: Option<Expr>,
    pub symbolic_status: SymbolicStatus,
    /// Why the status is `Undecidable`, if it is.
    pub note: Option<String>,
    pub numeric: Option<NumericCheck>,
}

impl ConservationVerdict {
    pub fn drift_reports(&self) -> &[DriftReport] {
        self.numeric.as_ref().map_or(&[], |n| &n.reports)
    }

    pub fn numeric_pass(&self) -> Option<bool> {
        self.numeric.as_ref().map(NumericCheck::passed)
    }

    pub fn with_numeric(mut self, numeric: NumericCheck) -> Self {
        self.numeric = Some(numeric);
        self
    }
}

/// Parses a candidate over the problem's symbols, expanding `H` to the
/// Hamiltonian with symbolic controls.
pub fn parse_candidate(p: &OcProblem, text: &str) -> Result<Expr, ExprError> {
    let mut symbols = p.symbols();
    symbols.push(HAMILTONIAN_SYMBOL.to_string());
    let raw = crate::expr::parse(text, &symbols)?;
    if !raw.contains_var(HAMILTONIAN_SYMBOL) {
        return Ok(raw);
    }
    let h = BTreeMap::from([(HAMILTONIAN_SYMBOL.to_string(), build_hamiltonian(p))]);
    Ok(raw.substitute(&h))
}

fn check_variables(f: &Expr, p: &OcProblem) -> Result<(), ExprError> {
    let allowed = p.variables();
    match f
        .free_variables()
        .into_iter()
        .find(|v| !allowed.contains(v))
    {
        Some(stray) => Err(ExprError::UnboundVariable(stray)),
        None => Ok(()),
    }
}

/// `R(F)` against the Hamiltonian `h` with controls left symbolic. No
/// `∂F/∂u` term is included.
pub fn residual(f: &Expr, h: &Expr, p: &OcProblem) -> Result<Expr, ExprError> {
    check_variables(f, p)?;
    let mut terms = vec![f.diff(TIME)];
    for (x, psi) in p.states().iter().zip(p.costates()) {
        terms.push(f.diff(x) * h.diff(psi));
        terms.push(-(f.diff(psi) * h.diff(x)));
    }
    Ok(Expr::sum_of(terms).normalize())
}

pub fn reduce_modulo_stationarity(r: &Expr, elim: &ControlElimination) -> Expr {
    r.substitute(&elim.map)
}

/// Symbolic half of the conservation check.
///
/// A candidate that depends on the controls is certified only if each
/// `∂F/∂uⱼ` also vanishes at the eliminated control; otherwise the status is
/// `Undecidable` even when the reduced residual is zero.
pub fn check_symbolic(
    f: &Expr,
    p: &OcProblem,
    seed: u64,
) -> Result<ConservationVerdict, ExprError> {
    let h = build_hamiltonian(p);
    let raw_residual = residual(f, &h, p)?;
    let mut verdict = ConservationVerdict {
        candidate: f.clone(),
        raw_residual,
        reduced_residual: None,
        symbolic_status: SymbolicStatus::Undecidable,
        note: None,
        numeric: None,
    };
    let elim = match eliminate_controls(p, &h) {
        Ok(elim) => elim,
        Err(e) => {
            verdict.note = Some(format!("control elimination failed: {e}"));
            return Ok(verdict);
        }
    };
    let reduced = reduce_modulo_stationarity(&verdict.raw_residual, &elim);
    let vanishes = is_zero(&reduced, seed);
    verdict.reduced_residual = Some(reduced);
    match vanishes {
        Ok(false) => {
            verdict.symbolic_status = SymbolicStatus::NonzeroResidual;
            return Ok(verdict);
        }
        Err(ExprError::Undecidable { attempts }) => {
            verdict.note = Some(format!(
                "zero test inconclusive after {attempts} sample attempts"
            ));
            return Ok(verdict);
        }
        Err(other) => return Err(other),
        Ok(true) => {}
    }
    for u in p.controls() {
        if !f.contains_var(u) {
            continue;
        }
        let stationary = reduce_modulo_stationarity(&f.diff(u), &elim);
        if !matches!(is_zero(&stationary, seed), Ok(true)) {
            verdict.note = Some(format!(
                "candidate is not stationary in {u} at the eliminated control"
            ));
            return Ok(verdict);
        }
    }
    verdict.symbolic_status = SymbolicStatus::ConservedSymbolically;
    Ok(verdict)
}

/// Drift of `F` along each trajectory, measured against its initial value.
pub fn check_numeric(
    f: &Expr,
    p: &OcProblem,
    trajectories: &[Trajectory],
    tol: f64,
) -> Result<NumericCheck, ExprError> {
    check_variables(f, p)?;
    let mut reports = Vec::with_capacity(trajectories.len());
    for (id, tr) in trajectories.iter().enumerate() {
        let values = evaluate_along(tr, f)?;
        let f0 = values.first().map_or(0.0, |&(_, v)| v);
        let max_abs_drift = values
            .iter()
            .map(|&(_, v)| (v - f0).abs())
            .fold(0.0, f64::max);
        reports.push(DriftReport {
            trajectory: id,
            max_abs_drift,
            relative_drift: max_abs_drift / (1.0 + f0.abs()),
        });
    }
    Ok(NumericCheck { tol, reports })
}

/// Symbolic check followed by a numeric check over `trajectories`.
pub fn check(
    f: &Expr,
    p: &OcProblem,
    trajectories: &[Trajectory],
    tol: f64,
    seed: u64,
) -> Result<ConservationVerdict, ExprError> {
    let verdict = check_symbolic(f, p, seed)?;
    let numeric = check_numeric(f, p, trajectories, tol)?;
    Ok(verdict.with_numeric(numeric))
}
