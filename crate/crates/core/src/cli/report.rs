//! Run reports. The JSON form holds only data that is a function of the input
//! file and seed, so repeated runs produce identical bytes; timing goes to the
//! text form only.

use std::fmt::Write as _;

use serde::Serialize;

use crate::conservation::{ConservationVerdict, DriftReport, SymbolicStatus};
use crate::discovery::DiscoveryResult;
use crate::extremal::StepStats;

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub problem: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivation: Option<Derivation>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discovery: Option<DiscoveryReport>,
}

impl RunReport {
    pub fn new(command: &'static str, problem: &str, seed: u64) -> Self {
        RunReport {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            problem: problem.to_string(),
            seed,
            derivation: None,
            candidates: Vec::new(),
            simulation: None,
            discovery: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Named {
    pub name: String,
    pub expression: String,
}

impl Named {
    pub fn new(name: impl Into<String>, expression: impl ToString) -> Self {
        Named {
            name: name.into(),
            expression: expression.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Derivation {
    pub hamiltonian: String,
    /// `∂H/∂uⱼ` per control.
    pub stationarity: Vec<Named>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elimination: Option<Vec<Named>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elimination_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduced_hamiltonian: Option<String>,
    /// Right-hand sides of the eliminated Hamiltonian system, keyed by the
    /// differentiated variable.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub field: Vec<Named>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateReport {
    pub name: String,
    pub expression: String,
    pub raw_residual: String,
    pub reduced_residual: Option<String>,
    pub status: SymbolicStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_tol: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub drift: Vec<DriftReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub numeric_pass: Option<bool>,
    pub conserved: bool,
}

impl CandidateReport {
    pub fn from_verdict(name: &str, v: &ConservationVerdict) -> Self {
        let conserved = v.symbolic_status == SymbolicStatus::ConservedSymbolically
            && v.numeric_pass().unwrap_or(true);
        CandidateReport {
            name: name.to_string(),
            expression: v.candidate.to_string(),
            raw_residual: v.raw_residual.to_string(),
            reduced_residual: v.reduced_residual.as_ref().map(ToString::to_string),
            status: v.symbolic_status,
            note: v.note.clone(),
            drift_tol: v.numeric.as_ref().map(|n| n.tol),
            drift: v.drift_reports().to_vec(),
            numeric_pass: v.numeric_pass(),
            conserved,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub span: [f64; 2],
    pub samples: usize,
    pub rtol: f64,
    pub atol: f64,
    pub stats: StepStats,
    pub initial_state: Vec<f64>,
    pub initial_costate: Vec<f64>,
    pub terminal_state: Vec<f64>,
    pub terminal_costate: Vec<f64>,
    /// `max |H(t) - H(t0)| / (1 + |H(t0)|)`.
    pub hamiltonian_drift: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub candidate_drift: Vec<CandidateDrift>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateDrift {
    pub name: String,
    pub max_abs_drift: f64,
    pub relative_drift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscoveryReport {
    pub family: String,
    pub max_t_degree: u32,
    pub basis: Vec<String>,
    pub sample_count: usize,
    pub threshold: f64,
    pub singular_values: Vec<f64>,
    pub nullspace_dimension: usize,
    pub coefficient_vectors: Vec<Vec<f64>>,
    pub candidates: Vec<DiscoveredReport>,
    pub dropped: Vec<DroppedReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscoveredReport {
    pub expression: String,
    pub coefficients: Vec<f64>,
    pub status: SymbolicStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub max_relative_drift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DroppedReport {
    pub expression: String,
    pub reason: String,
}

impl DiscoveryReport {
    pub fn new(
        result: &DiscoveryResult,
        family: String,
        max_t_degree: u32,
        sample_count: usize,
    ) -> Self {
        DiscoveryReport {
            family,
            max_t_degree,
            basis: result.basis.iter().map(ToString::to_string).collect(),
            sample_count,
            threshold: result.threshold,
            singular_values: result.singular_values.clone(),
            nullspace_dimension: result.nullspace_dimension(),
            coefficient_vectors: result.coefficient_vectors.clone(),
            candidates: result
                .candidates
                .iter()
                .map(|c| DiscoveredReport {
                    expression: c.expr.to_string(),
                    coefficients: c.coefficients.clone(),
                    status: c.verdict.symbolic_status,
                    note: c.verdict.note.clone(),
                    max_relative_drift: c
                        .verdict
                        .numeric
                        .as_ref()
                        .map_or(0.0, |n| n.max_relative_drift()),
                })
                .collect(),
            dropped: result
                .dropped
                .iter()
                .map(|d| DroppedReport {
                    expression: d.expr.to_string(),
                    reason: d.reason.clone(),
                })
                .collect(),
        }
    }
}

pub fn to_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn to_text(report: &RunReport) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "problem: {}", report.problem);
    if let Some(d) = &report.derivation {
        let _ = writeln!(w, "H = {}", d.hamiltonian);
        for s in &d.stationarity {
            let _ = writeln!(w, "dH/d{} = {}", s.name, s.expression);
        }
        if let Some(elim) = &d.elimination {
            let _ = writeln!(w, "control elimination:");
            for e in elim {
                let _ = writeln!(w, "  {} = {}", e.name, e.expression);
            }
        }
        if let Some(err) = &d.elimination_error {
            let _ = writeln!(w, "control elimination failed: {err}");
        }
        if let Some(h) = &d.reduced_hamiltonian {
            let _ = writeln!(w, "reduced H = {h}");
        }
        if !d.field.is_empty() {
            let _ = writeln!(w, "Hamiltonian system:");
            for f in &d.field {
                let _ = writeln!(w, "  d{}/dt = {}", f.name, f.expression);
            }
        }
    }
    for c in &report.candidates {
        let _ = writeln!(w, "candidate {}: {}", c.name, c.expression);
        let _ = writeln!(w, "  raw residual:     {}", c.raw_residual);
        if let Some(r) = &c.reduced_residual {
            let _ = writeln!(w, "  reduced residual: {r}");
        }
        let _ = writeln!(w, "  status:           {}", c.status);
        if let Some(note) = &c.note {
            let _ = writeln!(w, "  note:             {note}");
        }
        for d in &c.drift {
            let _ = writeln!(
                w,
                "  drift on trajectory {}: max |dF| = {:.3e}, relative = {:.3e} (tol {:.1e})",
                d.trajectory,
                d.max_abs_drift,
                d.relative_drift,
                c.drift_tol.unwrap_or(f64::NAN)
            );
        }
        if let Some(pass) = c.numeric_pass {
            let _ = writeln!(
                w,
                "  numeric check:    {}",
                if pass { "pass" } else { "fail" }
            );
        }
    }
    if let Some(s) = &report.simulation {
        let _ = writeln!(
            w,
            "simulated [{}, {}] with {} samples (rtol {:.1e}, atol {:.1e})",
            s.span[0], s.span[1], s.samples, s.rtol, s.atol
        );
        let _ = writeln!(
            w,
            "  steps: {} accepted, {} rejected, {} rhs evaluations",
            s.stats.accepted, s.stats.rejected, s.stats.rhs_evaluations
        );
        let _ = writeln!(w, "  terminal state:   {:?}", s.terminal_state);
        let _ = writeln!(w, "  terminal costate: {:?}", s.terminal_costate);
        let _ = writeln!(w, "  relative H drift: {:.3e}", s.hamiltonian_drift);
        for c in &s.candidate_drift {
            let _ = writeln!(
                w,
                "  drift of {}: max |dF| = {:.3e}, relative = {:.3e}",
                c.name, c.max_abs_drift, c.relative_drift
            );
        }
        if let Some(path) = &s.csv {
            let _ = writeln!(w, "  samples written to {path}");
        }
    }
    if let Some(d) = &report.discovery {
        let _ = writeln!(w, "family: {} (max t degree {})", d.family, d.max_t_degree);
        let _ = writeln!(w, "basis size: {}", d.basis.len());
        let _ = writeln!(w, "sample points: {}", d.sample_count);
        let _ = writeln!(w, "nullspace dimension: {}", d.nullspace_dimension);
        let small: Vec<String> = d
            .singular_values
            .iter()
            .rev()
            .take(d.nullspace_dimension + 1)
            .map(|s| format!("{s:.3e}"))
            .collect();
        let _ = writeln!(w, "smallest singular values: {}", small.join(", "));
        for (i, c) in d.candidates.iter().enumerate() {
            let _ = writeln!(w, "candidate {}: {}", i + 1, c.expression);
            let _ = writeln!(w, "  status: {}", c.status);
            if let Some(note) = &c.note {
                let _ = writeln!(w, "  note: {note}");
            }
            let terms: Vec<String> = d
                .basis
                .iter()
                .zip(&c.coefficients)
                .filter(|(_, k)| **k != 0.0)
                .map(|(g, k)| {
                    if g.contains(" + ") || g.contains(" - ") {
                        format!("{k} * ({g})")
                    } else {
                        format!("{k} * {g}")
                    }
                })
                .collect();
            let _ = writeln!(w, "  coefficients: {}", terms.join(", "));
            let _ = writeln!(w, "  max relative drift: {:.3e}", c.max_relative_drift);
        }
        for dropped in &d.dropped {
            let _ = writeln!(w, "dropped {}: {}", dropped.expression, dropped.reason);
        }
    }
    out
}
