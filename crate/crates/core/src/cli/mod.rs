//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when `check` finds a candidate that is not
//! conserved, 2 on unreadable or invalid input. The report goes to stdout and
//! diagnostics to stderr.

pub mod file;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::conservation::{check_numeric, check_symbolic, DEFAULT_DRIFT_TOL};
use crate::discovery::{discover_with, generate_basis, AnsatzSpec};
use crate::expr::{Expr, Tape};
use crate::extremal::{
    build_field, evaluate_along, integrate, ExtremalField, IntegrationOptions, Trajectory,
    DEFAULT_ATOL, DEFAULT_RTOL, DEFAULT_SAMPLES,
};
use crate::ocp::{build_hamiltonian, eliminate_controls, stationarity_system, OcProblem};

pub use file::{load, parse_file, InputError, ProblemFile, SimulateConfig};
use report::{
    CandidateDrift, CandidateReport, Derivation, DiscoveryReport, Named, RunReport,
    SimulationReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONSERVED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ocp-invariants",
    version,
    about = "Derive Pontryagin Hamiltonians, integrate extremals and check or discover constants of the motion"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the Hamiltonian, stationarity system, control law and eliminated field.
    Derive(CommonArgs),
    /// Check every `[candidates]` entry symbolically, and numerically if `[simulate]` is present.
    Check(CommonArgs),
    /// Integrate the `[simulate]` extremal and optionally write its samples as CSV.
    Simulate(CommonArgs),
    /// Search the `[discover]` ansatz family for constants of the motion.
    Discover(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Problem file (TOML).
    pub file: PathBuf,
    /// Write trajectory samples to this CSV file (simulate only).
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Seed for zero tests, sampling and seeded extremals.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Relative integration tolerance.
    #[arg(long, value_name = "R")]
    pub rtol: Option<f64>,
    /// Absolute integration tolerance.
    #[arg(long, value_name = "A")]
    pub atol: Option<f64>,
    /// Report format.
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub report: ReportFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(#[from] InputError),
    #[error("{path}: {message}")]
    Run { path: PathBuf, message: String },
}

fn run_error(path: &Path, message: impl ToString) -> CliError {
    CliError::Run {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let started = Instant::now();
    let (name, common) = match &cli.command {
        Command::Derive(a) => ("derive", a),
        Command::Check(a) => ("check", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Discover(a) => ("discover", a),
    };
    let outcome = load(&common.file)
        .map_err(CliError::from)
        .and_then(|pf| match name {
            "derive" => cmd_derive(&pf, common),
            "check" => cmd_check(&pf, common),
            "simulate" => cmd_simulate(&pf, common),
            _ => cmd_discover(&pf, common),
        });
    match outcome {
        Ok(Outcome {
            report,
            code,
            error,
        }) => {
            let text = match common.report {
                ReportFormat::Json => report::to_json(&report),
                ReportFormat::Text => format!(
                    "{}elapsed: {:.3} s\n",
                    report::to_text(&report),
                    started.elapsed().as_secs_f64()
                ),
            };
            let _ = out.write_all(text.as_bytes());
            if let Some(e) = error {
                let _ = writeln!(err, "error: {e}");
            }
            code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}

/// A finished command: the report to print, the exit code, and an optional
/// diagnostic for stderr.
pub struct Outcome {
    pub report: RunReport,
    pub code: i32,
    pub error: Option<String>,
}

fn derivation(p: &OcProblem) -> (Derivation, Option<ExtremalField>) {
    let h = build_hamiltonian(p);
    let stationarity = p
        .controls()
        .iter()
        .zip(stationarity_system(p, &h))
        .map(|(u, g)| Named::new(u.clone(), g))
        .collect();
    let mut d = Derivation {
        hamiltonian: h.to_string(),
        stationarity,
        elimination: None,
        elimination_error: None,
        reduced_hamiltonian: None,
        field: Vec::new(),
    };
    let elim = match eliminate_controls(p, &h) {
        Ok(elim) => elim,
        Err(e) => {
            d.elimination_error = Some(e.to_string());
            return (d, None);
        }
    };
    d.elimination = Some(elim.iter().map(|(u, e)| Named::new(u, e)).collect());
    match build_field(p, &elim, p.psi0()) {
        Ok(field) => {
            d.reduced_hamiltonian = Some(field.reduced_hamiltonian().to_string());
            let names = p.states().iter().chain(p.costates());
            d.field = names
                .zip(field.rhs())
                .map(|(v, e)| Named::new(v.clone(), e))
                .collect();
            (d, Some(field))
        }
        Err(e) => {
            d.elimination_error = Some(e.to_string());
            (d, None)
        }
    }
}

fn cmd_derive(pf: &ProblemFile, args: &CommonArgs) -> Result<Outcome, CliError> {
    let mut report = RunReport::new("derive", pf.problem.name(), args.seed.unwrap_or(0));
    let (d, field) = derivation(&pf.problem);
    let error = d
        .elimination_error
        .as_ref()
        .map(|e| format!("{}: {e}", pf.path.display()));
    report.derivation = Some(d);
    Ok(Outcome {
        report,
        code: if field.is_some() { EXIT_OK } else { EXIT_INPUT },
        error,
    })
}

fn options(cfg: &SimulateConfig, args: &CommonArgs) -> IntegrationOptions {
    IntegrationOptions {
        rtol: args.rtol.or(cfg.rtol).unwrap_or(DEFAULT_RTOL),
        atol: args.atol.or(cfg.atol).unwrap_or(DEFAULT_ATOL),
        samples: cfg.samples.unwrap_or(DEFAULT_SAMPLES),
    }
}

fn simulate_one(
    pf: &ProblemFile,
    field: &ExtremalField,
    cfg: &SimulateConfig,
    args: &CommonArgs,
) -> Result<(Trajectory, SimulationReport), CliError> {
    let p = &pf.problem;
    let opts = options(cfg, args);
    let span = cfg.span.unwrap_or(p.horizon());
    let tr = integrate(field, &cfg.x0, &cfg.psi_init, span, &opts)
        .map_err(|e| run_error(&pf.path, format!("integration failed: {e}")))?;
    let h = evaluate_along(&tr, field.hamiltonian()).map_err(|e| run_error(&pf.path, e))?;
    let h0 = h[0].1;
    let hamiltonian_drift =
        h.iter().map(|(_, v)| (v - h0).abs()).fold(0.0, f64::max) / (1.0 + h0.abs());
    let last = tr.len() - 1;
    let report = SimulationReport {
        span: [span.0, span.1],
        samples: tr.len(),
        rtol: opts.rtol,
        atol: opts.atol,
        stats: tr.stats,
        initial_state: cfg.x0.clone(),
        initial_costate: cfg.psi_init.clone(),
        terminal_state: tr.states[last].clone(),
        terminal_costate: tr.costates[last].clone(),
        hamiltonian_drift,
        candidate_drift: Vec::new(),
        csv: None,
    };
    Ok((tr, report))
}

fn require_field(
    pf: &ProblemFile,
    field: Option<ExtremalField>,
    d: &Derivation,
) -> Result<ExtremalField, CliError> {
    field.ok_or_else(|| {
        run_error(
            &pf.path,
            d.elimination_error
                .clone()
                .unwrap_or_else(|| "control elimination failed".into()),
        )
    })
}

fn cmd_check(pf: &ProblemFile, args: &CommonArgs) -> Result<Outcome, CliError> {
    if pf.candidates.is_empty() {
        return Err(run_error(&pf.path, "no [candidates] section to check"));
    }
    let p = &pf.problem;
    let seed = args.seed.unwrap_or(0);
    let mut report = RunReport::new("check", p.name(), seed);
    let (d, field) = derivation(p);

    let mut trajectories = Vec::new();
    let mut tol = DEFAULT_DRIFT_TOL;
    if let Some(cfg) = &pf.simulate {
        let field = require_field(pf, field, &d)?;
        let (tr, sim) = simulate_one(pf, &field, cfg, args)?;
        tol = cfg.tol.unwrap_or(DEFAULT_DRIFT_TOL);
        trajectories.push(tr);
        report.simulation = Some(sim);
    }
    report.derivation = Some(d);

    let mut all = true;
    for (name, f) in &pf.candidates {
        let mut verdict = check_symbolic(f, p, seed).map_err(|e| run_error(&pf.path, e))?;
        if !trajectories.is_empty() {
            let numeric =
                check_numeric(f, p, &trajectories, tol).map_err(|e| run_error(&pf.path, e))?;
            verdict = verdict.with_numeric(numeric);
        }
        let c = CandidateReport::from_verdict(name, &verdict);
        all &= c.conserved;
        report.candidates.push(c);
    }
    Ok(Outcome {
        report,
        code: if all { EXIT_OK } else { EXIT_NOT_CONSERVED },
        error: None,
    })
}

fn cmd_simulate(pf: &ProblemFile, args: &CommonArgs) -> Result<Outcome, CliError> {
    let Some(cfg) = &pf.simulate else {
        return Err(run_error(&pf.path, "no [simulate] section"));
    };
    let p = &pf.problem;
    let mut report = RunReport::new("simulate", p.name(), args.seed.unwrap_or(0));
    let (d, field) = derivation(p);
    let field = require_field(pf, field, &d)?;
    let (tr, mut sim) = simulate_one(pf, &field, cfg, args)?;
    for (name, f) in &pf.candidates {
        let n = check_numeric(f, p, std::slice::from_ref(&tr), DEFAULT_DRIFT_TOL)
            .map_err(|e| run_error(&pf.path, e))?;
        let r = n.reports[0];
        sim.candidate_drift.push(CandidateDrift {
            name: name.clone(),
            max_abs_drift: r.max_abs_drift,
            relative_drift: r.relative_drift,
        });
    }
    if let Some(path) = &args.csv {
        let file = std::fs::File::create(path)
            .map_err(|e| run_error(path, format!("cannot create CSV file: {e}")))?;
        write_csv(file, &field, &tr, &pf.candidates).map_err(|e| run_error(path, e))?;
        sim.csv = Some(path.display().to_string());
    }
    report.simulation = Some(sim);
    Ok(Outcome {
        report,
        code: EXIT_OK,
        error: None,
    })
}

fn cmd_discover(pf: &ProblemFile, args: &CommonArgs) -> Result<Outcome, CliError> {
    let Some(file_spec) = &pf.discover else {
        return Err(run_error(&pf.path, "no [discover] section"));
    };
    let p = &pf.problem;
    let spec = AnsatzSpec {
        seed: args.seed.unwrap_or(file_spec.seed),
        ..file_spec.clone()
    };
    let opts = IntegrationOptions {
        rtol: args.rtol.unwrap_or(DEFAULT_RTOL),
        atol: args.atol.unwrap_or(DEFAULT_ATOL),
        samples: DEFAULT_SAMPLES,
    };
    let basis = generate_basis(p, &spec).map_err(|e| run_error(&pf.path, e))?;
    let result = discover_with(p, &spec, &opts).map_err(|e| run_error(&pf.path, e))?;
    let mut report = RunReport::new("discover", p.name(), spec.seed);
    report.discovery = Some(DiscoveryReport::new(
        &result,
        spec.family.to_string(),
        spec.max_t_degree,
        spec.sample_count.unwrap_or(4 * basis.len()),
    ));
    Ok(Outcome {
        report,
        code: EXIT_OK,
        error: None,
    })
}

/// CSV header: `t, x1..xn, u1..ur, psi1..psin, H`, then one column per
/// candidate.
pub fn csv_header(p: &OcProblem, candidates: &[(String, Expr)]) -> Vec<String> {
    file::reserved_columns(p)
        .into_iter()
        .chain(candidates.iter().map(|(n, _)| n.clone()))
        .collect()
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one row per sample with the columns of [`csv_header`].
pub fn write_csv<W: Write>(
    w: W,
    field: &ExtremalField,
    tr: &Trajectory,
    candidates: &[(String, Expr)],
) -> Result<(), String> {
    let p = field.problem();
    let slots = tr.slots();
    let mut tapes = vec![Tape::compile(field.hamiltonian(), &slots).map_err(|e| e.to_string())?];
    for (name, f) in candidates {
        tapes.push(Tape::compile(f, &slots).map_err(|e| format!("candidate {name}: {e}"))?);
    }
    let mut writer = csv::Writer::from_writer(w);
    writer
        .write_record(csv_header(p, candidates))
        .map_err(|e| e.to_string())?;
    let mut stack = Vec::new();
    for k in 0..tr.len() {
        let values = tr.values(k);
        let mut row: Vec<String> = Vec::with_capacity(slots.len() + tapes.len());
        row.push(format_value(tr.times[k]));
        row.extend(tr.states[k].iter().map(|v| format_value(*v)));
        row.extend(tr.controls[k].iter().map(|v| format_value(*v)));
        row.extend(tr.costates[k].iter().map(|v| format_value(*v)));
        for tape in &tapes {
            let v = tape.eval(&values, &mut stack).map_err(|e| e.to_string())?;
            row.push(format_value(v));
        }
        writer.write_record(&row).map_err(|e| e.to_string())?;
    }
    writer.flush().map_err(|e| e.to_string())
}
