//! Problem files: TOML documents with `[problem]`, `[candidates]`,
//! `[simulate]` and `[discover]` sections. Unknown keys are rejected.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::Deserialize;
use toml::Spanned;

use crate::conservation::{parse_candidate, HAMILTONIAN_SYMBOL};
use crate::discovery::{AnsatzFamily, AnsatzSpec};
use crate::expr::{Expr, ExprError};
use crate::ocp::{ControlSet, OcProblem, ProblemError, ProblemSpec};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    problem: Spanned<RawProblem>,
    candidates: Option<Spanned<IndexMap<String, Spanned<String>>>>,
    simulate: Option<Spanned<RawSimulate>>,
    discover: Option<Spanned<RawDiscover>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    name: String,
    states: usize,
    controls: usize,
    t0: f64,
    t1: f64,
    lagrangian: Spanned<String>,
    dynamics: Spanned<Vec<Spanned<String>>>,
    control_set: Option<Spanned<RawControlSet>>,
    psi0: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum RawControlSet {
    Named(String),
    Box { low: Vec<f64>, high: Vec<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    x0: Vec<f64>,
    psi_init: Vec<f64>,
    span: Option<[f64; 2]>,
    rtol: Option<f64>,
    atol: Option<f64>,
    samples: Option<usize>,
    tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiscover {
    family: Spanned<String>,
    max_t_degree: Option<u32>,
    seed: Option<u64>,
    samples: Option<usize>,
    basis: Option<Vec<Spanned<String>>>,
}

/// Initial-value extremal requested by `[simulate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub x0: Vec<f64>,
    pub psi_init: Vec<f64>,
    pub span: Option<(f64, f64)>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub samples: Option<usize>,
    /// Relative drift tolerance for candidate checks.
    pub tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub path: PathBuf,
    pub problem: OcProblem,
    pub candidates: Vec<(String, Expr)>,
    pub simulate: Option<SimulateConfig>,
    pub discover: Option<AnsatzSpec>,
}

/// Input problem with a position in the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError {
    pub path: PathBuf,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}: {}",
            self.path.display(),
            self.line,
            self.column,
            self.message
        )
    }
}

impl std::error::Error for InputError {}

struct Source<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Source<'_> {
    fn error_at(&self, offset: usize, message: impl Into<String>) -> InputError {
        let offset = offset.min(self.text.len());
        let before = &self.text[..offset];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        InputError {
            path: self.path.to_path_buf(),
            line,
            column: self.text[line_start..offset].chars().count() + 1,
            message: message.into(),
        }
    }

    fn error_span(&self, span: &Range<usize>, message: impl Into<String>) -> InputError {
        self.error_at(span.start, message)
    }

    /// Byte offset of the first character inside a quoted string value.
    fn string_start(&self, span: &Range<usize>) -> usize {
        let raw = &self.text[span.start.min(self.text.len())..];
        let quote = if raw.starts_with("\"\"\"") || raw.starts_with("'''") {
            3
        } else {
            1
        };
        span.start + quote
    }

    fn expr_error(&self, span: &Range<usize>, what: &str, e: &ExprError) -> InputError {
        let inner = match e {
            ExprError::Syntax { position, .. } | ExprError::NonIntegerExponent { position } => {
                Some(*position)
            }
            ExprError::UnknownSymbol { position, .. } => *position,
            _ => None,
        };
        match inner {
            Some(pos) => self.error_at(self.string_start(span) + pos, format!("{what}: {e}")),
            None => self.error_span(span, format!("{what}: {e}")),
        }
    }
}

pub fn load(path: &Path) -> Result<ProblemFile, InputError> {
    let text = std::fs::read_to_string(path).map_err(|e| InputError {
        path: path.to_path_buf(),
        line: 0,
        column: 0,
        message: format!("cannot read file: {e}"),
    })?;
    parse_file(path, &text)
}

pub fn parse_file(path: &Path, text: &str) -> Result<ProblemFile, InputError> {
    let src = Source { path, text };
    let raw: RawFile = toml::from_str(text).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        src.error_at(offset, e.message().trim_end().to_string())
    })?;

    let problem_span = raw.problem.span();
    let rp = raw.problem.into_inner();
    let symbols = crate::ocp::symbol_table(rp.states, rp.controls);
    let parse_in = |s: &Spanned<String>, what: &str| {
        crate::expr::parse(s.get_ref(), &symbols).map_err(|e| src.expr_error(&s.span(), what, &e))
    };
    let lagrangian = parse_in(&rp.lagrangian, "lagrangian")?;
    let dynamics_span = rp.dynamics.span();
    let dynamics = rp
        .dynamics
        .get_ref()
        .iter()
        .enumerate()
        .map(|(i, d)| parse_in(d, &format!("dynamics entry {}", i + 1)))
        .collect::<Result<Vec<_>, _>>()?;

    let control_set = match &rp.control_set {
        None => ControlSet::Free,
        Some(cs) => match cs.get_ref() {
            RawControlSet::Named(name) if name == "free" => ControlSet::Free,
            RawControlSet::Named(name) => {
                return Err(src.error_span(
                    &cs.span(),
                    format!("unknown control set `{name}` (expected \"free\" or {{ low, high }})"),
                ))
            }
            RawControlSet::Box { low, high } => ControlSet::Box {
                low: low.clone(),
                high: high.clone(),
            },
        },
    };

    let mut spec = ProblemSpec {
        name: rp.name.clone(),
        states: rp.states,
        controls: rp.controls,
        horizon: (rp.t0, rp.t1),
        lagrangian,
        dynamics,
        control_set,
        psi0: -1.0,
    };
    if let Some(psi0) = &rp.psi0 {
        spec.psi0 = *psi0.get_ref();
    }
    let problem = spec.validate().map_err(|e| {
        let span = match &e {
            ProblemError::DimensionMismatch { .. } => dynamics_span.clone(),
            ProblemError::ForbiddenSymbol { location, .. } => {
                match location.strip_prefix("dynamics entry ") {
                    Some(i) => i
                        .parse::<usize>()
                        .ok()
                        .and_then(|i| rp.dynamics.get_ref().get(i - 1))
                        .map_or(dynamics_span.clone(), |d| d.span()),
                    None => rp.lagrangian.span(),
                }
            }
            ProblemError::BadPsi0(_) => rp.psi0.as_ref().map_or(problem_span.clone(), |p| p.span()),
            ProblemError::BadControlBounds => rp
                .control_set
                .as_ref()
                .map_or(problem_span.clone(), |c| c.span()),
            _ => problem_span.clone(),
        };
        src.error_span(&span, e.to_string())
    })?;

    let mut candidates = Vec::new();
    if let Some(section) = &raw.candidates {
        let reserved = reserved_columns(&problem);
        for (name, text) in section.get_ref() {
            if reserved.iter().any(|r| r == name) || name == HAMILTONIAN_SYMBOL {
                return Err(src.error_span(
                    &text.span(),
                    format!("candidate name `{name}` clashes with a trajectory column"),
                ));
            }
            let f = parse_candidate(&problem, text.get_ref())
                .map_err(|e| src.expr_error(&text.span(), &format!("candidate `{name}`"), &e))?;
            candidates.push((name.clone(), f));
        }
    }

    let simulate = raw.simulate.as_ref().map(|s| {
        let s = s.get_ref();
        SimulateConfig {
            x0: s.x0.clone(),
            psi_init: s.psi_init.clone(),
            span: s.span.map(|[a, b]| (a, b)),
            rtol: s.rtol,
            atol: s.atol,
            samples: s.samples,
            tol: s.tol,
        }
    });
    if let (Some(cfg), Some(section)) = (&simulate, &raw.simulate) {
        let n = problem.state_dim();
        if cfg.x0.len() != n || cfg.psi_init.len() != n {
            return Err(src.error_span(
                &section.span(),
                format!(
                    "x0 and psi_init need {n} entries each, got {} and {}",
                    cfg.x0.len(),
                    cfg.psi_init.len()
                ),
            ));
        }
    }

    let discover = match &raw.discover {
        None => None,
        Some(section) => {
            let d = section.get_ref();
            let family = match d.family.get_ref().as_str() {
                "bilinear_psi_x" => AnsatzFamily::BilinearPsiX,
                "bilinear_plus_ht" => AnsatzFamily::BilinearPlusHT,
                "custom" => {
                    let Some(items) = &d.basis else {
                        return Err(src.error_span(
                            &d.family.span(),
                            "family \"custom\" needs a `basis` list",
                        ));
                    };
                    let basis = items
                        .iter()
                        .enumerate()
                        .map(|(i, s)| {
                            parse_candidate(&problem, s.get_ref()).map_err(|e| {
                                src.expr_error(&s.span(), &format!("basis entry {}", i + 1), &e)
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    AnsatzFamily::Custom(basis)
                }
                other => {
                    return Err(src.error_span(
                        &d.family.span(),
                        format!(
                            "unknown family `{other}` (expected bilinear_psi_x, bilinear_plus_ht or custom)"
                        ),
                    ))
                }
            };
            if d.basis.is_some() && !matches!(family, AnsatzFamily::Custom(_)) {
                return Err(src.error_span(
                    &section.span(),
                    "`basis` is only allowed with family \"custom\"",
                ));
            }
            Some(AnsatzSpec {
                family,
                max_t_degree: d.max_t_degree.unwrap_or(0),
                sample_count: d.samples,
                seed: d.seed.unwrap_or(0),
            })
        }
    };

    Ok(ProblemFile {
        path: path.to_path_buf(),
        problem,
        candidates,
        simulate,
        discover,
    })
}

/// Column names used by the trajectory CSV before the candidate columns.
pub fn reserved_columns(p: &OcProblem) -> Vec<String> {
    std::iter::once(crate::expr::TIME.to_string())
        .chain(p.states().iter().cloned())
        .chain(p.controls().iter().cloned())
        .chain(p.costates().iter().cloned())
        .chain(std::iter::once(HAMILTONIAN_SYMBOL.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUARTIC: &str = r#"
[problem]
name = "quartic"
states = 4
controls = 2
t0 = 0.0
t1 = 5.0
lagrangian = "u1^2 + u2^2"
dynamics = ["x3", "x4", "-x1*(x1^2 + x2^2) + u1", "-x2*(x1^2 + x2^2) + u2"]

[candidates]
momentum = "-psi1*x2 + psi2*x1 - psi3*x4 + psi4*x3"
energy = "H"
"#;

    fn parse(text: &str) -> Result<ProblemFile, InputError> {
        parse_file(Path::new("p.toml"), text)
    }

    #[test]
    fn parses_problem_and_candidates() {
        let f = parse(QUARTIC).unwrap();
        assert_eq!(f.problem.state_dim(), 4);
        assert_eq!(f.problem.psi0(), -1.0);
        assert_eq!(f.candidates.len(), 2);
        assert_eq!(f.candidates[0].0, "momentum");
        assert_eq!(f.candidates[1].1, crate::ocp::build_hamiltonian(&f.problem));
        assert!(f.simulate.is_none() && f.discover.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let text = QUARTIC.replace("t1 = 5.0", "t1 = 5.0\nhorizon = 3");
        let err = parse(&text).unwrap_err();
        assert_eq!(err.line, 8);
        assert!(err.message.contains("horizon"), "{}", err.message);
    }

    #[test]
    fn expression_errors_point_into_the_string() {
        let text = QUARTIC.replace("\"x4\"", "\"x4 + y\"");
        let err = parse(&text).unwrap_err();
        assert_eq!(err.line, 9);
        let line = text.lines().nth(8).unwrap();
        assert_eq!(err.column, line.find("y\"").unwrap() + 1);
        assert!(err.message.contains("unknown symbol `y`"));
    }

    #[test]
    fn dimension_mismatch_points_at_dynamics() {
        let text = QUARTIC.replace("\"x3\", ", "");
        let err = parse(&text).unwrap_err();
        assert!(err.message.contains("expected 4 dynamics entries, found 3"));
        assert_eq!((err.line, err.column), (9, 12));
    }

    #[test]
    fn candidate_names_may_not_shadow_columns() {
        let text = QUARTIC.replace("energy = ", "x1 = ");
        let err = parse(&text).unwrap_err();
        assert!(err.message.contains("clashes"));
    }

    #[test]
    fn discover_and_simulate_sections() {
        let text = format!(
            "{QUARTIC}\n[simulate]\nx0 = [1, 0, 0, 0.5]\npsi_init = [0, 0, 0, 0]\nsamples = 5\n\n[discover]\nfamily = \"bilinear_psi_x\"\nseed = 9\n"
        );
        let f = parse(&text).unwrap();
        let sim = f.simulate.unwrap();
        assert_eq!(sim.x0, vec![1.0, 0.0, 0.0, 0.5]);
        assert_eq!(sim.samples, Some(5));
        let d = f.discover.unwrap();
        assert_eq!(d.family, AnsatzFamily::BilinearPsiX);
        assert_eq!(d.seed, 9);

        let bad = text.replace("bilinear_psi_x", "cubic");
        assert!(parse(&bad).unwrap_err().message.contains("unknown family"));
    }

    #[test]
    fn control_set_forms() {
        let text = QUARTIC.replace("[candidates]", "control_set = \"free\"\n\n[candidates]");
        assert_eq!(
            parse(&text).unwrap().problem.control_set(),
            &ControlSet::Free
        );
        let text = QUARTIC.replace(
            "[candidates]",
            "control_set = { low = [-1, -1], high = [1, 1] }\n\n[candidates]",
        );
        assert!(matches!(
            parse(&text).unwrap().problem.control_set(),
            ControlSet::Box { .. }
        ));
        let text = QUARTIC.replace("[candidates]", "control_set = \"open\"\n\n[candidates]");
        assert!(parse(&text)
            .unwrap_err()
            .message
            .contains("unknown control set"));
    }
}
