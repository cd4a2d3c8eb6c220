//! Search for constants of the motion among linear combinations of a fixed
//! basis.
//!
//! The residual operator is linear in `F`, so a combination `Σ cₖ·gₖ` is
//! conserved exactly when `Σ cₖ·R(gₖ)` vanishes after control elimination.
//! Evaluating every reduced `R(gₖ)` at random points gives a matrix whose
//! right nullspace holds the coefficient vectors of conserved combinations.
//! Each vector found that way is rounded, assembled into an expression, and
//! then re-checked symbolically and on integrated extremals.

use nalgebra::{DMatrix, DVector};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conservation::{
    check, reduce_modulo_stationarity, residual, ConservationVerdict, SymbolicStatus,
    DEFAULT_DRIFT_TOL,
};
use crate::expr::{rational_to_f64, Expr, ExprError, Rational, Tape, PSI0, TIME};
use crate::extremal::{build_field, seeded_extremals, IntegrationError, IntegrationOptions};
use crate::ocp::{
    build_hamiltonian, eliminate_controls, ControlElimination, OcProblem, ProblemError,
};
use crate::sampling::draw_away_from_zero;

/// Relative singular-value cutoff for the nullspace.
pub const DEFAULT_NULLSPACE_THRESHOLD: f64 = 1e-8;
/// Extremals integrated per discovery run for the numeric check.
pub const DISCOVERY_EXTREMALS: usize = 5;
/// Redraws allowed when sample points hit a domain error.
pub const MAX_REDRAWS: usize = 256;

const SNAP_TOLERANCE: f64 = 1e-9;
const SNAP_MAX_DENOMINATOR: i64 = 64;

#[derive(Debug, thiserror::Error)]
pub enum DiscoveryError {
    #[error("ansatz basis is empty")]
    EmptyBasis,
    #[error("basis element {index} uses control variable {name}")]
    ForbiddenSymbol { index: usize, name: String },
    #[error("basis element {index} uses unknown variable {name}")]
    UnknownSymbol { index: usize, name: String },
    #[error("basis elements {first} and {second} coincide")]
    DuplicateBasis { first: usize, second: usize },
    #[error("sample count must be positive")]
    NoSamples,
    #[error("residual matrix undecidable: {attempts} sample points hit domain errors")]
    Undecidable { attempts: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("extremal integration failed: {0}")]
    Integration(#[from] IntegrationError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnsatzFamily {
    /// `t^d·psiᵢ·xⱼ` for all `i, j` and `d ≤ max_t_degree`.
    BilinearPsiX,
    /// The bilinear family plus `H·t^k` for `1 ≤ k ≤ max_t_degree + 1`, with
    /// `H` the control-eliminated Hamiltonian.
    BilinearPlusHT,
    Custom(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzSpec {
    pub family: AnsatzFamily,
    pub max_t_degree: u32,
    /// Rows of the residual matrix; `None` means four per basis element.
    pub sample_count: Option<usize>,
    pub seed: u64,
}

impl AnsatzSpec {
    pub fn new(family: AnsatzFamily) -> Self {
        AnsatzSpec {
            family,
            max_t_degree: 0,
            sample_count: None,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_t_degree(mut self, degree: u32) -> Self {
        self.max_t_degree = degree;
        self
    }

    pub fn with_sample_count(mut self, count: usize) -> Self {
        self.sample_count = Some(count);
        self
    }
}

fn bilinear(p: &OcProblem, max_t_degree: u32) -> Vec<Expr> {
    let mut basis = Vec::new();
    for d in 0..=max_t_degree {
        let time = Expr::var(TIME).pow(d as i64);
        for psi in p.costates() {
            for x in p.states() {
                basis.push(
                    Expr::product_of([time.clone(), Expr::var(psi), Expr::var(x)]).normalize(),
                );
            }
        }
    }
    basis
}

fn validate_basis(p: &OcProblem, basis: &[Expr]) -> Result<(), DiscoveryError> {
    if basis.is_empty() {
        return Err(DiscoveryError::EmptyBasis);
    }
    let allowed: Vec<String> = std::iter::once(TIME.to_string())
        .chain(p.states().iter().cloned())
        .chain(std::iter::once(PSI0.to_string()))
        .chain(p.costates().iter().cloned())
        .collect();
    for (index, g) in basis.iter().enumerate() {
        for name in g.free_variables() {
            if p.controls().contains(&name) {
                return Err(DiscoveryError::ForbiddenSymbol { index, name });
            }
            if !allowed.contains(&name) {
                return Err(DiscoveryError::UnknownSymbol { index, name });
            }
        }
        if let Some(first) = basis[..index].iter().position(|h| h == g) {
            return Err(DiscoveryError::DuplicateBasis {
                first,
                second: index,
            });
        }
    }
    Ok(())
}

pub fn generate_basis(p: &OcProblem, spec: &AnsatzSpec) -> Result<Vec<Expr>, DiscoveryError> {
    let basis = match &spec.family {
        AnsatzFamily::BilinearPsiX => bilinear(p, spec.max_t_degree),
        AnsatzFamily::BilinearPlusHT => {
            let h = build_hamiltonian(p);
            let elim = eliminate_controls(p, &h)?;
            let h_elim = reduce_modulo_stationarity(&h, &elim);
            let mut basis = bilinear(p, spec.max_t_degree);
            for k in 1..=spec.max_t_degree as i64 + 1 {
                basis.push(&h_elim * &Expr::var(TIME).pow(k));
            }
            basis
        }
        AnsatzFamily::Custom(items) => items.iter().map(Expr::normalize).collect(),
    };
    validate_basis(p, &basis)?;
    Ok(basis)
}

/// Sampled residual operator together with the reduced residual of each
/// basis element.
#[derive(Debug, Clone)]
pub struct ResidualMatrix {
    pub matrix: DMatrix<f64>,
    pub reduced_residuals: Vec<Expr>,
}

/// Entry `(s, k)` is the reduced residual of basis element `k` at sample
/// point `s`. Sample points draw `t` uniformly from the horizon, each `xᵢ`
/// and `psiᵢ` from `[-2, -0.1] ∪ [0.1, 2]`, and bind `psi0` to the
/// problem's value.
pub fn residual_matrix(
    basis: &[Expr],
    p: &OcProblem,
    spec: &AnsatzSpec,
) -> Result<ResidualMatrix, DiscoveryError> {
    let rows = spec.sample_count.unwrap_or(4 * basis.len());
    if rows == 0 {
        return Err(DiscoveryError::NoSamples);
    }
    let h = build_hamiltonian(p);
    let elim = eliminate_controls(p, &h)?;
    let reduced_residuals = reduced_residuals(basis, p, &h, &elim)?;

    let slots: Vec<String> = std::iter::once(TIME.to_string())
        .chain(p.states().iter().cloned())
        .chain(std::iter::once(PSI0.to_string()))
        .chain(p.costates().iter().cloned())
        .collect();
    let tapes = reduced_residuals
        .iter()
        .map(|r| Tape::compile(r, &slots))
        .collect::<Result<Vec<_>, _>>()?;

    let (a, b) = p.horizon();
    let n = p.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut matrix = DMatrix::zeros(rows, basis.len());
    let mut values = vec![0.0; slots.len()];
    let mut row = vec![0.0; basis.len()];
    let mut stack = Vec::new();
    let mut redraws = 0;
    let mut s = 0;
    'rows: while s < rows {
        values[0] = rng.random_range(a..=b);
        for i in 0..n {
            values[1 + i] = draw_away_from_zero(&mut rng);
        }
        values[1 + n] = p.psi0();
        for i in 0..n {
            values[2 + n + i] = draw_away_from_zero(&mut rng);
        }
        for (entry, tape) in row.iter_mut().zip(&tapes) {
            match tape.eval(&values, &mut stack) {
                Ok(v) => *entry = v,
                Err(ExprError::Domain(_)) => {
                    redraws += 1;
                    if redraws > MAX_REDRAWS {
                        return Err(DiscoveryError::Undecidable { attempts: redraws });
                    }
                    continue 'rows;
                }
                Err(other) => return Err(other.into()),
            }
        }
        matrix.row_mut(s).copy_from_slice(&row);
        s += 1;
    }
    Ok(ResidualMatrix {
        matrix,
        reduced_residuals,
    })
}

fn reduced_residuals(
    basis: &[Expr],
    p: &OcProblem,
    h: &Expr,
    elim: &ControlElimination,
) -> Result<Vec<Expr>, ExprError> {
    basis
        .iter()
        .map(|g| Ok(reduce_modulo_stationarity(&residual(g, h, p)?, elim)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nullspace {
    /// Orthonormal basis of the numerical right nullspace.
    pub vectors: Vec<DVector<f64>>,
    /// All singular values, descending, padded with zeros up to the column
    /// count when the matrix has fewer rows than columns.
    pub singular_values: Vec<f64>,
}

/// Right singular vectors whose singular value is at most
/// `threshold·σ_max`.
pub fn extract_nullspace(m: &DMatrix<f64>, threshold: f64) -> Nullspace {
    let cols = m.ncols();
    if cols == 0 {
        return Nullspace {
            vectors: Vec::new(),
            singular_values: Vec::new(),
        };
    }
    // Pad short matrices so V is square and covers the whole column space.
    let padded = if m.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.rows_mut(0, m.nrows()).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let cutoff = threshold * singular_values.first().copied().unwrap_or(0.0);
    let vectors = order
        .iter()
        .filter(|&&i| svd.singular_values[i] <= cutoff)
        .map(|&i| v_t.row(i).transpose())
        .collect();
    Nullspace {
        vectors,
        singular_values,
    }
}

/// Reduced row echelon form of the nullspace basis, so each candidate
/// involves as few basis elements as possible.
fn echelon(vectors: &[DVector<f64>]) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().copied().collect())
        .collect();
    let cols = rows.first().map_or(0, Vec::len);
    let mut pivot_row = 0;
    for c in 0..cols {
        if pivot_row == rows.len() {
            break;
        }
        let best = (pivot_row..rows.len())
            .max_by(|&i, &j| rows[i][c].abs().total_cmp(&rows[j][c].abs()))
            .unwrap();
        if rows[best][c].abs() < 1e-9 {
            continue;
        }
        rows.swap(pivot_row, best);
        let pivot = rows[pivot_row][c];
        rows[pivot_row].iter_mut().for_each(|v| *v /= pivot);
        let pivot_values = rows[pivot_row].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            let factor = row[c];
            if r != pivot_row && factor != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_values) {
                    *v -= factor * p;
                }
            }
        }
        pivot_row += 1;
    }
    rows.truncate(pivot_row);
    rows
}

/// Nearest rational with denominator at most 64 if it lies within 1e-9.
pub fn snap(value: f64) -> Option<Rational> {
    (1..=SNAP_MAX_DENOMINATOR).find_map(|q| {
        let p = (value * q as f64).round();
        ((value - p / q as f64).abs() <= SNAP_TOLERANCE)
            .then(|| Rational::new((p as i64).into(), q.into()))
    })
}

fn leading_coefficient(e: &Expr) -> Rational {
    let first = match e {
        Expr::Sum(terms) => &terms[0],
        other => other,
    };
    match first {
        Expr::Const(c) => c.clone(),
        Expr::Product(factors) => match &factors[0] {
            Expr::Const(c) => c.clone(),
            _ => Rational::one(),
        },
        _ => Rational::one(),
    }
}

/// `Σ cₖ·gₖ` scaled so the first term of its normal form has coefficient
/// one. Returns the expression and the matching coefficients; rounded
/// coefficients are reported exactly.
fn assemble(basis: &[Expr], coefficients: &[f64]) -> (Expr, Vec<f64>) {
    let exact: Vec<Expr> = coefficients
        .iter()
        .map(|&c| snap(c).map_or_else(|| Expr::from_f64(c), Expr::Const))
        .collect();
    let e = Expr::sum_of(basis.iter().zip(&exact).map(|(g, c)| c * g)).normalize();
    let lead = leading_coefficient(&e);
    let inv = if lead.is_zero() {
        Rational::one()
    } else {
        lead.recip()
    };
    let scaled = &e * &Expr::Const(inv.clone());
    let coefficients = exact
        .iter()
        .map(|c| rational_to_f64(&(c.as_const().expect("constant coefficient") * &inv)))
        .collect();
    (scaled, coefficients)
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub expr: Expr,
    /// Coefficients against the basis, after rounding and scaling.
    pub coefficients: Vec<f64>,
    pub verdict: ConservationVerdict,
}

#[derive(Debug, Clone)]
pub struct DroppedCandidate {
    pub expr: Expr,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct DiscoveryResult {
    pub basis: Vec<Expr>,
    pub reduced_residuals: Vec<Expr>,
    pub coefficient_vectors: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    pub candidates: Vec<Candidate>,
    pub dropped: Vec<DroppedCandidate>,
}

impl DiscoveryResult {
    pub fn nullspace_dimension(&self) -> usize {
        self.coefficient_vectors.len()
    }
}

pub fn discover(p: &OcProblem, spec: &AnsatzSpec) -> Result<DiscoveryResult, DiscoveryError> {
    discover_with(p, spec, &IntegrationOptions::default())
}

/// [`discover`] with explicit integration settings for the numeric check.
pub fn discover_with(
    p: &OcProblem,
    spec: &AnsatzSpec,
    options: &IntegrationOptions,
) -> Result<DiscoveryResult, DiscoveryError> {
    let basis = generate_basis(p, spec)?;
    let sampled = residual_matrix(&basis, p, spec)?;
    let nullspace = extract_nullspace(&sampled.matrix, DEFAULT_NULLSPACE_THRESHOLD);

    let mut result = DiscoveryResult {
        basis,
        reduced_residuals: sampled.reduced_residuals,
        coefficient_vectors: nullspace
            .vectors
            .iter()
            .map(|v| v.iter().copied().collect())
            .collect(),
        singular_values: nullspace.singular_values,
        threshold: DEFAULT_NULLSPACE_THRESHOLD,
        candidates: Vec::new(),
        dropped: Vec::new(),
    };
    if nullspace.vectors.is_empty() {
        return Ok(result);
    }

    let h = build_hamiltonian(p);
    let elim = eliminate_controls(p, &h)?;
    let field = build_field(p, &elim, p.psi0())?;
    let extremals = seeded_extremals(&field, DISCOVERY_EXTREMALS, spec.seed, options)?;

    for row in echelon(&nullspace.vectors) {
        let (expr, coefficients) = assemble(&result.basis, &row);
        if expr.is_zero_const() {
            result.dropped.push(DroppedCandidate {
                expr,
                reason: "combination cancels to zero".into(),
            });
            continue;
        }
        let verdict = check(&expr, p, &extremals, DEFAULT_DRIFT_TOL, spec.seed)?;
        let keep = match verdict.symbolic_status {
            SymbolicStatus::ConservedSymbolically => true,
            SymbolicStatus::Undecidable => verdict.numeric_pass() == Some(true),
            SymbolicStatus::NonzeroResidual => false,
        };
        if keep {
            result.candidates.push(Candidate {
                expr,
                coefficients,
                verdict,
            });
        } else {
            let reason = match verdict.symbolic_status {
                SymbolicStatus::NonzeroResidual => format!(
                    "reduced residual is nonzero: {}",
                    verdict
                        .reduced_residual
                        .as_ref()
                        .map(ToString::to_string)
                        .unwrap_or_default()
                ),
                _ => format!(
                    "symbolic check undecidable and numeric drift {:.3e} exceeds {:.1e}",
                    verdict
                        .numeric
                        .as_ref()
                        .map_or(f64::NAN, |n| n.max_relative_drift()),
                    DEFAULT_DRIFT_TOL
                ),
            };
            result.dropped.push(DroppedCandidate { expr, reason });
        }
    }
    Ok(result)
}

/// Whether `target` (over the same basis) lies in the span of `vectors`,
/// measured as the norm of its component orthogonal to that span relative to
/// its own norm.
pub fn projection_residual(vectors: &[Vec<f64>], target: &[f64]) -> f64 {
    let t = DVector::from_column_slice(target);
    let norm = t.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let mut rest = t.clone();
    for v in vectors {
        let v = DVector::from_column_slice(v);
        rest -= &v * v.dot(&t);
    }
    rest.norm() / norm
}

/// Coefficients of `target` against `basis`, when `target` is a rational
/// combination of basis monomials that are themselves single terms.
pub fn coefficients_in_basis(basis: &[Expr], target: &Expr) -> Option<Vec<f64>> {
    let mut remaining = target.normalize();
    let mut out = vec![0.0; basis.len()];
    for (k, g) in basis.iter().enumerate() {
        // Coefficient of g is the constant left after dividing the matching
        // term; with single-term basis elements this is exact.
        let terms: Vec<Expr> = match &remaining {
            Expr::Sum(terms) => terms.clone(),
            other if other.is_zero_const() => Vec::new(),
            other => vec![other.clone()],
        };
        for term in terms {
            if let Some(c) = (&term * &g.clone().pow(-1)).as_const().cloned() {
                out[k] = rational_to_f64(&c);
                remaining = &remaining - &(&Expr::Const(c) * g);
                break;
            }
        }
    }
    remaining.is_zero_const().then_some(out)
}

impl std::fmt::Display for AnsatzFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AnsatzFamily::BilinearPsiX => f.write_str("bilinear_psi_x"),
            AnsatzFamily::BilinearPlusHT => f.write_str("bilinear_plus_ht"),
            AnsatzFamily::Custom(items) => write!(f, "custom({})", items.len()),
        }
    }
}
