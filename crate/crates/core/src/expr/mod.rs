//! Immutable symbolic expressions over the variables of an optimal control
//! problem (`t`, `x1..xn`, `u1..ur`, `psi0`, `psi1..psin`).
//!
//! Every public operation returns expressions in normal form: a sum of
//! products with folded exact-rational coefficients, factors in a fixed total
//! order, no zero terms and no unit factors. Structural equality of two
//! normalized trees is therefore a sound (if incomplete) equality test; the
//! probabilistic [`is_zero`] closes the gap for rational identities that the
//! normal form does not cancel.

mod diff;
mod eval;
mod normalize;
mod parse;
mod print;
mod zero;

use std::collections::{BTreeMap, BTreeSet};
use std::ops;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

pub(crate) use eval::rational_to_f64;
pub use eval::{evaluate, Binding, Tape};
pub use parse::parse;
pub use zero::{is_zero, ZERO_TEST_MAX_ATTEMPTS, ZERO_TEST_SAMPLES};

/// Reserved variable for time.
pub const TIME: &str = "t";
/// Reserved variable for the cost multiplier.
pub const PSI0: &str = "psi0";

/// Exact rational used for constants.
pub type Rational = BigRational;

/// Named unary functions understood by the parser and the differentiator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 5] = [Func::Sin, Func::Cos, Func::Exp, Func::Log, Func::Sqrt];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Symbolic expression tree.
///
/// Variant order is the node-kind rank used by the derived total order, so
/// factor sorting in the normal form is: constants, variables, function
/// applications, sums, products, powers, negations; ties broken by name and
/// then recursively.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Const(Rational),
    Var(String),
    Func(Func, Box<Expr>),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    /// Integer power; division is a power of `-1`.
    Pow(Box<Expr>, i64),
    Neg(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: expected {}", .expected.join(" or "))]
    Syntax {
        position: usize,
        expected: Vec<String>,
    },
    #[error("unknown symbol `{name}`{}", .position.map(|p| format!(" at position {p}")).unwrap_or_default())]
    UnknownSymbol {
        name: String,
        position: Option<usize>,
    },
    #[error("exponent at position {position} is not an integer constant")]
    NonIntegerExponent { position: usize },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("zero test undecidable: no admissible sample point after {attempts} attempts")]
    Undecidable { attempts: usize },
}

impl Expr {
    pub fn int(value: i64) -> Expr {
        Expr::Const(Rational::from_integer(BigInt::from(value)))
    }

    /// `numer / denom` as an exact constant. Panics if `denom` is zero.
    pub fn rational(numer: i64, denom: i64) -> Expr {
        Expr::Const(Rational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn zero() -> Expr {
        Expr::Const(Rational::zero())
    }

    pub fn one() -> Expr {
        Expr::Const(Rational::one())
    }

    /// Exact value of a finite double. Panics on NaN or infinity.
    pub fn from_f64(value: f64) -> Expr {
        Expr::Const(Rational::from_float(value).expect("finite constant"))
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    /// Unnormalized sum node.
    pub fn sum_of(terms: impl IntoIterator<Item = Expr>) -> Expr {
        Expr::Sum(terms.into_iter().collect())
    }

    /// Unnormalized product node.
    pub fn product_of(factors: impl IntoIterator<Item = Expr>) -> Expr {
        Expr::Product(factors.into_iter().collect())
    }

    pub fn pow(self, exponent: i64) -> Expr {
        Expr::Pow(Box::new(self), exponent).normalize()
    }

    pub fn apply(func: Func, arg: Expr) -> Expr {
        Expr::Func(func, Box::new(arg)).normalize()
    }

    /// Canonical form. Idempotent.
    pub fn normalize(&self) -> Expr {
        normalize::normalize(self)
    }

    pub fn as_const(&self) -> Option<&Rational> {
        match self {
            Expr::Const(c) => Some(c),
            _ => None,
        }
    }

    /// True when the tree is literally the constant zero.
    pub fn is_zero_const(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_zero())
    }

    pub fn free_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                if !out.contains(name) {
                    out.insert(name.clone());
                }
            }
            Expr::Func(_, arg) | Expr::Pow(arg, _) | Expr::Neg(arg) => arg.collect_vars(out),
            Expr::Sum(items) | Expr::Product(items) => {
                items.iter().for_each(|item| item.collect_vars(out))
            }
        }
    }

    pub fn contains_var(&self, name: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => v == name,
            Expr::Func(_, arg) | Expr::Pow(arg, _) | Expr::Neg(arg) => arg.contains_var(name),
            Expr::Sum(items) | Expr::Product(items) => items.iter().any(|i| i.contains_var(name)),
        }
    }

    /// Exact partial derivative with every other variable held fixed.
    pub fn diff(&self, var: &str) -> Expr {
        diff::derive(self, var).normalize()
    }

    /// Simultaneous substitution; right-hand sides are not substituted again.
    pub fn substitute(&self, map: &BTreeMap<String, Expr>) -> Expr {
        if map.is_empty() {
            return self.normalize();
        }
        self.replace_vars(map).normalize()
    }

    fn replace_vars(&self, map: &BTreeMap<String, Expr>) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(name) => map.get(name).cloned().unwrap_or_else(|| self.clone()),
            Expr::Func(f, arg) => Expr::Func(*f, Box::new(arg.replace_vars(map))),
            Expr::Sum(items) => Expr::Sum(items.iter().map(|i| i.replace_vars(map)).collect()),
            Expr::Product(items) => {
                Expr::Product(items.iter().map(|i| i.replace_vars(map)).collect())
            }
            Expr::Pow(base, k) => Expr::Pow(Box::new(base.replace_vars(map)), *k),
            Expr::Neg(arg) => Expr::Neg(Box::new(arg.replace_vars(map))),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Func(_, arg) | Expr::Pow(arg, _) | Expr::Neg(arg) => 1 + arg.size(),
            Expr::Sum(items) | Expr::Product(items) => {
                1 + items.iter().map(Expr::size).sum::<usize>()
            }
        }
    }
}

/// Partial derivative, rejecting variables outside `symbols ∪ {t, psi0}`.
pub fn differentiate<S: AsRef<str>>(e: &Expr, var: &str, symbols: &[S]) -> Result<Expr, ExprError> {
    let known = var == TIME || var == PSI0 || symbols.iter().any(|s| s.as_ref() == var);
    if !known {
        return Err(ExprError::UnknownSymbol {
            name: var.to_string(),
            position: None,
        });
    }
    Ok(e.diff(var))
}

/// Normalized simultaneous substitution.
pub fn substitute(e: &Expr, map: &BTreeMap<String, Expr>) -> Expr {
    e.substitute(map)
}

impl From<i64> for Expr {
    fn from(value: i64) -> Self {
        Expr::int(value)
    }
}

impl From<Rational> for Expr {
    fn from(value: Rational) -> Self {
        Expr::Const(value)
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Sum(vec![self, rhs]).normalize()
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sum(vec![self, Expr::Neg(Box::new(rhs))]).normalize()
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Product(vec![self, rhs]).normalize()
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Product(vec![self, Expr::Pow(Box::new(rhs), -1)]).normalize()
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self)).normalize()
    }
}

impl<'a> ops::Add<&'a Expr> for &'a Expr {
    type Output = Expr;
    fn add(self, rhs: &Expr) -> Expr {
        self.clone() + rhs.clone()
    }
}

impl<'a> ops::Sub<&'a Expr> for &'a Expr {
    type Output = Expr;
    fn sub(self, rhs: &Expr) -> Expr {
        self.clone() - rhs.clone()
    }
}

impl<'a> ops::Mul<&'a Expr> for &'a Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        self.clone() * rhs.clone()
    }
}
