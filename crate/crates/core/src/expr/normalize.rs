//! Canonical form.
//!
//! An expression is expanded into a Laurent polynomial with exact rational
//! coefficients over *atoms*. Atoms are variables, function applications with
//! normalized arguments, and multi-term sums that occur only with negative
//! exponents (a sum under a positive power is always expanded). Such sums are
//! stored monic, with their leading coefficient pulled into the term
//! coefficient, so `1/(2*a + 2*b)` and `1/(a + b) / 2` share an atom.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use super::{Expr, Func, Rational};

type Monomial = Vec<(Expr, i64)>;

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

pub(crate) fn normalize(e: &Expr) -> Expr {
    Poly::from_expr(e).to_expr()
}

impl Poly {
    fn zero() -> Poly {
        Poly::default()
    }

    fn constant(c: Rational) -> Poly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Vec::new(), c);
        }
        Poly { terms }
    }

    fn monomial(atom: Expr, exponent: i64) -> Poly {
        let mut terms = BTreeMap::new();
        terms.insert(vec![(atom, exponent)], Rational::one());
        Poly { terms }
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, mono: Monomial, coef: Rational) {
        use std::collections::btree_map::Entry;
        match self.terms.entry(mono) {
            Entry::Vacant(slot) => {
                if !coef.is_zero() {
                    slot.insert(coef);
                }
            }
            Entry::Occupied(mut slot) => {
                *slot.get_mut() += coef;
                if slot.get().is_zero() {
                    slot.remove();
                }
            }
        }
    }

    fn add(mut self, other: Poly) -> Poly {
        for (mono, coef) in other.terms {
            self.add_term(mono, coef);
        }
        self
    }

    fn scale(mut self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        for coef in self.terms.values_mut() {
            *coef *= c;
        }
        self
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(mul_monomials(m1, m2), c1 * c2);
            }
        }
        out
    }

    fn pow(&self, k: i64) -> Poly {
        if k == 0 {
            return Poly::constant(Rational::one());
        }
        if k < 0 {
            return self.inverse().pow(-k);
        }
        if self.terms.len() == 1 {
            // Single term: raise coefficient and exponents directly.
            let (mono, coef) = self.terms.iter().next().unwrap();
            let mut out = Poly::constant(pow_rational(coef, k));
            for (atom, e) in mono {
                out = out.mul(&factor(atom, e * k));
            }
            return out;
        }
        let mut result = Poly::constant(Rational::one());
        let mut base = self.clone();
        let mut k = k as u64;
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    fn inverse(&self) -> Poly {
        if self.is_zero() {
            return Poly::monomial(Expr::Const(Rational::zero()), -1);
        }
        if self.terms.len() == 1 {
            let (mono, coef) = self.terms.iter().next().unwrap();
            let mut out = Poly::constant(coef.recip());
            for (atom, e) in mono {
                out = out.mul(&factor(atom, -e));
            }
            return out;
        }
        let lead = self.terms.values().next().unwrap().clone();
        let monic = self.clone().scale(&lead.recip());
        Poly::monomial(monic.to_expr(), -1).scale(&lead.recip())
    }

    fn negate(self) -> Poly {
        self.scale(&-Rational::one())
    }

    pub(crate) fn from_expr(e: &Expr) -> Poly {
        match e {
            Expr::Const(c) => Poly::constant(c.clone()),
            Expr::Var(_) => Poly::monomial(e.clone(), 1),
            Expr::Func(f, arg) => fold_func(*f, normalize(arg)),
            Expr::Sum(items) => items
                .iter()
                .fold(Poly::zero(), |acc, item| acc.add(Poly::from_expr(item))),
            Expr::Product(items) => {
                let mut acc = Poly::constant(Rational::one());
                for item in items {
                    if acc.is_zero() {
                        break;
                    }
                    acc = acc.mul(&Poly::from_expr(item));
                }
                acc
            }
            Expr::Pow(base, k) => Poly::from_expr(base).pow(*k),
            Expr::Neg(arg) => Poly::from_expr(arg).negate(),
        }
    }

    pub(crate) fn to_expr(&self) -> Expr {
        let mut terms: Vec<Expr> = self
            .terms
            .iter()
            .map(|(mono, coef)| term_expr(mono, coef))
            .collect();
        match terms.len() {
            0 => Expr::Const(Rational::zero()),
            1 => terms.pop().unwrap(),
            _ => Expr::Sum(terms),
        }
    }
}

fn term_expr(mono: &Monomial, coef: &Rational) -> Expr {
    let mut factors = Vec::with_capacity(mono.len() + 1);
    if mono.is_empty() || !coef.is_one() {
        factors.push(Expr::Const(coef.clone()));
    }
    for (atom, e) in mono {
        if *e == 1 {
            factors.push(atom.clone());
        } else {
            factors.push(Expr::Pow(Box::new(atom.clone()), *e));
        }
    }
    if factors.len() == 1 {
        factors.pop().unwrap()
    } else {
        Expr::Product(factors)
    }
}

/// `atom^e` as a polynomial; sums raised to a positive power are expanded.
fn factor(atom: &Expr, e: i64) -> Poly {
    if e == 0 {
        return Poly::constant(Rational::one());
    }
    match atom {
        Expr::Sum(_) if e > 0 => Poly::from_expr(atom).pow(e),
        Expr::Const(c) if c.is_zero() && e > 0 => Poly::zero(),
        // 0^-k = (0^k)^-1 = 0^-1
        Expr::Const(c) if c.is_zero() => Poly::monomial(atom.clone(), -1),
        _ => Poly::monomial(atom.clone(), e),
    }
}

fn mul_monomials(a: &Monomial, b: &Monomial) -> Monomial {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i].clone());
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j].clone());
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                let mut e = a[i].1 + b[j].1;
                if a[i].0.is_zero_const() {
                    e = -1;
                }
                if e != 0 {
                    out.push((a[i].0.clone(), e));
                }
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn pow_rational(c: &Rational, k: i64) -> Rational {
    let mag = u32::try_from(k.unsigned_abs()).expect("exponent too large for exact constant");
    let numer = num_traits::pow::Pow::pow(c.numer(), mag);
    let denom = num_traits::pow::Pow::pow(c.denom(), mag);
    if k >= 0 {
        Rational::new(numer, denom)
    } else {
        Rational::new(denom, numer)
    }
}

fn exact_sqrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let root = n.sqrt();
    (&root * &root == *n).then_some(root)
}

/// Function application with exact folding of the trivial constant cases.
fn fold_func(f: Func, arg: Expr) -> Poly {
    if let Expr::Const(c) = &arg {
        let folded = match f {
            Func::Sin if c.is_zero() => Some(Rational::zero()),
            Func::Cos | Func::Exp if c.is_zero() => Some(Rational::one()),
            Func::Log if c.is_one() => Some(Rational::zero()),
            Func::Sqrt => exact_sqrt(c.numer())
                .zip(exact_sqrt(c.denom()))
                .map(|(n, d)| Rational::new(n, d)),
            _ => None,
        };
        if let Some(value) = folded {
            return Poly::constant(value);
        }
    }
    Poly::monomial(Expr::Func(f, Box::new(arg)), 1)
}
