//! Printing in the parser's grammar. Children are parenthesized whenever
//! their precedence is lower than the context requires, so
//! `parse(e.to_string())` reproduces `e.normalize()`.

use std::fmt;

use num_traits::{One, Signed};

use super::{Expr, Rational};

const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const UNARY: u8 = 3;
const ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if c.is_negative() => UNARY,
        Expr::Const(c) if !c.is_integer() => PRODUCT,
        Expr::Const(_) | Expr::Var(_) | Expr::Func(..) => ATOM,
        Expr::Sum(items) if items.len() > 1 => SUM,
        Expr::Product(items) if items.len() > 1 => PRODUCT,
        Expr::Sum(items) | Expr::Product(items) => items.first().map_or(ATOM, precedence),
        // `x^k` binds tighter than unary minus but its base must be an atom.
        Expr::Pow(..) => 4,
        Expr::Neg(_) => UNARY,
    }
}

fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if precedence(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Returns the negation of `e` if `e` is syntactically negative.
fn negated(e: &Expr) -> Option<Expr> {
    match e {
        Expr::Const(c) if c.is_negative() => Some(Expr::Const(-c)),
        Expr::Neg(inner) => Some((**inner).clone()),
        Expr::Product(items) if items.len() > 1 => match &items[0] {
            Expr::Const(c) if c.is_negative() => {
                let c: Rational = -c;
                let mut rest: Vec<Expr> = items[1..].to_vec();
                if !c.is_one() {
                    rest.insert(0, Expr::Const(c));
                }
                Some(if rest.len() == 1 {
                    rest.pop().unwrap()
                } else {
                    Expr::Product(rest)
                })
            }
            _ => None,
        },
        _ => None,
    }
}

/// Splits a product into sign, numerator and denominator factors when it has
/// a negative power or a leading fractional coefficient.
fn as_fraction(items: &[Expr]) -> Option<(bool, Vec<Expr>, Vec<Expr>)> {
    let leading_fraction = matches!(&items[0], Expr::Const(c) if !c.is_integer());
    let negative_power = items.iter().any(|e| match e {
        Expr::Pow(base, _) if base.is_zero_const() => false,
        Expr::Pow(base, k) => *k == -1 || (*k < 0 && atom(base)),
        _ => false,
    });
    if !(leading_fraction || negative_power) {
        return None;
    }
    let mut negative = false;
    let mut num = Vec::new();
    let mut den = Vec::new();
    for (i, item) in items.iter().enumerate() {
        match item {
            Expr::Const(c) if i == 0 => {
                negative = c.is_negative();
                let numer = c.numer().abs();
                if !numer.is_one() || items.len() == 1 {
                    num.push(Expr::Const(Rational::from_integer(numer)));
                }
                if !c.denom().is_one() {
                    den.push(Expr::Const(Rational::from_integer(c.denom().clone())));
                }
            }
            // `(a + b)^2` would expand on re-parse, so only a first power of
            // a compound base may move to the denominator. `c/0` would
            // re-parse as `0^-1`, dropping `c`, so powers of zero stay as
            // they are.
            Expr::Pow(base, k) if base.is_zero_const() || (*k < -1 && !atom(base)) => {
                num.push(item.clone())
            }
            Expr::Pow(base, k) if *k < 0 => den.push(if *k == -1 {
                (**base).clone()
            } else {
                Expr::Pow(base.clone(), -k)
            }),
            other => num.push(other.clone()),
        }
    }
    Some((negative, num, den))
}

fn atom(e: &Expr) -> bool {
    matches!(e, Expr::Var(_) | Expr::Func(..))
}

fn monomial_factor(e: &Expr) -> bool {
    match e {
        Expr::Const(_) => true,
        Expr::Pow(base, _) => atom(base),
        other => atom(other),
    }
}

fn factors(f: &mut fmt::Formatter<'_>, items: &[Expr]) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str("*")?;
        }
        child(f, item, ATOM - 1)?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(name) => f.write_str(name),
            Expr::Func(func, arg) => write!(f, "{}({arg})", func.name()),
            Expr::Sum(items) => {
                if items.is_empty() {
                    return f.write_str("0");
                }
                child(f, &items[0], SUM)?;
                for item in &items[1..] {
                    match negated(item) {
                        Some(pos) => {
                            f.write_str(" - ")?;
                            child(f, &pos, PRODUCT)?;
                        }
                        None => {
                            f.write_str(" + ")?;
                            child(f, item, PRODUCT)?;
                        }
                    }
                }
                Ok(())
            }
            Expr::Product(items) => {
                if items.is_empty() {
                    return f.write_str("1");
                }
                if let Some((negative, num, den)) = as_fraction(items) {
                    if negative {
                        f.write_str("-")?;
                    }
                    if num.is_empty() {
                        f.write_str("1")?;
                    } else {
                        factors(f, &num)?;
                    }
                    // `1/(x*(a + b))` would re-parse with the product
                    // expanded, so unless every factor is a monomial the
                    // factors are divided out one at a time.
                    if den.len() > 1 && !den.iter().all(monomial_factor) {
                        for d in &den {
                            f.write_str("/")?;
                            child(f, d, ATOM)?;
                        }
                        return Ok(());
                    }
                    f.write_str("/")?;
                    return match den.as_slice() {
                        [single] if precedence(single) >= ATOM - 1 => child(f, single, ATOM - 1),
                        _ => {
                            f.write_str("(")?;
                            factors(f, &den)?;
                            f.write_str(")")
                        }
                    };
                }
                // A leading -1 prints as a plain minus sign.
                let mut rest = &items[..];
                if items.len() > 1 {
                    if let Expr::Const(c) = &items[0] {
                        if (-c).is_one() {
                            f.write_str("-")?;
                            rest = &items[1..];
                            child(f, &rest[0], ATOM - 1)?;
                            rest = &rest[1..];
                            for item in rest {
                                f.write_str("*")?;
                                child(f, item, ATOM - 1)?;
                            }
                            return Ok(());
                        }
                    }
                }
                child(f, &rest[0], PRODUCT)?;
                rest = &rest[1..];
                for item in rest {
                    f.write_str("*")?;
                    child(f, item, ATOM - 1)?;
                }
                Ok(())
            }
            Expr::Pow(base, k) => {
                child(f, base, ATOM)?;
                write!(f, "^{k}")
            }
            Expr::Neg(arg) => {
                f.write_str("-")?;
                child(f, arg, ATOM - 1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse, Expr};

    fn p(s: &str) -> Expr {
        parse(s, &["x1", "x2", "psi1", "psi3", "u1"]).unwrap()
    }

    #[test]
    fn prints_readable_forms() {
        assert_eq!(p("x1^2 + x2^2").to_string(), "x1^2 + x2^2");
        assert_eq!(p("-psi1/(2*psi0)").to_string(), "-psi1/(2*psi0)");
        assert_eq!(p("3/4*x1").to_string(), "3*x1/4");
        assert_eq!(p("x1/(x2^2*psi1)").to_string(), "x1/(psi1*x2^2)");
        assert_eq!(p("psi1 - x1/2").to_string(), "psi1 - x1/2");
        assert_eq!(p("u1 - x1^3").to_string(), "u1 - x1^3");
        assert_eq!(p("-x1").to_string(), "-x1");
        assert_eq!(p("1/(x1 + x2)").to_string(), "(x1 + x2)^-1");
        assert_eq!(p("x2/x1/(x1 + x2)").to_string(), "x2/x1/(x1 + x2)");
    }

    #[test]
    fn round_trips_tricky_shapes() {
        for s in [
            "-3/2*x1 + 2/3",
            "(-2)^3*x1",
            "x1*(x1 + x2)^-2 - 1/(3*x1)",
            "sin(-x1)^2 - exp(x1 - 1/2)",
            "-(x1*psi1) - (u1 + 1)^-1*psi3",
            "sqrt(2)*psi0",
            "-x1/(x2 + 1)^2 + 1/(3*psi0)",
            "(x1 + 1)*x2^-3",
            "(x1 + 1/2)/(0*x1)",
            "3/(2*0) - x1/0^2",
            "1/(x1*(x1 + x2))",
            "x1*(-(x1 + x2))^-2",
            "psi1/(2*x2^2*(x1 - 1)*(x2 + 1))",
        ] {
            let e = p(s);
            let printed = e.to_string();
            assert_eq!(p(&printed), e, "{s} printed as {printed}");
        }
    }

    #[test]
    fn prints_raw_trees_with_parentheses() {
        let raw = Expr::Product(vec![
            Expr::var("x1"),
            Expr::Sum(vec![Expr::var("x2"), Expr::int(-1)]),
            Expr::Const(num_rational::BigRational::new(3.into(), 4.into())),
        ]);
        assert_eq!(raw.to_string(), "x1*(x2 - 1)*(3/4)");
        assert_eq!(p(&raw.to_string()), raw.normalize());
    }
}
