//! Precedence-climbing parser for the textual expression grammar.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          -- right-associative, integer exponent
//! primary := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```

use num_bigint::BigInt;
use num_traits::Zero;

use super::{Expr, ExprError, Func, Rational, PSI0, TIME};

/// Parse `text` into a normalized expression. Identifiers must be in
/// `symbols` or be one of the reserved names `t` and `psi0`.
pub fn parse<S: AsRef<str>>(text: &str, symbols: &[S]) -> Result<Expr, ExprError> {
    let mut parser = Parser {
        src: text.as_bytes(),
        pos: 0,
        symbols: symbols.iter().map(|s| s.as_ref()).collect(),
    };
    let e = parser.expr()?;
    parser.skip_ws();
    if parser.pos < parser.src.len() {
        return Err(parser.expected(&["operator", "end of input"]));
    }
    Ok(e.normalize())
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    symbols: Vec<&'a str>,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expected(&self, what: &[&str]) -> ExprError {
        ExprError::Syntax {
            position: self.pos,
            expected: what.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat(b'+') {
                terms.push(self.term()?);
            } else if self.eat(b'-') {
                terms.push(Expr::Neg(Box::new(self.term()?)));
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Expr::Sum(terms)
        })
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut factors = vec![self.unary()?];
        loop {
            if self.eat(b'*') {
                factors.push(self.unary()?);
            } else if self.eat(b'/') {
                factors.push(Expr::Pow(Box::new(self.unary()?), -1));
            } else {
                break;
            }
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            Expr::Product(factors)
        })
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        self.skip_ws();
        let at = self.pos;
        let exponent = self.unary()?.normalize();
        let k = match exponent.as_const() {
            Some(c) if c.is_integer() => i64::try_from(c.to_integer())
                .map_err(|_| ExprError::NonIntegerExponent { position: at })?,
            _ => return Err(ExprError::NonIntegerExponent { position: at }),
        };
        Ok(Expr::Pow(Box::new(base), k))
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.expected(&[")"]));
                }
                Ok(e)
            }
            _ => Err(self.expected(&["number", "identifier", "("])),
        }
    }

    fn digits(&mut self) -> &'a str {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).unwrap()
    }

    /// Integer or decimal literal, converted to an exact rational.
    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let int_part = self.digits();
        let mut frac_part = "";
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            frac_part = self.digits();
        }
        if int_part.is_empty() && frac_part.is_empty() {
            self.pos = start;
            return Err(self.expected(&["number"]));
        }
        let mut exp10: i64 = 0;
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            let negative = match self.src.get(self.pos) {
                Some(b'-') => {
                    self.pos += 1;
                    true
                }
                Some(b'+') => {
                    self.pos += 1;
                    false
                }
                _ => false,
            };
            let digits = self.digits();
            if digits.is_empty() {
                // Not an exponent after all, e.g. `2exp(x)` is rejected later.
                self.pos = mark;
            } else {
                exp10 = digits
                    .parse::<i64>()
                    .map_err(|_| self.expected(&["exponent digits"]))?;
                if negative {
                    exp10 = -exp10;
                }
            }
        }
        let mantissa: BigInt = format!("{int_part}{frac_part}")
            .parse()
            .unwrap_or_else(|_| BigInt::zero());
        let scale = exp10 - frac_part.len() as i64;
        let ten = BigInt::from(10);
        let value = if scale >= 0 {
            Rational::from_integer(mantissa * num_traits::pow(ten, scale as usize))
        } else {
            Rational::new(mantissa, num_traits::pow(ten, (-scale) as usize))
        };
        Ok(Expr::Const(value))
    }

    fn identifier(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if self.peek() == Some(b'(') {
            let func = Func::from_name(name).ok_or_else(|| ExprError::UnknownSymbol {
                name: name.to_string(),
                position: Some(start),
            })?;
            self.pos += 1;
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.expected(&[")"]));
            }
            return Ok(Expr::Func(func, Box::new(arg)));
        }
        if name == TIME || name == PSI0 || self.symbols.contains(&name) {
            Ok(Expr::Var(name.to_string()))
        } else {
            Err(ExprError::UnknownSymbol {
                name: name.to_string(),
                position: Some(start),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_cost_parses_to_sum_of_squares() {
        let e = parse("u1^2 + u2^2", &["u1", "u2"]).unwrap();
        assert_eq!(
            e,
            Expr::Sum(vec![
                Expr::Pow(Box::new(Expr::var("u1")), 2),
                Expr::Pow(Box::new(Expr::var("u2")), 2),
            ])
        );
    }

    #[test]
    fn single_variable() {
        assert_eq!(parse("x1", &["x1"]).unwrap(), Expr::var("x1"));
    }

    #[test]
    fn quartic_dynamics_agrees_with_direct_evaluation() {
        use crate::expr::{evaluate, Binding};
        use rand::{Rng, SeedableRng};
        let e = parse("-x1*(x1^2 + x2^2) + u1", &["x1", "x2", "u1"]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let (x1, x2, u1): (f64, f64, f64) = (
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let direct = -x1 * (x1 * x1 + x2 * x2) + u1;
            let b = Binding::from_pairs([("x1", x1), ("x2", x2), ("u1", u1)]);
            let v = evaluate(&e, &b).unwrap();
            assert!((v - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn precedence_and_associativity() {
        let s = ["x"];
        assert_eq!(parse("-x^2", &s).unwrap(), parse("-(x^2)", &s).unwrap());
        assert_eq!(parse("2^3^2", &s).unwrap(), Expr::int(512));
        assert_eq!(parse("8/2/2", &s).unwrap(), Expr::int(2));
        assert_eq!(parse("1 - 2 - 3", &s).unwrap(), Expr::int(-4));
        assert_eq!(parse("x^-1", &s).unwrap(), parse("1/x", &s).unwrap());
        assert_eq!(parse("2*-x", &s).unwrap(), parse("-2*x", &s).unwrap());
    }

    #[test]
    fn decimal_literals_are_exact() {
        let s: [&str; 0] = [];
        assert_eq!(parse("0.1 + 0.2", &s).unwrap(), Expr::rational(3, 10));
        assert_eq!(parse("1.5e2", &s).unwrap(), Expr::int(150));
        assert_eq!(parse("25e-2", &s).unwrap(), Expr::rational(1, 4));
        assert_eq!(parse(".5", &s).unwrap(), Expr::rational(1, 2));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let s = ["x1"];
        match parse("x1 + * 2", &s) {
            Err(ExprError::Syntax { position, expected }) => {
                assert_eq!(position, 5);
                assert!(expected.contains(&"identifier".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("(x1", &s),
            Err(ExprError::Syntax { position: 3, .. })
        ));
        assert!(matches!(
            parse("x1 x1", &s),
            Err(ExprError::Syntax { position: 3, .. })
        ));
        assert!(matches!(
            parse("", &s),
            Err(ExprError::Syntax { position: 0, .. })
        ));
    }

    #[test]
    fn unknown_symbols_and_functions() {
        let s = ["x1"];
        assert_eq!(
            parse("x1 + y", &s),
            Err(ExprError::UnknownSymbol {
                name: "y".into(),
                position: Some(5)
            })
        );
        assert!(matches!(
            parse("tan(x1)", &s),
            Err(ExprError::UnknownSymbol { .. })
        ));
        assert!(parse("t*psi0", &s).is_ok());
    }

    #[test]
    fn non_integer_exponents_rejected() {
        let s = ["x1"];
        assert_eq!(
            parse("x1^0.5", &s),
            Err(ExprError::NonIntegerExponent { position: 3 })
        );
        assert!(matches!(
            parse("x1^x1", &s),
            Err(ExprError::NonIntegerExponent { .. })
        ));
        assert_eq!(parse("x1^(4/2)", &s).unwrap(), parse("x1*x1", &s).unwrap());
    }
}
