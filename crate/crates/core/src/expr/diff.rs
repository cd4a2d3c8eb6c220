use super::{Expr, Func};

/// Raw (unnormalized) derivative tree.
pub(super) fn derive(e: &Expr, var: &str) -> Expr {
    if !e.contains_var(var) {
        return Expr::zero();
    }
    match e {
        Expr::Const(_) => Expr::zero(),
        Expr::Var(name) => {
            if name == var {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Expr::Sum(items) => Expr::Sum(items.iter().map(|i| derive(i, var)).collect()),
        Expr::Product(items) => {
            let mut terms = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                if !item.contains_var(var) {
                    continue;
                }
                let mut factors = items.clone();
                factors[i] = derive(item, var);
                terms.push(Expr::Product(factors));
            }
            Expr::Sum(terms)
        }
        Expr::Pow(base, k) => Expr::Product(vec![
            Expr::int(*k),
            Expr::Pow(base.clone(), k - 1),
            derive(base, var),
        ]),
        Expr::Neg(arg) => Expr::Neg(Box::new(derive(arg, var))),
        Expr::Func(f, arg) => {
            let inner = derive(arg, var);
            let outer = match f {
                Func::Sin => Expr::Func(Func::Cos, arg.clone()),
                Func::Cos => Expr::Neg(Box::new(Expr::Func(Func::Sin, arg.clone()))),
                Func::Exp => Expr::Func(Func::Exp, arg.clone()),
                Func::Log => Expr::Pow(arg.clone(), -1),
                Func::Sqrt => Expr::Product(vec![
                    Expr::rational(1, 2),
                    Expr::Pow(Box::new(Expr::Func(Func::Sqrt, arg.clone())), -1),
                ]),
            };
            Expr::Product(vec![outer, inner])
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse, Binding, Expr};

    const SYMS: [&str; 6] = ["x1", "x2", "x3", "u1", "psi1", "psi3"];

    fn p(s: &str) -> Expr {
        parse(s, &SYMS).unwrap()
    }

    #[test]
    fn trivial_derivatives() {
        assert_eq!(p("x1^2 + u1").diff("x1"), p("2*x1"));
        assert_eq!(p("psi1*x3").diff("psi1"), p("x3"));
        assert_eq!(p("x2").diff("x1"), Expr::zero());
    }

    #[test]
    fn quartic_costate_term() {
        let d = p("-x1*(x1^2 + x2^2)*psi3").diff("x1");
        assert_eq!(d, p("-3*x1^2*psi3 - x2^2*psi3"));
    }

    #[test]
    fn quartic_costate_term_against_finite_differences() {
        use rand::{Rng, SeedableRng};
        let e = p("-x1*(x1^2 + x2^2)*psi3");
        let d = e.diff("x1");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..10 {
            let x1: f64 = rng.random_range(-2.0..2.0);
            let x2: f64 = rng.random_range(-2.0..2.0);
            let psi3: f64 = rng.random_range(-2.0..2.0);
            let at = |x1: f64| {
                let b = Binding::from_pairs([("x1", x1), ("x2", x2), ("psi3", psi3)]);
                crate::expr::evaluate(&e, &b).unwrap()
            };
            let fd = (at(x1 + h) - at(x1 - h)) / (2.0 * h);
            let b = Binding::from_pairs([("x1", x1), ("x2", x2), ("psi3", psi3)]);
            let exact = crate::expr::evaluate(&d, &b).unwrap();
            assert!(
                (fd - exact).abs() <= 1e-6 * exact.abs().max(1.0),
                "{fd} vs {exact}"
            );
        }
    }

    #[test]
    fn transcendental_rules() {
        assert_eq!(p("sin(x1)").diff("x1"), p("cos(x1)"));
        assert_eq!(p("cos(2*x1)").diff("x1"), p("-2*sin(2*x1)"));
        assert_eq!(p("exp(x1^2)").diff("x1"), p("2*x1*exp(x1^2)"));
        assert_eq!(p("log(x1)").diff("x1"), p("1/x1"));
        assert_eq!(p("sqrt(x1)").diff("x1"), p("1/(2*sqrt(x1))"));
    }

    #[test]
    fn quotient_rule_through_negative_powers() {
        assert_eq!(p("1/(x1 + x2)").diff("x1"), p("-(x1 + x2)^-2"));
    }
}
