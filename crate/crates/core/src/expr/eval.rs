use std::collections::BTreeMap;

use num_traits::ToPrimitive;

use super::{Expr, ExprError, Func, Rational};

/// Values for the free variables of an expression.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Binding {
    values: BTreeMap<String, f64>,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<K: Into<String>>(pairs: impl IntoIterator<Item = (K, f64)>) -> Self {
        Binding {
            values: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

pub(crate) fn rational_to_f64(c: &Rational) -> f64 {
    c.to_f64().unwrap_or(f64::NAN)
}

fn apply_func(f: Func, x: f64) -> Result<f64, ExprError> {
    let y = match f {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Exp => x.exp(),
        Func::Log => {
            if x <= 0.0 {
                return Err(ExprError::Domain(format!("log of non-positive value {x}")));
            }
            x.ln()
        }
        Func::Sqrt => {
            if x < 0.0 {
                return Err(ExprError::Domain(format!("sqrt of negative value {x}")));
            }
            x.sqrt()
        }
    };
    finite(y)
}

fn powi(base: f64, k: i64) -> Result<f64, ExprError> {
    if k < 0 && base == 0.0 {
        return Err(ExprError::Domain("division by zero".into()));
    }
    let y = match i32::try_from(k) {
        Ok(k) => base.powi(k),
        Err(_) => base.powf(k as f64),
    };
    finite(y)
}

fn finite(y: f64) -> Result<f64, ExprError> {
    if y.is_finite() {
        Ok(y)
    } else {
        Err(ExprError::Domain(format!(
            "non-finite intermediate value {y}"
        )))
    }
}

/// IEEE double evaluation by walking the tree.
pub fn evaluate(e: &Expr, binding: &Binding) -> Result<f64, ExprError> {
    match e {
        Expr::Const(c) => Ok(rational_to_f64(c)),
        Expr::Var(name) => {
            let v = binding
                .get(name)
                .ok_or_else(|| ExprError::UnboundVariable(name.clone()))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(ExprError::Domain(format!(
                    "non-finite value bound to `{name}`"
                )))
            }
        }
        Expr::Func(f, arg) => apply_func(*f, evaluate(arg, binding)?),
        Expr::Sum(items) => {
            let mut acc = 0.0;
            for item in items {
                acc += evaluate(item, binding)?;
            }
            finite(acc)
        }
        Expr::Product(items) => {
            let mut acc = 1.0;
            for item in items {
                acc *= evaluate(item, binding)?;
            }
            finite(acc)
        }
        Expr::Pow(base, k) => powi(evaluate(base, binding)?, *k),
        Expr::Neg(arg) => Ok(-evaluate(arg, binding)?),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Const(f64),
    Load(usize),
    Add(usize),
    Mul(usize),
    Pow(i64),
    Neg,
    Apply(Func),
}

/// Flat postfix program compiled from an expression, with variables bound to
/// slot indices. Evaluates to the same value as [`evaluate`] (same operation
/// order), without name lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    ops: Vec<Op>,
    depth: usize,
}

impl Tape {
    /// Compile `e` with variable `slots[i]` read from `values[i]` at
    /// evaluation time.
    pub fn compile<S: AsRef<str>>(e: &Expr, slots: &[S]) -> Result<Tape, ExprError> {
        let mut ops = Vec::new();
        let mut depth = 0;
        emit(e, slots, &mut ops, 0, &mut depth)?;
        Ok(Tape { ops, depth })
    }

    pub fn eval(&self, values: &[f64], stack: &mut Vec<f64>) -> Result<f64, ExprError> {
        self.run(values, stack, &mut None)
    }

    /// Value together with the largest magnitude seen on the stack.
    pub fn eval_with_magnitude(
        &self,
        values: &[f64],
        stack: &mut Vec<f64>,
    ) -> Result<(f64, f64), ExprError> {
        let mut mag = Some(0.0);
        let v = self.run(values, stack, &mut mag)?;
        Ok((v, mag.unwrap_or(0.0)))
    }

    fn run(
        &self,
        values: &[f64],
        stack: &mut Vec<f64>,
        mag: &mut Option<f64>,
    ) -> Result<f64, ExprError> {
        stack.clear();
        stack.reserve(self.depth);
        for op in &self.ops {
            let v = match op {
                Op::Const(c) => *c,
                Op::Load(slot) => {
                    let v = values[*slot];
                    if !v.is_finite() {
                        return Err(ExprError::Domain(format!(
                            "non-finite value in slot {slot}"
                        )));
                    }
                    v
                }
                Op::Add(n) => {
                    let start = stack.len() - n;
                    let acc = stack[start..].iter().fold(0.0, |a, b| a + b);
                    stack.truncate(start);
                    finite(acc)?
                }
                Op::Mul(n) => {
                    let start = stack.len() - n;
                    let acc = stack[start..].iter().fold(1.0, |a, b| a * b);
                    stack.truncate(start);
                    finite(acc)?
                }
                Op::Pow(k) => {
                    let b = stack.pop().unwrap();
                    powi(b, *k)?
                }
                Op::Neg => -stack.pop().unwrap(),
                Op::Apply(f) => {
                    let x = stack.pop().unwrap();
                    apply_func(*f, x)?
                }
            };
            if let Some(m) = mag.as_mut() {
                *m = m.max(v.abs());
            }
            stack.push(v);
        }
        Ok(stack.pop().unwrap_or(0.0))
    }
}

fn emit<S: AsRef<str>>(
    e: &Expr,
    slots: &[S],
    ops: &mut Vec<Op>,
    height: usize,
    depth: &mut usize,
) -> Result<(), ExprError> {
    *depth = (*depth).max(height + 1);
    match e {
        Expr::Const(c) => ops.push(Op::Const(rational_to_f64(c))),
        Expr::Var(name) => {
            let slot = slots
                .iter()
                .position(|s| s.as_ref() == name)
                .ok_or_else(|| ExprError::UnboundVariable(name.clone()))?;
            ops.push(Op::Load(slot));
        }
        Expr::Func(f, arg) => {
            emit(arg, slots, ops, height, depth)?;
            ops.push(Op::Apply(*f));
        }
        Expr::Sum(items) | Expr::Product(items) => {
            for (i, item) in items.iter().enumerate() {
                emit(item, slots, ops, height + i, depth)?;
            }
            ops.push(if matches!(e, Expr::Sum(_)) {
                Op::Add(items.len())
            } else {
                Op::Mul(items.len())
            });
        }
        Expr::Pow(base, k) => {
            emit(base, slots, ops, height, depth)?;
            ops.push(Op::Pow(*k));
        }
        Expr::Neg(arg) => {
            emit(arg, slots, ops, height, depth)?;
            ops.push(Op::Neg);
        }
    }
    Ok(())
}
