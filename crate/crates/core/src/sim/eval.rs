use std::fmt;

use indexmap::IndexMap;

use super::SimError;
use crate::habs::{BinOp, Expr, Type, UnOp, VarKind};
use crate::ode::Dynamics;
use crate::Scalar;

/// Runtime values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<S> {
    Num(S),
    Bool(bool),
    Obj(usize),
    Fut(usize),
    Null,
    Unit,
}

impl<S: Scalar> Value<S> {
    pub fn default_of(ty: &Type) -> Value<S> {
        match ty {
            Type::Real | Type::Int => Value::Num(S::zero()),
            Type::Bool => Value::Bool(false),
            Type::Unit => Value::Unit,
            Type::Fut(_) | Type::Named(_) => Value::Null,
        }
    }

    /// Numeric view used by dynamics and monitors: booleans are 1 and 0.
    pub fn as_num(&self) -> Option<S> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Bool(b) => Some(if *b { S::one() } else { S::zero() }),
            _ => None,
        }
    }
}

impl<S: Scalar> fmt::Display for Value<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Obj(o) => write!(f, "o{o}"),
            Value::Fut(id) => write!(f, "f{id}"),
            Value::Null => f.write_str("null"),
            Value::Unit => f.write_str("unit"),
        }
    }
}

pub type Store<S> = IndexMap<String, Value<S>>;

/// Where an expression is evaluated: object store, process locals, and
/// optionally a point `t` along the object's dynamics.
pub struct Env<'a, S> {
    pub this: usize,
    pub store: &'a Store<S>,
    pub locals: &'a Store<S>,
    pub along: Option<(&'a Dynamics<S>, S)>,
}

impl<S: Scalar> Env<'_, S> {
    fn lookup(&self, name: &str, kind: VarKind) -> Result<Value<S>, SimError> {
        let field = || -> Option<Value<S>> {
            if let Some((dynamics, t)) = self.along {
                if dynamics.evolves(name) {
                    return dynamics.value_at(name, t).map(Value::Num);
                }
            }
            self.store.get(name).copied()
        };
        let found = match kind {
            VarKind::Field => field(),
            VarKind::Local | VarKind::Param => self.locals.get(name).copied(),
            VarKind::Unresolved => self.locals.get(name).copied().or_else(field),
        };
        found.ok_or_else(|| SimError::Unbound(name.to_string()))
    }

    pub fn eval(&self, e: &Expr) -> Result<Value<S>, SimError> {
        let num = |v: Value<S>, e: &Expr| match v {
            Value::Num(x) => Ok(x),
            other => Err(SimError::Type(format!(
                "expected a number in `{e:?}`, found {other}"
            ))),
        };
        let boolean = |v: Value<S>| match v {
            Value::Bool(b) => Ok(b),
            other => Err(SimError::Type(format!("expected a boolean, found {other}"))),
        };
        Ok(match e {
            Expr::Num(r) => Value::Num(S::from_rational(r)),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Unit => Value::Unit,
            Expr::Null => Value::Null,
            Expr::This => Value::Obj(self.this),
            Expr::Var(n, k) => self.lookup(n, *k)?,
            Expr::Unary(UnOp::Neg, a) => Value::Num(-num(self.eval(a)?, a)?),
            Expr::Unary(UnOp::Not, a) => Value::Bool(!boolean(self.eval(a)?)?),
            Expr::Binary(BinOp::And, a, b) => {
                Value::Bool(boolean(self.eval(a)?)? && boolean(self.eval(b)?)?)
            }
            Expr::Binary(BinOp::Or, a, b) => {
                Value::Bool(boolean(self.eval(a)?)? || boolean(self.eval(b)?)?)
            }
            Expr::Binary(op @ (BinOp::Eq | BinOp::Ne), a, b) => {
                let same = match (self.eval(a)?, self.eval(b)?) {
                    (Value::Num(x), Value::Num(y)) => x == y,
                    (x, y) => x == y,
                };
                Value::Bool(same == (*op == BinOp::Eq))
            }
            Expr::Binary(op, a, b) => {
                let (x, y) = (num(self.eval(a)?, a)?, num(self.eval(b)?, b)?);
                match op {
                    BinOp::Add => Value::Num(x + y),
                    BinOp::Sub => Value::Num(x - y),
                    BinOp::Mul => Value::Num(x * y),
                    BinOp::Div if y == S::zero() => return Err(SimError::DivisionByZero),
                    BinOp::Div => Value::Num(x / y),
                    BinOp::Le => Value::Bool(x <= y),
                    BinOp::Ge => Value::Bool(x >= y),
                    BinOp::Lt => Value::Bool(x < y),
                    _ => Value::Bool(x > y),
                }
            }
        })
    }
}

/// Value of `e` over an object store and process locals, reading physical
/// fields `t` time units along `dynamics`.
pub fn eval_expr<S: Scalar>(
    e: &Expr,
    store: &Store<S>,
    locals: &Store<S>,
    dynamics: &Dynamics<S>,
    t: S,
) -> Result<Value<S>, SimError> {
    Env {
        this: usize::MAX,
        store,
        locals,
        along: Some((dynamics, t)),
    }
    .eval(e)
}
