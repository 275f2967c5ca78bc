use thiserror::Error;

use super::{BinOp, Formula, Rel, Term};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("cannot evaluate modal or quantified formula `{0}`")]
    NotFirstOrderGround(String),
}

pub fn eval_term<S: Scalar>(t: &Term, env: &dyn Fn(&str) -> Option<S>) -> Result<S, EvalError> {
    Ok(match t {
        Term::Var(v) => env(v).ok_or_else(|| EvalError::Unbound(v.clone()))?,
        Term::Lit(r) => S::from_rational(r),
        Term::Neg(a) => -eval_term(a, env)?,
        Term::Bin(op, a, b) => {
            let (x, y) = (eval_term(a, env)?, eval_term(b, env)?);
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
            }
        }
    })
}

/// Evaluates a modality-free formula. Comparisons are relaxed by `slack` toward satisfaction.
pub fn eval_formula<S: Scalar>(
    f: &Formula,
    env: &dyn Fn(&str) -> Option<S>,
    slack: S,
) -> Result<bool, EvalError> {
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Cmp(rel, a, b) => {
            let (x, y) = (eval_term(a, env)?, eval_term(b, env)?);
            match rel {
                Rel::Le => x <= y + slack,
                Rel::Ge => x + slack >= y,
                Rel::Eq => (x - y).abs() <= slack,
                Rel::Lt => x < y + slack,
                Rel::Gt => x + slack > y,
            }
        }
        Formula::Not(g) => !eval_formula(g, env, -slack)?,
        Formula::And(a, b) => eval_formula(a, env, slack)? && eval_formula(b, env, slack)?,
        Formula::Or(a, b) => eval_formula(a, env, slack)? || eval_formula(b, env, slack)?,
        Formula::Implies(a, b) => !eval_formula(a, env, -slack)? || eval_formula(b, env, slack)?,
        Formula::Exists(_, _) | Formula::Box(_, _) => {
            return Err(EvalError::NotFirstOrderGround(f.to_string()))
        }
    })
}
