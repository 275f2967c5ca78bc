//! Pure HABS expressions as dL terms and formulas.

use num_traits::Signed;
use thiserror::Error;

use super::{BinOp, Expr, UnOp, VarKind};
use crate::dl::{self, Formula, Rel, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranslateError {
    #[error("`{0}` is not a real-valued term")]
    NotATerm(String),
    #[error("`{0}` is not a formula")]
    NotAFormula(String),
    #[error("statement outside the translatable fragment: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Dl(#[from] dl::DlError),
}

/// Maps a resolved variable to its dL name.
pub type Namer<'a> = dyn Fn(&str, VarKind) -> String + 'a;

pub fn expr_to_term(e: &Expr, name: &Namer) -> Result<Term, TranslateError> {
    Ok(match e {
        Expr::Num(r) => Term::Lit(r.clone()),
        Expr::Null => Term::zero(),
        Expr::Bool(b) => Term::int(*b as i64),
        Expr::Var(n, k) => Term::Var(name(n, *k)),
        Expr::Unary(UnOp::Neg, a) => Term::neg(expr_to_term(a, name)?),
        Expr::Binary(op @ (BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div), a, b) => {
            let (a, b) = (expr_to_term(a, name)?, expr_to_term(b, name)?);
            match op {
                BinOp::Add => Term::add(a, b),
                BinOp::Sub => Term::sub(a, b),
                BinOp::Mul => Term::mul(a, b),
                _ => Term::div(a, b)?,
            }
        }
        other => return Err(TranslateError::NotATerm(super::pretty::expr(other))),
    })
}

pub fn expr_to_formula(e: &Expr, name: &Namer) -> Result<Formula, TranslateError> {
    Ok(match e {
        Expr::Bool(true) => Formula::True,
        Expr::Bool(false) => Formula::False,
        Expr::Var(n, k) => Formula::eq(Term::Var(name(n, *k)), Term::one()),
        Expr::Unary(UnOp::Not, a) => Formula::not(expr_to_formula(a, name)?),
        Expr::Binary(BinOp::And, a, b) => {
            Formula::and(expr_to_formula(a, name)?, expr_to_formula(b, name)?)
        }
        Expr::Binary(BinOp::Or, a, b) => {
            Formula::or(expr_to_formula(a, name)?, expr_to_formula(b, name)?)
        }
        Expr::Binary(op, a, b) if op.is_comparison() => {
            let (x, y) = (expr_to_term(a, name)?, expr_to_term(b, name)?);
            match op {
                BinOp::Le => Formula::cmp(Rel::Le, x, y),
                BinOp::Ge => Formula::cmp(Rel::Ge, x, y),
                BinOp::Lt => Formula::cmp(Rel::Lt, x, y),
                BinOp::Gt => Formula::cmp(Rel::Gt, x, y),
                BinOp::Eq => Formula::cmp(Rel::Eq, x, y),
                _ => Formula::not(Formula::cmp(Rel::Eq, x, y)),
            }
        }
        other => return Err(TranslateError::NotAFormula(super::pretty::expr(other))),
    })
}

fn term_to_habs(t: &Term) -> String {
    match t {
        Term::Var(v) => v.clone(),
        Term::Lit(r) => {
            let body = if r.is_integer() {
                r.numer().abs().to_string()
            } else {
                format!("{}/{}", r.numer().abs(), r.denom())
            };
            if r.is_negative() {
                format!("(-{body})")
            } else if r.is_integer() {
                body
            } else {
                format!("({body})")
            }
        }
        Term::Neg(a) => format!("(-{})", term_to_habs(a)),
        Term::Bin(op, a, b) => {
            let sym = match op {
                dl::BinOp::Add => "+",
                dl::BinOp::Sub => "-",
                dl::BinOp::Mul => "*",
                dl::BinOp::Div => "/",
            };
            format!("({} {sym} {})", term_to_habs(a), term_to_habs(b))
        }
    }
}

/// HABS concrete syntax for a modality-free formula, used when printing contracts.
pub fn formula_to_habs(f: &Formula) -> String {
    match f {
        Formula::True => "true".into(),
        Formula::False => "false".into(),
        Formula::Cmp(rel, a, b) => {
            let sym = if *rel == Rel::Eq { "==" } else { rel.symbol() };
            format!("({} {sym} {})", term_to_habs(a), term_to_habs(b))
        }
        Formula::Not(g) => format!("(!{})", formula_to_habs(g)),
        Formula::And(a, b) => format!("({} && {})", formula_to_habs(a), formula_to_habs(b)),
        Formula::Or(a, b) => format!("({} || {})", formula_to_habs(a), formula_to_habs(b)),
        Formula::Implies(a, b) => format!("((!{}) || {})", formula_to_habs(a), formula_to_habs(b)),
        other => format!("/* {other} */ true"),
    }
}
