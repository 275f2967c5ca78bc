//! KeYmaera X concrete syntax.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use super::{BinOp, Formula, Program, Term};

fn term_prec(t: &Term) -> u8 {
    match t {
        Term::Bin(BinOp::Add | BinOp::Sub, _, _) => 1,
        Term::Bin(BinOp::Mul | BinOp::Div, _, _) => 2,
        Term::Neg(_) => 3,
        Term::Var(_) | Term::Lit(_) => 4,
    }
}

/// Decimal expansion when the denominator only has factors 2 and 5.
fn decimal(r: &BigRational) -> Option<String> {
    let mut den = r.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let (mut a, mut b) = (0u32, 0u32);
    while den.is_even() {
        den /= &two;
        a += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        b += 1;
    }
    if den != BigInt::from(1) {
        return None;
    }
    let k = a.max(b) as usize;
    let scaled = r * BigRational::from_integer(BigInt::from(10).pow(k as u32));
    let digits = scaled.to_integer().abs().to_string();
    let digits = format!("{:0>width$}", digits, width = k + 1);
    let (int, frac) = digits.split_at(digits.len() - k);
    Some(if k == 0 {
        int.to_string()
    } else {
        format!("{int}.{frac}")
    })
}

fn literal(r: &BigRational) -> String {
    let body = match decimal(r) {
        Some(d) => d,
        None => format!("{}/{}", r.numer().abs(), r.denom()),
    };
    if r.is_negative() {
        format!("(-{body})")
    } else if r.is_integer() || decimal(r).is_some() {
        body
    } else {
        format!("({body})")
    }
}

pub fn render_term(t: &Term) -> String {
    match t {
        Term::Var(v) => v.clone(),
        Term::Lit(r) => literal(r),
        Term::Neg(inner) => {
            let s = render_term(inner);
            if term_prec(inner) <= 3 {
                format!("-({s})")
            } else {
                format!("-{s}")
            }
        }
        Term::Bin(op, a, b) => {
            let p = term_prec(t);
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
            };
            let l = wrap(render_term(a), term_prec(a) < p);
            let r = wrap(render_term(b), term_prec(b) <= p);
            if p == 1 {
                format!("{l} {sym} {r}")
            } else {
                format!("{l}{sym}{r}")
            }
        }
    }
}

fn wrap(s: String, paren: bool) -> String {
    if paren {
        format!("({s})")
    } else {
        s
    }
}

fn fml_prec(f: &Formula) -> u8 {
    match f {
        Formula::Implies(_, _) => 1,
        Formula::Or(_, _) => 2,
        Formula::And(_, _) => 3,
        Formula::Not(_) | Formula::Box(_, _) | Formula::Exists(_, _) => 4,
        Formula::True | Formula::False | Formula::Cmp(_, _, _) => 5,
    }
}

pub fn render_formula(f: &Formula) -> String {
    match f {
        Formula::True => "true".into(),
        Formula::False => "false".into(),
        Formula::Cmp(rel, a, b) => {
            format!("{} {} {}", render_term(a), rel.symbol(), render_term(b))
        }
        Formula::Not(g) => format!("!{}", wrap(render_formula(g), fml_prec(g) < 4)),
        Formula::Exists(v, g) => {
            format!("\\exists {v} {}", wrap(render_formula(g), fml_prec(g) < 4))
        }
        Formula::Box(p, g) => format!(
            "[{}]{}",
            render_program(p),
            wrap(render_formula(g), fml_prec(g) < 4)
        ),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            let p = fml_prec(f);
            let sym = match f {
                Formula::And(_, _) => "&",
                Formula::Or(_, _) => "|",
                _ => "->",
            };
            let l = wrap(render_formula(a), fml_prec(a) <= p);
            let r = wrap(render_formula(b), fml_prec(b) < p);
            format!("{l} {sym} {r}")
        }
    }
}

pub fn render_program(p: &Program) -> String {
    match p {
        Program::Assign(v, t) => format!("{v} := {};", render_term(t)),
        Program::Havoc(v) => format!("{v} := *;"),
        Program::Test(f) => format!("?{};", render_formula(f)),
        Program::Seq(a, b) => format!("{} {}", render_program(a), render_program(b)),
        Program::Choice(a, b) => format!("{{{} ++ {}}}", render_program(a), render_program(b)),
        Program::Loop(a) => format!("{{{}}}*", render_program(a)),
        Program::Ode(ode) => {
            let eqs: Vec<String> = ode
                .equations()
                .iter()
                .map(|(v, t)| format!("{v}' = {}", render_term(t)))
                .collect();
            format!("{{{} & {}}}", eqs.join(", "), render_formula(&ode.domain))
        }
    }
}

/// One archive entry declaring every variable in `declared`.
pub fn render_keymaerax(
    name: &str,
    assumptions: &Formula,
    goal: &Formula,
    declared: &BTreeSet<String>,
) -> String {
    let mut out = format!("ArchiveEntry \"{name}\"\n\nProgramVariables\n");
    for v in declared {
        out.push_str(&format!("  Real {v};\n"));
    }
    out.push_str("End.\n\nProblem\n  ");
    out.push_str(&render_formula(&Formula::implies(
        assumptions.clone(),
        goal.clone(),
    )));
    out.push_str("\nEnd.\n\nEnd.\n");
    out
}
