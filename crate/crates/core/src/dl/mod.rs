//! Differential dynamic logic: terms, formulas, hybrid programs.

mod canon;
mod eval;
mod reader;
mod render;

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

pub use canon::{canonical, normalize_formula, normalize_program, propositionally_equivalent};
pub use eval::{eval_formula, eval_term, EvalError};
pub use reader::{parse_archive, parse_formula, parse_program, parse_term, ArchiveEntry};
pub use render::{render_formula, render_keymaerax, render_program, render_term};

/// Name of the clock variable introduced by post-region constructions.
pub const CLOCK: &str = "t";
/// Name of the contract-violation flag.
pub const CALL_FLAG: &str = "cll";
/// Name of the variable holding a method's return value.
pub const RESULT: &str = "result";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DlError {
    #[error("division by the literal zero")]
    DivisionByZero,
    #[error("weak negation is undefined for modalities")]
    ModalityInWeakNegation,
    #[error("weak negation is undefined for quantifiers")]
    QuantifierInWeakNegation,
    #[error("weak negation is undefined for the strict atom `{0}`")]
    StrictAtom(String),
    #[error("expected an ODE, found `{0}`")]
    NotAnOde(String),
    #[error("the ODE already evolves the clock `{0}`")]
    OdeContainsClock(String),
    #[error("variable `{0}` has two equations in one ODE")]
    DuplicateOdeVariable(String),
    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("{line}:{col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Lit(BigRational),
    Neg(Box<Term>),
    Bin(BinOp, Box<Term>, Box<Term>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Le,
    Ge,
    Eq,
    Lt,
    Gt,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Le => "<=",
            Rel::Ge => ">=",
            Rel::Eq => "=",
            Rel::Lt => "<",
            Rel::Gt => ">",
        }
    }

    pub fn is_strict(self) -> bool {
        matches!(self, Rel::Lt | Rel::Gt)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Cmp(Rel, Term, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Exists(String, Box<Formula>),
    Box(Box<Program>, Box<Formula>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ode {
    equations: Vec<(String, Term)>,
    pub domain: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Program {
    Assign(String, Term),
    Havoc(String),
    Test(Formula),
    Choice(Box<Program>, Box<Program>),
    Seq(Box<Program>, Box<Program>),
    Loop(Box<Program>),
    Ode(Ode),
}

#[allow(clippy::should_implement_trait)]
impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn int(v: i64) -> Term {
        Term::Lit(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn ratio(num: i64, den: i64) -> Result<Term, DlError> {
        if den == 0 {
            return Err(DlError::DivisionByZero);
        }
        Ok(Term::Lit(BigRational::new(
            BigInt::from(num),
            BigInt::from(den),
        )))
    }

    pub fn zero() -> Term {
        Term::Lit(BigRational::zero())
    }

    pub fn one() -> Term {
        Term::Lit(BigRational::one())
    }

    pub fn neg(t: Term) -> Term {
        Term::Neg(Box::new(t))
    }

    pub fn add(a: Term, b: Term) -> Term {
        Term::Bin(BinOp::Add, Box::new(a), Box::new(b))
    }

    pub fn sub(a: Term, b: Term) -> Term {
        Term::Bin(BinOp::Sub, Box::new(a), Box::new(b))
    }

    pub fn mul(a: Term, b: Term) -> Term {
        Term::Bin(BinOp::Mul, Box::new(a), Box::new(b))
    }

    /// Division; a literal zero divisor is rejected.
    pub fn div(a: Term, b: Term) -> Result<Term, DlError> {
        if let Term::Lit(r) = &b {
            if r.is_zero() {
                return Err(DlError::DivisionByZero);
            }
        }
        Ok(Term::Bin(BinOp::Div, Box::new(a), Box::new(b)))
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Lit(_) => {}
            Term::Neg(t) => t.collect_vars(out),
            Term::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    /// Replaces variables according to `f`; variables mapped to `None` stay.
    pub fn substitute(&self, f: &dyn Fn(&str) -> Option<Term>) -> Term {
        match self {
            Term::Var(v) => f(v).unwrap_or_else(|| self.clone()),
            Term::Lit(_) => self.clone(),
            Term::Neg(t) => Term::neg(t.substitute(f)),
            Term::Bin(op, a, b) => {
                Term::Bin(*op, Box::new(a.substitute(f)), Box::new(b.substitute(f)))
            }
        }
    }
}

#[allow(clippy::should_implement_trait)]
impl Formula {
    pub fn cmp(rel: Rel, a: Term, b: Term) -> Formula {
        Formula::Cmp(rel, a, b)
    }

    pub fn le(a: Term, b: Term) -> Formula {
        Formula::Cmp(Rel::Le, a, b)
    }

    pub fn ge(a: Term, b: Term) -> Formula {
        Formula::Cmp(Rel::Ge, a, b)
    }

    pub fn eq(a: Term, b: Term) -> Formula {
        Formula::Cmp(Rel::Eq, a, b)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn exists(v: impl Into<String>, f: Formula) -> Formula {
        Formula::Exists(v.into(), Box::new(f))
    }

    pub fn boxed(p: Program, f: Formula) -> Formula {
        Formula::Box(Box::new(p), Box::new(f))
    }

    /// Right-nested conjunction. Empty gives `true`, one conjunct stays bare.
    pub fn and_all(items: impl IntoIterator<Item = Formula>) -> Formula {
        let mut items: Vec<Formula> = items.into_iter().collect();
        let Some(mut acc) = items.pop() else {
            return Formula::True;
        };
        while let Some(f) = items.pop() {
            acc = Formula::and(f, acc);
        }
        acc
    }

    /// Like [`Formula::and_all`] but drops literal `true` conjuncts first.
    pub fn and_nontrivial(items: impl IntoIterator<Item = Formula>) -> Formula {
        Formula::and_all(items.into_iter().filter(|f| *f != Formula::True))
    }

    pub fn or_all(items: impl IntoIterator<Item = Formula>) -> Formula {
        let mut items: Vec<Formula> = items.into_iter().collect();
        let Some(mut acc) = items.pop() else {
            return Formula::False;
        };
        while let Some(f) = items.pop() {
            acc = Formula::or(f, acc);
        }
        acc
    }

    /// Top-level conjuncts of a conjunction.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        match self {
            Formula::And(a, b) => {
                let mut v = a.conjuncts();
                v.extend(b.conjuncts());
                v
            }
            f => vec![f],
        }
    }

    pub fn mentions(&self, var: &str) -> bool {
        self.all_vars().contains(var)
    }

    /// Every variable occurring anywhere, bound or free, including ODE and assignment targets.
    pub fn all_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_all(&mut out);
        out
    }

    fn collect_all(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Cmp(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Formula::Not(f) => f.collect_all(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.collect_all(out);
                b.collect_all(out);
            }
            Formula::Exists(v, f) => {
                out.insert(v.clone());
                f.collect_all(out);
            }
            Formula::Box(p, f) => {
                p.collect_all(out);
                f.collect_all(out);
            }
        }
    }

    /// Substitutes free occurrences of variables; quantifiers shadow.
    pub fn substitute(&self, f: &dyn Fn(&str) -> Option<Term>) -> Formula {
        match self {
            Formula::True | Formula::False => self.clone(),
            Formula::Cmp(r, a, b) => Formula::Cmp(*r, a.substitute(f), b.substitute(f)),
            Formula::Not(g) => Formula::not(g.substitute(f)),
            Formula::And(a, b) => Formula::and(a.substitute(f), b.substitute(f)),
            Formula::Or(a, b) => Formula::or(a.substitute(f), b.substitute(f)),
            Formula::Implies(a, b) => Formula::implies(a.substitute(f), b.substitute(f)),
            Formula::Exists(v, g) => {
                let bound = v.clone();
                let inner = move |x: &str| if x == bound { None } else { f(x) };
                Formula::exists(v.clone(), g.substitute(&inner))
            }
            // Substitution under modalities is only used on modality-free contracts.
            Formula::Box(_, _) => self.clone(),
        }
    }
}

impl Ode {
    pub fn new(equations: Vec<(String, Term)>, domain: Formula) -> Result<Ode, DlError> {
        let mut seen = BTreeSet::new();
        for (v, _) in &equations {
            if !seen.insert(v.clone()) {
                return Err(DlError::DuplicateOdeVariable(v.clone()));
            }
        }
        Ok(Ode { equations, domain })
    }

    pub fn equations(&self) -> &[(String, Term)] {
        &self.equations
    }

    pub fn evolves(&self, var: &str) -> bool {
        self.equations.iter().any(|(v, _)| v == var)
    }
}

impl Program {
    pub fn assign(v: impl Into<String>, t: Term) -> Program {
        Program::Assign(v.into(), t)
    }

    pub fn havoc(v: impl Into<String>) -> Program {
        Program::Havoc(v.into())
    }

    pub fn test(f: Formula) -> Program {
        Program::Test(f)
    }

    pub fn skip() -> Program {
        Program::Test(Formula::True)
    }

    pub fn choice(a: Program, b: Program) -> Program {
        Program::Choice(Box::new(a), Box::new(b))
    }

    pub fn looped(p: Program) -> Program {
        Program::Loop(Box::new(p))
    }

    /// Sequential composition, kept right-associated.
    pub fn seq(a: Program, b: Program) -> Program {
        match a {
            Program::Seq(x, y) => Program::seq(*x, Program::seq(*y, b)),
            a => Program::Seq(Box::new(a), Box::new(b)),
        }
    }

    /// Right-associated sequence; an empty list is `?true`.
    pub fn seq_all(items: impl IntoIterator<Item = Program>) -> Program {
        let mut items: Vec<Program> = items.into_iter().collect();
        let Some(mut acc) = items.pop() else {
            return Program::skip();
        };
        while let Some(p) = items.pop() {
            acc = Program::seq(p, acc);
        }
        acc
    }

    fn collect_all(&self, out: &mut BTreeSet<String>) {
        match self {
            Program::Assign(v, t) => {
                out.insert(v.clone());
                t.collect_vars(out);
            }
            Program::Havoc(v) => {
                out.insert(v.clone());
            }
            Program::Test(f) => f.collect_all(out),
            Program::Choice(a, b) | Program::Seq(a, b) => {
                a.collect_all(out);
                b.collect_all(out);
            }
            Program::Loop(p) => p.collect_all(out),
            Program::Ode(ode) => {
                for (v, t) in &ode.equations {
                    out.insert(v.clone());
                    t.collect_vars(out);
                }
                ode.domain.collect_all(out);
            }
        }
    }

    pub fn all_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_all(&mut out);
        out
    }
}

/// Free variables of a formula. Variables written by programs count as free.
pub fn free_variables(f: &Formula) -> BTreeSet<String> {
    match f {
        Formula::Exists(v, g) => {
            let mut s = free_variables(g);
            s.remove(v);
            s
        }
        Formula::Not(g) => free_variables(g),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            let mut s = free_variables(a);
            s.extend(free_variables(b));
            s
        }
        Formula::Box(p, g) => {
            let mut s = p.all_vars();
            s.extend(free_variables(g));
            s
        }
        other => other.all_vars(),
    }
}

/// Weak negation: flips weak comparisons and keeps the boundary.
pub fn weak_negate(f: &Formula) -> Result<Formula, DlError> {
    Ok(match f {
        Formula::True => Formula::False,
        Formula::False => Formula::True,
        Formula::Cmp(Rel::Le, a, b) => Formula::Cmp(Rel::Ge, a.clone(), b.clone()),
        Formula::Cmp(Rel::Ge, a, b) => Formula::Cmp(Rel::Le, a.clone(), b.clone()),
        Formula::Cmp(Rel::Eq, a, b) => Formula::Cmp(Rel::Eq, a.clone(), b.clone()),
        Formula::Cmp(_, _, _) => return Err(DlError::StrictAtom(render_formula(f))),
        Formula::Not(g) => (**g).clone(),
        Formula::And(a, b) => Formula::or(weak_negate(a)?, weak_negate(b)?),
        Formula::Or(a, b) => Formula::and(weak_negate(a)?, weak_negate(b)?),
        Formula::Implies(a, b) => Formula::and((**a).clone(), weak_negate(b)?),
        Formula::Exists(_, _) => return Err(DlError::QuantifierInWeakNegation),
        Formula::Box(_, _) => return Err(DlError::ModalityInWeakNegation),
    })
}

/// `inv ∧ [t:=0; {ode, t'=1 & psi}] inv`.
pub fn build_pr(psi: &Formula, inv: &Formula, ode: &Program) -> Result<Formula, DlError> {
    let Program::Ode(ode) = ode else {
        return Err(DlError::NotAnOde(render_program(ode)));
    };
    if ode.evolves(CLOCK) {
        return Err(DlError::OdeContainsClock(CLOCK.into()));
    }
    let mut eqs = ode.equations.clone();
    eqs.push((CLOCK.into(), Term::one()));
    let flow = Program::Ode(Ode::new(eqs, psi.clone())?);
    let prog = Program::seq(Program::assign(CLOCK, Term::zero()), flow);
    Ok(Formula::and(inv.clone(), Formula::boxed(prog, inv.clone())))
}

/// `inv ∧ [{ode & psi}] inv`, the clock-free variant for regions that never read `t`.
pub fn build_pr_untimed(psi: &Formula, inv: &Formula, ode: &Program) -> Result<Formula, DlError> {
    let Program::Ode(ode) = ode else {
        return Err(DlError::NotAnOde(render_program(ode)));
    };
    let flow = Program::Ode(Ode::new(ode.equations.clone(), psi.clone())?);
    Ok(Formula::and(inv.clone(), Formula::boxed(flow, inv.clone())))
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_term(self))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_formula(self))
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_program(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Term {
        Term::var("x")
    }

    #[test]
    fn weak_negation_flips_weak_atoms() {
        let f = Formula::and(
            Formula::le(Term::var("level"), Term::int(3)),
            Formula::le(Term::var("drain"), Term::zero()),
        );
        let g = weak_negate(&f).unwrap();
        assert_eq!(
            g,
            Formula::or(
                Formula::ge(Term::var("level"), Term::int(3)),
                Formula::ge(Term::var("drain"), Term::zero())
            )
        );
    }

    #[test]
    fn weak_negation_of_constants_and_equality() {
        assert_eq!(weak_negate(&Formula::True).unwrap(), Formula::False);
        let e = Formula::eq(x(), Term::one());
        assert_eq!(weak_negate(&e).unwrap(), e);
        assert_eq!(weak_negate(&Formula::not(e.clone())).unwrap(), e);
    }

    #[test]
    fn weak_negation_rejects_modalities_and_strict_atoms() {
        let b = Formula::boxed(Program::skip(), Formula::True);
        assert_eq!(weak_negate(&b), Err(DlError::ModalityInWeakNegation));
        let s = Formula::cmp(Rel::Lt, x(), Term::one());
        assert!(matches!(weak_negate(&s), Err(DlError::StrictAtom(_))));
        let q = Formula::exists("y", Formula::True);
        assert_eq!(weak_negate(&q), Err(DlError::QuantifierInWeakNegation));
    }

    #[test]
    fn pr_appends_the_clock() {
        let ode = Program::Ode(Ode::new(vec![("v".into(), Term::zero())], Formula::True).unwrap());
        let inv = Formula::ge(Term::var("v"), Term::zero());
        let pr = build_pr(&Formula::True, &inv, &ode).unwrap();
        assert_eq!(
            render_formula(&pr),
            "v >= 0 & [t := 0; {v' = 0, t' = 1 & true}]v >= 0"
        );
    }

    #[test]
    fn pr_rejects_bad_arguments() {
        assert!(matches!(
            build_pr(&Formula::True, &Formula::True, &Program::skip()),
            Err(DlError::NotAnOde(_))
        ));
        let ode = Program::Ode(Ode::new(vec![("t".into(), Term::one())], Formula::True).unwrap());
        assert!(matches!(
            build_pr(&Formula::True, &Formula::True, &ode),
            Err(DlError::OdeContainsClock(_))
        ));
    }

    #[test]
    fn duplicate_ode_variable() {
        let e = Ode::new(
            vec![("x".into(), Term::one()), ("x".into(), Term::zero())],
            Formula::True,
        );
        assert_eq!(e, Err(DlError::DuplicateOdeVariable("x".into())));
    }

    #[test]
    fn division_by_literal_zero() {
        assert_eq!(Term::div(x(), Term::zero()), Err(DlError::DivisionByZero));
        assert_eq!(Term::ratio(1, 0), Err(DlError::DivisionByZero));
    }

    #[test]
    fn free_variables_skip_bound() {
        let f = Formula::exists("y", Formula::le(Term::var("y"), x()));
        assert_eq!(free_variables(&f), BTreeSet::from(["x".to_string()]));
    }

    #[test]
    fn conjunction_helpers() {
        assert_eq!(Formula::and_all(vec![]), Formula::True);
        let a = Formula::le(x(), Term::one());
        assert_eq!(Formula::and_all(vec![a.clone()]), a);
        assert_eq!(
            Formula::and_all(vec![a.clone(), a.clone(), a.clone()])
                .conjuncts()
                .len(),
            3
        );
    }
}
