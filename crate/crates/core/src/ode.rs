//! ODE solutions, compiled guards and event search.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::dl::{self, Formula, Rel, Term};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OdeError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("`{0}` is not first-order")]
    NotFirstOrder(String),
    #[error("`{0}` evolves twice")]
    Duplicate(String),
}

/// A term over slot indices.
#[derive(Debug, Clone, PartialEq)]
pub enum CTerm<S> {
    Var(usize),
    Lit(S),
    Neg(Box<CTerm<S>>),
    Add(Box<CTerm<S>>, Box<CTerm<S>>),
    Sub(Box<CTerm<S>>, Box<CTerm<S>>),
    Mul(Box<CTerm<S>>, Box<CTerm<S>>),
    Div(Box<CTerm<S>>, Box<CTerm<S>>),
}

impl<S: Scalar> CTerm<S> {
    pub fn compile(t: &Term, slot: &dyn Fn(&str) -> Option<usize>) -> Result<CTerm<S>, OdeError> {
        let b = |t: &Term| CTerm::compile(t, slot).map(Box::new);
        Ok(match t {
            Term::Var(v) => {
                CTerm::Var(slot(v).ok_or_else(|| OdeError::UnknownVariable(v.clone()))?)
            }
            Term::Lit(r) => CTerm::Lit(S::from_rational(r)),
            Term::Neg(a) => CTerm::Neg(b(a)?),
            Term::Bin(op, x, y) => {
                let (x, y) = (b(x)?, b(y)?);
                match op {
                    dl::BinOp::Add => CTerm::Add(x, y),
                    dl::BinOp::Sub => CTerm::Sub(x, y),
                    dl::BinOp::Mul => CTerm::Mul(x, y),
                    dl::BinOp::Div => CTerm::Div(x, y),
                }
            }
        })
    }

    pub fn eval(&self, v: &[S]) -> S {
        match self {
            CTerm::Var(i) => v[*i],
            CTerm::Lit(c) => *c,
            CTerm::Neg(a) => -a.eval(v),
            CTerm::Add(a, b) => a.eval(v) + b.eval(v),
            CTerm::Sub(a, b) => a.eval(v) - b.eval(v),
            CTerm::Mul(a, b) => a.eval(v) * b.eval(v),
            CTerm::Div(a, b) => a.eval(v) / b.eval(v),
        }
    }

    fn visit_slots(&self, f: &mut dyn FnMut(usize)) {
        match self {
            CTerm::Var(i) => f(*i),
            CTerm::Lit(_) => {}
            CTerm::Neg(a) => a.visit_slots(f),
            CTerm::Add(a, b) | CTerm::Sub(a, b) | CTerm::Mul(a, b) | CTerm::Div(a, b) => {
                a.visit_slots(f);
                b.visit_slots(f);
            }
        }
    }
}

/// A modality-free formula over slot indices, evaluated to a signed margin.
#[derive(Debug, Clone, PartialEq)]
pub enum CFormula<S> {
    True,
    False,
    Cmp(Rel, CTerm<S>, CTerm<S>),
    Not(Box<CFormula<S>>),
    And(Box<CFormula<S>>, Box<CFormula<S>>),
    Or(Box<CFormula<S>>, Box<CFormula<S>>),
    Implies(Box<CFormula<S>>, Box<CFormula<S>>),
}

impl<S: Scalar> CFormula<S> {
    pub fn compile(
        f: &Formula,
        slot: &dyn Fn(&str) -> Option<usize>,
    ) -> Result<CFormula<S>, OdeError> {
        let b = |f: &Formula| CFormula::compile(f, slot).map(Box::new);
        Ok(match f {
            Formula::True => CFormula::True,
            Formula::False => CFormula::False,
            Formula::Cmp(r, x, y) => {
                CFormula::Cmp(*r, CTerm::compile(x, slot)?, CTerm::compile(y, slot)?)
            }
            Formula::Not(g) => CFormula::Not(b(g)?),
            Formula::And(x, y) => CFormula::And(b(x)?, b(y)?),
            Formula::Or(x, y) => CFormula::Or(b(x)?, b(y)?),
            Formula::Implies(x, y) => CFormula::Implies(b(x)?, b(y)?),
            other => return Err(OdeError::NotFirstOrder(other.to_string())),
        })
    }

    /// Nonnegative iff the formula holds; the magnitude is a distance to the boundary.
    pub fn margin(&self, v: &[S]) -> S {
        match self {
            CFormula::True => S::infinity(),
            CFormula::False => S::neg_infinity(),
            CFormula::Cmp(r, a, b) => {
                let (a, b) = (a.eval(v), b.eval(v));
                match r {
                    Rel::Le | Rel::Lt => b - a,
                    Rel::Ge | Rel::Gt => a - b,
                    Rel::Eq => -(a - b).abs(),
                }
            }
            CFormula::Not(g) => -g.margin(v),
            CFormula::And(a, b) => a.margin(v).min(b.margin(v)),
            CFormula::Or(a, b) => a.margin(v).max(b.margin(v)),
            CFormula::Implies(a, b) => (-a.margin(v)).max(b.margin(v)),
        }
    }

    pub fn holds(&self, v: &[S], slack: S) -> bool {
        self.margin(v) >= -slack
    }
}

type Poly<S> = Vec<S>;

fn poly_add<S: Scalar>(a: &Poly<S>, b: &Poly<S>, sign: S) -> Poly<S> {
    let mut out = vec![S::zero(); a.len().max(b.len())];
    for (i, c) in a.iter().enumerate() {
        out[i] = out[i] + *c;
    }
    for (i, c) in b.iter().enumerate() {
        out[i] = out[i] + sign * *c;
    }
    out
}

fn poly_mul<S: Scalar>(a: &Poly<S>, b: &Poly<S>) -> Poly<S> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![S::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] = out[i + j] + *x * *y;
        }
    }
    out
}

fn poly_eval<S: Scalar>(p: &Poly<S>, t: S) -> S {
    p.iter().rev().fold(S::zero(), |acc, c| acc * t + *c)
}

/// The term as a polynomial in time, given the polynomials of its slots.
fn to_poly<S: Scalar>(t: &CTerm<S>, polys: &[Option<Poly<S>>]) -> Option<Poly<S>> {
    Some(match t {
        CTerm::Var(i) => polys[*i].clone()?,
        CTerm::Lit(c) => vec![*c],
        CTerm::Neg(a) => to_poly(a, polys)?.into_iter().map(|c| -c).collect(),
        CTerm::Add(a, b) => poly_add(&to_poly(a, polys)?, &to_poly(b, polys)?, S::one()),
        CTerm::Sub(a, b) => poly_add(&to_poly(a, polys)?, &to_poly(b, polys)?, -S::one()),
        CTerm::Mul(a, b) => poly_mul(&to_poly(a, polys)?, &to_poly(b, polys)?),
        CTerm::Div(a, b) => {
            let d = to_poly(b, polys)?;
            if d.iter().skip(1).any(|c| *c != S::zero()) {
                return None;
            }
            let d = d.first().copied().unwrap_or_else(S::zero);
            to_poly(a, polys)?.into_iter().map(|c| c / d).collect()
        }
    })
}

#[derive(Debug)]
struct Grid<S> {
    states: Vec<Vec<S>>,
    slopes: Vec<Vec<S>>,
}

#[derive(Debug, Clone)]
enum Solver<S> {
    /// One polynomial in elapsed time per variable.
    Closed(Vec<Poly<S>>),
    /// Fixed-step RK4 with a lazily extended grid and Hermite interpolation.
    Numeric { h: S, grid: Arc<Mutex<Grid<S>>> },
}

/// The solution of an ODE from an initial state. Variables without an equation stay constant.
#[derive(Debug, Clone)]
pub struct Dynamics<S> {
    vars: Vec<String>,
    initial: Vec<S>,
    rhs: Vec<Option<CTerm<S>>>,
    solver: Solver<S>,
}

/// Default integration step.
pub const DEFAULT_STEP: f64 = 1e-3;

impl<S: Scalar> Dynamics<S> {
    /// Closed form when the equations are polynomial and acyclic, numeric otherwise.
    pub fn new(
        equations: &[(String, Term)],
        initial: &[(String, S)],
    ) -> Result<Dynamics<S>, OdeError> {
        Self::build(equations, initial, S::lit(DEFAULT_STEP), false)
    }

    pub fn with_step(
        equations: &[(String, Term)],
        initial: &[(String, S)],
        h: S,
    ) -> Result<Dynamics<S>, OdeError> {
        Self::build(equations, initial, h, false)
    }

    /// Always integrates numerically.
    pub fn numeric(
        equations: &[(String, Term)],
        initial: &[(String, S)],
        h: S,
    ) -> Result<Dynamics<S>, OdeError> {
        Self::build(equations, initial, h, true)
    }

    fn build(
        equations: &[(String, Term)],
        initial: &[(String, S)],
        h: S,
        force: bool,
    ) -> Result<Dynamics<S>, OdeError> {
        let vars: Vec<String> = initial.iter().map(|(v, _)| v.clone()).collect();
        let index: BTreeMap<&str, usize> = vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), i))
            .collect();
        let slot = |v: &str| index.get(v).copied();
        let mut rhs: Vec<Option<CTerm<S>>> = vec![None; vars.len()];
        for (v, t) in equations {
            let i = slot(v).ok_or_else(|| OdeError::UnknownVariable(v.clone()))?;
            if rhs[i].is_some() {
                return Err(OdeError::Duplicate(v.clone()));
            }
            rhs[i] = Some(CTerm::compile(t, &slot)?);
        }
        let init: Vec<S> = initial.iter().map(|(_, x)| *x).collect();
        let solver = match (force, closed_form(&rhs, &init)) {
            (false, Some(polys)) => Solver::Closed(polys),
            _ => {
                let d = derivative(&rhs, &init);
                Solver::Numeric {
                    h,
                    grid: Arc::new(Mutex::new(Grid {
                        states: vec![init.clone()],
                        slopes: vec![d],
                    })),
                }
            }
        };
        Ok(Dynamics {
            vars,
            initial: init,
            rhs,
            solver,
        })
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    pub fn initial(&self) -> &[S] {
        &self.initial
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.solver, Solver::Closed(_))
    }

    pub fn evolves(&self, name: &str) -> bool {
        self.slot(name).is_some_and(|i| self.rhs[i].is_some())
    }

    /// State after `t` time units.
    pub fn state_at(&self, t: S) -> Vec<S> {
        match &self.solver {
            Solver::Closed(polys) => polys.iter().map(|p| poly_eval(p, t)).collect(),
            Solver::Numeric { h, grid } => {
                if t <= S::zero() {
                    return self.initial.clone();
                }
                let k = (t / *h).floor().to_usize().unwrap_or(usize::MAX - 1);
                let mut g = grid.lock().unwrap_or_else(|e| e.into_inner());
                while g.states.len() <= k + 1 {
                    let last = g.states.last().expect("grid is never empty").clone();
                    let next = rk4(&self.rhs, &last, *h);
                    let d = derivative(&self.rhs, &next);
                    g.states.push(next);
                    g.slopes.push(d);
                }
                let s = (t - S::from_usize(k).unwrap() * *h) / *h;
                let (p0, p1, m0, m1) = (
                    &g.states[k],
                    &g.states[k + 1],
                    &g.slopes[k],
                    &g.slopes[k + 1],
                );
                let two = S::lit(2.0);
                let three = S::lit(3.0);
                let s2 = s * s;
                let s3 = s2 * s;
                let h00 = two * s3 - three * s2 + S::one();
                let h10 = s3 - two * s2 + s;
                let h01 = -two * s3 + three * s2;
                let h11 = s3 - s2;
                (0..p0.len())
                    .map(|i| h00 * p0[i] + h10 * *h * m0[i] + h01 * p1[i] + h11 * *h * m1[i])
                    .collect()
            }
        }
    }

    pub fn value_at(&self, name: &str, t: S) -> Option<S> {
        self.slot(name).map(|i| self.state_at(t)[i])
    }
}

fn derivative<S: Scalar>(rhs: &[Option<CTerm<S>>], x: &[S]) -> Vec<S> {
    rhs.iter()
        .map(|r| r.as_ref().map_or(S::zero(), |t| t.eval(x)))
        .collect()
}

fn rk4<S: Scalar>(rhs: &[Option<CTerm<S>>], x: &[S], h: S) -> Vec<S> {
    let half = h / S::lit(2.0);
    let shift =
        |x: &[S], d: &[S], s: S| -> Vec<S> { x.iter().zip(d).map(|(a, b)| *a + s * *b).collect() };
    let k1 = derivative(rhs, x);
    let k2 = derivative(rhs, &shift(x, &k1, half));
    let k3 = derivative(rhs, &shift(x, &k2, half));
    let k4 = derivative(rhs, &shift(x, &k3, h));
    let six = S::lit(6.0);
    (0..x.len())
        .map(|i| x[i] + h / six * (k1[i] + S::lit(2.0) * k2[i] + S::lit(2.0) * k3[i] + k4[i]))
        .collect()
}

/// Integrates the equations symbolically in dependency order, if that terminates.
fn closed_form<S: Scalar>(rhs: &[Option<CTerm<S>>], init: &[S]) -> Option<Vec<Poly<S>>> {
    let n = rhs.len();
    let mut deps: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, r) in rhs.iter().enumerate() {
        if let Some(t) = r {
            t.visit_slots(&mut |j| {
                if rhs[j].is_some() {
                    deps[i].push(j);
                }
            });
        }
    }
    let mut polys: Vec<Option<Poly<S>>> = (0..n)
        .map(|i| {
            if rhs[i].is_none() {
                Some(vec![init[i]])
            } else {
                None
            }
        })
        .collect();
    loop {
        let ready =
            (0..n).find(|&i| polys[i].is_none() && deps[i].iter().all(|&j| polys[j].is_some()));
        let Some(i) = ready else { break };
        let d = to_poly(rhs[i].as_ref().unwrap(), &polys)?;
        let mut p = vec![init[i]];
        for (k, c) in d.iter().enumerate() {
            p.push(*c / S::from_usize(k + 1).unwrap());
        }
        polys[i] = Some(p);
    }
    polys.into_iter().collect()
}

/// Sampling followed by bisection.
#[derive(Debug, Clone, Copy)]
pub struct EventSearch<S> {
    pub step: S,
    pub tol: S,
}

impl<S: Scalar> Default for EventSearch<S> {
    fn default() -> Self {
        EventSearch {
            step: S::lit(DEFAULT_STEP),
            tol: S::lit(1e-9),
        }
    }
}

impl<S: Scalar> EventSearch<S> {
    /// Least `t` in `[0, limit]` where `holds` is true, up to `tol`; the returned
    /// time satisfies the predicate.
    pub fn first_hit(&self, holds: impl Fn(S) -> bool, limit: S) -> Option<S> {
        if holds(S::zero()) {
            return Some(S::zero());
        }
        self.scan(&holds, S::zero(), limit)
    }

    /// Least `t > 0` where `holds` becomes true after having been false.
    pub fn rising_edge(&self, holds: impl Fn(S) -> bool, limit: S) -> Option<S> {
        let mut lo = S::zero();
        if holds(lo) {
            loop {
                let next = (lo + self.step).min(limit);
                if !holds(next) {
                    // Narrow down to the last true point before the drop.
                    let (mut a, mut b) = (lo, next);
                    while b - a > self.tol {
                        let mid = (a + b) / S::lit(2.0);
                        if holds(mid) {
                            a = mid;
                        } else {
                            b = mid;
                        }
                    }
                    lo = b;
                    break;
                }
                if next >= limit {
                    return None;
                }
                lo = next;
            }
        }
        self.scan(&holds, lo, limit)
    }

    fn scan(&self, holds: &dyn Fn(S) -> bool, from: S, limit: S) -> Option<S> {
        let mut lo = from;
        while lo < limit {
            let hi = (lo + self.step).min(limit);
            if holds(hi) {
                let (mut a, mut b) = (lo, hi);
                while b - a > self.tol {
                    let mid = (a + b) / S::lit(2.0);
                    if holds(mid) {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                return Some(b);
            }
            lo = hi;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dl::parse_term;

    fn eqs(src: &[(&str, &str)]) -> Vec<(String, Term)> {
        src.iter()
            .map(|(v, t)| (v.to_string(), parse_term(t).unwrap()))
            .collect()
    }

    fn init(src: &[(&str, f64)]) -> Vec<(String, f64)> {
        src.iter().map(|(v, x)| (v.to_string(), *x)).collect()
    }

    #[test]
    fn tank_is_closed_form() {
        let d = Dynamics::new(
            &eqs(&[("level", "drain"), ("drain", "0")]),
            &init(&[("level", 5.0), ("drain", -1.0)]),
        )
        .unwrap();
        assert!(d.is_closed_form());
        assert_eq!(d.value_at("level", 2.0), Some(3.0));
        assert_eq!(d.value_at("drain", 7.0), Some(-1.0));
    }

    #[test]
    fn falling_ball() {
        let d = Dynamics::new(
            &eqs(&[("x", "v"), ("v", "a"), ("a", "0")]),
            &init(&[("x", 5.0), ("v", 0.0), ("a", 9.81)]),
        )
        .unwrap();
        let x = d.value_at("x", 2.0).unwrap();
        assert!((x - (5.0 + 4.905 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn self_dependency_is_numeric() {
        let d = Dynamics::new(&eqs(&[("x", "-x")]), &init(&[("x", 1.0)])).unwrap();
        assert!(!d.is_closed_form());
        assert!((d.value_at("x", 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-10);
        assert!((d.value_at("x", 0.2345).unwrap() - (-0.2345f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn unknown_variable() {
        let e = Dynamics::<f64>::new(&eqs(&[("x", "y")]), &init(&[("x", 1.0)])).unwrap_err();
        assert_eq!(e, OdeError::UnknownVariable("y".into()));
    }

    #[test]
    fn first_hit_on_falling_level() {
        let s = EventSearch::<f64>::default();
        let t = s.first_hit(|t| 4.0 - t <= 3.0 + 1e-9, 10.0).unwrap();
        assert!((t - 1.0).abs() < 1e-8);
        assert_eq!(s.first_hit(|t| 4.0 - t >= 10.0, 10.0), None);
        assert_eq!(s.first_hit(|_| true, 10.0), Some(0.0));
    }

    #[test]
    fn rising_edge_skips_initial_interval() {
        let s = EventSearch::<f64>::default();
        // true on [0, 1], false on (1, 3), true from 3
        let t = s.rising_edge(|t| t <= 1.0 || t >= 3.0, 10.0).unwrap();
        assert!((t - 3.0).abs() < 1e-8);
    }

    #[test]
    fn margins() {
        let f = dl::parse_formula("x <= 3 & (y >= 1 | x = 2)").unwrap();
        let slot = |v: &str| ["x", "y"].iter().position(|n| *n == v);
        let c = CFormula::<f64>::compile(&f, &slot).unwrap();
        assert!(c.holds(&[2.0, 0.0], 1e-9));
        assert!(!c.holds(&[2.5, 0.0], 1e-9));
        assert_eq!(c.margin(&[1.0, 5.0]), 2.0);
    }
}
