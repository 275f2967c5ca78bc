//! Guarded procedures over one global ODE.
//!
//! Text syntax, one item per line (continuation lines are joined):
//!
//! ```text
//! dyn { level' = drain }
//! init level = 5, drain = -1
//! inv 3 <= level & level <= 10
//! prcd up: ?level >= 10 { drain := -1 }
//! ```

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use crate::dl::{self, eval_formula, eval_term, DlError, EvalError, Formula, Program, Rel, Term};
use crate::ode::{CFormula, Dynamics, EventSearch, OdeError};
use crate::sim::{Scheduler, SchedulerPolicy};
use crate::vcg::{Obligation, ObligationKind};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConcurrentError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Dl { line: usize, source: DlError },
    #[error("guard of `{0}` is not a conjunction of weak inequalities")]
    Guard(String),
    #[error("body of `{0}` contains an ODE")]
    BodyOde(String),
    #[error("every branch of `{0}` fails a test")]
    Blocked(String),
    #[error("more than {0} executions at one instant")]
    Zeno(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Weak(#[from] DlError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Procedure {
    pub name: String,
    pub guard: Formula,
    pub body: Program,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcurrentProgram {
    pub procedures: Vec<Procedure>,
    /// Right-hand sides of the ODE.
    pub dynamics: Vec<(String, Term)>,
    /// Initial valuation given by `init`.
    pub init: Vec<(String, BigRational)>,
    pub invariant: Option<Formula>,
}

pub type Valuation<S> = BTreeMap<String, S>;

#[derive(Debug, Clone, PartialEq)]
pub struct ConcurrentState<S> {
    pub clock: S,
    pub valuation: Valuation<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transition<S> {
    Execute {
        procedure: String,
        state: ConcurrentState<S>,
    },
    Urgent {
        elapsed: S,
        state: ConcurrentState<S>,
    },
    Final,
}

fn constant(t: &Term) -> Option<BigRational> {
    Some(match t {
        Term::Lit(r) => r.clone(),
        Term::Neg(a) => -constant(a)?,
        Term::Bin(op, a, b) => {
            let (x, y) = (constant(a)?, constant(b)?);
            match op {
                dl::BinOp::Add => x + y,
                dl::BinOp::Sub => x - y,
                dl::BinOp::Mul => x * y,
                dl::BinOp::Div if y.is_zero() => return None,
                dl::BinOp::Div => x / y,
            }
        }
        Term::Var(_) => return None,
    })
}

fn weak_conjunction(f: &Formula) -> bool {
    f.conjuncts()
        .iter()
        .all(|c| matches!(c, Formula::True | Formula::Cmp(Rel::Le | Rel::Ge, ..)))
}

fn has_ode(p: &Program) -> bool {
    match p {
        Program::Ode(_) => true,
        Program::Choice(a, b) | Program::Seq(a, b) => has_ode(a) || has_ode(b),
        Program::Loop(a) => has_ode(a),
        _ => false,
    }
}

impl ConcurrentProgram {
    pub fn parse(src: &str) -> Result<ConcurrentProgram, ConcurrentError> {
        let mut items: Vec<(usize, String)> = Vec::new();
        for (i, raw) in src.lines().enumerate() {
            let text = raw.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let keyword = text
                .split(|c: char| !c.is_alphanumeric())
                .next()
                .unwrap_or("");
            match (keyword, items.last_mut()) {
                ("dyn" | "init" | "inv" | "prcd", _) | (_, None) => {
                    items.push((i + 1, text.to_string()))
                }
                (_, Some((_, last))) => {
                    last.push(' ');
                    last.push_str(text);
                }
            }
        }
        let mut prog = ConcurrentProgram {
            procedures: Vec::new(),
            dynamics: Vec::new(),
            init: Vec::new(),
            invariant: None,
        };
        let mut seen_dyn = false;
        for (line, text) in items {
            let err = |m: &str| ConcurrentError::Parse {
                line,
                message: m.to_string(),
            };
            let dl_err = |source| ConcurrentError::Dl { line, source };
            if let Some(rest) = text.strip_prefix("dyn") {
                if seen_dyn {
                    return Err(err("second `dyn`"));
                }
                seen_dyn = true;
                let Program::Ode(ode) = dl::parse_program(rest.trim()).map_err(dl_err)? else {
                    return Err(err("`dyn` expects `{ x' = e, ... }`"));
                };
                if ode.domain != Formula::True {
                    return Err(err("the dynamics take no evolution domain"));
                }
                prog.dynamics = ode.equations().to_vec();
            } else if let Some(rest) = text.strip_prefix("init") {
                for part in rest.split(',') {
                    let (v, e) = part
                        .split_once('=')
                        .ok_or_else(|| err("expected `v = constant`"))?;
                    let t = dl::parse_term(e.trim()).map_err(dl_err)?;
                    let c = constant(&t).ok_or_else(|| err("initial values must be constants"))?;
                    prog.init.push((v.trim().to_string(), c));
                }
            } else if let Some(rest) = text.strip_prefix("inv") {
                prog.invariant = Some(dl::parse_formula(rest.trim()).map_err(dl_err)?);
            } else if let Some(rest) = text.strip_prefix("prcd") {
                let (name, rest) = rest
                    .split_once(':')
                    .ok_or_else(|| err("expected `prcd name: ?guard { body }`"))?;
                let rest = rest
                    .trim()
                    .strip_prefix('?')
                    .ok_or_else(|| err("expected `?guard`"))?;
                let (guard, body) = rest.split_once('{').ok_or_else(|| err("expected `{`"))?;
                let body = body
                    .trim_end()
                    .strip_suffix('}')
                    .ok_or_else(|| err("expected `}`"))?
                    .trim();
                let name = name.trim().to_string();
                let guard = dl::parse_formula(guard.trim()).map_err(dl_err)?;
                if !weak_conjunction(&guard) {
                    return Err(ConcurrentError::Guard(name));
                }
                let body = if body.is_empty() {
                    Program::skip()
                } else if body.ends_with(';') || body.ends_with('}') {
                    dl::parse_program(body).map_err(dl_err)?
                } else {
                    dl::parse_program(&format!("{body};")).map_err(dl_err)?
                };
                if has_ode(&body) {
                    return Err(ConcurrentError::BodyOde(name));
                }
                prog.procedures.push(Procedure { name, guard, body });
            } else {
                return Err(err("expected `dyn`, `init`, `inv` or `prcd`"));
            }
        }
        if !seen_dyn {
            return Err(ConcurrentError::Parse {
                line: 0,
                message: "missing `dyn`".into(),
            });
        }
        Ok(prog)
    }

    pub fn ode(&self, domain: Formula) -> Program {
        Program::Ode(
            dl::Ode::new(self.dynamics.clone(), domain)
                .expect("equations were validated when parsed"),
        )
    }

    pub fn initial_state<S: Scalar>(&self) -> ConcurrentState<S> {
        ConcurrentState {
            clock: S::zero(),
            valuation: self
                .init
                .iter()
                .map(|(v, c)| (v.clone(), S::from_rational(c)))
                .collect(),
        }
    }

    /// `init_σ` as a conjunction of equations.
    pub fn init_formula(&self) -> Formula {
        Formula::and_all(
            self.init
                .iter()
                .map(|(v, c)| Formula::eq(Term::var(v.clone()), Term::Lit(c.clone()))),
        )
    }
}

/// Runs an ODE-free program; `None` when every branch fails a test.
fn interpret<S: Scalar>(
    p: &Program,
    v: &Valuation<S>,
    sched: &mut Scheduler,
    slack: S,
) -> Result<Option<Valuation<S>>, ConcurrentError> {
    fn lookup<S: Scalar>(v: &Valuation<S>) -> impl Fn(&str) -> Option<S> + '_ {
        move |n| v.get(n).copied()
    }
    Ok(match p {
        Program::Assign(x, t) => {
            let mut out = v.clone();
            out.insert(x.clone(), eval_term(t, &lookup(v))?);
            Some(out)
        }
        Program::Havoc(x) => {
            // The deterministic policy keeps the current value.
            let mut out = v.clone();
            let cur = v.get(x).copied().unwrap_or_else(S::zero);
            let offset = [0.0, -1.0, 1.0, -2.0, 2.0][sched.pick(5)];
            out.insert(x.clone(), cur + S::lit(offset));
            Some(out)
        }
        Program::Test(f) => eval_formula(f, &lookup(v), slack)?.then(|| v.clone()),
        Program::Seq(a, b) => match interpret(a, v, sched, slack)? {
            Some(mid) => interpret(b, &mid, sched, slack)?,
            None => None,
        },
        Program::Choice(a, b) => {
            let (first, second) = if sched.pick(2) == 0 { (a, b) } else { (b, a) };
            match interpret(first, v, sched, slack)? {
                Some(out) => Some(out),
                None => interpret(second, v, sched, slack)?,
            }
        }
        Program::Loop(a) => {
            let mut cur = v.clone();
            for _ in 0..sched.pick(3) {
                match interpret(a, &cur, sched, slack)? {
                    Some(next) => cur = next,
                    None => break,
                }
            }
            Some(cur)
        }
        Program::Ode(_) => unreachable!("bodies are ODE-free"),
    })
}

/// Stepping parameters.
#[derive(Debug, Clone)]
pub struct Stepper<S> {
    pub horizon: S,
    pub events: EventSearch<S>,
    pub slack: S,
    pub zeno_cap: usize,
}

impl<S: Scalar> Default for Stepper<S> {
    fn default() -> Self {
        Stepper {
            horizon: S::lit(100.0),
            events: EventSearch::default(),
            slack: S::lit(1e-9),
            zeno_cap: 10_000,
        }
    }
}

impl<S: Scalar> Stepper<S> {
    fn guard_holds(&self, g: &Formula, v: &Valuation<S>) -> Result<bool, ConcurrentError> {
        Ok(eval_formula(g, &|n| v.get(n).copied(), self.slack)?)
    }

    fn dynamics(
        &self,
        p: &ConcurrentProgram,
        v: &Valuation<S>,
    ) -> Result<Dynamics<S>, ConcurrentError> {
        let init: Vec<(String, S)> = v.iter().map(|(k, x)| (k.clone(), *x)).collect();
        Ok(Dynamics::new(&p.dynamics, &init)?)
    }

    /// One transition. A procedure whose guard holds executes unless its body
    /// leaves the valuation unchanged; when only such stuttering executions are
    /// possible, time advances to the next rising edge of a guard.
    pub fn step(
        &self,
        s: &ConcurrentState<S>,
        p: &ConcurrentProgram,
        sched: &mut Scheduler,
    ) -> Result<Transition<S>, ConcurrentError> {
        let mut effective = Vec::new();
        for prcd in &p.procedures {
            if !self.guard_holds(&prcd.guard, &s.valuation)? {
                continue;
            }
            let post = interpret(&prcd.body, &s.valuation, sched, self.slack)?
                .ok_or_else(|| ConcurrentError::Blocked(prcd.name.clone()))?;
            if post != s.valuation {
                effective.push((prcd.name.clone(), post));
            }
        }
        if !effective.is_empty() {
            let (procedure, valuation) = effective.swap_remove(sched.pick(effective.len()));
            return Ok(Transition::Execute {
                procedure,
                state: ConcurrentState {
                    clock: s.clock,
                    valuation,
                },
            });
        }
        let dynamics = self.dynamics(p, &s.valuation)?;
        let mut best: Option<S> = None;
        for prcd in &p.procedures {
            let f = CFormula::compile(&prcd.guard, &|n| dynamics.slot(n))?;
            let limit = best.unwrap_or(self.horizon - s.clock);
            if let Some(t) = self
                .events
                .rising_edge(|t| f.holds(&dynamics.state_at(t), self.slack), limit)
            {
                if t > S::zero() && best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        }
        let Some(elapsed) = best else {
            return Ok(Transition::Final);
        };
        let state = dynamics.state_at(elapsed);
        let valuation = dynamics.vars().iter().cloned().zip(state).collect();
        Ok(Transition::Urgent {
            elapsed,
            state: ConcurrentState {
                clock: s.clock + elapsed,
                valuation,
            },
        })
    }

    /// Execute pre and post states, dynamics samples every `dt` between
    /// urgent endpoints, and trailing samples after the final state, up to the horizon.
    pub fn reachable_sample(
        &self,
        p: &ConcurrentProgram,
        start: &ConcurrentState<S>,
        dt: S,
        policy: SchedulerPolicy,
    ) -> Result<Vec<ConcurrentState<S>>, ConcurrentError> {
        let mut sched = Scheduler::new(policy);
        let mut out = vec![start.clone()];
        let mut cur = start.clone();
        let mut at_instant = 0;
        let along = |from: &ConcurrentState<S>,
                     len: S,
                     out: &mut Vec<ConcurrentState<S>>|
         -> Result<(), ConcurrentError> {
            let dynamics = self.dynamics(p, &from.valuation)?;
            let mut x = dt;
            while x < len {
                let valuation = dynamics
                    .vars()
                    .iter()
                    .cloned()
                    .zip(dynamics.state_at(x))
                    .collect();
                out.push(ConcurrentState {
                    clock: from.clock + x,
                    valuation,
                });
                x = x + dt;
            }
            Ok(())
        };
        loop {
            match self.step(&cur, p, &mut sched)? {
                Transition::Execute { state, .. } => {
                    at_instant += 1;
                    if at_instant > self.zeno_cap {
                        return Err(ConcurrentError::Zeno(self.zeno_cap));
                    }
                    out.push(state.clone());
                    cur = state;
                }
                Transition::Urgent { elapsed, state } => {
                    at_instant = 0;
                    along(&cur, elapsed, &mut out)?;
                    out.push(state.clone());
                    cur = state;
                }
                Transition::Final => {
                    let rest = self.horizon - cur.clock;
                    along(&cur, rest, &mut out)?;
                    let dynamics = self.dynamics(p, &cur.valuation)?;
                    let valuation = dynamics
                        .vars()
                        .iter()
                        .cloned()
                        .zip(dynamics.state_at(rest))
                        .collect();
                    out.push(ConcurrentState {
                        clock: self.horizon,
                        valuation,
                    });
                    return Ok(out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// `inv → [?g; b] inv`.
    Postcondition,
    /// Also `[dyn & true] inv` after every procedure.
    Basic,
    /// As basic, with the weakly negated guards as evolution domain.
    Precise,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "postcond" => Ok(Scheme::Postcondition),
            "basic" => Ok(Scheme::Basic),
            "precise" => Ok(Scheme::Precise),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Postcondition => "postcond",
            Scheme::Basic => "basic",
            Scheme::Precise => "precise",
        })
    }
}

/// The conjunction of all weakly negated guards.
pub fn post_domain(p: &ConcurrentProgram) -> Result<Formula, ConcurrentError> {
    let negated = p
        .procedures
        .iter()
        .map(|prcd| dl::weak_negate(&prcd.guard))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Formula::and_all(negated))
}

/// The init obligation followed by one obligation per procedure.
pub fn obligations(
    p: &ConcurrentProgram,
    init: &Formula,
    inv: &Formula,
    scheme: Scheme,
) -> Result<Vec<Obligation>, ConcurrentError> {
    let after = |domain: Formula| -> Result<Formula, ConcurrentError> {
        Ok(dl::build_pr_untimed(&domain, inv, &p.ode(Formula::True))?)
    };
    let goal = match scheme {
        Scheme::Postcondition => inv.clone(),
        Scheme::Basic => after(Formula::True)?,
        Scheme::Precise => after(post_domain(p)?)?,
    };
    let mut out = vec![Obligation {
        name: "init".into(),
        kind: ObligationKind::Init,
        assumptions: init.clone(),
        goal: goal.clone(),
        tactic: None,
    }];
    for prcd in &p.procedures {
        let body = Program::seq(Program::test(prcd.guard.clone()), prcd.body.clone());
        out.push(Obligation {
            name: prcd.name.clone(),
            kind: ObligationKind::Method,
            assumptions: inv.clone(),
            goal: Formula::boxed(body, goal.clone()),
            tactic: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TANK: &str =
        "dyn { level' = drain }\ninit level = 4, drain = -1\ninv 3 <= level & level <= 10\n\
                        prcd up: ?level>=10 { drain := -1 }\nprcd down: ?level<=3 { drain := 1 }\n";

    #[test]
    fn urgent_then_execute() {
        let p = ConcurrentProgram::parse(TANK).unwrap();
        let st = Stepper::<f64>::default();
        let mut sched = Scheduler::new(SchedulerPolicy::Deterministic);
        let s0 = p.initial_state();
        let Transition::Urgent { elapsed, state } = st.step(&s0, &p, &mut sched).unwrap() else {
            panic!()
        };
        assert!((elapsed - 1.0).abs() < 1e-6);
        assert!((state.valuation["level"] - 3.0).abs() < 1e-6);
        let Transition::Execute { procedure, state } = st.step(&state, &p, &mut sched).unwrap()
        else {
            panic!()
        };
        assert_eq!(procedure, "down");
        assert_eq!(state.valuation["drain"], 1.0);
    }

    #[test]
    fn guard_must_be_weak() {
        assert!(matches!(
            ConcurrentProgram::parse("dyn {x'=1}\nprcd a: ?x < 1 { x := 0 }"),
            Err(ConcurrentError::Guard(_))
        ));
    }

    #[test]
    fn never_enabled_is_final() {
        let p =
            ConcurrentProgram::parse("dyn {x'=0}\ninit x = 0\nprcd a: ?x >= 1 { x := 0 }").unwrap();
        let mut sched = Scheduler::new(SchedulerPolicy::Deterministic);
        let r = Stepper::<f64>::default()
            .step(&p.initial_state(), &p, &mut sched)
            .unwrap();
        assert_eq!(r, Transition::Final);
    }

    #[test]
    fn execute_keeps_clock() {
        let p =
            ConcurrentProgram::parse("dyn {x'=1}\ninit x = 0\nprcd a: ?x <= 0 { x := 5 }").unwrap();
        let mut sched = Scheduler::new(SchedulerPolicy::Deterministic);
        let Transition::Execute { state, .. } = Stepper::<f64>::default()
            .step(&p.initial_state(), &p, &mut sched)
            .unwrap()
        else {
            panic!()
        };
        assert_eq!(state.clock, 0.0);
        assert_eq!(state.valuation["x"], 5.0);
    }

    #[test]
    fn no_procedures_only_init() {
        let p = ConcurrentProgram::parse("dyn {x'=1}").unwrap();
        let inv = Formula::True;
        assert_eq!(
            obligations(&p, &p.init_formula(), &inv, Scheme::Postcondition)
                .unwrap()
                .len(),
            1
        );
    }
}
