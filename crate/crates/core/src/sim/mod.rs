//! Executable semantics of HABS programs.

mod eval;
mod script;
mod trace;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use eval::{eval_expr, Env, Store, Value};
pub use script::{parse_script, ScriptCall};
pub use trace::{
    check_run, extract_trace, monitor, suspension_subtraces, Counterexample, MonitorReport,
    Segment, SubtraceVerdict, SuspensionSubtrace, Trace, Violation,
};

use crate::dl::{Formula, Term};
use crate::habs::{
    expr_to_formula, expr_to_term, ClassDecl, Expr, Guard, Program, Rhs, Stmt, StmtKind,
    TranslateError, VarKind,
};
use crate::ode::{CFormula, Dynamics, EventSearch, OdeError, DEFAULT_STEP};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unbound name `{0}`")]
    Unbound(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("call of `{0}` on null")]
    NullCall(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("class `{class}` has no method `{method}`")]
    UnknownMethod { class: String, method: String },
    #[error("no object {0}")]
    UnknownObject(usize),
    #[error("field `{field}` of object {object} is no longer finite")]
    NonFinite { object: usize, field: String },
    #[error("time advance of zero with no enabled rule")]
    ZeroAdvance,
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Translate(#[from] TranslateError),
}

/// Guard of a runtime await; duration guards hold their remaining time.
#[derive(Debug, Clone, PartialEq)]
pub enum RGuard<S> {
    Diff(Expr),
    Poll(Expr),
    Duration(S),
}

/// Runtime statements.
#[derive(Debug, Clone, PartialEq)]
pub enum RStmt<S> {
    Stmt(Stmt),
    Suspend,
    Await(u32, RGuard<S>),
    /// A blocking `duration` with its remaining time.
    Wait(S),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Process<S> {
    pub locals: Store<S>,
    pub fid: usize,
    pub code: VecDeque<RStmt<S>>,
    /// Method name, `init` or `main`.
    pub member: String,
}

impl<S: Scalar> Process<S> {
    pub fn new(member: impl Into<String>, fid: usize, body: &Stmt) -> Process<S> {
        Process {
            locals: Store::new(),
            fid,
            code: VecDeque::from([RStmt::Stmt(body.clone())]),
            member: member.into(),
        }
    }

    fn head_is_await(&self) -> bool {
        matches!(
            self.code.front(),
            Some(RStmt::Await(..))
                | Some(RStmt::Stmt(Stmt {
                    kind: StmtKind::Await(..),
                    ..
                }))
        )
    }
}

#[derive(Debug, Clone)]
pub struct Object<S> {
    pub id: usize,
    /// `None` for the main block.
    pub class: Option<String>,
    pub store: Store<S>,
    pub dynamics: Dynamics<S>,
    pub active: Option<Process<S>>,
    pub queue: VecDeque<Process<S>>,
    pub created_at: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message<S> {
    pub callee: usize,
    pub method: String,
    pub args: Vec<Value<S>>,
    pub fid: usize,
}

#[derive(Debug, Clone)]
pub struct Configuration<S> {
    pub clock: S,
    pub objects: Vec<Object<S>>,
    pub messages: Vec<Message<S>>,
    pub futures: BTreeMap<usize, Value<S>>,
    pub next_fid: usize,
    /// Script entries already injected.
    pub injected: usize,
}

impl<S: Scalar> Configuration<S> {
    pub fn object(&self, id: usize) -> Option<&Object<S>> {
        self.objects.iter().find(|o| o.id == id)
    }

    fn fresh_fid(&mut self) -> usize {
        self.next_fid += 1;
        self.next_fid - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    /// Rules (1) to (14).
    R(u8),
    /// Time advance, rule (ii).
    Advance,
    /// End of a blocking duration.
    Duration,
    /// A scripted call from the environment.
    Inject,
}

impl Rule {
    fn rank(self) -> u8 {
        match self {
            Rule::R(n) => n,
            Rule::Duration => 15,
            Rule::Inject => 16,
            Rule::Advance => 17,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::R(n) => write!(f, "{n}"),
            Rule::Advance => f.write_str("ii"),
            Rule::Duration => f.write_str("dur"),
            Rule::Inject => f.write_str("inject"),
        }
    }
}

/// An enabled discrete transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Choice {
    pub object: usize,
    pub rule: Rule,
    /// Queue or message index, where the rule picks one.
    pub which: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step<S> {
    pub rule: Rule,
    pub object: Option<usize>,
    /// Clock after the step.
    pub clock: S,
    pub member: Option<String>,
    /// Program point of a suspension (rule 2).
    pub point: Option<u32>,
    /// Scheduling of a process that does more than suspend again (rules 3 and 4).
    pub nontrivial: bool,
}

impl<S: Scalar> fmt::Display for Step<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "clock={} rule={}", self.clock, self.rule)?;
        if let Some(o) = self.object {
            write!(f, " object={o}")?;
        }
        if let Some(m) = &self.member {
            write!(f, " member={m}")?;
        }
        if let Some(p) = self.point {
            write!(f, " point={p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Nothing can happen any more.
    Final,
    /// The next event lies beyond the horizon.
    Horizon,
    /// Only processes blocked on unresolved futures remain.
    Deadlock,
    /// Too many discrete steps at one instant.
    Zeno,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerPolicy {
    /// First enabled transition: objects in creation order, rules in numeric order.
    Deterministic,
    /// Uniformly random among enabled transitions.
    Seeded(u64),
}

pub struct Scheduler {
    rng: Option<ChaCha8Rng>,
}

impl Scheduler {
    pub fn new(policy: SchedulerPolicy) -> Scheduler {
        match policy {
            SchedulerPolicy::Deterministic => Scheduler { rng: None },
            SchedulerPolicy::Seeded(seed) => Scheduler {
                rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            },
        }
    }

    /// Index in `0..n` of the next choice; `n` must be positive.
    pub fn pick(&mut self, n: usize) -> usize {
        match &mut self.rng {
            None => 0,
            Some(r) => r.gen_range(0..n),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Run<S> {
    pub horizon: S,
    pub steps: Vec<Step<S>>,
    /// `configs[k + 1]` is the configuration after `steps[k]`.
    pub configs: Vec<Configuration<S>>,
    pub outcome: Outcome,
}

impl<S: Scalar> Run<S> {
    pub fn last(&self) -> &Configuration<S> {
        self.configs
            .last()
            .expect("a run has an initial configuration")
    }

    pub fn log(&self) -> String {
        self.steps.iter().map(|s| format!("{s}\n")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig<S> {
    pub horizon: S,
    /// Integration step for numeric dynamics.
    pub integration_step: S,
    pub events: EventSearch<S>,
    /// Slack toward satisfaction in guards.
    pub slack: S,
    /// Maximal number of discrete steps at one instant.
    pub zeno_cap: usize,
    pub script: Vec<ScriptCall<S>>,
}

impl<S: Scalar> Default for SimConfig<S> {
    fn default() -> Self {
        SimConfig {
            horizon: S::lit(100.0),
            integration_step: S::lit(DEFAULT_STEP),
            events: EventSearch::default(),
            slack: S::lit(1e-9),
            zeno_cap: 10_000,
            script: Vec::new(),
        }
    }
}

pub struct Simulator<'a, S> {
    pub program: &'a Program,
    pub config: SimConfig<S>,
    odes: BTreeMap<String, Vec<(String, Term)>>,
}

fn field_or_local(n: &str, k: VarKind) -> String {
    match k {
        VarKind::Field => n.to_string(),
        _ => format!("%{n}"),
    }
}

enum Target {
    Local(String),
    Field(String),
    Drop,
}

fn target_of(s: &Stmt) -> Target {
    match &s.kind {
        StmtKind::Decl(_, v, _) => Target::Local(v.clone()),
        StmtKind::Assign(v, VarKind::Field, _) => Target::Field(v.clone()),
        StmtKind::Assign(v, _, _) => Target::Local(v.clone()),
        _ => Target::Drop,
    }
}

impl<'a, S: Scalar> Simulator<'a, S> {
    pub fn new(program: &'a Program, config: SimConfig<S>) -> Result<Self, SimError> {
        let mut odes = BTreeMap::new();
        for c in &program.classes {
            let mut eqs = Vec::new();
            for p in &c.physical {
                eqs.push((
                    p.name.clone(),
                    expr_to_term(&p.derivative, &|n, _| n.to_string())?,
                ));
            }
            odes.insert(c.name.clone(), eqs);
        }
        Ok(Simulator {
            program,
            config,
            odes,
        })
    }

    fn class(&self, name: &str) -> Result<&'a ClassDecl, SimError> {
        self.program
            .class(name)
            .ok_or_else(|| SimError::UnknownClass(name.to_string()))
    }

    /// Solution of the class ODE from the numeric part of `store`.
    pub fn solve(&self, class: Option<&str>, store: &Store<S>) -> Result<Dynamics<S>, SimError> {
        let init: Vec<(String, S)> = store
            .iter()
            .filter_map(|(k, v)| v.as_num().map(|x| (k.clone(), x)))
            .collect();
        let eqs = class
            .and_then(|c| self.odes.get(c))
            .map(|v| v.as_slice())
            .unwrap_or(&[]);
        Ok(Dynamics::with_step(
            eqs,
            &init,
            self.config.integration_step,
        )?)
    }

    /// The configuration before the main block runs; main is object 0.
    pub fn initial(&self) -> Result<Configuration<S>, SimError> {
        let store = Store::new();
        let mut main = Process::new("main", 0, &self.program.main);
        main.locals = self.default_locals(&self.program.main);
        let mut c = Configuration {
            clock: S::zero(),
            objects: vec![Object {
                id: 0,
                class: None,
                dynamics: self.solve(None, &store)?,
                store,
                active: Some(main),
                queue: VecDeque::new(),
                created_at: S::zero(),
            }],
            messages: Vec::new(),
            futures: BTreeMap::new(),
            next_fid: 1,
            injected: 0,
        };
        self.settle(&mut c)?;
        Ok(c)
    }

    fn default_locals(&self, body: &Stmt) -> Store<S> {
        let mut out = Store::new();
        body.visit(&mut |s| {
            if let StmtKind::Decl(t, v, _) = &s.kind {
                out.insert(v.clone(), Value::default_of(t));
            }
        });
        out
    }

    fn guard_holds(
        &self,
        cfg: &Configuration<S>,
        o: &Object<S>,
        p: &Process<S>,
        g: &RGuard<S>,
    ) -> Result<bool, SimError> {
        Ok(match g {
            RGuard::Duration(r) => *r <= self.config.slack,
            RGuard::Poll(e) => match (Env {
                this: o.id,
                store: &o.store,
                locals: &p.locals,
                along: None,
            })
            .eval(e)?
            {
                Value::Fut(fid) => cfg.futures.contains_key(&fid),
                _ => false,
            },
            RGuard::Diff(e) => {
                let (f, vals) = self.compile_guard(e, o, p)?;
                f.holds(&vals(S::zero()), self.config.slack)
            }
        })
    }

    /// A diff guard over the object's dynamics and the process locals.
    #[allow(clippy::type_complexity)]
    fn compile_guard<'o>(
        &self,
        e: &Expr,
        o: &'o Object<S>,
        p: &'o Process<S>,
    ) -> Result<(CFormula<S>, Box<dyn Fn(S) -> Vec<S> + 'o>), SimError> {
        let formula = expr_to_formula(e, &field_or_local)?;
        let locals: Vec<(String, S)> = p
            .locals
            .iter()
            .filter_map(|(k, v)| v.as_num().map(|x| (format!("%{k}"), x)))
            .collect();
        let n = o.dynamics.vars().len();
        let slot = |name: &str| {
            o.dynamics
                .slot(name)
                .or_else(|| locals.iter().position(|(k, _)| k == name).map(|i| n + i))
        };
        let compiled = CFormula::compile(&formula, &slot)?;
        let extra: Vec<S> = locals.iter().map(|(_, x)| *x).collect();
        let dynamics = &o.dynamics;
        Ok((
            compiled,
            Box::new(move |t| {
                let mut v = dynamics.state_at(t);
                v.extend_from_slice(&extra);
                v
            }),
        ))
    }

    /// Unfolds blocks and evaluates duration guards at the heads of all processes.
    pub fn settle(&self, cfg: &mut Configuration<S>) -> Result<(), SimError> {
        for o in &mut cfg.objects {
            let (id, store) = (o.id, &o.store);
            for p in o.active.iter_mut().chain(o.queue.iter_mut()) {
                while let Some(RStmt::Stmt(s)) = p.code.front() {
                    let env = Env {
                        this: id,
                        store,
                        locals: &p.locals,
                        along: None,
                    };
                    let replacement = match &s.kind {
                        StmtKind::Block(items) => {
                            items.iter().cloned().map(RStmt::Stmt).collect::<Vec<_>>()
                        }
                        StmtKind::Await(pt, g) => vec![RStmt::Await(
                            *pt,
                            match g {
                                Guard::Diff(e) => RGuard::Diff(e.clone()),
                                Guard::Poll(e) => RGuard::Poll(e.clone()),
                                Guard::Duration(e) => RGuard::Duration(num(env.eval(e)?)?),
                            },
                        )],
                        StmtKind::Duration(e) => vec![RStmt::Wait(num(env.eval(e)?)?)],
                        _ => break,
                    };
                    p.code.pop_front();
                    for r in replacement.into_iter().rev() {
                        p.code.push_front(r);
                    }
                }
            }
        }
        Ok(())
    }

    /// Every enabled discrete transition, in policy order.
    pub fn enabled(&self, cfg: &Configuration<S>) -> Result<Vec<Choice>, SimError> {
        let mut out = Vec::new();
        for o in &cfg.objects {
            let mut mine = Vec::new();
            let mut push = |rule, which| {
                mine.push(Choice {
                    object: o.id,
                    rule,
                    which,
                })
            };
            match &o.active {
                Some(p) => match p.code.front() {
                    None => push(Rule::R(5), 0),
                    Some(RStmt::Await(..)) => push(Rule::R(1), 0),
                    Some(RStmt::Suspend) => push(Rule::R(2), 0),
                    Some(RStmt::Wait(r)) => {
                        if *r <= self.config.slack {
                            push(Rule::Duration, 0)
                        }
                    }
                    Some(RStmt::Stmt(s)) => {
                        let env = Env {
                            this: o.id,
                            store: &o.store,
                            locals: &p.locals,
                            along: None,
                        };
                        match &s.kind {
                            StmtKind::Return(_) => push(Rule::R(5), 0),
                            StmtKind::While(..) => push(Rule::R(12), 0),
                            StmtKind::If(c, ..) => push(
                                if truth(env.eval(c)?)? {
                                    Rule::R(13)
                                } else {
                                    Rule::R(14)
                                },
                                0,
                            ),
                            _ => match s.rhs() {
                                Some(Rhs::Get(e)) => {
                                    if let Value::Fut(fid) = env.eval(e)? {
                                        if cfg.futures.contains_key(&fid) {
                                            push(Rule::R(6), 0);
                                        }
                                    }
                                }
                                Some(Rhs::Call { .. }) => push(Rule::R(7), 0),
                                Some(Rhs::New(..)) => push(Rule::R(9), 0),
                                Some(Rhs::Expr(_)) => match target_of(s) {
                                    Target::Field(_) => push(Rule::R(11), 0),
                                    _ => push(Rule::R(10), 0),
                                },
                                None => unreachable!("settled statement kinds"),
                            },
                        }
                    }
                },
                None => {
                    for (i, p) in o.queue.iter().enumerate() {
                        match p.code.front() {
                            Some(RStmt::Await(_, g)) => {
                                if self.guard_holds(cfg, o, p, g)? {
                                    push(Rule::R(3), i);
                                }
                            }
                            _ => push(Rule::R(4), i),
                        }
                    }
                }
            }
            for (i, m) in cfg.messages.iter().enumerate() {
                if m.callee == o.id {
                    push(Rule::R(8), i);
                }
            }
            mine.sort_by_key(|c| c.rule.rank());
            out.extend(mine);
        }
        if let Some(call) = self.config.script.get(cfg.injected) {
            if call.time <= cfg.clock + self.config.slack {
                out.push(Choice {
                    object: 0,
                    rule: Rule::Inject,
                    which: cfg.injected,
                });
            }
        }
        Ok(out)
    }

    /// Applies one discrete transition chosen by the scheduler; `None` if none is enabled.
    pub fn step_discrete(
        &self,
        cfg: &mut Configuration<S>,
        sched: &mut Scheduler,
    ) -> Result<Option<Step<S>>, SimError> {
        self.settle(cfg)?;
        let options = self.enabled(cfg)?;
        if options.is_empty() {
            return Ok(None);
        }
        let choice = options[sched.pick(options.len())];
        let step = self.apply(cfg, choice)?;
        self.settle(cfg)?;
        if matches!(choice.rule, Rule::R(3)) {
            // Scheduling is trivial when the process only suspends again.
            let o = cfg
                .objects
                .iter()
                .find(|o| o.id == choice.object)
                .expect("chosen object exists");
            let trivial = o.active.as_ref().is_some_and(|p| p.head_is_await());
            return Ok(Some(Step {
                nontrivial: !trivial,
                ..step
            }));
        }
        Ok(Some(step))
    }

    fn index(&self, cfg: &Configuration<S>, id: usize) -> Result<usize, SimError> {
        cfg.objects
            .iter()
            .position(|o| o.id == id)
            .ok_or(SimError::UnknownObject(id))
    }

    fn resolve(&self, o: &mut Object<S>) -> Result<(), SimError> {
        o.dynamics = self.solve(o.class.as_deref(), &o.store)?;
        Ok(())
    }

    fn write(
        &self,
        o: &mut Object<S>,
        p: &mut Process<S>,
        target: Target,
        v: Value<S>,
    ) -> Result<(), SimError> {
        match target {
            Target::Local(n) => {
                p.locals.insert(n, v);
            }
            Target::Field(n) => {
                o.store.insert(n, v);
                self.resolve(o)?;
            }
            Target::Drop => {}
        }
        Ok(())
    }

    pub fn apply(&self, cfg: &mut Configuration<S>, choice: Choice) -> Result<Step<S>, SimError> {
        let mut step = Step {
            rule: choice.rule,
            object: Some(choice.object),
            clock: cfg.clock,
            member: None,
            point: None,
            nontrivial: false,
        };
        if choice.rule == Rule::Inject {
            let call = &self.config.script[choice.which];
            let main = &cfg.objects[0];
            let target = main
                .store
                .get(&call.var)
                .or_else(|| main.active.as_ref().and_then(|p| p.locals.get(&call.var)))
                .copied();
            let Some(Value::Obj(callee)) = target else {
                return Err(SimError::Script {
                    line: call.line,
                    message: format!("`{}` is not an object", call.var),
                });
            };
            let fid = cfg.fresh_fid();
            cfg.messages.push(Message {
                callee,
                method: call.method.clone(),
                args: call.args.clone(),
                fid,
            });
            cfg.injected += 1;
            step.object = Some(callee);
            step.member = Some(call.method.clone());
            return Ok(step);
        }
        let idx = self.index(cfg, choice.object)?;
        if choice.rule == Rule::R(8) {
            let m = cfg.messages.remove(choice.which);
            let o = &mut cfg.objects[idx];
            let class = self.class(o.class.as_deref().unwrap_or("main"))?;
            let method = class
                .method(&m.method)
                .ok_or_else(|| SimError::UnknownMethod {
                    class: class.name.clone(),
                    method: m.method.clone(),
                })?;
            let mut p = Process::new(m.method.clone(), m.fid, &method.body);
            p.locals = self.default_locals(&method.body);
            for (param, arg) in method.params.iter().zip(&m.args) {
                p.locals.insert(param.name.clone(), *arg);
            }
            o.queue.push_back(p);
            step.member = Some(m.method);
            return Ok(step);
        }
        if matches!(choice.rule, Rule::R(3) | Rule::R(4)) {
            let o = &mut cfg.objects[idx];
            let mut p = o.queue.remove(choice.which).expect("queue index is valid");
            if choice.rule == Rule::R(3) {
                p.code.pop_front();
            }
            step.member = Some(p.member.clone());
            step.nontrivial = true;
            o.active = Some(p);
            return Ok(step);
        }
        let mut p = cfg.objects[idx]
            .active
            .take()
            .expect("rule on an active process");
        step.member = Some(p.member.clone());
        let head = p.code.front().cloned();
        match choice.rule {
            Rule::R(1) => p.code.push_front(RStmt::Suspend),
            Rule::R(2) => {
                p.code.pop_front();
                if let Some(RStmt::Await(pt, _)) = p.code.front() {
                    step.point = Some(*pt);
                }
                let o = &mut cfg.objects[idx];
                o.queue.push_back(p);
                self.resolve(o)?;
                return Ok(step);
            }
            Rule::R(5) => {
                let o = &mut cfg.objects[idx];
                let value = match &head {
                    Some(RStmt::Stmt(Stmt {
                        kind: StmtKind::Return(e),
                        ..
                    })) => Env {
                        this: o.id,
                        store: &o.store,
                        locals: &p.locals,
                        along: None,
                    }
                    .eval(e)?,
                    _ => Value::Unit,
                };
                cfg.futures.insert(p.fid, value);
                if o.class.is_none() {
                    // Keep main's variables reachable for scripted calls.
                    for (k, v) in &p.locals {
                        o.store.insert(k.clone(), *v);
                    }
                }
                self.resolve(o)?;
                return Ok(step);
            }
            Rule::Duration => {
                p.code.pop_front();
            }
            Rule::R(n) => {
                let Some(RStmt::Stmt(s)) = head else {
                    unreachable!("statement rules need a statement")
                };
                p.code.pop_front();
                self.statement(cfg, idx, &mut p, n, &s)?;
            }
            Rule::Advance | Rule::Inject => unreachable!("not a process rule"),
        }
        cfg.objects[idx].active = Some(p);
        Ok(step)
    }

    /// Rules (6), (7) and (9) to (14) on the head statement `s`, already popped.
    fn statement(
        &self,
        cfg: &mut Configuration<S>,
        idx: usize,
        p: &mut Process<S>,
        rule: u8,
        s: &Stmt,
    ) -> Result<(), SimError> {
        let this = cfg.objects[idx].id;
        let eval = |cfg: &Configuration<S>, p: &Process<S>, e: &Expr| {
            Env {
                this,
                store: &cfg.objects[idx].store,
                locals: &p.locals,
                along: None,
            }
            .eval(e)
        };
        match (rule, &s.kind) {
            (12, StmtKind::While(c, body)) => {
                let again = Stmt::block(vec![(**body).clone(), s.clone()], s.span);
                p.code.push_front(RStmt::Stmt(Stmt::new(
                    StmtKind::If(c.clone(), Box::new(again), None),
                    s.span,
                )));
            }
            (13, StmtKind::If(_, a, _)) => p.code.push_front(RStmt::Stmt((**a).clone())),
            (14, StmtKind::If(_, _, b)) => {
                if let Some(b) = b {
                    p.code.push_front(RStmt::Stmt((**b).clone()));
                }
            }
            _ => {
                let rhs = s.rhs().expect("assignment-like statement");
                let value = match rhs {
                    Rhs::Expr(e) => eval(cfg, p, e)?,
                    Rhs::Get(e) => match eval(cfg, p, e)? {
                        Value::Fut(fid) => cfg.futures[&fid],
                        other => return Err(SimError::Type(format!("get on {other}"))),
                    },
                    Rhs::Call {
                        target,
                        method,
                        args,
                    } => {
                        let callee = match eval(cfg, p, target)? {
                            Value::Obj(o) => o,
                            _ => return Err(SimError::NullCall(method.clone())),
                        };
                        let args = args
                            .iter()
                            .map(|a| eval(cfg, p, a))
                            .collect::<Result<Vec<_>, _>>()?;
                        let fid = cfg.fresh_fid();
                        cfg.messages.push(Message {
                            callee,
                            method: method.clone(),
                            args,
                            fid,
                        });
                        Value::Fut(fid)
                    }
                    Rhs::New(class, args) => {
                        let args = args
                            .iter()
                            .map(|a| eval(cfg, p, a))
                            .collect::<Result<Vec<_>, _>>()?;
                        Value::Obj(self.create(cfg, class, args)?)
                    }
                };
                let o = &mut cfg.objects[idx];
                self.write(o, p, target_of(s), value)?;
            }
        }
        Ok(())
    }

    /// Rule (9): a fresh object whose constructor process is queued.
    fn create(
        &self,
        cfg: &mut Configuration<S>,
        class: &str,
        args: Vec<Value<S>>,
    ) -> Result<usize, SimError> {
        let c = self.class(class)?;
        let id = cfg.objects.iter().map(|o| o.id).max().unwrap_or(0) + 1;
        let mut store = Store::new();
        for (p, a) in c.params.iter().zip(args) {
            store.insert(p.name.clone(), a);
        }
        let empty = Store::new();
        for ph in &c.physical {
            let v = Env {
                this: id,
                store: &store,
                locals: &empty,
                along: None,
            }
            .eval(&ph.init)?;
            store.insert(ph.name.clone(), v);
        }
        for f in &c.fields {
            let v = match &f.init {
                Some(e) => Env {
                    this: id,
                    store: &store,
                    locals: &empty,
                    along: None,
                }
                .eval(e)?,
                None => Value::default_of(&f.ty),
            };
            store.insert(f.name.clone(), v);
        }
        let mut queue = VecDeque::new();
        if let Some(init) = &c.init {
            let fid = cfg.fresh_fid();
            let mut p = Process::new("init", fid, init);
            p.locals = self.default_locals(init);
            queue.push_back(p);
        }
        let dynamics = self.solve(Some(class), &store)?;
        cfg.objects.push(Object {
            id,
            class: Some(class.to_string()),
            store,
            dynamics,
            active: None,
            queue,
            created_at: cfg.clock,
        });
        Ok(id)
    }

    /// Least time until some rule becomes enabled, within the horizon.
    pub fn mte(&self, cfg: &Configuration<S>) -> Result<Option<S>, SimError> {
        let mut best = self.config.horizon - cfg.clock;
        let mut found = false;
        let mut offer = |t: S, best: &mut S| {
            if t <= *best {
                *best = t;
                found = true;
            }
        };
        if let Some(call) = self.config.script.get(cfg.injected) {
            offer(call.time - cfg.clock, &mut best);
        }
        for o in &cfg.objects {
            if let Some(p) = &o.active {
                if let Some(RStmt::Wait(r)) = p.code.front() {
                    offer(*r, &mut best);
                }
                continue;
            }
            for p in &o.queue {
                match p.code.front() {
                    Some(RStmt::Await(_, RGuard::Duration(r))) => offer(*r, &mut best),
                    Some(RStmt::Await(_, RGuard::Diff(e))) => {
                        let (f, vals) = self.compile_guard(e, o, p)?;
                        let slack = self.config.slack;
                        if let Some(t) = self
                            .config
                            .events
                            .first_hit(|t| f.holds(&vals(t), slack), best)
                        {
                            offer(t, &mut best);
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(found.then_some(best))
    }

    /// Rule (ii): advances every object by the maximal time elapse; `None` if
    /// nothing happens before the horizon.
    pub fn step_timed(&self, cfg: &mut Configuration<S>) -> Result<Option<Step<S>>, SimError> {
        let Some(dt) = self.mte(cfg)? else {
            return Ok(None);
        };
        if dt <= S::zero() {
            return Err(SimError::ZeroAdvance);
        }
        for o in &mut cfg.objects {
            let state = o.dynamics.state_at(dt);
            for (name, x) in o.dynamics.vars().iter().zip(&state) {
                if !o.dynamics.evolves(name) {
                    continue;
                }
                if !x.is_finite() {
                    return Err(SimError::NonFinite {
                        object: o.id,
                        field: name.clone(),
                    });
                }
                o.store.insert(name.clone(), Value::Num(*x));
            }
            for p in o.queue.iter_mut().chain(o.active.iter_mut()) {
                match p.code.front_mut() {
                    Some(RStmt::Await(_, RGuard::Duration(r))) | Some(RStmt::Wait(r)) => {
                        *r = *r - dt
                    }
                    _ => {}
                }
            }
            o.dynamics = self.solve(o.class.as_deref(), &o.store)?;
        }
        cfg.clock = cfg.clock + dt;
        Ok(Some(Step {
            rule: Rule::Advance,
            object: None,
            clock: cfg.clock,
            member: None,
            point: None,
            nontrivial: false,
        }))
    }

    /// Runs from `start` until the horizon, quiescence, deadlock or the Zeno cap.
    pub fn run_from(
        &self,
        start: Configuration<S>,
        policy: SchedulerPolicy,
    ) -> Result<Run<S>, SimError> {
        let mut sched = Scheduler::new(policy);
        let mut cfg = start;
        self.settle(&mut cfg)?;
        let mut run = Run {
            horizon: self.config.horizon,
            steps: Vec::new(),
            configs: vec![cfg.clone()],
            outcome: Outcome::Final,
        };
        let mut at_instant = 0;
        loop {
            if let Some(step) = self.step_discrete(&mut cfg, &mut sched)? {
                at_instant += 1;
                run.steps.push(step);
                run.configs.push(cfg.clone());
                if at_instant > self.config.zeno_cap {
                    run.outcome = Outcome::Zeno;
                    break;
                }
                continue;
            }
            match self.step_timed(&mut cfg)? {
                Some(step) => {
                    at_instant = 0;
                    run.steps.push(step);
                    run.configs.push(cfg.clone());
                }
                None => {
                    run.outcome = self.outcome(&cfg);
                    break;
                }
            }
        }
        Ok(run)
    }

    pub fn run(&self, policy: SchedulerPolicy) -> Result<Run<S>, SimError> {
        self.run_from(self.initial()?, policy)
    }

    fn outcome(&self, cfg: &Configuration<S>) -> Outcome {
        let pending = cfg.injected < self.config.script.len()
            || cfg.objects.iter().any(|o| match &o.active {
                Some(p) => matches!(p.code.front(), Some(RStmt::Wait(_))),
                None => o.queue.iter().any(|p| {
                    matches!(
                        p.code.front(),
                        Some(RStmt::Await(_, RGuard::Diff(_) | RGuard::Duration(_)))
                    )
                }),
            });
        let blocked = cfg.objects.iter().any(|o| o.active.is_some());
        if pending {
            Outcome::Horizon
        } else if blocked {
            Outcome::Deadlock
        } else {
            Outcome::Final
        }
    }
}

fn num<S: Scalar>(v: Value<S>) -> Result<S, SimError> {
    match v {
        Value::Num(x) => Ok(x),
        other => Err(SimError::Type(format!("expected a number, found {other}"))),
    }
}

fn truth<S: Scalar>(v: Value<S>) -> Result<bool, SimError> {
    match v {
        Value::Bool(b) => Ok(b),
        other => Err(SimError::Type(format!("expected a boolean, found {other}"))),
    }
}

/// Convenience alias for formulas over object fields.
pub type FieldFormula = Formula;
