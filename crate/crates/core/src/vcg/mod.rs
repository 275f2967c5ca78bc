//! Proof obligations for HABS programs, as dL formulas and KeYmaera X archives.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analysis::{
    self, frame_exempt, AnalysisError, GeneratorKind, PostRegionGenerator, INIT,
};
use crate::dl::{
    self, build_pr, build_pr_untimed, weak_negate, DlError, Formula, Ode, Program as Dl, Rel, Term,
};
use crate::habs::{
    expr_to_formula, expr_to_term, ClassDecl, Expr, Guard, MethodDecl, Owner, Program, Rhs, Scope,
    Stmt, StmtKind, TranslateError, Type, VarKind,
};

#[derive(Debug, Error)]
pub enum VcgError {
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Dl(#[from] DlError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("no post-region for {0}")]
    MissingRegion(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObligationKind {
    Init,
    Method,
    Main,
}

impl ObligationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObligationKind::Init => "init",
            ObligationKind::Method => "method",
            ObligationKind::Main => "main",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Obligation {
    /// `Class.member`, or `main`.
    pub name: String,
    pub kind: ObligationKind,
    pub assumptions: Formula,
    pub goal: Formula,
    pub tactic: Option<String>,
}

impl Obligation {
    pub fn formula(&self) -> Formula {
        Formula::implies(self.assumptions.clone(), self.goal.clone())
    }

    /// Variables the archive entry declares: everything free plus `t` and `cll`.
    pub fn declared(&self) -> BTreeSet<String> {
        let mut vars = dl::free_variables(&self.formula());
        vars.insert(dl::CLOCK.into());
        vars.insert(dl::CALL_FLAG.into());
        vars
    }

    pub fn render(&self) -> String {
        dl::render_keymaerax(&self.name, &self.assumptions, &self.goal, &self.declared())
    }
}

/// Everything the translation of one code block needs.
pub struct TranslationContext<'a> {
    pub program: &'a Program,
    pub owner: Owner<'a>,
    pub generator: &'a PostRegionGenerator,
    /// Whether `pr` carries the clock.
    pub clocked: bool,
    scope: Scope<'a>,
}

impl<'a> TranslationContext<'a> {
    pub fn new(
        program: &'a Program,
        owner: Owner<'a>,
        generator: &'a PostRegionGenerator,
    ) -> Result<Self, VcgError> {
        let clocked = match owner.class() {
            Some(c) => {
                let body = owner.body();
                let mut regions = vec![region(generator, c, owner.member())?];
                if let Some(b) = body {
                    for p in points_in(b) {
                        regions.push(point_region(generator, c, p)?);
                    }
                }
                c.physical.is_empty() || body.is_some_and(|b| needs_clock(b, regions.iter()))
            }
            None => false,
        };
        Ok(TranslationContext {
            program,
            owner,
            generator,
            clocked,
            scope: Scope::new(program, owner),
        })
    }

    fn class(&self) -> Option<&'a ClassDecl> {
        self.owner.class()
    }

    fn name(&self, v: &str, kind: VarKind) -> String {
        match kind {
            VarKind::Local => format!("{}_{v}", self.owner.member()),
            _ => v.to_string(),
        }
    }

    fn term(&self, e: &Expr) -> Result<Term, TranslateError> {
        expr_to_term(e, &|v, k| self.name(v, k))
    }

    fn formula(&self, e: &Expr) -> Result<Formula, TranslateError> {
        expr_to_formula(e, &|v, k| self.name(v, k))
    }

    fn invariant(&self) -> Formula {
        self.class().map(|c| c.invariant()).unwrap_or(Formula::True)
    }

    /// `pr(psi, I, ode)` in the form this block uses.
    pub fn pr(&self, psi: &Formula) -> Result<Formula, VcgError> {
        let c = self.class().expect("pr outside a class");
        let ode = c.ode(psi.clone())?;
        Ok(if self.clocked {
            build_pr(psi, &c.invariant(), &ode)?
        } else {
            build_pr_untimed(psi, &c.invariant(), &ode)?
        })
    }

    fn havoc(&self, physical_only: bool) -> Vec<Dl> {
        let Some(c) = self.class() else {
            return Vec::new();
        };
        let names: Vec<String> = if physical_only {
            c.physical.iter().map(|p| p.name.clone()).collect()
        } else {
            c.field_names()
        };
        names.into_iter().map(Dl::havoc).collect()
    }
}

fn fail() -> Dl {
    Dl::assign(dl::CALL_FLAG, Term::one())
}

/// `{?f ++ ?!f; cll := 1}`.
fn check(f: Formula) -> Dl {
    Dl::choice(
        Dl::test(f.clone()),
        Dl::seq(Dl::test(Formula::not(f)), fail()),
    )
}

fn points_in(s: &Stmt) -> Vec<u32> {
    let mut out = Vec::new();
    s.visit(&mut |st| {
        if let StmtKind::Await(p, _) = st.kind {
            out.push(p);
        }
    });
    out
}

fn region(g: &PostRegionGenerator, c: &ClassDecl, member: &str) -> Result<Formula, VcgError> {
    g.member(&c.name, member)
        .cloned()
        .ok_or_else(|| VcgError::MissingRegion(format!("{}.{member}", c.name)))
}

fn point_region(g: &PostRegionGenerator, c: &ClassDecl, p: u32) -> Result<Formula, VcgError> {
    g.point(&c.name, p)
        .cloned()
        .ok_or_else(|| VcgError::MissingRegion(format!("{}.@{p}", c.name)))
}

/// Whether the obligation of `body` needs the clock: it blocks, suspends after
/// its leading await, or one of the post-regions it uses reads `t`.
pub fn needs_clock<'f>(body: &Stmt, regions: impl IntoIterator<Item = &'f Formula>) -> bool {
    let lead = body.first().map(|s| s as *const Stmt);
    let mut timed = false;
    body.visit(&mut |s| match &s.kind {
        StmtKind::Duration(_) => timed = true,
        StmtKind::Await(..) if Some(s as *const Stmt) != lead => timed = true,
        _ => {
            if matches!(s.rhs(), Some(Rhs::Get(_))) {
                timed = true;
            }
        }
    });
    timed || regions.into_iter().any(|f| f.mentions(dl::CLOCK))
}

/// The guard as a formula: `diff e` is `e`, anything else `true`.
pub fn trans_guard(g: &Guard, ctx: &TranslationContext) -> Result<Formula, VcgError> {
    Ok(match g {
        Guard::Diff(e) => ctx.formula(e)?,
        _ => Formula::True,
    })
}

/// `v := e`, falling back to a case split for boolean expressions.
fn assign_expr(v: String, e: &Expr, ctx: &TranslationContext) -> Result<Dl, VcgError> {
    match ctx.term(e) {
        Ok(t) => Ok(Dl::assign(v, t)),
        Err(TranslateError::NotATerm(_)) if matches!(e, Expr::This) => Ok(Dl::havoc(v)),
        Err(TranslateError::NotATerm(_)) => {
            let f = ctx.formula(e)?;
            Ok(Dl::choice(
                Dl::seq(Dl::test(f.clone()), Dl::assign(v.clone(), Term::one())),
                Dl::seq(Dl::test(Formula::not(f)), Dl::assign(v, Term::zero())),
            ))
        }
        Err(e) => Err(e.into()),
    }
}

/// Substitutes actual arguments for formal parameters in a contract.
fn instantiate(
    contract: &Formula,
    formals: &[String],
    args: &[Expr],
    ctx: &TranslationContext,
) -> Result<Formula, VcgError> {
    let mut terms = Vec::new();
    for (f, a) in formals.iter().zip(args) {
        if contract.mentions(f) {
            terms.push((f.clone(), ctx.term(a)?));
        }
    }
    Ok(contract.substitute(&|v| terms.iter().find(|(f, _)| f == v).map(|(_, t)| t.clone())))
}

/// Precondition of `target!method(..)` as seen through the static type of `target`.
fn callee_contract(
    target: &Expr,
    method: &str,
    ctx: &TranslationContext,
) -> (Formula, Vec<String>) {
    let names = |ps: &[crate::habs::Param]| ps.iter().map(|p| p.name.clone()).collect::<Vec<_>>();
    let ty = match target {
        Expr::This => ctx.class().map(|c| c.name.clone()),
        e => match ctx.scope.type_of(e) {
            Some(Type::Named(n)) => Some(n),
            _ => None,
        },
    };
    if let Some(ty) = ty {
        if let Some(m) = ctx.program.class(&ty).and_then(|c| c.method(method)) {
            return (m.pre(), names(&m.params));
        }
        if let Some(sig) = ctx
            .program
            .interface(&ty)
            .and_then(|i| i.methods.iter().find(|s| s.name == method))
        {
            return (sig.pre.clone().unwrap_or(Formula::True), names(&sig.params));
        }
    }
    (Formula::True, Vec::new())
}

/// Translation of a side-effecting right-hand side assigned to `target`.
fn trans_rhs(target: Option<String>, rhs: &Rhs, ctx: &TranslationContext) -> Result<Dl, VcgError> {
    let fresh = |mut steps: Vec<Dl>| {
        if let Some(v) = &target {
            steps.push(Dl::havoc(v.clone()));
        }
        Dl::seq_all(steps)
    };
    match rhs {
        Rhs::Expr(e) => match target {
            Some(v) => assign_expr(v, e, ctx),
            None => Ok(Dl::skip()),
        },
        Rhs::Call {
            target: callee,
            method,
            args,
        } => {
            let (pre, formals) = callee_contract(callee, method, ctx);
            Ok(fresh(vec![check(instantiate(&pre, &formals, args, ctx)?)]))
        }
        Rhs::New(class, args) => {
            let c = ctx.program.class(class);
            let creation = c.map(|c| c.creation()).unwrap_or(Formula::True);
            let formals: Vec<String> = c
                .map(|c| c.params.iter().map(|p| p.name.clone()).collect())
                .unwrap_or_default();
            Ok(fresh(vec![check(instantiate(
                &creation, &formals, args, ctx,
            )?)]))
        }
        Rhs::Get(_) => {
            if ctx.class().is_none() {
                return Ok(fresh(Vec::new()));
            }
            let pr = ctx.pr(&Formula::True)?;
            let mut ok = vec![Dl::test(pr.clone())];
            ok.extend(ctx.havoc(true));
            ok.push(Dl::test(ctx.invariant()));
            let mut bad = vec![Dl::test(Formula::not(pr)), fail()];
            bad.extend(ctx.havoc(true));
            if let Some(v) = &target {
                ok.push(Dl::havoc(v.clone()));
                bad.push(Dl::havoc(v.clone()));
            }
            Ok(Dl::choice(Dl::seq_all(ok), Dl::seq_all(bad)))
        }
    }
}

fn trans_await(p: u32, g: &Guard, ctx: &TranslationContext) -> Result<Dl, VcgError> {
    let guard = trans_guard(g, ctx)?;
    let Some(c) = ctx.class() else {
        return Ok(Dl::test(guard));
    };
    let psi = Formula::and_nontrivial([point_region(ctx.generator, c, p)?, weak_negate(&guard)?]);
    let pr = ctx.pr(&psi)?;
    let mut ok = vec![Dl::test(pr.clone())];
    ok.extend(ctx.havoc(false));
    ok.push(Dl::test(Formula::and_nontrivial([
        guard.clone(),
        ctx.invariant(),
    ])));
    let mut bad = vec![Dl::test(Formula::not(pr)), fail()];
    bad.extend(ctx.havoc(false));
    bad.push(Dl::test(guard));
    Ok(Dl::choice(Dl::seq_all(ok), Dl::seq_all(bad)))
}

fn trans_duration(e: &Expr, ctx: &TranslationContext) -> Result<Dl, VcgError> {
    let Some(c) = ctx.class() else {
        return Ok(Dl::skip());
    };
    let bound = ctx.term(e)?;
    let t = || Term::var(dl::CLOCK);
    let Dl::Ode(ode) = c.ode(Formula::True)? else {
        unreachable!("class dynamics is an ODE")
    };
    let mut eqs = ode.equations().to_vec();
    eqs.push((dl::CLOCK.into(), Term::one()));
    let flow = Dl::Ode(Ode::new(eqs, Formula::le(t(), bound.clone()))?);
    Ok(Dl::seq_all([
        Dl::assign(dl::CLOCK, Term::zero()),
        check(ctx.pr(&Formula::le(t(), bound.clone()))?),
        Dl::assign(dl::CLOCK, Term::zero()),
        flow,
        Dl::test(Formula::cmp(Rel::Ge, t(), bound)),
    ]))
}

/// Translation of one normalized statement. `lead` marks the leading await of a method.
fn trans(s: &Stmt, lead: Option<*const Stmt>, ctx: &TranslationContext) -> Result<Dl, VcgError> {
    Ok(match &s.kind {
        StmtKind::Block(items) => {
            let mut parts = Vec::new();
            for st in items {
                if matches!(st.kind, StmtKind::Return(Expr::Unit)) {
                    continue;
                }
                parts.push(trans(st, lead, ctx)?);
            }
            Dl::seq_all(parts)
        }
        StmtKind::If(c, a, b) => {
            let cond = ctx.formula(c)?;
            let other = match b {
                Some(b) => trans(b, lead, ctx)?,
                None => Dl::skip(),
            };
            Dl::choice(
                Dl::seq(Dl::test(cond.clone()), trans(a, lead, ctx)?),
                Dl::seq(Dl::test(Formula::not(cond)), other),
            )
        }
        StmtKind::While(c, body) => {
            let cond = ctx.formula(c)?;
            Dl::seq(
                Dl::looped(Dl::seq(Dl::test(cond.clone()), trans(body, lead, ctx)?)),
                Dl::test(Formula::not(cond)),
            )
        }
        StmtKind::Decl(_, v, rhs) => trans_rhs(Some(ctx.name(v, VarKind::Local)), rhs, ctx)?,
        StmtKind::Assign(v, k, rhs) => trans_rhs(Some(ctx.name(v, *k)), rhs, ctx)?,
        StmtKind::Exec(rhs) => trans_rhs(None, rhs, ctx)?,
        StmtKind::Await(_, g) if Some(s as *const Stmt) == lead => Dl::test(trans_guard(g, ctx)?),
        StmtKind::Await(p, g) => trans_await(*p, g, ctx)?,
        StmtKind::Duration(e) => trans_duration(e, ctx)?,
        StmtKind::Return(Expr::Unit) => Dl::skip(),
        StmtKind::Return(e) => assign_expr(dl::RESULT.into(), e, ctx)?,
    })
}

/// Translation of a code block; a leading await of a method becomes a test of its guard.
pub fn trans_stmt(s: &Stmt, ctx: &TranslationContext) -> Result<Dl, VcgError> {
    let lead = match ctx.owner {
        Owner::Method(..) => s
            .first()
            .filter(|f| matches!(f.kind, StmtKind::Await(..)))
            .map(|f| f as *const Stmt),
        _ => None,
    };
    trans(s, lead, ctx)
}

fn cll_zero() -> Formula {
    Formula::eq(Term::var(dl::CALL_FLAG), Term::zero())
}

pub fn obligation_method(
    p: &Program,
    c: &ClassDecl,
    m: &MethodDecl,
    generator: &PostRegionGenerator,
) -> Result<Obligation, VcgError> {
    let ctx = TranslationContext::new(p, Owner::Method(c, m), generator)?;
    let body = trans_stmt(&m.body, &ctx)?;
    let pr = ctx.pr(&region(generator, c, &m.name)?)?;
    Ok(Obligation {
        name: format!("{}.{}", c.name, m.name),
        kind: ObligationKind::Method,
        assumptions: Formula::and_nontrivial([c.invariant(), m.pre(), cll_zero()]),
        goal: Formula::boxed(body, Formula::and_nontrivial([cll_zero(), m.post(), pr])),
        tactic: m.tactic.clone(),
    })
}

/// The constructor: `?true`, field initializers in declaration order, then the init block.
pub fn obligation_init(
    p: &Program,
    c: &ClassDecl,
    generator: &PostRegionGenerator,
) -> Result<Obligation, VcgError> {
    let ctx = TranslationContext::new(p, Owner::Init(c), generator)?;
    let mut steps = vec![Dl::skip()];
    for ph in &c.physical {
        steps.push(assign_expr(ph.name.clone(), &ph.init, &ctx)?);
    }
    for f in &c.fields {
        if let Some(e) = &f.init {
            steps.push(assign_expr(f.name.clone(), e, &ctx)?);
        }
    }
    if let Some(init) = &c.init {
        steps.push(trans_stmt(init, &ctx)?);
    }
    let pr = ctx.pr(&region(generator, c, INIT)?)?;
    Ok(Obligation {
        name: format!("{}.{INIT}", c.name),
        kind: ObligationKind::Init,
        assumptions: Formula::and_nontrivial([c.creation(), cll_zero()]),
        goal: Formula::boxed(Dl::seq_all(steps), Formula::and(cll_zero(), pr)),
        tactic: None,
    })
}

pub fn obligation_main(
    p: &Program,
    generator: &PostRegionGenerator,
) -> Result<Obligation, VcgError> {
    let ctx = TranslationContext::new(p, Owner::Main, generator)?;
    Ok(Obligation {
        name: "main".into(),
        kind: ObligationKind::Main,
        assumptions: cll_zero(),
        goal: Formula::boxed(trans_stmt(&p.main, &ctx)?, cll_zero()),
        tactic: None,
    })
}

/// One obligation slot: either generated, or skipped as frame-exempt.
#[derive(Debug, Clone)]
pub struct Entry {
    pub name: String,
    pub kind: ObligationKind,
    pub obligation: Option<Obligation>,
}

impl Entry {
    pub fn exempt(&self) -> bool {
        self.obligation.is_none()
    }
}

/// All obligations of a program, in source order. Frame-exempt methods are
/// skipped under the basic generator unless `exemptions` is off.
pub fn obligations(
    p: &Program,
    generator: &PostRegionGenerator,
    exemptions: bool,
) -> Result<Vec<Entry>, VcgError> {
    let mut out = Vec::new();
    let basic = generator.kind == GeneratorKind::Basic;
    for c in &p.classes {
        let ob = obligation_init(p, c, generator)?;
        out.push(Entry {
            name: ob.name.clone(),
            kind: ob.kind,
            obligation: Some(ob),
        });
        for m in &c.methods {
            let name = format!("{}.{}", c.name, m.name);
            if exemptions && basic && frame_exempt(m, c) {
                out.push(Entry {
                    name,
                    kind: ObligationKind::Method,
                    obligation: None,
                });
            } else {
                out.push(Entry {
                    name,
                    kind: ObligationKind::Method,
                    obligation: Some(obligation_method(p, c, m, generator)?),
                });
            }
        }
    }
    let ob = obligation_main(p, generator)?;
    out.push(Entry {
        name: ob.name.clone(),
        kind: ob.kind,
        obligation: Some(ob),
    });
    Ok(out)
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, VcgError> {
    fs::write(&path, text).map_err(|source| VcgError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes `<Class>.<member>.kyx` per obligation, `.tactic` sidecars, and `manifest.txt`.
pub fn emit(p: &Program, kind: &GeneratorKind, out: &Path) -> Result<Vec<PathBuf>, VcgError> {
    let generator = analysis::generator(kind, p)?;
    let entries = obligations(p, &generator, true)?;
    fs::create_dir_all(out).map_err(|source| VcgError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let mut manifest = String::from("member\tkind\tgenerator\texempt\ttactic\n");
    for e in &entries {
        let tactic = e.obligation.as_ref().and_then(|o| o.tactic.clone());
        manifest.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            e.name,
            e.kind.as_str(),
            kind,
            if e.exempt() { "yes" } else { "no" },
            if tactic.is_some() { "yes" } else { "no" }
        ));
        if let Some(o) = &e.obligation {
            written.push(write(out.join(format!("{}.kyx", e.name)), &o.render())?);
        }
        if let Some(t) = tactic {
            written.push(write(
                out.join(format!("{}.tactic", e.name)),
                &format!("{t}\n"),
            )?);
        }
    }
    written.push(write(out.join("manifest.txt"), &manifest)?);
    Ok(written)
}
