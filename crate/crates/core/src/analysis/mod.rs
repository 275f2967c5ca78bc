//! Post-region generators and the analyses behind them.

mod cg;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use cg::{build_causality_graph, guaranteed_calls, CausalityGraph, Node, NodeKind, Target};

use crate::dl::{self, weak_negate, DlError, Formula, Rel, Term};
use crate::habs::{
    expr_to_formula, expr_to_term, ClassDecl, Expr, Guard, MethodDecl, Owner, Program, Rhs, Scope,
    Stmt, StmtKind, TranslateError, VarKind,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("no await with program point {0}")]
    UnknownPoint(u32),
    #[error("unknown member `{0}`")]
    UnknownMember(String),
    #[error("generators cover different members")]
    DomainMismatch,
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Dl(#[from] DlError),
}

/// Name of the constructor pseudo-member.
pub const INIT: &str = "init";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeneratorKind {
    Basic,
    Local,
    Structural,
    Composed(Vec<GeneratorKind>),
}

impl GeneratorKind {
    /// The plain kinds this one is made of.
    pub fn parts(&self) -> Vec<GeneratorKind> {
        match self {
            GeneratorKind::Composed(v) => v.iter().flat_map(|k| k.parts()).collect(),
            k => vec![k.clone()],
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorKind::Basic => f.write_str("basic"),
            GeneratorKind::Local => f.write_str("local"),
            GeneratorKind::Structural => f.write_str("structural"),
            GeneratorKind::Composed(v) => {
                let parts: Vec<String> = v.iter().map(|k| k.to_string()).collect();
                f.write_str(&parts.join("+"))
            }
        }
    }
}

impl FromStr for GeneratorKind {
    type Err = AnalysisError;

    /// `basic`, `local`, `structural`, `composed` (local with structural) or a `+`-joined list.
    fn from_str(s: &str) -> Result<GeneratorKind, AnalysisError> {
        let one = |p: &str| match p.trim() {
            "basic" => Ok(GeneratorKind::Basic),
            "local" => Ok(GeneratorKind::Local),
            "structural" => Ok(GeneratorKind::Structural),
            "composed" => Ok(GeneratorKind::Composed(vec![
                GeneratorKind::Local,
                GeneratorKind::Structural,
            ])),
            other => Err(AnalysisError::UnknownGenerator(other.to_string())),
        };
        if s.contains('+') {
            Ok(GeneratorKind::Composed(
                s.split('+').map(one).collect::<Result<_, _>>()?,
            ))
        } else {
            one(s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    /// A method, or the constructor under the name `init`.
    Member(String),
    Point(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegionKey {
    pub class: String,
    pub region: Region,
}

impl fmt::Display for RegionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.region {
            Region::Member(m) => write!(f, "{}.{}", self.class, m),
            Region::Point(p) => write!(f, "{}.@{}", self.class, p),
        }
    }
}

/// Map from members and await points to post-regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostRegionGenerator {
    pub kind: GeneratorKind,
    entries: Vec<(RegionKey, Formula)>,
}

impl PostRegionGenerator {
    pub fn get(&self, key: &RegionKey) -> Option<&Formula> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, f)| f)
    }

    pub fn member(&self, class: &str, member: &str) -> Option<&Formula> {
        self.get(&RegionKey {
            class: class.into(),
            region: Region::Member(member.into()),
        })
    }

    pub fn point(&self, class: &str, p: u32) -> Option<&Formula> {
        self.get(&RegionKey {
            class: class.into(),
            region: Region::Point(p),
        })
    }

    /// Entries in class order, then source order.
    pub fn entries(&self) -> &[(RegionKey, Formula)] {
        &self.entries
    }
}

/// Every member and await point of every class, in source order.
pub fn region_keys(p: &Program) -> Vec<RegionKey> {
    let mut out = Vec::new();
    for c in &p.classes {
        let key = |region| RegionKey {
            class: c.name.clone(),
            region,
        };
        out.push(key(Region::Member(INIT.into())));
        if let Some(init) = &c.init {
            out.extend(points_of(init).into_iter().map(|p| key(Region::Point(p))));
        }
        for m in &c.methods {
            out.push(key(Region::Member(m.name.clone())));
            out.extend(
                points_of(&m.body)
                    .into_iter()
                    .map(|p| key(Region::Point(p))),
            );
        }
    }
    out
}

fn points_of(s: &Stmt) -> Vec<u32> {
    let mut out = Vec::new();
    s.visit(&mut |st| {
        if let StmtKind::Await(p, _) = st.kind {
            out.push(p);
        }
    });
    out
}

fn field_name(n: &str, _: VarKind) -> String {
    n.to_string()
}

/// The condition under which a process waiting on `g` can be scheduled.
pub fn external_trigger(g: &Guard) -> Result<Formula, AnalysisError> {
    Ok(match g {
        Guard::Diff(e) => expr_to_formula(e, &field_name)?,
        Guard::Duration(e) => {
            Formula::cmp(Rel::Ge, Term::var(dl::CLOCK), expr_to_term(e, &field_name)?)
        }
        Guard::Poll(_) => Formula::False,
    })
}

fn method_trigger(c: &ClassDecl, m: &str) -> Result<Formula, AnalysisError> {
    let md = c
        .method(m)
        .ok_or_else(|| AnalysisError::UnknownMember(format!("{}.{m}", c.name)))?;
    match md.leading_guard() {
        Some((_, g)) => external_trigger(g),
        None => Ok(Formula::True),
    }
}

/// Conjunction of the weakly negated triggers of `methods`, in declaration order.
fn negated_triggers(c: &ClassDecl, methods: &BTreeSet<String>) -> Result<Formula, AnalysisError> {
    let mut parts = Vec::new();
    for m in c.methods.iter().filter(|m| methods.contains(&m.name)) {
        parts.push(weak_negate(&method_trigger(c, &m.name)?)?);
    }
    Ok(Formula::and_all(parts))
}

pub fn generator_basic(p: &Program) -> PostRegionGenerator {
    PostRegionGenerator {
        kind: GeneratorKind::Basic,
        entries: region_keys(p)
            .into_iter()
            .map(|k| (k, Formula::True))
            .collect(),
    }
}

fn member_body<'a>(c: &'a ClassDecl, member: &str) -> Option<&'a Stmt> {
    if member == INIT {
        c.init.as_ref()
    } else {
        c.method(member).map(|m| &m.body)
    }
}

/// Guaranteed self-calls at a region of a class.
pub fn gcall(c: &ClassDecl, region: &Region) -> Result<BTreeSet<String>, AnalysisError> {
    match region {
        Region::Member(m) => match member_body(c, m) {
            Some(b) => guaranteed_calls(&build_causality_graph(b), Target::Exit),
            None if m == INIT => Ok(BTreeSet::new()),
            None => Err(AnalysisError::UnknownMember(format!("{}.{m}", c.name))),
        },
        Region::Point(p) => {
            let bodies = c.init.iter().chain(c.methods.iter().map(|m| &m.body));
            for b in bodies {
                if points_of(b).contains(p) {
                    return guaranteed_calls(&build_causality_graph(b), Target::Point(*p));
                }
            }
            Err(AnalysisError::UnknownPoint(*p))
        }
    }
}

pub fn generator_local(p: &Program) -> Result<PostRegionGenerator, AnalysisError> {
    let mut entries = Vec::new();
    for key in region_keys(p) {
        let c = p.class(&key.class).expect("key of an existing class");
        let calls = gcall(c, &key.region)?;
        entries.push((key, negated_triggers(c, &calls)?));
    }
    Ok(PostRegionGenerator {
        kind: GeneratorKind::Local,
        entries,
    })
}

pub fn generator_structural(p: &Program) -> Result<PostRegionGenerator, AnalysisError> {
    let mut entries = Vec::new();
    for c in &p.classes {
        let region = negated_triggers(c, &detect_controllers(c, p))?;
        for key in region_keys(p).into_iter().filter(|k| k.class == c.name) {
            entries.push((key, region.clone()));
        }
    }
    Ok(PostRegionGenerator {
        kind: GeneratorKind::Structural,
        entries,
    })
}

/// Pointwise conjunction.
pub fn compose(
    a: &PostRegionGenerator,
    b: &PostRegionGenerator,
) -> Result<PostRegionGenerator, AnalysisError> {
    let ka: BTreeSet<&RegionKey> = a.entries.iter().map(|(k, _)| k).collect();
    let kb: BTreeSet<&RegionKey> = b.entries.iter().map(|(k, _)| k).collect();
    if ka != kb {
        return Err(AnalysisError::DomainMismatch);
    }
    let entries = a
        .entries
        .iter()
        .map(|(k, f)| {
            (
                k.clone(),
                Formula::and_nontrivial([f.clone(), b.get(k).unwrap().clone()]),
            )
        })
        .collect();
    let mut kinds = a.kind.parts();
    kinds.extend(b.kind.parts());
    Ok(PostRegionGenerator {
        kind: GeneratorKind::Composed(kinds),
        entries,
    })
}

/// Builds the generator of the given kind.
pub fn generator(kind: &GeneratorKind, p: &Program) -> Result<PostRegionGenerator, AnalysisError> {
    match kind {
        GeneratorKind::Basic => Ok(generator_basic(p)),
        GeneratorKind::Local => generator_local(p),
        GeneratorKind::Structural => generator_structural(p),
        GeneratorKind::Composed(parts) => {
            let mut it = parts.iter();
            let first = it
                .next()
                .ok_or_else(|| AnalysisError::UnknownGenerator(String::new()))?;
            let mut acc = generator(first, p)?;
            for k in it {
                acc = compose(&acc, &generator(k, p)?)?;
            }
            Ok(acc)
        }
    }
}

fn self_call_target(s: &Stmt) -> Option<&str> {
    match s.rhs() {
        Some(Rhs::Call {
            target: Expr::This,
            method,
            ..
        }) => Some(method),
        _ => None,
    }
}

/// Whether every path through `s` ends with `this!name(..)`, ignoring a trailing `return unit`.
fn ends_with_self_call(s: &Stmt, name: &str) -> bool {
    match &s.kind {
        StmtKind::Block(items) => {
            let mut items: &[Stmt] = items;
            if let Some((last, rest)) = items.split_last() {
                if matches!(last.kind, StmtKind::Return(Expr::Unit)) {
                    items = rest;
                }
            }
            items.last().is_some_and(|l| ends_with_self_call(l, name))
        }
        StmtKind::If(_, a, Some(b)) => ends_with_self_call(a, name) && ends_with_self_call(b, name),
        _ => self_call_target(s) == Some(name),
    }
}

/// Call sites in a code block that may dispatch to `class.method`.
fn calls_to(p: &Program, owner: Owner, class: &ClassDecl, method: &str) -> usize {
    let scope = Scope::new(p, owner);
    let body = match owner {
        Owner::Main => Some(&p.main),
        o => o.body(),
    };
    let mut n = 0;
    if let Some(b) = body {
        b.visit(&mut |s| {
            if let Some(Rhs::Call {
                target, method: m, ..
            }) = s.rhs()
            {
                if m == method
                    && scope
                        .callee_classes(target)
                        .iter()
                        .any(|c| c.name == class.name)
                {
                    n += 1;
                }
            }
        });
    }
    n
}

fn is_controller(c: &ClassDecl, m: &MethodDecl, p: &Program) -> bool {
    let mut awaits = 0;
    let mut blocking = false;
    m.body.visit(&mut |s| match &s.kind {
        StmtKind::Await(..) => awaits += 1,
        StmtKind::Duration(_) => blocking = true,
        _ => {
            if matches!(s.rhs(), Some(Rhs::Get(_))) {
                blocking = true;
            }
        }
    });
    let leads = matches!(m.body.first().map(|s| &s.kind), Some(StmtKind::Await(..)));
    if !leads || awaits != 1 || blocking || !ends_with_self_call(&m.body, &m.name) {
        return false;
    }
    let from_init = c.init.is_some() && calls_to(p, Owner::Init(c), c, &m.name) > 0;
    if !from_init {
        return false;
    }
    // Every other call site must be the recursive one.
    for d in &p.classes {
        for other in &d.methods {
            let n = calls_to(p, Owner::Method(d, other), c, &m.name);
            if n == 0 {
                continue;
            }
            let own = d.name == c.name && other.name == m.name;
            if !own {
                return false;
            }
            let mut recursive = 0;
            other.body.visit(&mut |s| {
                if self_call_target(s) == Some(&m.name) {
                    recursive += 1;
                }
            });
            if recursive != n {
                return false;
            }
        }
        if d.name != c.name && d.init.is_some() && calls_to(p, Owner::Init(d), c, &m.name) > 0 {
            return false;
        }
    }
    calls_to(p, Owner::Main, c, &m.name) == 0
}

/// Methods of `c` that lead with an await, never block or suspend again, end
/// with a call to themselves, and are otherwise called only from the constructor.
pub fn detect_controllers(c: &ClassDecl, whole: &Program) -> BTreeSet<String> {
    c.methods
        .iter()
        .filter(|m| is_controller(c, m, whole))
        .map(|m| m.name.clone())
        .collect()
}

fn assigned_fields(s: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    s.visit(&mut |st| {
        if let StmtKind::Assign(v, VarKind::Field, _) = &st.kind {
            out.insert(v.clone());
        }
    });
    out
}

/// Whether a method provably leaves the invariant alone and needs no obligation
/// under the basic generator.
pub fn frame_exempt(m: &MethodDecl, c: &ClassDecl) -> bool {
    let mut protected: BTreeSet<String> = dl::free_variables(&c.invariant());
    for ph in &c.physical {
        protected.insert(ph.name.clone());
        ph.derivative.visit_vars(&mut |n, _| {
            protected.insert(n.to_string());
        });
    }
    if assigned_fields(&m.body)
        .iter()
        .any(|f| protected.contains(f))
    {
        return false;
    }
    let mut effects = false;
    m.body.visit(&mut |s| {
        if matches!(s.rhs(), Some(Rhs::Call { .. } | Rhs::New(..))) {
            effects = true;
        }
    });
    !effects && m.post() == Formula::True
}

/// A change to one method of a class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Change {
    Added { class: String, method: String },
    Removed { class: String, method: String },
    GuardChanged { class: String, method: String },
}

impl Change {
    pub fn class(&self) -> &str {
        match self {
            Change::Added { class, .. }
            | Change::Removed { class, .. }
            | Change::GuardChanged { class, .. } => class,
        }
    }

    pub fn method(&self) -> &str {
        match self {
            Change::Added { method, .. }
            | Change::Removed { method, .. }
            | Change::GuardChanged { method, .. } => method,
        }
    }
}

impl FromStr for Change {
    type Err = AnalysisError;

    /// `added:C.m`, `removed:C.m` or `guard:C.m`.
    fn from_str(s: &str) -> Result<Change, AnalysisError> {
        let bad = || AnalysisError::UnknownMember(s.to_string());
        let (kind, member) = s.split_once(':').ok_or_else(bad)?;
        let (class, method) = member.split_once('.').ok_or_else(bad)?;
        let (class, method) = (class.to_string(), method.to_string());
        match kind {
            "added" => Ok(Change::Added { class, method }),
            "removed" => Ok(Change::Removed { class, method }),
            "guard" | "guard_changed" => Ok(Change::GuardChanged { class, method }),
            _ => Err(bad()),
        }
    }
}

/// Members of the class whose post-region mentions `m` through a guaranteed call.
fn callers(c: &ClassDecl, m: &str) -> Result<BTreeSet<String>, AnalysisError> {
    let mut out = BTreeSet::new();
    let keys = std::iter::once(INIT.to_string()).chain(c.methods.iter().map(|d| d.name.clone()));
    for member in keys {
        let mut regions = vec![Region::Member(member.clone())];
        if let Some(b) = member_body(c, &member) {
            regions.extend(points_of(b).into_iter().map(Region::Point));
        }
        for r in regions {
            if gcall(c, &r)?.contains(m) {
                out.insert(member.clone());
            }
        }
    }
    Ok(out)
}

/// Obligations (by member name) that must be re-verified after `change`.
///
/// `p` is the program containing the method: after the addition, or before the removal.
pub fn reproof_set(
    change: &Change,
    kind: &GeneratorKind,
    p: &Program,
) -> Result<BTreeSet<String>, AnalysisError> {
    let c = p
        .class(change.class())
        .ok_or_else(|| AnalysisError::UnknownMember(change.class().to_string()))?;
    let m = change.method();
    if c.method(m).is_none() {
        return Err(AnalysisError::UnknownMember(format!("{}.{m}", c.name)));
    }
    let removed = matches!(change, Change::Removed { .. });
    let own: BTreeSet<String> = if removed {
        BTreeSet::new()
    } else {
        [m.to_string()].into()
    };
    let local = || -> Result<BTreeSet<String>, AnalysisError> {
        let mut s = callers(c, m)?;
        s.remove(m);
        s.extend(own.clone());
        Ok(s)
    };
    let mut out = BTreeSet::new();
    for k in kind.parts() {
        match k {
            GeneratorKind::Basic => out.extend(own.clone()),
            GeneratorKind::Local => out.extend(local()?),
            GeneratorKind::Structural => {
                if detect_controllers(c, p).contains(m) {
                    out.insert(INIT.to_string());
                    out.extend(
                        c.methods
                            .iter()
                            .map(|d| d.name.clone())
                            .filter(|n| !(removed && n == m)),
                    );
                } else {
                    out.extend(local()?);
                }
            }
            GeneratorKind::Composed(_) => unreachable!("parts are flat"),
        }
    }
    Ok(out)
}
