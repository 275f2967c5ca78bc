//! The HABS language: abstract syntax, parser, normalization and static checks.

mod expr;
mod lexer;
mod normalize;
mod parser;
mod pretty;
mod scope;
mod typeck;

use std::fmt;

use num_rational::BigRational;
use thiserror::Error;

use crate::dl;

pub use expr::{expr_to_formula, expr_to_term, formula_to_habs, TranslateError};
pub use normalize::normalize;
pub use parser::{parse_expr, parse_habs};
pub use scope::{Owner, Scope};
pub use typeck::check_types;

/// Source position. Positions are metadata: any two spans compare equal, so
/// syntax trees compare by structure alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl Eq for Span {}

impl std::hash::Hash for Span {
    fn hash<H: std::hash::Hasher>(&self, _: &mut H) {}
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub file: String,
    pub span: Span,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}: {}",
            self.file, self.span.line, self.span.col, self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HabsError {
    #[error("{0}")]
    Parse(Diagnostic),
    #[error("{}", join(.0))]
    Resolve(Vec<Diagnostic>),
    #[error("{}", join(.0))]
    Type(Vec<Diagnostic>),
}

fn join(ds: &[Diagnostic]) -> String {
    ds.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

impl HabsError {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            HabsError::Parse(d) => vec![d.clone()],
            HabsError::Resolve(ds) | HabsError::Type(ds) => ds.clone(),
        }
    }
}

/// Identifiers the translation reserves for itself.
pub const RESERVED: [&str; 3] = [dl::CLOCK, dl::CALL_FLAG, dl::RESULT];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Type {
    Real,
    Int,
    Bool,
    Unit,
    Fut(Box<Type>),
    Named(String),
}

impl Type {
    pub fn is_numeric(&self) -> bool {
        matches!(self, Type::Real | Type::Int)
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Real => f.write_str("Real"),
            Type::Int => f.write_str("Int"),
            Type::Bool => f.write_str("Bool"),
            Type::Unit => f.write_str("Unit"),
            Type::Fut(t) => write!(f, "Fut<{t}>"),
            Type::Named(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    And,
    Or,
    Le,
    Ge,
    Lt,
    Gt,
    Eq,
    Ne,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Le | BinOp::Ge | BinOp::Lt | BinOp::Gt | BinOp::Eq | BinOp::Ne
        )
    }
}

/// How a name was resolved. The parser leaves plain identifiers unresolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Unresolved,
    Field,
    Param,
    Local,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Num(BigRational),
    Bool(bool),
    Unit,
    Null,
    This,
    Var(String, VarKind),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn field(name: impl Into<String>) -> Expr {
        Expr::Var(name.into(), VarKind::Field)
    }

    /// Visits every variable occurrence.
    pub fn visit_vars(&self, f: &mut dyn FnMut(&str, VarKind)) {
        match self {
            Expr::Var(n, k) => f(n, *k),
            Expr::Unary(_, e) => e.visit_vars(f),
            Expr::Binary(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            _ => {}
        }
    }

    pub fn map_vars(&self, f: &mut dyn FnMut(&str, VarKind) -> Expr) -> Expr {
        match self {
            Expr::Var(n, k) => f(n, *k),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.map_vars(f))),
            Expr::Binary(op, a, b) => {
                Expr::Binary(*op, Box::new(a.map_vars(f)), Box::new(b.map_vars(f)))
            }
            e => e.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Rhs {
    Expr(Expr),
    New(String, Vec<Expr>),
    Get(Expr),
    Call {
        target: Expr,
        method: String,
        args: Vec<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Guard {
    Poll(Expr),
    Duration(Expr),
    Diff(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StmtKind {
    Block(Vec<Stmt>),
    If(Expr, Box<Stmt>, Option<Box<Stmt>>),
    While(Expr, Box<Stmt>),
    /// Local declaration `T v = rhs`.
    Decl(Type, String, Rhs),
    Assign(String, VarKind, Rhs),
    /// A call or get whose result is dropped.
    Exec(Rhs),
    /// Await with its program point; 0 before normalization.
    Await(u32, Guard),
    Duration(Expr),
    Return(Expr),
}

impl Stmt {
    pub fn new(kind: StmtKind, span: Span) -> Stmt {
        Stmt { kind, span }
    }

    pub fn block(items: Vec<Stmt>, span: Span) -> Stmt {
        Stmt::new(StmtKind::Block(items), span)
    }

    /// Statements of a block, or the statement itself.
    pub fn items(&self) -> &[Stmt] {
        match &self.kind {
            StmtKind::Block(v) => v,
            _ => std::slice::from_ref(self),
        }
    }

    /// First non-block statement, if any.
    pub fn first(&self) -> Option<&Stmt> {
        match &self.kind {
            StmtKind::Block(v) => v.iter().find_map(|s| s.first()),
            _ => Some(self),
        }
    }

    /// Pre-order traversal.
    pub fn visit(&self, f: &mut dyn FnMut(&Stmt)) {
        f(self);
        match &self.kind {
            StmtKind::Block(v) => v.iter().for_each(|s| s.visit(f)),
            StmtKind::If(_, a, b) => {
                a.visit(f);
                if let Some(b) = b {
                    b.visit(f);
                }
            }
            StmtKind::While(_, b) => b.visit(f),
            _ => {}
        }
    }

    pub fn rhs(&self) -> Option<&Rhs> {
        match &self.kind {
            StmtKind::Decl(_, _, r) | StmtKind::Assign(_, _, r) | StmtKind::Exec(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhysDecl {
    pub name: String,
    pub init: Expr,
    pub derivative: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub ty: Type,
    pub init: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDecl {
    pub name: String,
    pub ret: Type,
    pub params: Vec<Param>,
    pub body: Stmt,
    pub pre: Option<dl::Formula>,
    pub post: Option<dl::Formula>,
    pub tactic: Option<String>,
    pub span: Span,
}

impl MethodDecl {
    pub fn pre(&self) -> dl::Formula {
        self.pre.clone().unwrap_or(dl::Formula::True)
    }

    pub fn post(&self) -> dl::Formula {
        self.post.clone().unwrap_or(dl::Formula::True)
    }

    /// Guard of the leading await, once normalized.
    pub fn leading_guard(&self) -> Option<(u32, &Guard)> {
        match &self.body.first()?.kind {
            StmtKind::Await(p, g) => Some((*p, g)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodSig {
    pub name: String,
    pub ret: Type,
    pub params: Vec<Param>,
    pub pre: Option<dl::Formula>,
    pub post: Option<dl::Formula>,
    pub tactic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfaceDecl {
    pub name: String,
    pub methods: Vec<MethodSig>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub implements: Vec<String>,
    pub physical: Vec<PhysDecl>,
    pub fields: Vec<FieldDecl>,
    pub init: Option<Stmt>,
    pub methods: Vec<MethodDecl>,
    pub creation: Option<dl::Formula>,
    pub invariant: Option<dl::Formula>,
    pub span: Span,
}

impl ClassDecl {
    pub fn method(&self, name: &str) -> Option<&MethodDecl> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn invariant(&self) -> dl::Formula {
        self.invariant.clone().unwrap_or(dl::Formula::True)
    }

    pub fn creation(&self) -> dl::Formula {
        self.creation.clone().unwrap_or(dl::Formula::True)
    }

    pub fn is_physical(&self, name: &str) -> bool {
        self.physical.iter().any(|p| p.name == name)
    }

    /// Every field name: parameters, physical fields, discrete fields.
    pub fn field_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.params.iter().map(|p| p.name.clone()).collect();
        v.extend(self.physical.iter().map(|p| p.name.clone()));
        v.extend(self.fields.iter().map(|f| f.name.clone()));
        v
    }

    pub fn field_type(&self, name: &str) -> Option<Type> {
        if let Some(p) = self.params.iter().find(|p| p.name == name) {
            return Some(p.ty.clone());
        }
        if self.is_physical(name) {
            return Some(Type::Real);
        }
        self.fields
            .iter()
            .find(|f| f.name == name)
            .map(|f| f.ty.clone())
    }

    /// The class dynamics as a dL ODE with the given evolution domain.
    pub fn ode(&self, domain: dl::Formula) -> Result<dl::Program, TranslateError> {
        let mut eqs = Vec::new();
        for p in &self.physical {
            eqs.push((
                p.name.clone(),
                expr_to_term(&p.derivative, &|n, _| n.to_string())?,
            ));
        }
        Ok(dl::Program::Ode(
            dl::Ode::new(eqs, domain).map_err(TranslateError::Dl)?,
        ))
    }

    /// Program points of the class in textual order.
    pub fn points(&self) -> Vec<(u32, String)> {
        let mut out = Vec::new();
        let mut grab = |owner: &str, s: &Stmt| {
            s.visit(&mut |st| {
                if let StmtKind::Await(p, _) = st.kind {
                    out.push((p, owner.to_string()));
                }
            })
        };
        if let Some(i) = &self.init {
            grab("init", i);
        }
        for m in &self.methods {
            grab(&m.name, &m.body);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub file: String,
    pub interfaces: Vec<InterfaceDecl>,
    pub classes: Vec<ClassDecl>,
    pub main: Stmt,
}

impl Program {
    pub fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn interface(&self, name: &str) -> Option<&InterfaceDecl> {
        self.interfaces.iter().find(|i| i.name == name)
    }

    /// Classes whose objects can have static type `ty`.
    pub fn classes_of_type(&self, ty: &str) -> Vec<&ClassDecl> {
        self.classes
            .iter()
            .filter(|c| c.name == ty || c.implements.iter().any(|i| i == ty))
            .collect()
    }

    /// Parses and normalizes in one go.
    pub fn load(file: &str, src: &str) -> Result<Program, HabsError> {
        normalize(&parse_habs(file, src)?)
    }
}
