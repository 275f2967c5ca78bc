use std::collections::BTreeMap;

use super::{
    BinOp, ClassDecl, Expr, MethodDecl, Param, Program, Rhs, Stmt, StmtKind, Type, UnOp, VarKind,
};

/// The code block a statement belongs to.
#[derive(Debug, Clone, Copy)]
pub enum Owner<'a> {
    Method(&'a ClassDecl, &'a MethodDecl),
    Init(&'a ClassDecl),
    Main,
}

impl<'a> Owner<'a> {
    pub fn class(&self) -> Option<&'a ClassDecl> {
        match self {
            Owner::Method(c, _) | Owner::Init(c) => Some(c),
            Owner::Main => None,
        }
    }

    pub fn member(&self) -> &str {
        match self {
            Owner::Method(_, m) => &m.name,
            Owner::Init(_) => "init",
            Owner::Main => "main",
        }
    }

    pub fn body(&self) -> Option<&'a Stmt> {
        match self {
            Owner::Method(_, m) => Some(&m.body),
            Owner::Init(c) => c.init.as_ref(),
            Owner::Main => None,
        }
    }
}

/// Static typing environment of one code block.
pub struct Scope<'a> {
    pub program: &'a Program,
    pub owner: Owner<'a>,
    locals: BTreeMap<String, Type>,
}

impl<'a> Scope<'a> {
    pub fn new(program: &'a Program, owner: Owner<'a>) -> Scope<'a> {
        let mut locals = BTreeMap::new();
        let body = match owner {
            Owner::Main => Some(&program.main),
            o => o.body(),
        };
        if let Some(b) = body {
            b.visit(&mut |s| {
                if let StmtKind::Decl(t, v, _) = &s.kind {
                    locals.insert(v.clone(), t.clone());
                }
            });
        }
        Scope {
            program,
            owner,
            locals,
        }
    }

    pub fn var_type(&self, name: &str, kind: VarKind) -> Option<Type> {
        match kind {
            VarKind::Local => self.locals.get(name).cloned(),
            VarKind::Param => match self.owner {
                Owner::Method(_, m) => m
                    .params
                    .iter()
                    .find(|p| p.name == name)
                    .map(|p| p.ty.clone()),
                _ => None,
            },
            VarKind::Field => self.owner.class()?.field_type(name),
            VarKind::Unresolved => None,
        }
    }

    pub fn type_of(&self, e: &Expr) -> Option<Type> {
        Some(match e {
            Expr::Num(r) => {
                if r.is_integer() {
                    Type::Int
                } else {
                    Type::Real
                }
            }
            Expr::Bool(_) => Type::Bool,
            Expr::Unit => Type::Unit,
            Expr::Null => return None,
            Expr::This => Type::Named(self.owner.class()?.name.clone()),
            Expr::Var(n, k) => return self.var_type(n, *k),
            Expr::Unary(UnOp::Not, _) => Type::Bool,
            Expr::Unary(UnOp::Neg, a) => return self.type_of(a),
            Expr::Binary(op, a, b) => match op {
                BinOp::And | BinOp::Or => Type::Bool,
                op if op.is_comparison() => Type::Bool,
                _ => match (self.type_of(a), self.type_of(b)) {
                    (Some(Type::Int), Some(Type::Int)) if *op != BinOp::Div => Type::Int,
                    _ => Type::Real,
                },
            },
        })
    }

    /// Classes a call on `target` can reach.
    pub fn callee_classes(&self, target: &Expr) -> Vec<&'a ClassDecl> {
        if let Expr::This = target {
            return self.owner.class().into_iter().collect();
        }
        match self.type_of(target) {
            Some(Type::Named(n)) => self.program.classes_of_type(&n),
            _ => Vec::new(),
        }
    }

    /// Parameter list of `method` as seen through the static type of `target`.
    pub fn callee_params(&self, target: &Expr, method: &str) -> Option<Vec<Param>> {
        let ty = match target {
            Expr::This => self.owner.class()?.name.clone(),
            e => match self.type_of(e)? {
                Type::Named(n) => n,
                _ => return None,
            },
        };
        if let Some(c) = self.program.class(&ty) {
            if let Some(m) = c.method(method) {
                return Some(m.params.clone());
            }
        }
        if let Some(i) = self.program.interface(&ty) {
            if let Some(m) = i.methods.iter().find(|m| m.name == method) {
                return Some(m.params.clone());
            }
        }
        None
    }

    /// The method declarations a call may dispatch to.
    pub fn callees(&self, target: &Expr, method: &str) -> Vec<(&'a ClassDecl, &'a MethodDecl)> {
        self.callee_classes(target)
            .into_iter()
            .filter_map(|c| c.method(method).map(|m| (c, m)))
            .collect()
    }

    pub fn rhs_type(&self, r: &Rhs) -> Option<Type> {
        match r {
            Rhs::Expr(e) => self.type_of(e),
            Rhs::New(c, _) => Some(Type::Named(c.clone())),
            Rhs::Get(e) => match self.type_of(e)? {
                Type::Fut(t) => Some(*t),
                _ => None,
            },
            Rhs::Call { target, method, .. } => {
                let ret = self
                    .callees(target, method)
                    .first()
                    .map(|(_, m)| m.ret.clone())
                    .or_else(|| {
                        let Some(Type::Named(n)) = self.type_of(target) else {
                            return None;
                        };
                        self.program
                            .interface(&n)?
                            .methods
                            .iter()
                            .find(|m| m.name == *method)
                            .map(|m| m.ret.clone())
                    })?;
                Some(Type::Fut(Box::new(ret)))
            }
        }
    }
}
