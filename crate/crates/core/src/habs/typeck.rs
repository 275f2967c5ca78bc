use std::collections::BTreeSet;

use super::{
    ClassDecl, Diagnostic, Expr, HabsError, Owner, Program, Rhs, Scope, Span, StmtKind, Type,
};
use crate::dl::{free_variables, Formula, RESULT};

struct Checker<'a> {
    program: &'a Program,
    diags: Vec<Diagnostic>,
}

impl<'a> Checker<'a> {
    fn diag(&mut self, span: Span, message: String) {
        self.diags.push(Diagnostic {
            file: self.program.file.clone(),
            span,
            message,
        });
    }

    fn vocabulary(&mut self, f: &Formula, allowed: &BTreeSet<String>, what: &str, span: Span) {
        for v in free_variables(f) {
            if !allowed.contains(&v) {
                self.diag(
                    span,
                    format!("{what} mentions `{v}`, which is not in its vocabulary"),
                );
            }
        }
    }

    fn class(&mut self, c: &'a ClassDecl) {
        let fields: BTreeSet<String> = c.field_names().into_iter().collect();
        let params: BTreeSet<String> = c.params.iter().map(|p| p.name.clone()).collect();
        self.vocabulary(
            &c.invariant(),
            &fields,
            &format!("invariant of `{}`", c.name),
            c.span,
        );
        self.vocabulary(
            &c.creation(),
            &params,
            &format!("creation condition of `{}`", c.name),
            c.span,
        );
        for m in &c.methods {
            let mparams: BTreeSet<String> = m.params.iter().map(|p| p.name.clone()).collect();
            self.vocabulary(
                &m.pre(),
                &mparams,
                &format!("precondition of `{}.{}`", c.name, m.name),
                m.span,
            );
            let mut post = fields.clone();
            post.insert(RESULT.to_string());
            self.vocabulary(
                &m.post(),
                &post,
                &format!("postcondition of `{}.{}`", c.name, m.name),
                m.span,
            );
        }
        if let Some(init) = &c.init {
            self.block(Owner::Init(c), init);
        }
        for m in &c.methods {
            self.block(Owner::Method(c, m), &m.body);
        }
    }

    fn block(&mut self, owner: Owner<'a>, body: &super::Stmt) {
        let scope = Scope::new(self.program, owner);
        let mut found = Vec::new();
        body.visit(&mut |s| found.push(s.clone()));
        for s in found {
            match &s.kind {
                StmtKind::If(c, _, _) | StmtKind::While(c, _) => self.condition(&scope, c, s.span),
                _ => {}
            }
            if let Some(r) = s.rhs() {
                self.rhs(&scope, r, s.span);
            }
            if let StmtKind::Exec(Rhs::Expr(_)) = &s.kind {
                self.diag(s.span, "expression statement has no effect".into());
            }
        }
    }

    fn condition(&mut self, scope: &Scope, c: &Expr, span: Span) {
        if let Some(t) = scope.type_of(c) {
            if t != Type::Bool {
                self.diag(span, format!("condition has type {t}, expected Bool"));
            }
        }
    }

    fn rhs(&mut self, scope: &Scope, r: &Rhs, span: Span) {
        match r {
            Rhs::Expr(_) => {}
            Rhs::Get(e) => match scope.type_of(e) {
                Some(Type::Fut(_)) => {}
                Some(t) => self.diag(span, format!("`get` on a value of type {t}")),
                None => self.diag(span, "`get` on a value that is not a future".into()),
            },
            Rhs::New(c, args) => match self.program.class(c) {
                None => self.diag(span, format!("unknown class `{c}`")),
                Some(cd) if cd.params.len() != args.len() => self.diag(
                    span,
                    format!(
                        "`new {c}` takes {} arguments, {} given",
                        cd.params.len(),
                        args.len()
                    ),
                ),
                _ => {}
            },
            Rhs::Call {
                target,
                method,
                args,
            } => match scope.callee_params(target, method) {
                None => self.diag(span, format!("cannot resolve call target of `{method}`")),
                Some(ps) if ps.len() != args.len() => self.diag(
                    span,
                    format!(
                        "`{method}` takes {} arguments, {} given",
                        ps.len(),
                        args.len()
                    ),
                ),
                _ => {}
            },
        }
    }
}

/// Static checks on a normalized program. All diagnostics are reported together.
pub fn check_types(p: &Program) -> Result<(), HabsError> {
    let mut ch = Checker {
        program: p,
        diags: Vec::new(),
    };
    for c in &p.classes {
        ch.class(c);
    }
    ch.block(Owner::Main, &p.main);
    if ch.diags.is_empty() {
        Ok(())
    } else {
        Err(HabsError::Type(ch.diags))
    }
}
