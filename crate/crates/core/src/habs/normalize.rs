use std::collections::BTreeSet;

use super::{
    ClassDecl, Diagnostic, Expr, Guard, HabsError, Program, Rhs, Span, Stmt, StmtKind, VarKind,
};

struct Names {
    fields: BTreeSet<String>,
    params: BTreeSet<String>,
    locals: BTreeSet<String>,
    in_class: bool,
}

struct Ctx<'a> {
    file: &'a str,
    diags: Vec<Diagnostic>,
    next_point: u32,
}

impl Ctx<'_> {
    fn diag(&mut self, span: Span, message: String) {
        self.diags.push(Diagnostic {
            file: self.file.to_string(),
            span,
            message,
        });
    }

    fn resolve_name(&mut self, names: &Names, n: &str, kind: VarKind, span: Span) -> VarKind {
        match kind {
            VarKind::Field => {
                if !names.fields.contains(n) {
                    self.diag(span, format!("unknown field `{n}`"));
                }
                VarKind::Field
            }
            VarKind::Unresolved => {
                if names.locals.contains(n) {
                    VarKind::Local
                } else if names.params.contains(n) {
                    VarKind::Param
                } else if names.fields.contains(n) {
                    VarKind::Field
                } else {
                    self.diag(span, format!("unknown name `{n}`"));
                    VarKind::Unresolved
                }
            }
            k => k,
        }
    }

    fn expr(&mut self, names: &Names, e: &Expr, span: Span) -> Expr {
        if !names.in_class && contains_this(e) {
            self.diag(span, "`this` outside a class".into());
        }
        let mut walk =
            |n: &str, k: VarKind| Expr::Var(n.to_string(), self.resolve_name(names, n, k, span));
        e.map_vars(&mut walk)
    }

    fn rhs(&mut self, names: &Names, r: &Rhs, span: Span) -> Rhs {
        match r {
            Rhs::Expr(e) => Rhs::Expr(self.expr(names, e, span)),
            Rhs::New(c, args) => Rhs::New(
                c.clone(),
                args.iter().map(|a| self.expr(names, a, span)).collect(),
            ),
            Rhs::Get(e) => Rhs::Get(self.expr(names, e, span)),
            Rhs::Call {
                target,
                method,
                args,
            } => Rhs::Call {
                target: self.expr(names, target, span),
                method: method.clone(),
                args: args.iter().map(|a| self.expr(names, a, span)).collect(),
            },
        }
    }

    fn stmt(&mut self, names: &Names, s: &Stmt) -> Stmt {
        let span = s.span;
        let kind = match &s.kind {
            StmtKind::Block(v) => StmtKind::Block(v.iter().map(|x| self.stmt(names, x)).collect()),
            StmtKind::If(c, a, b) => StmtKind::If(
                self.expr(names, c, span),
                Box::new(self.stmt(names, a)),
                b.as_ref().map(|b| Box::new(self.stmt(names, b))),
            ),
            StmtKind::While(c, b) => {
                StmtKind::While(self.expr(names, c, span), Box::new(self.stmt(names, b)))
            }
            StmtKind::Decl(t, v, r) => {
                StmtKind::Decl(t.clone(), v.clone(), self.rhs(names, r, span))
            }
            StmtKind::Assign(v, k, r) => {
                let kind = self.resolve_name(names, v, *k, span);
                StmtKind::Assign(v.clone(), kind, self.rhs(names, r, span))
            }
            StmtKind::Exec(r) => StmtKind::Exec(self.rhs(names, r, span)),
            StmtKind::Await(_, g) => {
                self.next_point += 1;
                let g = match g {
                    Guard::Poll(e) => Guard::Poll(self.expr(names, e, span)),
                    Guard::Duration(e) => Guard::Duration(self.expr(names, e, span)),
                    Guard::Diff(e) => Guard::Diff(self.expr(names, e, span)),
                };
                StmtKind::Await(self.next_point, g)
            }
            StmtKind::Duration(e) => StmtKind::Duration(self.expr(names, e, span)),
            StmtKind::Return(e) => StmtKind::Return(self.expr(names, e, span)),
        };
        Stmt::new(kind, span)
    }

    fn locals(&mut self, body: &Stmt) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut dups = Vec::new();
        body.visit(&mut |s| {
            if let StmtKind::Decl(_, v, _) = &s.kind {
                if !out.insert(v.clone()) {
                    dups.push((s.span, v.clone()));
                }
            }
        });
        for (span, v) in dups {
            self.diag(span, format!("local `{v}` declared twice"));
        }
        out
    }
}

fn contains_this(e: &Expr) -> bool {
    match e {
        Expr::This => true,
        Expr::Unary(_, a) => contains_this(a),
        Expr::Binary(_, a, b) => contains_this(a) || contains_this(b),
        _ => false,
    }
}

/// Prepends `await diff true` to a body that does not start with an await.
fn suspension_leading(body: &Stmt) -> Stmt {
    if matches!(body.first().map(|s| &s.kind), Some(StmtKind::Await(..))) {
        return body.clone();
    }
    let lead = Stmt::new(StmtKind::Await(0, Guard::Diff(Expr::Bool(true))), body.span);
    let mut items = vec![lead];
    items.extend(body.items().iter().cloned());
    Stmt::block(items, body.span)
}

fn class_names(c: &ClassDecl) -> BTreeSet<String> {
    c.field_names().into_iter().collect()
}

/// Makes every method suspension-leading, numbers await statements, and resolves names.
pub fn normalize(p: &Program) -> Result<Program, HabsError> {
    let mut ctx = Ctx {
        file: &p.file,
        diags: Vec::new(),
        next_point: 0,
    };
    let mut out = p.clone();
    for c in &mut out.classes {
        let fields = class_names(c);
        let mut seen = BTreeSet::new();
        for f in c.field_names() {
            if !seen.insert(f.clone()) {
                ctx.diag(
                    c.span,
                    format!("field `{f}` declared twice in class `{}`", c.name),
                );
            }
        }
        let mut mseen = BTreeSet::new();
        for m in &c.methods {
            if !mseen.insert(m.name.clone()) {
                ctx.diag(
                    m.span,
                    format!("method `{}` declared twice in class `{}`", m.name, c.name),
                );
            }
        }
        let field_names = Names {
            fields: fields.clone(),
            params: BTreeSet::new(),
            locals: BTreeSet::new(),
            in_class: true,
        };
        for ph in &mut c.physical {
            ph.init = ctx.expr(&field_names, &ph.init, ph.span);
            ph.derivative = ctx.expr(&field_names, &ph.derivative, ph.span);
        }
        for f in &mut c.fields {
            if let Some(e) = &f.init {
                f.init = Some(ctx.expr(&field_names, e, f.span));
            }
        }
        if let Some(init) = &c.init {
            let locals = ctx.locals(init);
            let names = Names {
                fields: fields.clone(),
                params: BTreeSet::new(),
                locals,
                in_class: true,
            };
            c.init = Some(ctx.stmt(&names, init));
        }
        for m in &mut c.methods {
            let body = suspension_leading(&m.body);
            let locals = ctx.locals(&body);
            let params = m.params.iter().map(|p| p.name.clone()).collect();
            let names = Names {
                fields: fields.clone(),
                params,
                locals,
                in_class: true,
            };
            m.body = ctx.stmt(&names, &body);
        }
    }
    let locals = ctx.locals(&p.main);
    let names = Names {
        fields: BTreeSet::new(),
        params: BTreeSet::new(),
        locals,
        in_class: false,
    };
    out.main = ctx.stmt(&names, &p.main);
    if ctx.diags.is_empty() {
        Ok(out)
    } else {
        Err(HabsError::Resolve(ctx.diags))
    }
}
