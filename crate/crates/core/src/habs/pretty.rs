//! HABS concrete syntax. Printing then parsing yields the same tree.

use std::fmt::{self, Write};

use num_traits::Signed;

use super::{
    formula_to_habs, ClassDecl, Expr, Guard, MethodDecl, Param, Program, Rhs, Stmt, StmtKind, UnOp,
    VarKind,
};

pub fn expr(e: &Expr) -> String {
    match e {
        Expr::Num(r) => {
            let body = if r.is_integer() {
                r.numer().abs().to_string()
            } else {
                format!("{}/{}", r.numer().abs(), r.denom())
            };
            if r.is_negative() {
                format!("(-{body})")
            } else if r.is_integer() {
                body
            } else {
                format!("({body})")
            }
        }
        Expr::Bool(b) => b.to_string(),
        Expr::Unit => "unit".into(),
        Expr::Null => "null".into(),
        Expr::This => "this".into(),
        Expr::Var(n, VarKind::Field) => format!("this.{n}"),
        Expr::Var(n, _) => n.clone(),
        Expr::Unary(UnOp::Neg, a) => format!("(-{})", expr(a)),
        Expr::Unary(UnOp::Not, a) => format!("(!{})", expr(a)),
        Expr::Binary(op, a, b) => format!("({} {} {})", expr(a), op.symbol(), expr(b)),
    }
}

fn args(v: &[Expr]) -> String {
    v.iter().map(expr).collect::<Vec<_>>().join(", ")
}

fn rhs(r: &Rhs) -> String {
    match r {
        Rhs::Expr(e) => expr(e),
        Rhs::New(c, a) => format!("new {c}({})", args(a)),
        Rhs::Get(e) => format!("{}.get", expr(e)),
        Rhs::Call {
            target,
            method,
            args: a,
        } => format!("{}!{method}({})", expr(target), args(a)),
    }
}

fn guard(g: &Guard) -> String {
    match g {
        Guard::Poll(e) => format!("{}?", expr(e)),
        Guard::Duration(e) => format!("duration({})", expr(e)),
        Guard::Diff(e) => format!("diff {}", expr(e)),
    }
}

fn stmt(out: &mut String, s: &Stmt, indent: usize) {
    let pad = "  ".repeat(indent);
    match &s.kind {
        StmtKind::Block(items) => {
            out.push_str(&format!("{pad}{{\n"));
            for i in items {
                stmt(out, i, indent + 1);
            }
            out.push_str(&format!("{pad}}}\n"));
        }
        StmtKind::If(c, a, b) => {
            out.push_str(&format!("{pad}if ({})\n", expr(c)));
            stmt(out, a, indent + 1);
            if let Some(b) = b {
                out.push_str(&format!("{pad}else\n"));
                stmt(out, b, indent + 1);
            }
        }
        StmtKind::While(c, b) => {
            out.push_str(&format!("{pad}while ({})\n", expr(c)));
            stmt(out, b, indent + 1);
        }
        StmtKind::Decl(t, v, r) => out.push_str(&format!("{pad}{t} {v} = {};\n", rhs(r))),
        StmtKind::Assign(v, VarKind::Field, r) => {
            out.push_str(&format!("{pad}this.{v} = {};\n", rhs(r)))
        }
        StmtKind::Assign(v, _, r) => out.push_str(&format!("{pad}{v} = {};\n", rhs(r))),
        StmtKind::Exec(r) => out.push_str(&format!("{pad}{};\n", rhs(r))),
        StmtKind::Await(_, g) => out.push_str(&format!("{pad}await {};\n", guard(g))),
        StmtKind::Duration(e) => out.push_str(&format!("{pad}duration({});\n", expr(e))),
        StmtKind::Return(e) => out.push_str(&format!("{pad}return {};\n", expr(e))),
    }
}

fn params(ps: &[Param]) -> String {
    ps.iter()
        .map(|p| format!("{} {}", p.ty, p.name))
        .collect::<Vec<_>>()
        .join(", ")
}

fn method(out: &mut String, m: &MethodDecl) {
    if let Some(f) = &m.pre {
        out.push_str(&format!(
            "  [HybridSpec: Requires({})]\n",
            formula_to_habs(f)
        ));
    }
    if let Some(f) = &m.post {
        out.push_str(&format!(
            "  [HybridSpec: Ensures({})]\n",
            formula_to_habs(f)
        ));
    }
    if let Some(t) = &m.tactic {
        out.push_str(&format!("  [HybridSpec: Tactic(\"{t}\")]\n"));
    }
    out.push_str(&format!("  {} {}({})\n", m.ret, m.name, params(&m.params)));
    stmt(out, &m.body, 1);
}

fn class(out: &mut String, c: &ClassDecl) {
    if let Some(f) = &c.creation {
        out.push_str(&format!("[HybridSpec: Requires({})]\n", formula_to_habs(f)));
    }
    if let Some(f) = &c.invariant {
        out.push_str(&format!("[HybridSpec: ObjInv({})]\n", formula_to_habs(f)));
    }
    out.push_str(&format!("class {}", c.name));
    if !c.params.is_empty() {
        out.push_str(&format!("({})", params(&c.params)));
    }
    if !c.implements.is_empty() {
        out.push_str(&format!(" implements {}", c.implements.join(", ")));
    }
    out.push_str(" {\n");
    if !c.physical.is_empty() {
        out.push_str("  physical {\n");
        for p in &c.physical {
            out.push_str(&format!(
                "    Real {} = {} : {}' = {};\n",
                p.name,
                expr(&p.init),
                p.name,
                expr(&p.derivative)
            ));
        }
        out.push_str("  }\n");
    }
    for f in &c.fields {
        match &f.init {
            Some(e) => out.push_str(&format!("  {} {} = {};\n", f.ty, f.name, expr(e))),
            None => out.push_str(&format!("  {} {};\n", f.ty, f.name)),
        }
    }
    if let Some(init) = &c.init {
        stmt(out, init, 1);
    }
    for m in &c.methods {
        method(out, m);
    }
    out.push_str("}\n");
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for i in &self.interfaces {
            writeln!(out, "interface {} {{", i.name)?;
            for m in &i.methods {
                if let Some(p) = &m.pre {
                    writeln!(out, "  [HybridSpec: Requires({})]", formula_to_habs(p))?;
                }
                if let Some(p) = &m.post {
                    writeln!(out, "  [HybridSpec: Ensures({})]", formula_to_habs(p))?;
                }
                writeln!(out, "  {} {}({});", m.ret, m.name, params(&m.params))?;
            }
            out.push_str("}\n");
        }
        for c in &self.classes {
            class(&mut out, c);
        }
        stmt(&mut out, &self.main, 0);
        f.write_str(&out)
    }
}
