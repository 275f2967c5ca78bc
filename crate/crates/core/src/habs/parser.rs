use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use super::lexer::{lex, Tok};
use super::{
    expr_to_formula, BinOp, ClassDecl, Diagnostic, Expr, FieldDecl, Guard, HabsError,
    InterfaceDecl, MethodDecl, MethodSig, Param, PhysDecl, Program, Rhs, Span, Stmt, StmtKind,
    Type, UnOp, VarKind, RESERVED,
};
use crate::dl::Formula;

type R<T> = Result<T, HabsError>;

struct Parser<'a> {
    file: &'a str,
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

#[derive(Debug)]
enum Annotation {
    Requires(Formula),
    Ensures(Formula, Span),
    ObjInv(Formula, Span),
    Tactic(String, Span),
}

fn decimal(s: &str) -> Option<BigRational> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    Some(BigRational::new(
        digits,
        BigInt::from(10).pow(frac.len() as u32),
    ))
}

fn contract_name(n: &str, _: VarKind) -> String {
    n.to_string()
}

impl<'a> Parser<'a> {
    fn new(file: &'a str, src: &str, origin: Span) -> R<Parser<'a>> {
        let toks = lex(src, origin).map_err(|(span, message)| {
            HabsError::Parse(Diagnostic {
                file: file.to_string(),
                span,
                message,
            })
        })?;
        Ok(Parser { file, toks, pos: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at<T>(&self, span: Span, message: impl Into<String>) -> R<T> {
        Err(HabsError::Parse(Diagnostic {
            file: self.file.to_string(),
            span,
            message: message.into(),
        }))
    }

    fn error<T>(&self, message: impl Into<String>) -> R<T> {
        self.error_at(self.span(), message)
    }

    fn is(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.is(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        if self.is_kw(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(s) => format!("`{s}`"),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn expect(&mut self, s: &str) -> R<()> {
        if self.eat(s) {
            Ok(())
        } else {
            self.error(format!(
                "expected `{s}`, found {}",
                Self::describe(self.peek())
            ))
        }
    }

    fn ident(&mut self) -> R<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            t => self.error(format!("expected identifier, found {}", Self::describe(&t))),
        }
    }

    fn binder(&mut self) -> R<String> {
        let span = self.span();
        let name = self.ident()?;
        if RESERVED.contains(&name.as_str()) {
            return self.error_at(span, format!("`{name}` is reserved"));
        }
        Ok(name)
    }

    // ---- types ----

    fn ty(&mut self) -> R<Type> {
        let name = self.ident()?;
        Ok(match name.as_str() {
            "Real" => Type::Real,
            "Int" | "Rat" => Type::Int,
            "Bool" => Type::Bool,
            "Unit" => Type::Unit,
            "Fut" => {
                self.expect("<")?;
                let inner = self.ty()?;
                self.expect(">")?;
                Type::Fut(Box::new(inner))
            }
            _ => Type::Named(name),
        })
    }

    fn params(&mut self) -> R<Vec<Param>> {
        self.expect("(")?;
        let mut out = Vec::new();
        if !self.is(")") {
            loop {
                let ty = self.ty()?;
                let name = self.binder()?;
                out.push(Param { name, ty });
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(out)
    }

    // ---- expressions ----

    fn expr(&mut self) -> R<Expr> {
        let mut lhs = self.conj()?;
        while self.eat("||") || self.eat("|") {
            lhs = Expr::binary(BinOp::Or, lhs, self.conj()?);
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> R<Expr> {
        let mut lhs = self.comparison()?;
        while self.eat("&&") || self.eat("&") {
            lhs = Expr::binary(BinOp::And, lhs, self.comparison()?);
        }
        Ok(lhs)
    }

    fn comparison_op(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">=") => BinOp::Ge,
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym("==") => BinOp::Eq,
            Tok::Sym("!=") => BinOp::Ne,
            _ => return None,
        })
    }

    /// Comparisons chain: `a <= b <= c` means `a <= b && b <= c`.
    fn comparison(&mut self) -> R<Expr> {
        let first = self.additive()?;
        let mut parts = Vec::new();
        let mut prev = first.clone();
        while let Some(op) = self.comparison_op() {
            self.bump();
            let next = self.additive()?;
            parts.push(Expr::binary(op, prev, next.clone()));
            prev = next;
        }
        let mut it = parts.into_iter();
        let Some(mut acc) = it.next() else {
            return Ok(first);
        };
        for p in it {
            acc = Expr::binary(BinOp::And, acc, p);
        }
        Ok(acc)
    }

    fn additive(&mut self) -> R<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            if self.eat("+") {
                lhs = Expr::binary(BinOp::Add, lhs, self.multiplicative()?);
            } else if self.eat("-") {
                lhs = Expr::binary(BinOp::Sub, lhs, self.multiplicative()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn multiplicative(&mut self) -> R<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat("*") {
                lhs = Expr::binary(BinOp::Mul, lhs, self.unary()?);
            } else if self.is("/") {
                let span = self.span();
                self.bump();
                let rhs = self.unary()?;
                lhs = match (lhs, rhs) {
                    (_, Expr::Num(d)) if d.is_zero() => {
                        return self.error_at(span, "division by the literal zero")
                    }
                    (Expr::Num(n), Expr::Num(d)) => Expr::Num(n / d),
                    (l, r) => Expr::binary(BinOp::Div, l, r),
                };
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> R<Expr> {
        if self.eat("-") {
            return Ok(match self.unary()? {
                Expr::Num(r) => Expr::Num(-r),
                e => Expr::Unary(UnOp::Neg, Box::new(e)),
            });
        }
        if self.eat("!") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> R<Expr> {
        match self.peek().clone() {
            Tok::Num(s) => {
                self.bump();
                match decimal(&s) {
                    Some(r) => Ok(Expr::Num(r)),
                    None => self.error(format!("bad number `{s}`")),
                }
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(match s.as_str() {
                    "true" => Expr::Bool(true),
                    "false" => Expr::Bool(false),
                    "null" => Expr::Null,
                    "unit" => Expr::Unit,
                    "this" => {
                        if self.is(".")
                            && matches!(self.peek_at(1), Tok::Ident(_))
                            && !matches!(self.peek_at(2), Tok::Sym("("))
                        {
                            self.bump();
                            Expr::field(self.ident()?)
                        } else {
                            Expr::This
                        }
                    }
                    _ => Expr::Var(s, VarKind::Unresolved),
                })
            }
            t => self.error(format!("expected expression, found {}", Self::describe(&t))),
        }
    }

    fn args(&mut self) -> R<Vec<Expr>> {
        self.expect("(")?;
        let mut out = Vec::new();
        if !self.is(")") {
            loop {
                out.push(self.expr()?);
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(out)
    }

    fn rhs(&mut self) -> R<Rhs> {
        if self.eat_kw("new") {
            let class = self.ident()?;
            return Ok(Rhs::New(class, self.args()?));
        }
        let save = self.pos;
        if matches!(self.peek(), Tok::Ident(_)) {
            let target = self.primary()?;
            if self.is("!") && matches!(self.peek_at(1), Tok::Ident(_)) {
                self.bump();
                let method = self.ident()?;
                return Ok(Rhs::Call {
                    target,
                    method,
                    args: self.args()?,
                });
            }
            if self.is(".") && matches!(self.peek_at(1), Tok::Ident(ref g) if g == "get") {
                self.bump();
                self.bump();
                return Ok(Rhs::Get(target));
            }
            if self.is(".")
                && matches!(self.peek_at(1), Tok::Ident(_))
                && matches!(self.peek_at(2), Tok::Sym("("))
            {
                // Synchronous call syntax is read as an asynchronous call.
                self.bump();
                let method = self.ident()?;
                return Ok(Rhs::Call {
                    target,
                    method,
                    args: self.args()?,
                });
            }
        }
        self.pos = save;
        Ok(Rhs::Expr(self.expr()?))
    }

    // ---- statements ----

    fn guard(&mut self) -> R<Guard> {
        if self.eat_kw("diff") {
            return Ok(Guard::Diff(self.expr()?));
        }
        if self.is_kw("duration") && matches!(self.peek_at(1), Tok::Sym("(")) {
            self.bump();
            return Ok(Guard::Duration(self.duration_args()?));
        }
        let e = self.expr()?;
        if self.eat("?") {
            Ok(Guard::Poll(e))
        } else {
            Ok(Guard::Diff(e))
        }
    }

    /// `(e)` or `(lower, upper)`; only the lower bound is kept.
    fn duration_args(&mut self) -> R<Expr> {
        let args = self.args()?;
        match args.len() {
            1 | 2 => Ok(args.into_iter().next().expect("nonempty")),
            _ => self.error("duration takes one or two arguments"),
        }
    }

    fn looks_like_decl(&self) -> bool {
        match (self.peek(), self.peek_at(1)) {
            (Tok::Ident(t), Tok::Sym("<")) => t == "Fut",
            (Tok::Ident(_), Tok::Ident(_)) => true,
            _ => false,
        }
    }

    fn block(&mut self) -> R<Stmt> {
        let span = self.span();
        self.expect("{")?;
        let mut items = Vec::new();
        while !self.is("}") {
            if *self.peek() == Tok::Eof {
                return self.error("unexpected end of input, expected `}`");
            }
            items.push(self.stmt()?);
        }
        self.bump();
        Ok(Stmt::block(items, span))
    }

    fn stmt(&mut self) -> R<Stmt> {
        let span = self.span();
        if self.is("{") {
            return self.block();
        }
        let kind = if self.eat_kw("if") {
            self.expect("(")?;
            let c = self.expr()?;
            self.expect(")")?;
            let then = self.stmt()?;
            let els = if self.eat_kw("else") {
                Some(Box::new(self.stmt()?))
            } else {
                None
            };
            StmtKind::If(c, Box::new(then), els)
        } else if self.eat_kw("while") {
            self.expect("(")?;
            let c = self.expr()?;
            self.expect(")")?;
            StmtKind::While(c, Box::new(self.stmt()?))
        } else if self.eat_kw("await") {
            let gspan = self.span();
            let g = self.guard()?;
            if let Guard::Diff(e) = &g {
                if has_strict(e) {
                    return self.error_at(gspan, "differential guard with a strict comparison");
                }
            }
            self.expect(";")?;
            StmtKind::Await(0, g)
        } else if self.is_kw("duration") && matches!(self.peek_at(1), Tok::Sym("(")) {
            self.bump();
            let e = self.duration_args()?;
            self.expect(";")?;
            StmtKind::Duration(e)
        } else if self.eat_kw("return") {
            let e = self.expr()?;
            self.expect(";")?;
            StmtKind::Return(e)
        } else if self.eat_kw("skip") {
            self.expect(";")?;
            StmtKind::Block(vec![])
        } else if self.looks_like_decl() {
            let ty = self.ty()?;
            let name = self.binder()?;
            self.expect("=")?;
            let r = self.rhs()?;
            self.expect(";")?;
            StmtKind::Decl(ty, name, r)
        } else if self.is_kw("this")
            && matches!(self.peek_at(1), Tok::Sym("."))
            && matches!(self.peek_at(3), Tok::Sym("="))
        {
            self.bump();
            self.bump();
            let name = self.ident()?;
            self.expect("=")?;
            let r = self.rhs()?;
            self.expect(";")?;
            StmtKind::Assign(name, VarKind::Field, r)
        } else if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Sym("=")) {
            let name = self.ident()?;
            self.bump();
            let r = self.rhs()?;
            self.expect(";")?;
            StmtKind::Assign(name, VarKind::Unresolved, r)
        } else {
            let r = self.rhs()?;
            if matches!(r, Rhs::Expr(_)) {
                return self.error_at(span, "expected a statement");
            }
            self.expect(";")?;
            StmtKind::Exec(r)
        };
        Ok(Stmt::new(kind, span))
    }

    // ---- annotations and declarations ----

    fn contract(&mut self) -> R<Formula> {
        let (expr, span) = match self.peek().clone() {
            Tok::Str(s) => {
                let at = self.span();
                self.bump();
                let mut sub = Parser::new(
                    self.file,
                    &s,
                    Span {
                        line: at.line,
                        col: at.col + 1,
                    },
                )?;
                let e = sub.expr()?;
                if *sub.peek() != Tok::Eof {
                    return sub.error("trailing input in annotation");
                }
                (e, at)
            }
            _ => {
                let at = self.span();
                (self.expr()?, at)
            }
        };
        expr_to_formula(&expr, &contract_name).or_else(|e| self.error_at(span, e.to_string()))
    }

    fn annotations(&mut self) -> R<Vec<Annotation>> {
        let mut out = Vec::new();
        while self.is("[") {
            self.bump();
            if matches!(self.peek_at(1), Tok::Sym(":")) {
                self.ident()?;
                self.bump();
            }
            let span = self.span();
            let kind = self.ident()?;
            self.expect("(")?;
            let a = match kind.as_str() {
                "Requires" => Annotation::Requires(self.contract()?),
                "Ensures" => Annotation::Ensures(self.contract()?, span),
                "ObjInv" => Annotation::ObjInv(self.contract()?, span),
                "Tactic" => match self.bump() {
                    Tok::Str(s) => Annotation::Tactic(s, span),
                    _ => return self.error_at(span, "Tactic expects a string"),
                },
                other => return self.error_at(span, format!("unknown annotation `{other}`")),
            };
            self.expect(")")?;
            self.expect("]")?;
            out.push(a);
        }
        Ok(out)
    }

    fn method_contracts(
        &self,
        anns: Vec<Annotation>,
    ) -> R<(Option<Formula>, Option<Formula>, Option<String>)> {
        let (mut pre, mut post, mut tactic) = (None, None, None);
        for a in anns {
            match a {
                Annotation::Requires(f) => pre = Some(f),
                Annotation::Ensures(f, _) => post = Some(f),
                Annotation::Tactic(s, _) => tactic = Some(s),
                Annotation::ObjInv(_, span) => {
                    return self.error_at(span, "ObjInv is not allowed on a method")
                }
            }
        }
        Ok((pre, post, tactic))
    }

    fn interface(&mut self, span: Span) -> R<InterfaceDecl> {
        let name = self.ident()?;
        if self.eat_kw("extends") {
            loop {
                self.ident()?;
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect("{")?;
        let mut methods = Vec::new();
        while !self.is("}") {
            let anns = self.annotations()?;
            let (pre, post, tactic) = self.method_contracts(anns)?;
            let ret = self.ty()?;
            let mname = self.ident()?;
            let params = self.params()?;
            self.eat(";");
            methods.push(MethodSig {
                name: mname,
                ret,
                params,
                pre,
                post,
                tactic,
            });
        }
        self.bump();
        Ok(InterfaceDecl {
            name,
            methods,
            span,
        })
    }

    fn class(&mut self, span: Span, outer: Vec<Annotation>) -> R<ClassDecl> {
        let name = self.ident()?;
        let params = if self.is("(") {
            self.params()?
        } else {
            Vec::new()
        };
        let mut implements = Vec::new();
        if self.eat_kw("implements") {
            loop {
                implements.push(self.ident()?);
                if !self.eat(",") {
                    break;
                }
            }
        }
        let mut class = ClassDecl {
            name,
            params,
            implements,
            physical: Vec::new(),
            fields: Vec::new(),
            init: None,
            methods: Vec::new(),
            creation: None,
            invariant: None,
            span,
        };
        self.class_annotations(&mut class, outer)?;
        self.expect("{")?;
        while !self.is("}") {
            if *self.peek() == Tok::Eof {
                return self.error("unexpected end of input in class body");
            }
            let anns = self.annotations()?;
            if self.is_kw("physical") && matches!(self.peek_at(1), Tok::Sym("{")) {
                self.class_annotations(&mut class, anns)?;
                self.bump();
                self.bump();
                self.physical(&mut class)?;
            } else if self.is("{") {
                self.class_annotations(&mut class, anns)?;
                if class.init.is_some() {
                    return self.error("duplicate init block");
                }
                class.init = Some(self.block()?);
            } else if self.is("}") {
                self.class_annotations(&mut class, anns)?;
            } else {
                let (class_level, member): (Vec<_>, Vec<_>) = anns
                    .into_iter()
                    .partition(|a| matches!(a, Annotation::ObjInv(..)));
                self.class_annotations(&mut class, class_level)?;
                let mspan = self.span();
                let ty = self.ty()?;
                let fname = self.binder()?;
                if self.is("(") {
                    let (pre, post, tactic) = self.method_contracts(member)?;
                    let params = self.params()?;
                    let body = self.block()?;
                    class.methods.push(MethodDecl {
                        name: fname,
                        ret: ty,
                        params,
                        body,
                        pre,
                        post,
                        tactic,
                        span: mspan,
                    });
                } else {
                    if !member.is_empty() {
                        return self.error_at(mspan, "contract annotation on a field");
                    }
                    let init = if self.eat("=") {
                        Some(self.expr()?)
                    } else {
                        None
                    };
                    self.expect(";")?;
                    class.fields.push(FieldDecl {
                        name: fname,
                        ty,
                        init,
                        span: mspan,
                    });
                }
            }
        }
        self.bump();
        Ok(class)
    }

    fn class_annotations(&self, class: &mut ClassDecl, anns: Vec<Annotation>) -> R<()> {
        for a in anns {
            match a {
                Annotation::Requires(f) => class.creation = Some(conj(class.creation.take(), f)),
                Annotation::ObjInv(f, _) => class.invariant = Some(conj(class.invariant.take(), f)),
                Annotation::Ensures(_, span) | Annotation::Tactic(_, span) => {
                    return self.error_at(span, "annotation only allowed on methods")
                }
            }
        }
        Ok(())
    }

    fn physical(&mut self, class: &mut ClassDecl) -> R<()> {
        while !self.eat("}") {
            let span = self.span();
            let ty = self.ty()?;
            if ty != Type::Real {
                return self.error_at(span, format!("physical field of type {ty}, expected Real"));
            }
            let name = self.binder()?;
            self.expect("=")?;
            let init = self.expr()?;
            if !(self.eat(":") || self.eat(";")) {
                return self.error("expected `:` or `;` before the derivative");
            }
            let dspan = self.span();
            let dname = self.ident()?;
            if dname != name {
                return self.error_at(
                    dspan,
                    format!("derivative of `{dname}` given for field `{name}`"),
                );
            }
            self.expect("'")?;
            self.expect("=")?;
            let derivative = self.expr()?;
            self.expect(";")?;
            class.physical.push(PhysDecl {
                name,
                init,
                derivative,
                span,
            });
        }
        Ok(())
    }

    fn program(&mut self) -> R<Program> {
        let mut interfaces = Vec::new();
        let mut classes: Vec<ClassDecl> = Vec::new();
        let mut main = None;
        loop {
            let anns = self.annotations()?;
            let span = self.span();
            if self.eat_kw("interface") {
                if !anns.is_empty() {
                    return self.error_at(span, "annotations are not allowed on interfaces");
                }
                interfaces.push(self.interface(span)?);
            } else if self.eat_kw("class") {
                let c = self.class(span, anns)?;
                if classes.iter().any(|d| d.name == c.name) {
                    return self.error_at(span, format!("duplicate class `{}`", c.name));
                }
                classes.push(c);
            } else if self.is("{") && main.is_none() {
                main = Some(self.block()?);
            } else if *self.peek() == Tok::Eof {
                if !anns.is_empty() {
                    return self.error("dangling annotation");
                }
                break;
            } else {
                return self.error(format!(
                    "expected a declaration, found {}",
                    Self::describe(self.peek())
                ));
            }
        }
        let end = self.span();
        let mut p = Program {
            file: self.file.to_string(),
            interfaces,
            classes,
            main: main.unwrap_or_else(|| Stmt::block(vec![], end)),
        };
        inherit_contracts(&mut p);
        Ok(p)
    }
}

fn has_strict(e: &Expr) -> bool {
    match e {
        Expr::Binary(op, a, b) => {
            matches!(op, BinOp::Lt | BinOp::Gt | BinOp::Ne) || has_strict(a) || has_strict(b)
        }
        Expr::Unary(_, a) => has_strict(a),
        _ => false,
    }
}

fn conj(acc: Option<Formula>, f: Formula) -> Formula {
    match acc {
        None => f,
        Some(a) => Formula::and(a, f),
    }
}

/// Methods without their own contract take the one declared in an implemented interface.
fn inherit_contracts(p: &mut Program) {
    let interfaces = p.interfaces.clone();
    for c in &mut p.classes {
        for m in &mut c.methods {
            for iname in &c.implements {
                let Some(sig) = interfaces
                    .iter()
                    .find(|i| &i.name == iname)
                    .and_then(|i| i.methods.iter().find(|s| s.name == m.name))
                else {
                    continue;
                };
                if m.pre.is_none() {
                    m.pre = sig.pre.clone();
                }
                if m.post.is_none() {
                    m.post = sig.post.clone();
                }
                if m.tactic.is_none() {
                    m.tactic = sig.tactic.clone();
                }
            }
        }
    }
}

/// Parses HABS source; `file` is used in diagnostics.
pub fn parse_habs(file: &str, src: &str) -> Result<Program, HabsError> {
    let mut p = Parser::new(file, src, Span { line: 1, col: 1 })?;
    p.program()
}

/// Parses a standalone expression, as used by scenario scripts.
pub fn parse_expr(src: &str) -> Result<Expr, HabsError> {
    let mut p = Parser::new("<expr>", src, Span { line: 1, col: 1 })?;
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.error("trailing input");
    }
    Ok(e)
}
