//! Reader for the KeYmaera X subset produced by the renderer.

use num_bigint::BigInt;
use num_rational::BigRational;

use super::{free_variables, DlError, Formula, Ode, Program, Rel, Term};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Str(String),
    Sym(&'static str),
    Eof,
}

const SYMBOLS: &[&str] = &[
    "->", ":=", "<=", ">=", "++", "\\exists", "(", ")", "[", "]", "{", "}", ";", ",", "'", "=",
    "<", ">", "+", "-", "*", "/", "&", "|", "!", "?", ".",
];

fn lex(src: &str) -> Result<Vec<(Tok, usize, usize)>, DlError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, col, message: String| DlError::Parse { line, col, message };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let (l0, c0) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push((Tok::Ident(s), l0, c0));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push((Tok::Num(s), l0, c0));
        } else if c == '"' {
            let start = i + 1;
            i += 1;
            while i < chars.len() && chars[i] != '"' {
                i += 1;
            }
            if i >= chars.len() {
                return Err(err(l0, c0, "unterminated string".into()));
            }
            let s: String = chars[start..i].iter().collect();
            i += 1;
            col += s.chars().count() + 2;
            out.push((Tok::Str(s), l0, c0));
        } else {
            let rest: String = chars[i..chars.len().min(i + 8)].iter().collect();
            let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
                return Err(err(l0, c0, format!("unexpected character `{c}`")));
            };
            i += sym.chars().count();
            col += sym.chars().count();
            out.push((Tok::Sym(sym), l0, c0));
        }
    }
    out.push((Tok::Eof, line, col));
    Ok(out)
}

/// Parses a decimal numeral into an exact rational.
pub(crate) fn parse_decimal(s: &str) -> Option<BigRational> {
    let (int, frac) = match s.split_once('.') {
        Some((a, b)) => (a, b),
        None => (s, ""),
    };
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let den = BigInt::from(10).pow(frac.len() as u32);
    Some(BigRational::new(digits, den))
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

type R<T> = Result<T, DlError>;

impl Parser {
    fn new(src: &str) -> R<Parser> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> R<T> {
        let (_, line, col) = &self.toks[self.pos];
        Err(DlError::Parse {
            line: *line,
            col: *col,
            message: message.into(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> R<()> {
        if self.eat(s) {
            Ok(())
        } else {
            self.error(format!("expected `{s}`, found {:?}", self.peek()))
        }
    }

    fn is_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn expect_keyword(&mut self, k: &str) -> R<()> {
        if self.is_keyword(k) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{k}`"))
        }
    }

    fn ident(&mut self) -> R<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            t => self.error(format!("expected identifier, found {t:?}")),
        }
    }

    fn formula(&mut self) -> R<Formula> {
        let lhs = self.disjunction()?;
        if self.eat("->") {
            Ok(Formula::implies(lhs, self.formula()?))
        } else {
            Ok(lhs)
        }
    }

    fn disjunction(&mut self) -> R<Formula> {
        let lhs = self.conjunction()?;
        if self.eat("|") {
            Ok(Formula::or(lhs, self.disjunction()?))
        } else {
            Ok(lhs)
        }
    }

    fn conjunction(&mut self) -> R<Formula> {
        let lhs = self.unary()?;
        if self.eat("&") {
            Ok(Formula::and(lhs, self.conjunction()?))
        } else {
            Ok(lhs)
        }
    }

    fn unary(&mut self) -> R<Formula> {
        if self.eat("!") {
            return Ok(Formula::not(self.unary()?));
        }
        if self.eat("\\exists") {
            let v = self.ident()?;
            return Ok(Formula::exists(v, self.unary()?));
        }
        if self.eat("[") {
            let p = self.program()?;
            self.expect("]")?;
            return Ok(Formula::boxed(p, self.unary()?));
        }
        if self.is_keyword("true") {
            self.bump();
            return Ok(Formula::True);
        }
        if self.is_keyword("false") {
            self.bump();
            return Ok(Formula::False);
        }
        if self.is_sym("(") {
            let save = self.pos;
            self.bump();
            if let Ok(f) = self.formula() {
                if self.eat(")") && !self.at_term_continuation() {
                    return Ok(f);
                }
            }
            self.pos = save;
        }
        self.comparison()
    }

    fn at_term_continuation(&self) -> bool {
        ["<=", ">=", "=", "<", ">", "+", "-", "*", "/"]
            .iter()
            .any(|s| self.is_sym(s))
    }

    fn comparison(&mut self) -> R<Formula> {
        let a = self.term()?;
        let rel = match self.peek() {
            Tok::Sym("<=") => Rel::Le,
            Tok::Sym(">=") => Rel::Ge,
            Tok::Sym("=") => Rel::Eq,
            Tok::Sym("<") => Rel::Lt,
            Tok::Sym(">") => Rel::Gt,
            t => return self.error(format!("expected comparison operator, found {t:?}")),
        };
        self.bump();
        let b = self.term()?;
        Ok(Formula::cmp(rel, a, b))
    }

    fn term(&mut self) -> R<Term> {
        let mut acc = self.product()?;
        loop {
            if self.eat("+") {
                acc = Term::add(acc, self.product()?);
            } else if self.is_sym("-") {
                self.bump();
                acc = Term::sub(acc, self.product()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> R<Term> {
        let mut acc = self.neg()?;
        loop {
            if self.is_sym("*") && !matches!(self.peek_at(1), Tok::Sym(";")) {
                self.bump();
                acc = Term::mul(acc, self.neg()?);
            } else if self.eat("/") {
                let rhs = self.neg()?;
                acc = match Term::div(acc, rhs) {
                    Ok(t) => t,
                    Err(_) => return self.error("division by the literal zero"),
                };
            } else {
                return Ok(acc);
            }
        }
    }

    fn neg(&mut self) -> R<Term> {
        if self.eat("-") {
            return Ok(Term::neg(self.neg()?));
        }
        match self.peek().clone() {
            Tok::Num(s) => {
                self.bump();
                match parse_decimal(&s) {
                    Some(r) => Ok(Term::Lit(r)),
                    None => self.error(format!("bad number `{s}`")),
                }
            }
            Tok::Ident(s) if s != "true" && s != "false" => {
                self.bump();
                Ok(Term::Var(s))
            }
            Tok::Sym("(") => {
                self.bump();
                let t = self.term()?;
                self.expect(")")?;
                Ok(t)
            }
            t => self.error(format!("expected term, found {t:?}")),
        }
    }

    fn program(&mut self) -> R<Program> {
        let lhs = self.sequence()?;
        if self.eat("++") {
            Ok(Program::choice(lhs, self.program()?))
        } else {
            Ok(lhs)
        }
    }

    fn sequence(&mut self) -> R<Program> {
        let mut items = Vec::new();
        while !(self.is_sym("}")
            || self.is_sym("]")
            || self.is_sym("++")
            || *self.peek() == Tok::Eof)
        {
            items.push(self.statement()?);
        }
        if items.is_empty() {
            return self.error("empty program");
        }
        Ok(Program::seq_all(items))
    }

    fn end_statement(&mut self) -> R<()> {
        if self.eat(";")
            || self.is_sym("}")
            || self.is_sym("]")
            || self.is_sym("++")
            || *self.peek() == Tok::Eof
        {
            Ok(())
        } else {
            self.error("expected `;`")
        }
    }

    fn statement(&mut self) -> R<Program> {
        if self.eat("?") {
            let f = self.formula()?;
            self.end_statement()?;
            return Ok(Program::test(f));
        }
        if self.eat("{") {
            let inner = if matches!(self.peek(), Tok::Ident(_))
                && matches!(self.peek_at(1), Tok::Sym("'"))
            {
                self.ode()?
            } else {
                self.program()?
            };
            self.expect("}")?;
            if self.is_sym("*") {
                self.bump();
                return Ok(Program::looped(inner));
            }
            return Ok(inner);
        }
        let v = self.ident()?;
        if !(self.eat(":=") || self.eat("=")) {
            return self.error("expected `:=`");
        }
        let p = if self.is_sym("*") {
            self.bump();
            Program::havoc(v)
        } else {
            Program::assign(v, self.term()?)
        };
        self.end_statement()?;
        Ok(p)
    }

    fn ode(&mut self) -> R<Program> {
        let mut eqs = Vec::new();
        loop {
            let v = self.ident()?;
            self.expect("'")?;
            self.expect("=")?;
            eqs.push((v, self.term()?));
            if !self.eat(",") {
                break;
            }
        }
        let domain = if self.eat("&") {
            self.formula()?
        } else {
            Formula::True
        };
        match Ode::new(eqs, domain) {
            Ok(o) => Ok(Program::Ode(o)),
            Err(e) => self.error(e.to_string()),
        }
    }

    fn finish(&self) -> R<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.error(format!("unexpected {:?}", self.peek()))
        }
    }
}

pub fn parse_formula(src: &str) -> Result<Formula, DlError> {
    let mut p = Parser::new(src)?;
    let f = p.formula()?;
    p.finish()?;
    Ok(f)
}

pub fn parse_program(src: &str) -> Result<Program, DlError> {
    let mut p = Parser::new(src)?;
    let prog = p.program()?;
    p.finish()?;
    Ok(prog)
}

pub fn parse_term(src: &str) -> Result<Term, DlError> {
    let mut p = Parser::new(src)?;
    let t = p.term()?;
    p.finish()?;
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub name: String,
    pub variables: Vec<String>,
    pub problem: Formula,
}

/// Reads every entry of an archive and checks that all variables are declared.
pub fn parse_archive(src: &str) -> Result<Vec<ArchiveEntry>, DlError> {
    let mut p = Parser::new(src)?;
    let mut entries = Vec::new();
    while *p.peek() != Tok::Eof {
        p.expect_keyword("ArchiveEntry")?;
        let name = match p.bump() {
            Tok::Str(s) => s,
            t => return p.error(format!("expected entry name, found {t:?}")),
        };
        let mut variables = Vec::new();
        if p.is_keyword("ProgramVariables") {
            p.bump();
            while !p.is_keyword("End") {
                p.expect_keyword("Real")?;
                variables.push(p.ident()?);
                p.expect(";")?;
            }
            p.bump();
            p.expect(".")?;
        }
        p.expect_keyword("Problem")?;
        let problem = p.formula()?;
        p.expect_keyword("End")?;
        p.expect(".")?;
        p.expect_keyword("End")?;
        p.expect(".")?;
        for v in free_variables(&problem) {
            if !variables.contains(&v) {
                return Err(DlError::UndeclaredVariable(v));
            }
        }
        entries.push(ArchiveEntry {
            name,
            variables,
            problem,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dl::{normalize_formula, render_formula};

    #[test]
    fn reads_rendered_pr() {
        let src = "v >= 0 & [t := 0; {v' = 0, t' = 1 & true}]v >= 0";
        let f = parse_formula(src).unwrap();
        assert_eq!(render_formula(&f), src);
    }

    #[test]
    fn parenthesised_terms_and_formulas() {
        let f = parse_formula("(x + 1) <= 3 & (y >= 2 | !(z = 1))").unwrap();
        assert_eq!(render_formula(&f), "x + 1 <= 3 & (y >= 2 | !z = 1)");
    }

    #[test]
    fn rational_literals_fold() {
        let f = normalize_formula(&parse_formula("x <= 1/2 & y >= (-3)").unwrap());
        assert_eq!(
            f,
            Formula::and(
                Formula::le(Term::var("x"), Term::ratio(1, 2).unwrap()),
                Formula::ge(Term::var("y"), Term::int(-3))
            )
        );
    }

    #[test]
    fn undeclared_variable_is_rejected() {
        let src = "ArchiveEntry \"a\"\nProgramVariables\n  Real x;\nEnd.\nProblem\n  x <= y\nEnd.\nEnd.\n";
        assert_eq!(
            parse_archive(src),
            Err(DlError::UndeclaredVariable("y".into()))
        );
    }

    #[test]
    fn error_positions() {
        match parse_formula("x <=\n  ;") {
            Err(DlError::Parse { line, col, .. }) => assert_eq!((line, col), (2, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lenient_assignment() {
        let p = parse_program("drain = -1").unwrap();
        assert_eq!(p, Program::assign("drain", Term::neg(Term::int(1))));
    }
}
