use super::Span;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Num(String),
    Str(String),
    Sym(&'static str),
    Eof,
}

const SYMBOLS: &[&str] = &[
    "&&", "||", "==", "!=", "<=", ">=", "<", ">", "=", "+", "-", "*", "/", "!", "?", "&", "|", "(",
    ")", "{", "}", "[", "]", ";", ",", ".", ":", "'",
];

/// Splits source text into tokens; the error carries the offending position.
pub fn lex(src: &str, origin: Span) -> Result<Vec<(Tok, Span)>, (Span, String)> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let (mut line, mut col) = (origin.line, origin.col);
    let adv = |c: char, line: &mut usize, col: &mut usize| {
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            adv(c, &mut line, &mut col);
            i += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                col += 1;
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            let start = Span { line, col };
            i += 2;
            col += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                adv(chars[i], &mut line, &mut col);
                i += 1;
            }
            if i >= chars.len() {
                return Err((start, "unterminated comment".into()));
            }
            i += 2;
            col += 2;
            continue;
        }
        let here = Span { line, col };
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push((Tok::Ident(chars[start..i].iter().collect()), here));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            col += i - start;
            out.push((Tok::Num(chars[start..i].iter().collect()), here));
        } else if c == '"' {
            let start = i + 1;
            i += 1;
            while i < chars.len() && chars[i] != '"' {
                i += 1;
            }
            if i >= chars.len() {
                return Err((here, "unterminated string".into()));
            }
            let s: String = chars[start..i].iter().collect();
            for ch in s.chars() {
                adv(ch, &mut line, &mut col);
            }
            col += 2;
            i += 1;
            out.push((Tok::Str(s), here));
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
                return Err((here, format!("unexpected character `{c}`")));
            };
            i += sym.len();
            col += sym.len();
            out.push((Tok::Sym(sym), here));
        }
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}
