//! Scripted environment calls: `at <time> call <var>.<method>(<literals>)`.

use super::{SimError, Value};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptCall<S> {
    pub line: usize,
    pub time: S,
    /// Variable of the main block holding the callee.
    pub var: String,
    pub method: String,
    pub args: Vec<Value<S>>,
}

fn literal<S: Scalar>(s: &str) -> Option<Value<S>> {
    match s {
        "true" => Some(Value::Bool(true)),
        "false" => Some(Value::Bool(false)),
        "null" => Some(Value::Null),
        _ => s.parse::<f64>().ok().map(|x| Value::Num(S::lit(x))),
    }
}

/// Parses a script; calls are returned sorted by time, stable for equal times.
pub fn parse_script<S: Scalar>(src: &str) -> Result<Vec<ScriptCall<S>>, SimError> {
    let mut out = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let err = |m: &str| SimError::Script {
            line,
            message: m.to_string(),
        };
        let rest = text
            .strip_prefix("at ")
            .ok_or_else(|| err("expected `at <time> call ...`"))?;
        let (time, rest) = rest
            .trim_start()
            .split_once(char::is_whitespace)
            .ok_or_else(|| err("missing call"))?;
        let time = time
            .parse::<f64>()
            .ok()
            .filter(|t| *t >= 0.0)
            .ok_or_else(|| err("bad time"))?;
        let call = rest
            .trim_start()
            .strip_prefix("call ")
            .ok_or_else(|| err("expected `call`"))?
            .trim();
        let (target, args) = call.split_once('(').ok_or_else(|| err("expected `(`"))?;
        let args = args.strip_suffix(')').ok_or_else(|| err("expected `)`"))?;
        let (var, method) = target
            .trim()
            .split_once('.')
            .ok_or_else(|| err("expected `<var>.<method>`"))?;
        let args = if args.trim().is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|a| {
                    literal(a.trim()).ok_or_else(|| err(&format!("bad literal `{}`", a.trim())))
                })
                .collect::<Result<_, _>>()?
        };
        out.push(ScriptCall {
            line,
            time: S::lit(time),
            var: var.to_string(),
            method: method.to_string(),
            args,
        });
    }
    out.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("times are finite"));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_calls() {
        let s: Vec<ScriptCall<f64>> =
            parse_script("# drain\nat 4.5 call t.down()\nat 1 call b.set(2, true)\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].time, 1.0);
        assert_eq!(s[0].args, vec![Value::Num(2.0), Value::Bool(true)]);
        assert_eq!(s[1].method, "down");
    }

    #[test]
    fn reports_line() {
        let e = parse_script::<f64>("\nat x call t.m()").unwrap_err();
        assert!(matches!(e, SimError::Script { line: 2, .. }));
    }
}
