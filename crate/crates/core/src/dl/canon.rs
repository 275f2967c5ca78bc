//! Normal forms used to compare formulas.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;

use super::{BinOp, Formula, Ode, Program, Rel, Term, CLOCK};

fn fold_term(t: &Term) -> Term {
    match t {
        Term::Var(_) | Term::Lit(_) => t.clone(),
        Term::Neg(a) => match fold_term(a) {
            Term::Lit(r) => Term::Lit(-r),
            a => Term::neg(a),
        },
        Term::Bin(op, a, b) => {
            let (a, b) = (fold_term(a), fold_term(b));
            match (op, &a, &b) {
                (BinOp::Div, Term::Lit(x), Term::Lit(y)) if !y.is_zero() => Term::Lit(x / y),
                _ => Term::Bin(*op, Box::new(a), Box::new(b)),
            }
        }
    }
}

/// Folds literal negation and literal division, and right-associates sequences.
pub fn normalize_formula(f: &Formula) -> Formula {
    map_formula(
        f,
        &|rel, a, b| Formula::Cmp(rel, fold_term(a), fold_term(b)),
        &normalize_program,
    )
}

pub fn normalize_program(p: &Program) -> Program {
    match p {
        Program::Assign(v, t) => Program::assign(v.clone(), fold_term(t)),
        Program::Havoc(_) => p.clone(),
        Program::Test(f) => Program::test(normalize_formula(f)),
        Program::Choice(a, b) => Program::choice(normalize_program(a), normalize_program(b)),
        Program::Seq(a, b) => Program::seq(normalize_program(a), normalize_program(b)),
        Program::Loop(a) => Program::looped(normalize_program(a)),
        Program::Ode(ode) => Program::Ode(
            Ode::new(
                ode.equations()
                    .iter()
                    .map(|(v, t)| (v.clone(), fold_term(t)))
                    .collect(),
                normalize_formula(&ode.domain),
            )
            .expect("equations stay distinct"),
        ),
    }
}

fn map_formula(
    f: &Formula,
    atom: &dyn Fn(Rel, &Term, &Term) -> Formula,
    prog: &dyn Fn(&Program) -> Program,
) -> Formula {
    let m = |g: &Formula| map_formula(g, atom, prog);
    match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Cmp(r, a, b) => atom(*r, a, b),
        Formula::Not(g) => Formula::not(m(g)),
        Formula::And(a, b) => Formula::and(m(a), m(b)),
        Formula::Or(a, b) => Formula::or(m(a), m(b)),
        Formula::Implies(a, b) => Formula::implies(m(a), m(b)),
        Formula::Exists(v, g) => Formula::exists(v.clone(), m(g)),
        Formula::Box(p, g) => Formula::boxed(prog(p), m(g)),
    }
}

fn reads_formula(f: &Formula, out: &mut BTreeSet<String>) {
    match f {
        Formula::True | Formula::False => {}
        Formula::Cmp(_, a, b) => {
            a.collect_vars(out);
            b.collect_vars(out);
        }
        Formula::Not(g) | Formula::Exists(_, g) => reads_formula(g, out),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            reads_formula(a, out);
            reads_formula(b, out);
        }
        Formula::Box(p, g) => {
            reads_program(p, out);
            reads_formula(g, out);
        }
    }
}

fn reads_program(p: &Program, out: &mut BTreeSet<String>) {
    match p {
        Program::Assign(_, t) => t.collect_vars(out),
        Program::Havoc(_) => {}
        Program::Test(f) => reads_formula(f, out),
        Program::Choice(a, b) | Program::Seq(a, b) => {
            reads_program(a, out);
            reads_program(b, out);
        }
        Program::Loop(a) => reads_program(a, out),
        Program::Ode(ode) => {
            for (_, t) in ode.equations() {
                t.collect_vars(out);
            }
            reads_formula(&ode.domain, out);
        }
    }
}

fn strip_clock_program(p: &Program) -> Program {
    match p {
        Program::Seq(a, b) => match (&**a, strip_clock_program(b)) {
            (Program::Assign(v, _), rest) if v == CLOCK => rest,
            (a, rest) => Program::seq(strip_clock_program(a), rest),
        },
        Program::Assign(v, _) if v == CLOCK => Program::skip(),
        Program::Choice(a, b) => Program::choice(strip_clock_program(a), strip_clock_program(b)),
        Program::Loop(a) => Program::looped(strip_clock_program(a)),
        Program::Test(f) => Program::test(strip_clock(f)),
        Program::Ode(ode) => Program::Ode(
            Ode::new(
                ode.equations()
                    .iter()
                    .filter(|(v, _)| v != CLOCK)
                    .cloned()
                    .collect(),
                strip_clock(&ode.domain),
            )
            .expect("subset of distinct equations"),
        ),
        _ => p.clone(),
    }
}

fn strip_clock(f: &Formula) -> Formula {
    map_formula(
        f,
        &|r, a, b| Formula::Cmp(r, a.clone(), b.clone()),
        &strip_clock_program,
    )
}

fn flatten(f: Formula, and: bool, out: &mut Vec<Formula>) {
    match f {
        Formula::And(a, b) if and => {
            flatten(*a, and, out);
            flatten(*b, and, out);
        }
        Formula::Or(a, b) if !and => {
            flatten(*a, and, out);
            flatten(*b, and, out);
        }
        f => out.push(f),
    }
}

fn canon_formula(f: &Formula) -> Formula {
    match f {
        Formula::Cmp(Rel::Gt, a, b) => Formula::Cmp(Rel::Lt, b.clone(), a.clone()),
        Formula::Cmp(Rel::Ge, a, b) => Formula::Cmp(Rel::Le, b.clone(), a.clone()),
        Formula::Cmp(..) | Formula::True | Formula::False => f.clone(),
        Formula::Not(g) => Formula::not(canon_formula(g)),
        Formula::Implies(a, b) => Formula::implies(canon_formula(a), canon_formula(b)),
        Formula::Exists(v, g) => Formula::exists(v.clone(), canon_formula(g)),
        Formula::Box(p, g) => Formula::boxed(canon_program(p), canon_formula(g)),
        Formula::And(..) | Formula::Or(..) => {
            let and = matches!(f, Formula::And(..));
            let mut parts = Vec::new();
            flatten(f.clone(), and, &mut parts);
            let unit = if and { Formula::True } else { Formula::False };
            let set: BTreeSet<Formula> = parts
                .iter()
                .map(canon_formula)
                .filter(|g| *g != unit)
                .collect();
            if and {
                Formula::and_all(set)
            } else {
                Formula::or_all(set)
            }
        }
    }
}

fn seq_items(p: &Program, out: &mut Vec<Program>) {
    match p {
        Program::Seq(a, b) => {
            seq_items(a, out);
            seq_items(b, out);
        }
        p => out.push(p.clone()),
    }
}

fn canon_program(p: &Program) -> Program {
    match p {
        Program::Seq(..) => {
            let mut items = Vec::new();
            seq_items(p, &mut items);
            let skip = Program::skip();
            let items: Vec<Program> = items
                .iter()
                .map(canon_program)
                .filter(|i| *i != skip)
                .collect();
            Program::seq_all(sort_independent_assignments(items))
        }
        Program::Test(f) => Program::test(canon_formula(f)),
        Program::Choice(a, b) => Program::choice(canon_program(a), canon_program(b)),
        Program::Loop(a) => Program::looped(canon_program(a)),
        Program::Ode(ode) => Program::Ode(
            Ode::new(ode.equations().to_vec(), canon_formula(&ode.domain))
                .expect("unchanged equations"),
        ),
        _ => p.clone(),
    }
}

/// Reorders maximal runs of assignments that neither share targets nor read each other's targets.
fn sort_independent_assignments(items: Vec<Program>) -> Vec<Program> {
    let mut out = Vec::new();
    let mut run: BTreeMap<String, Term> = BTreeMap::new();
    let mut reads: BTreeSet<String> = BTreeSet::new();
    for item in items {
        if let Program::Assign(v, t) = &item {
            let tv = t.vars();
            let independent = !run.contains_key(v)
                && !reads.contains(v)
                && tv.iter().all(|x| !run.contains_key(x) && x != v);
            if independent {
                reads.extend(tv);
                run.insert(v.clone(), t.clone());
                continue;
            }
            out.extend(
                std::mem::take(&mut run)
                    .into_iter()
                    .map(|(v, t)| Program::assign(v, t)),
            );
            reads.clear();
            if tv.contains(v) {
                out.push(item);
            } else {
                reads.extend(tv);
                run.insert(v.clone(), t.clone());
            }
            continue;
        }
        out.extend(
            std::mem::take(&mut run)
                .into_iter()
                .map(|(v, t)| Program::assign(v, t)),
        );
        reads.clear();
        out.push(item);
    }
    out.extend(run.into_iter().map(|(v, t)| Program::assign(v, t)));
    out
}

/// Canonical form for comparing obligations up to harmless presentation differences:
/// literal folding, comparison orientation, sorted and deduplicated conjunctions and
/// disjunctions, sorted runs of independent assignments, `?true` dropped from sequences,
/// and removal of an unread clock.
pub fn canonical(f: &Formula) -> Formula {
    let mut f = normalize_formula(f);
    let mut reads = BTreeSet::new();
    reads_formula(&f, &mut reads);
    if !reads.contains(CLOCK) {
        f = strip_clock(&f);
    }
    canon_formula(&f)
}

fn atoms(f: &Formula, out: &mut BTreeSet<Formula>) {
    match f {
        Formula::True | Formula::False => {}
        Formula::Not(g) => atoms(g, out),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            atoms(a, out);
            atoms(b, out);
        }
        other => {
            out.insert(other.clone());
        }
    }
}

fn truth(f: &Formula, val: &BTreeMap<Formula, bool>) -> bool {
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Not(g) => !truth(g, val),
        Formula::And(a, b) => truth(a, val) && truth(b, val),
        Formula::Or(a, b) => truth(a, val) || truth(b, val),
        Formula::Implies(a, b) => !truth(a, val) || truth(b, val),
        other => val[other],
    }
}

/// Truth-table equivalence treating each canonical atom as an independent proposition.
pub fn propositionally_equivalent(a: &Formula, b: &Formula) -> bool {
    let (a, b) = (canonical(a), canonical(b));
    let mut set = BTreeSet::new();
    atoms(&a, &mut set);
    atoms(&b, &mut set);
    let list: Vec<Formula> = set.into_iter().collect();
    assert!(list.len() <= 20, "too many atoms for a truth table");
    (0u32..(1 << list.len())).all(|bits| {
        let val: BTreeMap<Formula, bool> = list
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), bits & (1 << i) != 0))
            .collect();
        truth(&a, &val) == truth(&b, &val)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dl::parse_formula;

    #[test]
    fn canonical_sorts_and_orients() {
        let a = parse_formula("x > 0 & y <= 1 & true").unwrap();
        let b = parse_formula("y <= 1 & 0 < x").unwrap();
        assert_eq!(canonical(&a), canonical(&b));
    }

    #[test]
    fn canonical_sorts_independent_assignments() {
        let a = parse_formula("[rate := r; bnd := b; v := w;]x = 1").unwrap();
        let b = parse_formula("[bnd := b; rate := r; v := w;]x = 1").unwrap();
        assert_eq!(canonical(&a), canonical(&b));
        let c = parse_formula("[x := 1; y := x;]x = 1").unwrap();
        let d = parse_formula("[y := x; x := 1;]x = 1").unwrap();
        assert_ne!(canonical(&c), canonical(&d));
    }

    #[test]
    fn canonical_drops_unread_clock() {
        let a = parse_formula("[t := 0; {x' = 1, t' = 1 & true}]x >= 0").unwrap();
        let b = parse_formula("[{x' = 1 & true}]x >= 0").unwrap();
        assert_eq!(canonical(&a), canonical(&b));
        let c = parse_formula("[t := 0; {x' = 1, t' = 1 & t <= 1}]x >= 0").unwrap();
        assert_ne!(canonical(&c), canonical(&b));
    }

    #[test]
    fn truth_tables() {
        let a = parse_formula("(p >= 1 | q >= 1) & (p <= 2 | q <= 0)").unwrap();
        let b = parse_formula("(q <= 0 | p <= 2) & (1 <= q | 1 <= p)").unwrap();
        assert!(propositionally_equivalent(&a, &b));
        let c = parse_formula("p >= 1 | q >= 1").unwrap();
        assert!(!propositionally_equivalent(&a, &c));
    }
}
