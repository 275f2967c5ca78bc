//! Property suites shared by the property tests and the acceptance run.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use num_rational::BigRational;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use hao_core::analysis::{self, CausalityGraph, GeneratorKind, Node, NodeKind, Target};
use hao_core::dl::{
    self, eval_formula, normalize_formula, parse_archive, parse_formula,
    propositionally_equivalent, render_formula, render_keymaerax, weak_negate, Formula, Ode,
    Program, Rel, Term,
};
use hao_core::habs::{Expr, Guard, Program as Habs, Rhs, Span, Stmt, StmtKind};
use hao_core::ode::Dynamics;

const VARS: [&str; 3] = ["x", "y", "z"];

fn lit() -> impl Strategy<Value = Term> {
    (-20i64..20, 1i64..5).prop_map(|(n, d)| Term::Lit(BigRational::new(n.into(), d.into())))
}

fn linear_term() -> impl Strategy<Value = Term> {
    (lit(), prop::sample::select(VARS.to_vec()), lit())
        .prop_map(|(a, v, b)| Term::add(Term::mul(a, Term::var(v)), b))
}

fn term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        lit(),
        prop::sample::select(VARS.to_vec()).prop_map(Term::var)
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::mul(a, b)),
            inner.prop_map(Term::neg),
        ]
    })
}

/// Conjunctions and disjunctions of weak inequalities between linear terms.
fn weak_formula() -> impl Strategy<Value = Formula> {
    let atom = (linear_term(), linear_term(), any::<bool>()).prop_map(|(a, b, le)| {
        if le {
            Formula::le(a, b)
        } else {
            Formula::ge(a, b)
        }
    });
    atom.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::or(a, b)),
        ]
    })
}

fn first_order() -> impl Strategy<Value = Formula> {
    let rel = prop::sample::select(vec![Rel::Le, Rel::Ge, Rel::Eq, Rel::Lt, Rel::Gt]);
    let atom = prop_oneof![
        Just(Formula::True),
        Just(Formula::False),
        (rel, term(), term()).prop_map(|(r, a, b)| Formula::cmp(r, a, b)),
    ];
    atom.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            inner.prop_map(Formula::not),
        ]
    })
}

fn program() -> impl Strategy<Value = Program> {
    let var = prop::sample::select(VARS.to_vec());
    let ode = (
        prop::sample::subsequence(VARS.to_vec(), 1..=3),
        prop::collection::vec(term(), 3),
        first_order(),
    )
        .prop_map(|(vs, ts, dom)| {
            let eqs = vs
                .into_iter()
                .zip(ts)
                .map(|(v, t)| (v.to_string(), t))
                .collect();
            Program::Ode(Ode::new(eqs, dom).unwrap())
        });
    let leaf = prop_oneof![
        (var.clone(), term()).prop_map(|(v, t)| Program::assign(v, t)),
        var.prop_map(Program::havoc),
        first_order().prop_map(Program::test),
        ode,
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Program::choice(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Program::seq(a, b)),
            inner.prop_map(Program::looped),
        ]
    })
}

fn env(point: &[f64; 3]) -> impl Fn(&str) -> Option<f64> + '_ {
    move |n| VARS.iter().position(|v| *v == n).map(|i| point[i])
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    [-20.0..20.0f64, -20.0..20.0f64, -20.0..20.0f64]
}

type Check = Result<(), TestCaseError>;

fn involution(f: Formula) -> Check {
    let once = weak_negate(&f).unwrap();
    prop_assert_eq!(weak_negate(&once).unwrap(), f);
    Ok(())
}

fn coverage((f, p): (Formula, [f64; 3])) -> Check {
    let n = weak_negate(&f).unwrap();
    prop_assert!(
        eval_formula(&f, &env(&p), 0.0).unwrap() || eval_formula(&n, &env(&p), 0.0).unwrap()
    );
    Ok(())
}

/// Bisects between a model and a non-model; both `f` and its weak negation hold at the boundary.
fn boundary((f, a, b): (Formula, [f64; 3], [f64; 3])) -> Check {
    let n = weak_negate(&f).unwrap();
    let holds = |p: &[f64; 3]| eval_formula(&f, &env(p), 0.0).unwrap();
    if holds(&a) == holds(&b) {
        return Err(TestCaseError::reject("no boundary between the points"));
    }
    let (mut lo, mut hi) = if holds(&a) { (a, b) } else { (b, a) };
    for _ in 0..80 {
        let mid = [
            (lo[0] + hi[0]) / 2.0,
            (lo[1] + hi[1]) / 2.0,
            (lo[2] + hi[2]) / 2.0,
        ];
        if holds(&mid) {
            lo = mid
        } else {
            hi = mid
        }
    }
    prop_assert!(eval_formula(&f, &env(&lo), 1e-6).unwrap());
    prop_assert!(eval_formula(&n, &env(&lo), 1e-6).unwrap());
    Ok(())
}

fn round_trip((assume, prog, post): (Formula, Program, Formula)) -> Check {
    let goal = Formula::boxed(prog, post);
    let mut declared = dl::free_variables(&Formula::implies(assume.clone(), goal.clone()));
    declared.insert("t".into());
    let text = render_keymaerax("entry", &assume, &goal, &declared);
    let entries = parse_archive(&text).unwrap();
    prop_assert_eq!(entries.len(), 1);
    let expected = normalize_formula(&Formula::implies(assume, goal));
    prop_assert_eq!(normalize_formula(&entries[0].problem), expected.clone());
    prop_assert_eq!(
        normalize_formula(&parse_formula(&render_formula(&expected)).unwrap()),
        expected
    );
    Ok(())
}

fn load_corpus(dir: &Path) -> Vec<Habs> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "habs"))
        .collect();
    names.sort();
    names
        .iter()
        .map(|p| {
            Habs::load(
                &p.display().to_string(),
                &std::fs::read_to_string(p).unwrap(),
            )
            .unwrap()
        })
        .collect()
}

fn kind() -> impl Strategy<Value = GeneratorKind> {
    prop::sample::select(vec!["basic", "local", "structural", "composed"])
        .prop_map(|k| k.parse().unwrap())
}

fn composition(programs: &[Habs], (i, k, k2): (usize, GeneratorKind, GeneratorKind)) -> Check {
    let p = &programs[i % programs.len()];
    let basic = analysis::generator(&GeneratorKind::Basic, p).unwrap();
    let g = analysis::generator(&k, p).unwrap();
    let h = analysis::generator(&k2, p).unwrap();
    let left = analysis::compose(&basic, &g).unwrap();
    let right = analysis::compose(&g, &basic).unwrap();
    let gh = analysis::compose(&g, &h).unwrap();
    let hg = analysis::compose(&h, &g).unwrap();
    for (key, f) in g.entries() {
        prop_assert!(
            propositionally_equivalent(left.get(key).unwrap(), f),
            "{}",
            key
        );
        prop_assert!(
            propositionally_equivalent(right.get(key).unwrap(), f),
            "{}",
            key
        );
        prop_assert!(
            propositionally_equivalent(gh.get(key).unwrap(), hg.get(key).unwrap()),
            "{}",
            key
        );
    }
    Ok(())
}

/// Random causality graph with every node reachable from the entry, as for
/// graphs built from method bodies. Node kinds: 0 = skip, 1..=3 = call, 4 = await.
fn graph() -> impl Strategy<Value = CausalityGraph> {
    (2usize..=12)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0u8..5, n),
                prop::collection::vec(any::<prop::sample::Index>(), n),
                prop::collection::btree_set((0..n, 0..n), 0..2 * n),
            )
        })
        .prop_map(|(kinds, parents, mut edges)| {
            for (i, parent) in parents.iter().enumerate().skip(1) {
                edges.insert((parent.index(i), i));
            }
            let span = Span::default();
            let mut point = 0;
            let one = Expr::Num(BigRational::from_integer(1.into()));
            let nodes = kinds
                .iter()
                .map(|k| {
                    let kind = match k {
                        0 => NodeKind::Skip,
                        4 => {
                            point += 1;
                            NodeKind::Stmt(Stmt::new(
                                StmtKind::Await(point, Guard::Duration(one.clone())),
                                span,
                            ))
                        }
                        m => NodeKind::Stmt(Stmt::new(
                            StmtKind::Exec(Rhs::Call {
                                target: Expr::This,
                                method: format!("m{m}"),
                                args: vec![],
                            }),
                            span,
                        )),
                    };
                    Node { kind }
                })
                .collect::<Vec<_>>();
            let exit = nodes.len() - 1;
            CausalityGraph {
                nodes,
                edges,
                entry: 0,
                exit,
            }
        })
}

/// Intersection over all method paths into `target`, by enumerating simple paths.
fn brute_force(g: &CausalityGraph, target: usize) -> BTreeSet<String> {
    let universe: BTreeSet<String> = g
        .nodes
        .iter()
        .filter_map(|n| n.self_call().map(str::to_string))
        .collect();
    let own = |n: usize| g.nodes[n].self_call().map(str::to_string);
    let mut result: Option<BTreeSet<String>> = None;
    let mut meet = |s: BTreeSet<String>| {
        result = Some(match result.take() {
            None => s,
            Some(r) => r.intersection(&s).cloned().collect(),
        })
    };
    if target == g.entry {
        meet(own(target).into_iter().collect());
    }
    let succ: BTreeMap<usize, Vec<usize>> = (0..g.nodes.len())
        .map(|n| (n, g.successors(n).collect()))
        .collect();
    fn walk(
        at: usize,
        target: usize,
        g: &CausalityGraph,
        succ: &BTreeMap<usize, Vec<usize>>,
        seen: &mut Vec<usize>,
        found: &mut dyn FnMut(&[usize]),
    ) {
        for &next in &succ[&at] {
            if next == target {
                seen.push(next);
                found(seen);
                seen.pop();
            } else if next != g.entry && !g.nodes[next].is_await() && !seen.contains(&next) {
                seen.push(next);
                walk(next, target, g, succ, seen, found);
                seen.pop();
            }
        }
    }
    for s in (0..g.nodes.len()).filter(|&n| n == g.entry || g.nodes[n].is_await()) {
        let mut seen = vec![s];
        walk(s, target, g, &succ, &mut seen, &mut |path| {
            meet(path.iter().filter_map(|&n| own(n)).collect())
        });
    }
    result.unwrap_or(universe)
}

fn gcall(g: CausalityGraph) -> Check {
    prop_assert_eq!(
        analysis::guaranteed_calls(&g, Target::Exit).unwrap(),
        brute_force(&g, g.exit)
    );
    for n in 0..g.nodes.len() {
        if let Some(p) = g.nodes[n].point() {
            prop_assert_eq!(
                analysis::guaranteed_calls(&g, Target::Point(p)).unwrap(),
                brute_force(&g, n),
                "point {}",
                p
            );
        }
    }
    Ok(())
}

fn var(v: &str) -> Term {
    Term::var(v)
}

fn num(x: f64) -> Term {
    Term::Lit(BigRational::from_float(x).unwrap())
}

type Linear = ((f64, f64, f64), (f64, f64, f64), Vec<f64>);

/// Triangular linear system; its closed form is polynomial.
fn closed_form(((a, b, c), (x0, y0, z0), times): Linear) -> Check {
    let eqs = vec![
        ("x".to_string(), num(a)),
        (
            "y".to_string(),
            Term::add(Term::mul(num(b), var("x")), num(c)),
        ),
        ("z".to_string(), Term::sub(var("y"), var("x"))),
    ];
    let init = vec![
        ("x".to_string(), x0),
        ("y".to_string(), y0),
        ("z".to_string(), z0),
    ];
    let closed = Dynamics::new(&eqs, &init).unwrap();
    prop_assert!(closed.is_closed_form());
    let numeric = Dynamics::numeric(&eqs, &init, 1e-3).unwrap();
    for t in times {
        let (p, q) = (closed.state_at(t), numeric.state_at(t));
        for i in 0..3 {
            prop_assert!(
                (p[i] - q[i]).abs() <= 1e-9 * (1.0 + p[i].abs()),
                "t={} {} vs {}",
                t,
                p[i],
                q[i]
            );
        }
        let x = x0 + a * t;
        let y = y0 + (b * x0 + c) * t + b * a * t * t / 2.0;
        prop_assert!((q[0] - x).abs() <= 1e-9 * (1.0 + x.abs()));
        prop_assert!((q[1] - y).abs() <= 1e-9 * (1.0 + y.abs()));
    }
    Ok(())
}

/// Harmonic oscillator against cosine and sine.
fn rotation((w, r, t): (f64, f64, f64)) -> Check {
    let eqs = vec![
        ("x".to_string(), Term::mul(num(w), var("y"))),
        ("y".to_string(), Term::neg(Term::mul(num(w), var("x")))),
    ];
    let d = Dynamics::new(&eqs, &[("x".to_string(), r), ("y".to_string(), 0.0)]).unwrap();
    prop_assert!(!d.is_closed_form());
    let s = d.state_at(t);
    prop_assert!(
        (s[0] - r * (w * t).cos()).abs() <= 1e-9,
        "{} vs {}",
        s[0],
        r * (w * t).cos()
    );
    prop_assert!((s[1] + r * (w * t).sin()).abs() <= 1e-9);
    Ok(())
}

fn lotka_volterra(
    ((alpha, beta, gamma, delta), (x0, y0)): ((f64, f64, f64, f64), (f64, f64)),
) -> Check {
    let eqs = vec![
        (
            "x".to_string(),
            Term::sub(
                Term::mul(num(alpha), var("x")),
                Term::mul(Term::mul(num(beta), var("x")), var("y")),
            ),
        ),
        (
            "y".to_string(),
            Term::sub(
                Term::mul(Term::mul(num(delta), var("x")), var("y")),
                Term::mul(num(gamma), var("y")),
            ),
        ),
    ];
    let d = Dynamics::new(&eqs, &[("x".to_string(), x0), ("y".to_string(), y0)]).unwrap();
    let v = |x: f64, y: f64| delta * x - gamma * x.ln() + beta * y - alpha * y.ln();
    let v0 = v(x0, y0);
    for k in 0..=100 {
        let s = d.state_at(k as f64 / 10.0);
        prop_assert!((v(s[0], s[1]) - v0).abs() <= 1e-6, "t={}", k as f64 / 10.0);
    }
    Ok(())
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Check,
) -> Result<(), String> {
    let config = Config {
        cases,
        max_global_rejects: 100_000,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new(config)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

pub type Suite = (&'static str, Box<dyn Fn() -> Result<(), String>>);

/// Every property suite; `corpus` is the directory of example programs.
pub fn suites(corpus: PathBuf) -> Vec<Suite> {
    vec![
        (
            "weak negation is an involution",
            Box::new(|| run(1000, weak_formula(), involution)),
        ),
        (
            "weak negation covers every state",
            Box::new(|| run(1000, (weak_formula(), point()), coverage)),
        ),
        (
            "formula and weak negation meet on the boundary",
            Box::new(|| run(1000, (weak_formula(), point(), point()), boundary)),
        ),
        (
            "obligations survive render and read",
            Box::new(|| run(1000, (first_order(), program(), first_order()), round_trip)),
        ),
        (
            "basic is the unit of composition",
            Box::new(move || {
                let programs = load_corpus(&corpus);
                run(64, (0usize..64, kind(), kind()), |x| {
                    composition(&programs, x)
                })
            }),
        ),
        (
            "guaranteed calls match path enumeration",
            Box::new(|| run(500, graph(), gcall)),
        ),
        (
            "integrator matches closed form",
            Box::new(|| {
                let coef = (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64);
                let init = (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64);
                run(
                    100,
                    (coef, init, prop::collection::vec(0.0..10.0f64, 1..8)),
                    closed_form,
                )
            }),
        ),
        (
            "integrator tracks rotation",
            Box::new(|| run(100, (0.1..2.0f64, 0.1..5.0f64, 0.0..10.0f64), rotation)),
        ),
        (
            "Lotka-Volterra first integral is conserved",
            Box::new(|| {
                let params = (0.5..1.5f64, 0.2..1.0f64, 0.5..1.5f64, 0.2..1.0f64);
                run(100, (params, (0.5..3.0f64, 0.5..3.0f64)), lotka_volterra)
            }),
        ),
    ]
}
