use std::path::PathBuf;

use hao_core::analysis::{self, GeneratorKind};
use hao_core::habs::Program;
use hao_core::sim::{self, parse_script, Outcome, Rule, SchedulerPolicy, SimError};
use hao_core::{Run64, SimConfig64, Simulator64};

fn corpus(name: &str) -> String {
    std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("corpus")
            .join(name),
    )
    .unwrap()
}

fn load(src: &str) -> Program {
    Program::load("test.habs", src).unwrap_or_else(|e| panic!("{e}"))
}

fn run(p: &Program, config: SimConfig64) -> Run64 {
    Simulator64::new(p, config)
        .unwrap()
        .run(SchedulerPolicy::Deterministic)
        .unwrap()
}

fn horizon(h: f64) -> SimConfig64 {
    SimConfig64 {
        horizon: h,
        ..SimConfig64::default()
    }
}

fn object_of(run: &Run64, class: &str) -> usize {
    run.last()
        .objects
        .iter()
        .find(|o| o.class.as_deref() == Some(class))
        .unwrap()
        .id
}

#[test]
fn timed_tank_samples_every_half_unit() {
    let p = load(&corpus("tank_tick.habs"));
    let run = run(&p, horizon(20.0));
    let id = object_of(&run, "TankTick");
    let times: Vec<f64> = run
        .steps
        .iter()
        .filter(|s| s.rule == Rule::R(3) && s.object == Some(id) && s.nontrivial)
        .map(|s| s.clock)
        .collect();
    assert_eq!(times.len(), 40);
    for (k, t) in times.iter().enumerate() {
        assert!((t - 0.5 * (k + 1) as f64).abs() < 1e-9, "{k}: {t}");
    }
    let trace = sim::extract_trace(&run, id).unwrap();
    for i in 0..=2000 {
        let x = trace.value("x", i as f64 * 0.01).unwrap();
        assert!((3.0 - 1e-9..=10.0 + 1e-9).contains(&x), "x = {x}");
    }
}

#[test]
fn timed_tank_turns_at_the_thresholds() {
    let p = load(&corpus("tank_tick.habs"));
    let run = run(&p, horizon(20.0));
    let trace = sim::extract_trace(&run, object_of(&run, "TankTick")).unwrap();
    // x falls from 5 and is first seen at or below 3.5 at t = 1.5.
    assert!((trace.value("x", 1.5).unwrap() - 3.5).abs() < 1e-9);
    assert_eq!(trace.value("v", 1.25), Some(-1.0));
    assert_eq!(trace.value("v", 1.75), Some(1.0));
}

#[test]
fn script_calls_arrive_at_their_times() {
    let p = load(&corpus("billard.habs"));
    let script = parse_script(&corpus("billard.script")).unwrap();
    let times: Vec<f64> = script.iter().map(|c| c.time).collect();
    let run = run(
        &p,
        SimConfig64 {
            horizon: 30.0,
            script,
            ..SimConfig64::default()
        },
    );
    let injected: Vec<f64> = run
        .steps
        .iter()
        .filter(|s| s.rule == Rule::Inject)
        .map(|s| s.clock)
        .collect();
    assert_eq!(injected.len(), times.len());
    for (a, b) in injected.iter().zip(&times) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn script_naming_an_unknown_variable_fails() {
    let p = load(&corpus("billard.habs"));
    let script = parse_script("at 1 call nobody.push(1, 1)").unwrap();
    let sim = Simulator64::new(
        &p,
        SimConfig64 {
            horizon: 5.0,
            script,
            ..SimConfig64::default()
        },
    )
    .unwrap();
    assert!(sim.run(SchedulerPolicy::Deterministic).is_err());
}

#[test]
fn blocked_get_is_a_deadlock() {
    let p = load(
        "class A {
           Unit other(){ }
           Unit waiting(){ Fut<Unit> f = this!other(); f.get; }
         }
         { A a = new A(); a!waiting(); }",
    );
    let run = run(&p, horizon(10.0));
    assert_eq!(run.outcome, Outcome::Deadlock);
}

#[test]
fn unbounded_self_calls_hit_the_step_cap() {
    let p = load(
        "class A {
           Unit spin(){ this!spin(); }
         }
         { A a = new A(); a!spin(); }",
    );
    let run = run(
        &p,
        SimConfig64 {
            horizon: 10.0,
            zeno_cap: 200,
            ..SimConfig64::default()
        },
    );
    assert_eq!(run.outcome, Outcome::Zeno);
    assert_eq!(run.last().clock, 0.0);
}

#[test]
fn terminating_program_is_final() {
    let p = load(&corpus("element.habs"));
    let run = run(&p, horizon(10.0));
    assert_eq!(run.outcome, Outcome::Final);
}

#[test]
fn diff_await_that_never_fires_lets_time_pass() {
    let p = load(
        "class A {
           physical { Real x = 0; x' = 0; }
           Unit stuck(){ await diff x >= 1; }
         }
         { A a = new A(); a!stuck(); }",
    );
    assert_eq!(run(&p, horizon(10.0)).outcome, Outcome::Horizon);
}

#[test]
fn tank_trace_covers_the_horizon() {
    let p = load(&corpus("tank.habs"));
    let run = run(&p, horizon(25.0));
    assert_eq!(run.outcome, Outcome::Horizon);
    // The last switch is at 23; the trace continues along the dynamics.
    assert!((run.last().clock - 23.0).abs() < 1e-6);
    let trace = sim::extract_trace(&run, object_of(&run, "Tank")).unwrap();
    assert!((trace.value("level", 25.0).unwrap() - 8.0).abs() < 1e-6);
}

#[test]
fn division_by_zero_is_reported() {
    let p = load(
        "class A {
           Real r = 0;
           Unit m(Real d){ r = 1 / d; }
         }
         { A a = new A(); a!m(0); }",
    );
    let err = Simulator64::new(&p, horizon(1.0))
        .unwrap()
        .run(SchedulerPolicy::Deterministic)
        .unwrap_err();
    assert!(matches!(err, SimError::DivisionByZero), "{err}");
}

#[test]
fn seeded_runs_are_reproducible() {
    let p = load(&corpus("tank.habs"));
    let sim = Simulator64::new(&p, horizon(30.0)).unwrap();
    let a = sim.run(SchedulerPolicy::Seeded(7)).unwrap();
    let b = sim.run(SchedulerPolicy::Seeded(7)).unwrap();
    assert_eq!(a.log(), b.log());
}

#[test]
fn monitored_corpus_runs_have_no_violations() {
    for (name, h) in [
        ("tank_extended.habs", 50.0),
        ("tank_local.habs", 50.0),
        ("lotka_volterra.habs", 20.0),
    ] {
        let p = load(&corpus(name));
        let run = run(&p, horizon(h));
        for kind in ["basic", "local", "structural", "composed"] {
            let kind: GeneratorKind = kind.parse().unwrap();
            let g = analysis::generator(&kind, &p).unwrap();
            let report = sim::check_run(&p, &run, &g, 0.01, 1e-6).unwrap();
            assert!(report.passed(), "{name} {kind}:\n{report}");
        }
    }
}

#[test]
fn weakened_invariant_is_caught_near_the_bound() {
    let src = corpus("tank.habs").replace("level <= 10)", "level <= 9)");
    let p = load(&src);
    let run = run(&p, horizon(20.0));
    let g = analysis::generator(&GeneratorKind::Structural, &p).unwrap();
    let report = sim::check_run(&p, &run, &g, 0.01, 1e-6).unwrap();
    let bad = report.failures().next().expect("a violation");
    let cx = bad.counterexample.as_ref().unwrap();
    let level = cx.state.iter().find(|(k, _)| k == "level").unwrap().1;
    assert!(level > 9.0 && level <= 10.0, "{level}");
    // Level rises from 3 at t = 2 and passes 9 at t = 8.
    assert!(cx.time > 8.0 && cx.time < 8.0 + 0.02, "{}", cx.time);
}
