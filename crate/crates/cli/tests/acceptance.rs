//! End-to-end acceptance checks. Prints one PASS or FAIL line per criterion.

#[path = "../../core/tests/support/props.rs"]
mod props;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use hao_core::analysis::{self, GeneratorKind};
use hao_core::concurrent::{self, ConcurrentProgram, Scheme, Stepper};
use hao_core::dl::{
    self, canonical, normalize_formula, parse_archive, parse_formula, propositionally_equivalent,
};
use hao_core::habs::Program;
use hao_core::sim::{self, parse_script, Rule, SchedulerPolicy, Value};
use hao_core::vcg;
use hao_core::{SimConfig64 as SimConfig, Simulator64 as Simulator};

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/corpus")
}

fn load(name: &str) -> Result<Program, String> {
    let path = corpus().join(name);
    let src = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    Program::load(name, &src).map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Outcome {
    let took = started.elapsed();
    ensure(took <= limit, || format!("took {took:?}, limit {limit:?}"))
}

fn element_basic_obligations() -> Outcome {
    let started = Instant::now();
    let p = load("element.habs")?;
    let g = analysis::generator(&GeneratorKind::Basic, &p).map_err(|e| e.to_string())?;
    let entries = vcg::obligations(&p, &g, true).map_err(|e| e.to_string())?;
    let i = "v > 0 & bnd > v & rate < 1 & rate > 0";
    let phy =
        format!("({i} & cll = 0 & [{{rate' = 0, bnd' = 0, v' = rate*(bnd - v) & true}}]({i}))");
    let init = "inV > 0 & inB > inV & inR < 1 & inR > 0";
    let expected = [
        (
            "Element.init",
            format!("{init} & cll = 0 -> [?true; bnd := inB; rate := inR; v := inV;]{phy}"),
        ),
        (
            "Element.inBound",
            format!("{i} & cll = 0 -> [?true; {{?nB >= bnd; bnd := nB; ++ ?!nB >= bnd;}}]{phy}"),
        ),
        (
            "Element.outV",
            format!("{i} & cll = 0 -> [?true; result := v;]({phy} & 0 < result)"),
        ),
        (
            "Element.inRate",
            format!("{i} & 0 < nR & nR < 1 & cll = 0 -> [?true; rate := nR;]{phy}"),
        ),
    ];
    ensure(entries.len() == 5, || format!("{} entries", entries.len()))?;
    ensure(
        entries.iter().any(|e| e.name == "main" && !e.exempt()),
        || "no main obligation".into(),
    )?;
    for (name, text) in expected {
        let oracle = parse_formula(&text).map_err(|e| format!("{name} oracle: {e}"))?;
        let entry = entries
            .iter()
            .find(|e| e.name == name)
            .ok_or(format!("missing {name}"))?;
        let got = entry
            .obligation
            .as_ref()
            .ok_or(format!("{name} is exempt"))?
            .formula();
        ensure(canonical(&got) == canonical(&oracle), || {
            format!("{name}: got {got}")
        })?;
    }
    within(Duration::from_secs(1), started)
}

fn tank_structural_region() -> Outcome {
    let started = Instant::now();
    let p = load("tank.habs")?;
    let g = analysis::generator(&GeneratorKind::Structural, &p).map_err(|e| e.to_string())?;
    let oracle = parse_formula("(level >= 3 | drain >= 0) & (level <= 10 | drain <= 0)").unwrap();
    let keys: Vec<_> = g
        .entries()
        .iter()
        .filter(|(k, _)| k.class == "Tank")
        .collect();
    ensure(keys.len() >= 3, || {
        format!("only {} Tank regions", keys.len())
    })?;
    for (key, f) in keys {
        ensure(propositionally_equivalent(f, &oracle), || {
            format!("{key}: {f}")
        })?;
    }
    within(Duration::from_secs(1), started)
}

fn example_semantics() -> Outcome {
    let started = Instant::now();
    let p = load("tank.habs")?;
    let simulator = Simulator::new(
        &p,
        SimConfig {
            horizon: 5.0,
            ..SimConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let run = simulator
        .run(SchedulerPolicy::Deterministic)
        .map_err(|e| e.to_string())?;
    let k = run
        .steps
        .iter()
        .position(|s| s.rule == Rule::Advance)
        .ok_or("no time advance")?;
    let mut cfg = run.configs[k].clone();
    cfg.clock = 1.0;
    let tank = cfg
        .objects
        .iter_mut()
        .find(|o| o.class.as_deref() == Some("Tank"))
        .ok_or("no Tank")?;
    tank.store.insert("level".into(), Value::Num(4.0));
    tank.store.insert("drain".into(), Value::Num(-1.0));
    tank.dynamics = simulator
        .solve(Some("Tank"), &tank.store)
        .map_err(|e| e.to_string())?;
    let members: Vec<_> = tank.queue.iter().map(|q| q.member.clone()).collect();
    ensure(members.len() == 2, || format!("queue {members:?}"))?;
    tank.queue
        .make_contiguous()
        .sort_by_key(|q| q.member != "down");
    let tank_id = tank.id;

    let run = simulator
        .run_from(cfg, SchedulerPolicy::Deterministic)
        .map_err(|e| e.to_string())?;
    let rules: Vec<Rule> = run.steps.iter().take(3).map(|s| s.rule).collect();
    ensure(rules == [Rule::Advance, Rule::R(3), Rule::R(7)], || {
        format!("rules {rules:?}")
    })?;
    ensure((run.steps[0].clock - 2.0).abs() <= 1e-6, || {
        format!("advanced to {}", run.steps[0].clock)
    })?;
    let level = run.configs[1]
        .object(tank_id)
        .and_then(|o| o.store.get("level"))
        .and_then(Value::as_num);
    ensure(level.is_some_and(|l| (l - 3.0).abs() <= 1e-6), || {
        format!("level {level:?}")
    })?;
    ensure(run.steps[1].member.as_deref() == Some("down"), || {
        format!("scheduled {:?}", run.steps[1].member)
    })?;
    within(Duration::from_secs(1), started)
}

fn tank_safety() -> Outcome {
    let started = Instant::now();
    let p = load("tank.habs")?;
    let simulator = Simulator::new(&p, SimConfig::default()).map_err(|e| e.to_string())?;
    let run = simulator
        .run(SchedulerPolicy::Deterministic)
        .map_err(|e| e.to_string())?;
    let tank = run
        .last()
        .objects
        .iter()
        .find(|o| o.class.as_deref() == Some("Tank"))
        .ok_or("no Tank")?
        .id;
    let trace = sim::extract_trace(&run, tank).ok_or("no trace")?;
    for i in 0..=100_000 {
        let x = i as f64 * 1e-3;
        let level = trace.value("level", x).ok_or(format!("no level at {x}"))?;
        ensure((3.0 - 1e-6..=10.0 + 1e-6).contains(&level), || {
            format!("level {level} at {x}")
        })?;
    }
    let events: Vec<_> = run
        .steps
        .iter()
        .filter(|s| s.rule == Rule::R(3) && s.object == Some(tank) && s.nontrivial)
        .collect();
    // Alternating switches every 7 time units from t = 2, the last one on the horizon.
    let expected = ((100.0 - 2.0) / 7.0_f64).floor() as usize + 1;
    ensure(events.len() == expected, || {
        format!("{} events, expected {expected}", events.len())
    })?;
    for (k, e) in events.iter().enumerate() {
        let at = 2.0 + 7.0 * k as f64;
        let member = if k % 2 == 0 { "down" } else { "up" };
        ensure((e.clock - at).abs() <= 1e-6, || {
            format!("event {k} at {} instead of {at}", e.clock)
        })?;
        ensure(e.member.as_deref() == Some(member), || {
            format!("event {k} runs {:?}", e.member)
        })?;
    }
    within(Duration::from_secs(5), started)
}

fn post_region_soundness() -> Outcome {
    let started = Instant::now();
    let script =
        std::fs::read_to_string(corpus().join("billard.script")).map_err(|e| e.to_string())?;
    let cases = [
        ("tank.habs", 100.0, String::new()),
        ("tank_tick.habs", 100.0, String::new()),
        ("billard.habs", 30.0, script),
    ];
    for (name, horizon, script) in cases {
        let p = load(name)?;
        let config = SimConfig {
            horizon,
            script: parse_script(&script).map_err(|e| e.to_string())?,
            ..SimConfig::default()
        };
        let run = Simulator::new(&p, config)
            .and_then(|s| s.run(SchedulerPolicy::Deterministic))
            .map_err(|e| format!("{name}: {e}"))?;
        if name == "billard.habs" {
            let scheduled: BTreeSet<_> =
                run.steps.iter().filter_map(|s| s.member.clone()).collect();
            for m in ["push", "accelerate", "leap", "incSize"] {
                ensure(scheduled.contains(m), || format!("script never runs {m}"))?;
            }
        }
        for kind in [GeneratorKind::Local, GeneratorKind::Structural] {
            let g = analysis::generator(&kind, &p).map_err(|e| e.to_string())?;
            let report = sim::check_run(&p, &run, &g, 0.01, 1e-6).map_err(|e| e.to_string())?;
            ensure(!report.verdicts.is_empty(), || {
                format!("{name}: no subtraces")
            })?;
            let bad = report.failures().next().map(|v| v.to_string());
            if let Some(bad) = bad {
                return Err(format!("{name} {kind}: {bad}"));
            }
        }
    }
    within(Duration::from_secs(30), started)
}

fn negative_control() -> Outcome {
    let src = std::fs::read_to_string(corpus().join("tank.habs")).map_err(|e| e.to_string())?;
    ensure(src.contains("level <= 10)"), || {
        "invariant not found".into()
    })?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("tank9.habs");
    std::fs::write(&path, src.replace("level <= 10)", "level <= 9)")).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_hao"))
        .arg("check")
        .arg(&path)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.code() == Some(3), || {
        format!("exit {:?}", out.status.code())
    })?;
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr
        .lines()
        .find(|l| l.starts_with("violation:"))
        .ok_or(format!("stderr: {stderr}"))?;
    let field = |key: &str| {
        line.split_whitespace()
            .find_map(|w| w.strip_prefix(key))
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or(format!("no {key} in {line}"))
    };
    let (at, level) = (field("at=")?, field("level=")?);
    ensure(level > 9.0 && level <= 10.0, || {
        format!("level {level} at {at}")
    })
}

fn concurrent_tank() -> Outcome {
    let started = Instant::now();
    let src = std::fs::read_to_string(corpus().join("tank.conc")).map_err(|e| e.to_string())?;
    let p = ConcurrentProgram::parse(&src).map_err(|e| e.to_string())?;
    let start = p.initial_state::<f64>();
    ensure(start.valuation.get("level") == Some(&5.0), || {
        "tank does not start at 5".into()
    })?;
    let stepper = Stepper {
        horizon: 50.0,
        ..Stepper::default()
    };
    let states = stepper
        .reachable_sample(&p, &start, 0.01, SchedulerPolicy::Deterministic)
        .map_err(|e| e.to_string())?;
    ensure(
        states.last().is_some_and(|s| s.clock >= 50.0 - 0.01),
        || "sample stops early".into(),
    )?;
    for s in &states {
        let level = s.valuation["level"];
        ensure((3.0 - 1e-6..=10.0 + 1e-6).contains(&level), || {
            format!("level {level} at {}", s.clock)
        })?;
    }
    let inv = p.invariant.clone().ok_or("no invariant")?;
    let obligations = concurrent::obligations(&p, &p.init_formula(), &inv, Scheme::Basic)
        .map_err(|e| e.to_string())?;
    let up = obligations
        .iter()
        .find(|o| o.name == "up")
        .ok_or("no obligation for up")?;
    let oracle = parse_formula(
        "(3 <= level & level <= 10) -> [?level >= 10; drain := -1;]\
         ((3 <= level & level <= 10) & [{level' = drain & true}](3 <= level & level <= 10))",
    )
    .unwrap();
    ensure(
        normalize_formula(&up.formula()) == normalize_formula(&oracle),
        || format!("up: {}", up.formula()),
    )?;
    within(Duration::from_secs(2), started)
}

fn reproof(file: &str, generator: &str, change: &str) -> Result<BTreeSet<String>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hao"))
        .args(["analyze", "--generator", generator, "--impact", change])
        .arg(corpus().join(file))
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{change}: exit {:?}", out.status.code())
    })?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout
        .lines()
        .find_map(|l| l.strip_prefix("reproof: "))
        .ok_or(format!("no reproof line: {stdout}"))?;
    let inner = line.trim_start_matches('{').trim_end_matches('}');
    Ok(inner
        .split(", ")
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect())
}

fn impact_sets() -> Outcome {
    let cases = [
        ("tank.habs", "basic", "guard:Tank.up", vec!["up"]),
        ("tank.habs", "basic", "removed:Tank.up", vec![]),
        ("tank_local.habs", "local", "removed:Tank.up", vec!["down"]),
        (
            "tank.habs",
            "structural",
            "removed:Tank.up",
            vec!["down", "init"],
        ),
        (
            "billard.habs",
            "structural",
            "added:Billard.leap",
            vec!["leap"],
        ),
    ];
    for (file, generator, change, expected) in cases {
        let got = reproof(file, generator, change)?;
        let expected: BTreeSet<String> = expected.into_iter().map(str::to_string).collect();
        ensure(got == expected, || {
            format!("{file} {generator} {change}: {got:?}")
        })?;
    }
    Ok(())
}

fn property_suites() -> Outcome {
    for (name, suite) in props::suites(corpus()) {
        suite().map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(())
}

fn emitted_archives() -> Outcome {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus())
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "habs"))
        .collect();
    files.sort();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut count = 0;
    for file in &files {
        let name = file.file_name().unwrap().to_string_lossy().to_string();
        let p = load(&name)?;
        for kind in ["basic", "local", "structural", "composed"] {
            let out = dir.path().join(&name).join(kind);
            let kind: GeneratorKind = kind
                .parse()
                .map_err(|e: analysis::AnalysisError| e.to_string())?;
            let written = vcg::emit(&p, &kind, &out).map_err(|e| format!("{name} {kind}: {e}"))?;
            for f in written
                .iter()
                .filter(|f| f.extension().is_some_and(|e| e == "kyx"))
            {
                let text = std::fs::read_to_string(f).map_err(|e| e.to_string())?;
                let entries = parse_archive(&text).map_err(|e| format!("{}: {e}", f.display()))?;
                ensure(entries.len() == 1, || {
                    format!("{}: {} entries", f.display(), entries.len())
                })?;
                let e = &entries[0];
                let declared: BTreeSet<&str> = e.variables.iter().map(String::as_str).collect();
                let mut needed = vec![dl::CLOCK, dl::CALL_FLAG];
                if e.problem.mentions(dl::RESULT) {
                    needed.push(dl::RESULT);
                }
                for v in needed {
                    ensure(declared.contains(v), || {
                        format!("{} does not declare {v}", f.display())
                    })?;
                }
                count += 1;
            }
        }
    }
    ensure(count > 0, || "nothing emitted".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (
            "golden basic obligations for Element",
            element_basic_obligations,
        ),
        ("structural region of Tank", tank_structural_region),
        (
            "semantics reproduction from the example configuration",
            example_semantics,
        ),
        ("tank safety to horizon 100", tank_safety),
        ("empirical post-region soundness", post_region_soundness),
        ("negative control with level <= 9", negative_control),
        ("concurrent tank model", concurrent_tank),
        ("reproof sets after changes", impact_sets),
        ("property suites", property_suites),
        ("emitted archives re-parse", emitted_archives),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = check();
        let took = started.elapsed().as_secs_f64();
        match result {
            Ok(()) => println!("PASS {:>2} {name} ({took:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({took:.2}s): {why}", i + 1)
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
