//! Command-line front end: verify, simulate, check, analyze and concurrent.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hao_core::analysis::{self, AnalysisError, Change, GeneratorKind};
use hao_core::concurrent::{self, ConcurrentError, ConcurrentProgram, Scheme, Stepper};
use hao_core::habs::{HabsError, Program};
use hao_core::sim::{self, parse_script, Outcome, SchedulerPolicy, SimConfig, SimError, Simulator};
use hao_core::vcg::{self, VcgError};

const USAGE: u8 = 1;
const ANALYSIS: u8 = 2;
const VIOLATION: u8 = 3;
const RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(
    name = "hao",
    version,
    about = "Post-region verification for Hybrid Active Objects"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate proof obligations and a manifest.
    Verify {
        input: PathBuf,
        #[arg(long, default_value = "basic")]
        generator: GeneratorKind,
        #[arg(long, default_value = "hao-out")]
        out: PathBuf,
    },
    /// Run a program and export the run log and object traces.
    Simulate {
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "hao-out")]
        out: PathBuf,
        /// Fail when the run ends in a deadlock or hits the step cap.
        #[arg(long)]
        strict: bool,
    },
    /// Simulate and monitor every suspension subtrace against post-regions and invariants.
    Check {
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "structural")]
        generator: GeneratorKind,
        /// Slack for region and invariant checks.
        #[arg(long, default_value_t = 1e-6, value_parser = positive)]
        tolerance: f64,
        #[arg(long)]
        strict: bool,
    },
    /// Print post-regions, controllers, guaranteed calls, exemptions and reproof sets.
    Analyze {
        input: PathBuf,
        #[arg(long, default_value = "structural")]
        generator: GeneratorKind,
        /// A hypothetical change such as `removed:Tank.up`.
        #[arg(long)]
        impact: Option<Change>,
    },
    /// Obligations and reachable states of a guarded-procedure program.
    Concurrent {
        input: PathBuf,
        #[arg(long, default_value = "precise")]
        scheme: Scheme,
        #[arg(long, default_value_t = 50.0, value_parser = positive)]
        horizon: f64,
        #[arg(long, default_value_t = 0.01, value_parser = positive)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Deterministic,
    Seeded,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 100.0, value_parser = positive)]
    horizon: f64,
    /// Sampling step of traces and monitors.
    #[arg(long, default_value_t = 0.01, value_parser = positive)]
    step: f64,
    /// Step of the numeric integrator.
    #[arg(long, default_value_t = 1e-3, value_parser = positive)]
    integration_step: f64,
    #[arg(long, value_enum)]
    policy: Option<Policy>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scripted environment calls.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Maximal number of discrete steps at one instant.
    #[arg(long, default_value_t = 10_000)]
    step_cap: usize,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

impl RunArgs {
    fn policy(&self) -> SchedulerPolicy {
        match (self.policy, self.seed) {
            (Some(Policy::Deterministic), _) | (None, None) => SchedulerPolicy::Deterministic,
            (_, seed) => SchedulerPolicy::Seeded(seed.unwrap_or(0)),
        }
    }

    fn config(&self) -> Result<SimConfig<f64>> {
        let script = match &self.script {
            Some(path) => parse_script(&read(path)?)?,
            None => Vec::new(),
        };
        Ok(SimConfig {
            horizon: self.horizon,
            integration_step: self.integration_step,
            zeno_cap: self.step_cap,
            script,
            ..SimConfig::default()
        })
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load(path: &Path) -> Result<Program> {
    Ok(Program::load(&path.display().to_string(), &read(path)?)?)
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn verify(input: &Path, generator: &GeneratorKind, out: &Path) -> Result<u8> {
    let p = load(input)?;
    let written = vcg::emit(&p, generator, out)?;
    for f in written {
        println!("{}", f.display());
    }
    Ok(0)
}

fn outcome_code(outcome: Outcome, strict: bool) -> u8 {
    match outcome {
        Outcome::Deadlock | Outcome::Zeno if strict => RUNTIME,
        _ => 0,
    }
}

fn simulate(input: &Path, args: &RunArgs, out: &Path, strict: bool) -> Result<u8> {
    let p = load(input)?;
    let simulator = Simulator::new(&p, args.config()?)?;
    let run = simulator.run(args.policy())?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write(out.join("run.log"), &run.log())?;
    for o in &run.last().objects {
        if let Some(trace) = sim::extract_trace(&run, o.id) {
            write(
                out.join(format!("trace_{}_{}.tsv", o.id, trace.class)),
                &trace.tsv(args.step),
            )?;
        }
    }
    println!(
        "{} steps, clock {}, outcome {:?}",
        run.steps.len(),
        run.last().clock,
        run.outcome
    );
    Ok(outcome_code(run.outcome, strict))
}

fn check(
    input: &Path,
    args: &RunArgs,
    generator: &GeneratorKind,
    tolerance: f64,
    strict: bool,
) -> Result<u8> {
    let p = load(input)?;
    let g = analysis::generator(generator, &p)?;
    let simulator = Simulator::new(&p, args.config()?)?;
    let run = simulator.run(args.policy())?;
    let report = sim::check_run(&p, &run, &g, args.step, tolerance)?;
    print!("{report}");
    if let Some(bad) = report.failures().next() {
        eprintln!("violation: {bad}");
        return Ok(VIOLATION);
    }
    Ok(outcome_code(run.outcome, strict))
}

fn analyze(input: &Path, generator: &GeneratorKind, impact: Option<&Change>) -> Result<u8> {
    let p = load(input)?;
    let g = analysis::generator(generator, &p)?;
    println!("post-regions ({generator}):");
    for (key, f) in g.entries() {
        println!("  {key}: {f}");
    }
    for c in &p.classes {
        let controllers = analysis::detect_controllers(c, &p);
        println!("class {}:", c.name);
        println!(
            "  controllers: {{{}}}",
            controllers.into_iter().collect::<Vec<_>>().join(", ")
        );
        for key in analysis::region_keys(&p)
            .iter()
            .filter(|k| k.class == c.name)
        {
            let calls = analysis::gcall(c, &key.region)?;
            println!(
                "  gcall {key}: {{{}}}",
                calls.into_iter().collect::<Vec<_>>().join(", ")
            );
        }
        for m in &c.methods {
            if analysis::frame_exempt(m, c) {
                println!("  exempt: {}", m.name);
            }
        }
    }
    if let Some(change) = impact {
        let set = analysis::reproof_set(change, generator, &p)?;
        println!(
            "reproof: {{{}}}",
            set.into_iter().collect::<Vec<_>>().join(", ")
        );
    }
    Ok(0)
}

fn concurrent(
    input: &Path,
    scheme: Scheme,
    horizon: f64,
    step: f64,
    out: Option<&Path>,
) -> Result<u8> {
    let p = ConcurrentProgram::parse(&read(input)?)?;
    let Some(inv) = p.invariant.clone() else {
        bail!("{}: missing `inv`", input.display())
    };
    let obligations = concurrent::obligations(&p, &p.init_formula(), &inv, scheme)?;
    for o in &obligations {
        match out {
            Some(dir) => {
                fs::create_dir_all(dir)
                    .with_context(|| format!("cannot create {}", dir.display()))?;
                write(dir.join(format!("{}.kyx", o.name)), &o.render())?;
            }
            None => println!("{}: {}", o.name, o.formula()),
        }
    }
    let stepper = Stepper {
        horizon,
        ..Stepper::default()
    };
    let states =
        stepper.reachable_sample(&p, &p.initial_state(), step, SchedulerPolicy::Deterministic)?;
    let violations: Vec<_> = states
        .iter()
        .filter(|s| {
            !hao_core::dl::eval_formula(&inv, &|n| s.valuation.get(n).copied(), 1e-6)
                .unwrap_or(false)
        })
        .collect();
    println!(
        "{} sampled states, {} outside the invariant",
        states.len(),
        violations.len()
    );
    if let Some(s) = violations.first() {
        eprintln!("violation at {}: {:?}", s.clock, s.valuation);
        return Ok(VIOLATION);
    }
    Ok(0)
}

/// Exit status for an error, by the stage that raised it.
fn code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<HabsError>() || cause.is::<std::io::Error>() {
            return USAGE;
        }
        if let Some(c) = cause.downcast_ref::<ConcurrentError>() {
            return match c {
                ConcurrentError::Parse { .. }
                | ConcurrentError::Dl { .. }
                | ConcurrentError::Guard(_)
                | ConcurrentError::BodyOde(_) => USAGE,
                _ => RUNTIME,
            };
        }
        if let Some(s) = cause.downcast_ref::<SimError>() {
            return if matches!(s, SimError::Script { .. }) {
                USAGE
            } else {
                RUNTIME
            };
        }
        if cause.is::<AnalysisError>() || cause.is::<VcgError>() {
            return ANALYSIS;
        }
    }
    USAGE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Verify {
            input,
            generator,
            out,
        } => verify(input, generator, out),
        Command::Simulate {
            input,
            run,
            out,
            strict,
        } => simulate(input, run, out, *strict),
        Command::Check {
            input,
            run,
            generator,
            tolerance,
            strict,
        } => check(input, run, generator, *tolerance, *strict),
        Command::Analyze {
            input,
            generator,
            impact,
        } => analyze(input, generator, impact.as_ref()),
        Command::Concurrent {
            input,
            scheme,
            horizon,
            step,
            out,
        } => concurrent(input, *scheme, *horizon, *step, out.as_deref()),
    };
    match result {
        Ok(status) => ExitCode::from(status),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code(&e))
        }
    }
}
