//! Traces of single objects, suspension subtraces and their monitoring.

use std::fmt;

use super::{Configuration, Object, Outcome, Rule, Run, SimError};
use crate::analysis::{PostRegionGenerator, Region, RegionKey};
use crate::dl::Formula;
use crate::habs::Program;
use crate::ode::{CFormula, Dynamics};
use crate::Scalar;

/// State of an object after the last discrete step at `clock`, and its
/// dynamics until the next one.
#[derive(Debug, Clone)]
pub struct Segment<S> {
    pub clock: S,
    pub store: Vec<(String, S)>,
    pub dynamics: Dynamics<S>,
}

fn numeric<S: Scalar>(o: &Object<S>) -> Vec<(String, S)> {
    o.store
        .iter()
        .filter_map(|(k, v)| v.as_num().map(|x| (k.clone(), x)))
        .collect()
}

fn state_in<S>(segments: &[Segment<S>], x: S) -> Option<Vec<(String, S)>>
where
    S: Scalar,
{
    let i = segments.partition_point(|s| s.clock <= x).checked_sub(1)?;
    let seg = &segments[i];
    if seg.clock == x {
        return Some(seg.store.clone());
    }
    let dt = x - seg.clock;
    Some(
        seg.store
            .iter()
            .map(|(k, v)| {
                (
                    k.clone(),
                    if seg.dynamics.evolves(k) {
                        seg.dynamics.value_at(k, dt).unwrap_or(*v)
                    } else {
                        *v
                    },
                )
            })
            .collect(),
    )
}

/// The trace of one object: a state for every time after its creation.
#[derive(Debug, Clone)]
pub struct Trace<S> {
    pub object: usize,
    pub class: String,
    pub created_at: S,
    pub horizon: S,
    pub segments: Vec<Segment<S>>,
}

impl<S: Scalar> Trace<S> {
    /// State at absolute time `x`: the final one if discrete steps happen at `x`.
    pub fn at_abs(&self, x: S) -> Option<Vec<(String, S)>> {
        state_in(&self.segments, x)
    }

    /// State at time `x` after creation.
    pub fn at(&self, x: S) -> Option<Vec<(String, S)>> {
        self.at_abs(self.created_at + x)
    }

    pub fn value(&self, field: &str, x: S) -> Option<S> {
        self.at_abs(x)?
            .into_iter()
            .find(|(k, _)| k == field)
            .map(|(_, v)| v)
    }

    /// Tab-separated samples `time\tfield=value...` every `dt` up to the horizon.
    pub fn tsv(&self, dt: S) -> String {
        let mut out = String::new();
        let mut x = self.created_at;
        while x <= self.horizon {
            if let Some(state) = self.at_abs(x) {
                out.push_str(&format!("{x}"));
                for (k, v) in state {
                    out.push_str(&format!("\t{k}={v}"));
                }
                out.push('\n');
            }
            x = x + dt;
        }
        out
    }
}

fn find<S: Scalar>(c: &Configuration<S>, id: usize) -> Option<&Object<S>> {
    c.objects.iter().find(|o| o.id == id)
}

pub fn extract_trace<S: Scalar>(run: &Run<S>, object: usize) -> Option<Trace<S>> {
    let mut segments: Vec<Segment<S>> = Vec::new();
    let mut head = None;
    for c in &run.configs {
        let Some(o) = find(c, object) else { continue };
        head.get_or_insert((o.class.clone()?, o.created_at));
        let seg = Segment {
            clock: c.clock,
            store: numeric(o),
            dynamics: o.dynamics.clone(),
        };
        match segments.last_mut() {
            Some(last) if last.clock == c.clock => *last = seg,
            _ => segments.push(seg),
        }
    }
    let (class, created_at) = head?;
    Some(Trace {
        object,
        class,
        created_at,
        horizon: run.horizon,
        segments,
    })
}

/// A maximal stretch of time during which an object runs no process, following
/// a termination or suspension.
#[derive(Debug, Clone)]
pub struct SuspensionSubtrace<S> {
    pub object: usize,
    pub class: String,
    pub region: Region,
    pub start: S,
    pub end: S,
    /// No process is scheduled afterwards; the subtrace is cut at the horizon.
    pub open_ended: bool,
    pub created_at: S,
    start_state: Vec<(String, S)>,
    end_state: Vec<(String, S)>,
    segments: Vec<Segment<S>>,
}

impl<S: Scalar> SuspensionSubtrace<S> {
    pub fn len(&self) -> S {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= S::zero()
    }

    /// State `s` time units into the subtrace.
    pub fn state_at(&self, s: S) -> Vec<(String, S)> {
        if s <= S::zero() {
            self.start_state.clone()
        } else if s >= self.len() {
            self.end_state.clone()
        } else {
            state_in(&self.segments, self.start + s).unwrap_or_else(|| self.start_state.clone())
        }
    }

    /// Offsets of discrete steps strictly inside the subtrace.
    fn breakpoints(&self) -> impl Iterator<Item = S> + '_ {
        self.segments
            .iter()
            .map(move |s| s.clock - self.start)
            .filter(move |d| *d > S::zero() && *d < self.len())
    }
}

type Opened<S> = (Region, S, Vec<(String, S)>);

pub fn suspension_subtraces<S: Scalar>(run: &Run<S>, object: usize) -> Vec<SuspensionSubtrace<S>> {
    let Some(trace) = extract_trace(run, object) else {
        return Vec::new();
    };
    let mut open: Vec<Opened<S>> = Vec::new();
    let mut done = Vec::new();
    let close = |(region, start, start_state): (Region, S, Vec<(String, S)>),
                 end: S,
                 end_state,
                 open_ended,
                 done: &mut Vec<_>| {
        if end <= start {
            return;
        }
        let first = trace
            .segments
            .partition_point(|s| s.clock <= start)
            .saturating_sub(1);
        let last = trace.segments.partition_point(|s| s.clock <= end);
        done.push(SuspensionSubtrace {
            object,
            class: trace.class.clone(),
            region,
            start,
            end,
            open_ended,
            created_at: trace.created_at,
            start_state,
            end_state,
            segments: trace.segments[first..last].to_vec(),
        });
    };
    for (k, step) in run.steps.iter().enumerate() {
        if step.object != Some(object) {
            continue;
        }
        let (before, after) = (&run.configs[k], &run.configs[k + 1]);
        let region = match step.rule {
            Rule::R(5) => step.member.clone().map(Region::Member),
            Rule::R(2) => step.point.map(Region::Point),
            _ => None,
        };
        if let (Some(region), Some(o)) = (region, find(after, object)) {
            open.push((region, after.clock, numeric(o)));
        } else if matches!(step.rule, Rule::R(3) | Rule::R(4)) && step.nontrivial {
            let end_state = find(before, object).map(numeric).unwrap_or_default();
            for o in open.drain(..) {
                close(o, before.clock, end_state.clone(), false, &mut done);
            }
        }
    }
    let end = if run.outcome == Outcome::Horizon {
        run.horizon
    } else {
        run.horizon.max(run.last().clock)
    };
    for o in open.drain(..) {
        let end_state = trace.at_abs(end).unwrap_or_default();
        close(o, end, end_state, true, &mut done);
    }
    done.sort_by(|a, b| a.start.partial_cmp(&b.start).expect("finite clocks"));
    done
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    Region,
    Invariant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample<S> {
    pub violation: Violation,
    /// Absolute time.
    pub time: S,
    pub state: Vec<(String, S)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubtraceVerdict<S> {
    pub object: usize,
    pub key: RegionKey,
    pub start: S,
    pub end: S,
    pub open_ended: bool,
    pub region_ok: bool,
    pub inv_ok: bool,
    pub counterexample: Option<Counterexample<S>>,
}

impl<S: Scalar> SubtraceVerdict<S> {
    pub fn ok(&self) -> bool {
        self.region_ok && self.inv_ok
    }
}

impl<S: Scalar> fmt::Display for SubtraceVerdict<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let yn = |b| if b { "ok" } else { "VIOLATED" };
        write!(
            f,
            "object={} region={} from={} to={}{} region:{} invariant:{}",
            self.object,
            self.key,
            self.start,
            self.end,
            if self.open_ended { "(open)" } else { "" },
            yn(self.region_ok),
            yn(self.inv_ok)
        )?;
        if let Some(c) = &self.counterexample {
            write!(f, " at={}", c.time)?;
            for (k, v) in &c.state {
                write!(f, " {k}={v}")?;
            }
        }
        Ok(())
    }
}

/// Checks `region` and `inv` along a subtrace, sampled every `step` and at every
/// discrete step inside it. `t` is the clock of the subtrace, zero at its start.
pub fn monitor<S: Scalar>(
    sub: &SuspensionSubtrace<S>,
    region: &Formula,
    inv: &Formula,
    step: S,
    tol: S,
) -> Result<SubtraceVerdict<S>, SimError> {
    let names: Vec<String> = sub
        .start_state
        .iter()
        .map(|(k, _)| k.clone())
        .chain(["t".to_string()])
        .collect();
    let slot = |n: &str| names.iter().position(|k| k == n);
    let (r, i) = (
        CFormula::compile(region, &slot)?,
        CFormula::compile(inv, &slot)?,
    );
    let mut times = Vec::new();
    let mut s = S::zero();
    while s < sub.len() {
        times.push(s);
        s = s + step;
    }
    times.push(sub.len());
    times.extend(sub.breakpoints());
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let mut verdict = SubtraceVerdict {
        object: sub.object,
        key: RegionKey {
            class: sub.class.clone(),
            region: sub.region.clone(),
        },
        start: sub.start,
        end: sub.end,
        open_ended: sub.open_ended,
        region_ok: true,
        inv_ok: true,
        counterexample: None,
    };
    for s in times {
        let state = sub.state_at(s);
        let mut v: Vec<S> = state.iter().map(|(_, x)| *x).collect();
        v.push(s);
        let bad = if !r.holds(&v, tol) {
            verdict.region_ok = false;
            Some(Violation::Region)
        } else if !i.holds(&v, tol) {
            verdict.inv_ok = false;
            Some(Violation::Invariant)
        } else {
            None
        };
        if let Some(violation) = bad {
            if verdict.counterexample.is_none() {
                verdict.counterexample = Some(Counterexample {
                    violation,
                    time: sub.start + s,
                    state,
                });
            }
            if !verdict.region_ok && !verdict.inv_ok {
                break;
            }
        }
    }
    Ok(verdict)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorReport<S> {
    pub verdicts: Vec<SubtraceVerdict<S>>,
}

impl<S: Scalar> MonitorReport<S> {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(SubtraceVerdict::ok)
    }

    pub fn failures(&self) -> impl Iterator<Item = &SubtraceVerdict<S>> {
        self.verdicts.iter().filter(|v| !v.ok())
    }
}

impl<S: Scalar> fmt::Display for MonitorReport<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.verdicts {
            writeln!(f, "{v}")?;
        }
        let bad = self.failures().count();
        writeln!(f, "{} subtraces, {} violations", self.verdicts.len(), bad)
    }
}

/// Monitors every suspension subtrace of every object of `run` against the
/// generator's region and the class invariant. Regions missing from the
/// generator are taken as `true`.
pub fn check_run<S: Scalar>(
    program: &Program,
    run: &Run<S>,
    generator: &PostRegionGenerator,
    step: S,
    tol: S,
) -> Result<MonitorReport<S>, SimError> {
    let mut verdicts = Vec::new();
    for o in &run.last().objects {
        let Some(class) = o.class.as_deref().and_then(|c| program.class(c)) else {
            continue;
        };
        let inv = class.invariant();
        for sub in suspension_subtraces(run, o.id) {
            let key = RegionKey {
                class: class.name.clone(),
                region: sub.region.clone(),
            };
            let region = generator.get(&key).cloned().unwrap_or(Formula::True);
            verdicts.push(monitor(&sub, &region, &inv, step, tol)?);
        }
    }
    Ok(MonitorReport { verdicts })
}
