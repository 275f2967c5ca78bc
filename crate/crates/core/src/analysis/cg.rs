//! Causality graphs of method bodies and the guaranteed-call analysis over them.

use std::collections::{BTreeMap, BTreeSet};

use super::AnalysisError;
use crate::habs::{Expr, Rhs, Stmt, StmtKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    /// A simple statement.
    Stmt(Stmt),
    /// Branching node of an `if` or `while`.
    In,
    /// Joining node of an `if` or `while`.
    Out,
    /// Stands for an empty block or a missing `else`.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
}

impl Node {
    /// Program point of an await node.
    pub fn point(&self) -> Option<u32> {
        match &self.kind {
            NodeKind::Stmt(Stmt {
                kind: StmtKind::Await(p, _),
                ..
            }) => Some(*p),
            _ => None,
        }
    }

    pub fn is_await(&self) -> bool {
        self.point().is_some()
    }

    /// Method called on `this` by this node, if any.
    pub fn self_call(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Stmt(s) => match s.rhs() {
                Some(Rhs::Call {
                    target: Expr::This,
                    method,
                    ..
                }) => Some(method),
                _ => None,
            },
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalityGraph {
    pub nodes: Vec<Node>,
    pub edges: BTreeSet<(usize, usize)>,
    pub entry: usize,
    pub exit: usize,
}

/// Where to ask for guaranteed calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Exit,
    Point(u32),
}

impl CausalityGraph {
    pub fn predecessors(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.1 == n).map(|e| e.0)
    }

    pub fn successors(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == n).map(|e| e.1)
    }

    pub fn point_node(&self, p: u32) -> Option<usize> {
        self.nodes.iter().position(|n| n.point() == Some(p))
    }

    fn add(&mut self, kind: NodeKind) -> usize {
        self.nodes.push(Node { kind });
        self.nodes.len() - 1
    }

    /// Adds the subgraph of `s`, returning its entry and exit.
    fn build(&mut self, s: &Stmt) -> (usize, usize) {
        match &s.kind {
            StmtKind::Block(items) if items.is_empty() => {
                let n = self.add(NodeKind::Skip);
                (n, n)
            }
            StmtKind::Block(items) => {
                let (entry, mut exit) = self.build(&items[0]);
                for it in &items[1..] {
                    let (e, x) = self.build(it);
                    self.edges.insert((exit, e));
                    exit = x;
                }
                (entry, exit)
            }
            StmtKind::If(_, a, b) => {
                let i = self.add(NodeKind::In);
                let (ae, ax) = self.build(a);
                let (be, bx) = match b {
                    Some(b) => self.build(b),
                    None => {
                        let n = self.add(NodeKind::Skip);
                        (n, n)
                    }
                };
                let o = self.add(NodeKind::Out);
                self.edges.extend([(i, ae), (i, be), (ax, o), (bx, o)]);
                (i, o)
            }
            StmtKind::While(_, body) => {
                let i = self.add(NodeKind::In);
                let (e, x) = self.build(body);
                let o = self.add(NodeKind::Out);
                self.edges.extend([(i, e), (x, i), (i, o)]);
                (i, o)
            }
            _ => {
                let n = self.add(NodeKind::Stmt(s.clone()));
                (n, n)
            }
        }
    }
}

pub fn build_causality_graph(body: &Stmt) -> CausalityGraph {
    let mut g = CausalityGraph {
        nodes: Vec::new(),
        edges: BTreeSet::new(),
        entry: 0,
        exit: 0,
    };
    let (entry, exit) = g.build(body);
    g.entry = entry;
    g.exit = exit;
    g
}

/// Methods called on `this` on every method path into each node.
///
/// A method path starts at the entry or at an await node and passes through
/// no other await. Computed as a greatest fixpoint of set intersection.
fn must_calls(g: &CausalityGraph) -> Vec<BTreeSet<String>> {
    let universe: BTreeSet<String> = g
        .nodes
        .iter()
        .filter_map(|n| n.self_call().map(str::to_string))
        .collect();
    let own = |n: usize| -> BTreeSet<String> {
        g.nodes[n]
            .self_call()
            .map(|c| c.to_string())
            .into_iter()
            .collect()
    };
    let preds: BTreeMap<usize, Vec<usize>> = (0..g.nodes.len())
        .map(|n| (n, g.predecessors(n).collect()))
        .collect();
    // incoming[n]: calls guaranteed on every path reaching n, excluding n itself
    let mut incoming: Vec<BTreeSet<String>> = vec![universe; g.nodes.len()];
    incoming[g.entry].clear();
    let outgoing = |n: usize, incoming: &[BTreeSet<String>]| -> BTreeSet<String> {
        if g.nodes[n].is_await() {
            BTreeSet::new()
        } else {
            let mut s = incoming[n].clone();
            s.extend(own(n));
            s
        }
    };
    let mut changed = true;
    while changed {
        changed = false;
        for n in 0..g.nodes.len() {
            if n == g.entry {
                continue;
            }
            let mut acc: Option<BTreeSet<String>> = None;
            for &p in &preds[&n] {
                let o = outgoing(p, &incoming);
                acc = Some(match acc {
                    None => o,
                    Some(a) => a.intersection(&o).cloned().collect(),
                });
            }
            let new = acc.unwrap_or_default();
            if new != incoming[n] {
                incoming[n] = new;
                changed = true;
            }
        }
    }
    (0..g.nodes.len())
        .map(|n| {
            let mut s = incoming[n].clone();
            s.extend(own(n));
            s
        })
        .collect()
}

/// Methods guaranteed to be called on `this` at the exit or at an await point.
pub fn guaranteed_calls(g: &CausalityGraph, at: Target) -> Result<BTreeSet<String>, AnalysisError> {
    let node = match at {
        Target::Exit => g.exit,
        Target::Point(p) => g.point_node(p).ok_or(AnalysisError::UnknownPoint(p))?,
    };
    Ok(must_calls(g).swap_remove(node))
}
