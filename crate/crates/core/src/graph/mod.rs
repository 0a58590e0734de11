//! Supervision graphs.
//!
//! Nodes are indexed `0..=G+1`. Node 0 is the non-emitting start node and
//! node `G+1` the non-emitting end node; every node in between emits a
//! label. Edges are monotone in node id (`src <= dst`), which lets the
//! forward recursion sweep nodes in id order and still admits the
//! self-loops required by CTC-style topologies.

mod build;
mod format;

use std::fmt;

pub use build::{build_ctc_graph, build_multispeaker_graph};
pub use format::{deserialize_graph, serialize_graph};

use crate::{Error, Result};

/// Label index of the blank symbol.
pub const BLANK: usize = 0;

/// Default cap on the number of paths [`unfold_paths`] may produce.
pub const DEFAULT_PATH_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    /// Static transition weight `W`.
    pub weight: f64,
    /// Transition class, an index into the transition posterior.
    pub trans: usize,
}

impl Edge {
    pub fn new(src: usize, dst: usize, weight: f64, trans: usize) -> Self {
        Edge {
            src,
            dst,
            weight,
            trans,
        }
    }
}

/// A token with its (first) activation frame and speaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AlignmentEvent {
    pub frame: usize,
    pub token: usize,
    pub speaker: usize,
}

/// A supervision graph.
///
/// `labels[g]` is the label of node `g`, `None` for the two non-emitting
/// nodes. Fields are public so that arbitrary (possibly invalid) graphs can
/// be assembled and checked with [`LabelGraph::validate`]; the algorithms
/// in this crate validate before use.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGraph {
    pub num_labels: usize,
    pub num_transitions: usize,
    pub labels: Vec<Option<usize>>,
    pub edges: Vec<Edge>,
}

/// A single invariant violation found by [`LabelGraph::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewNodes(usize),
    StartEmits(Option<usize>),
    EndEmits(Option<usize>),
    NonEmittingInterior(usize),
    LabelOutOfRange { node: usize, label: usize },
    EdgeNodeOutOfRange { edge: usize },
    EdgeEntersStart { edge: usize },
    EdgeLeavesEnd { edge: usize },
    NonMonotoneEdge { edge: usize, src: usize, dst: usize },
    SelfLoopOnNonEmitting { edge: usize, node: usize },
    BadWeight { edge: usize, weight: f64 },
    TransitionOutOfRange { edge: usize, trans: usize },
    Unreachable(usize),
    DeadEnd(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            TooFewNodes(n) => write!(f, "graph has {n} nodes, need at least start and end"),
            StartEmits(l) => write!(f, "start node must be non-emitting, has label {l:?}"),
            EndEmits(l) => write!(f, "end node must be non-emitting, has label {l:?}"),
            NonEmittingInterior(g) => write!(f, "node {g} is non-emitting but not start or end"),
            LabelOutOfRange { node, label } => {
                write!(f, "node {node} has label {label} outside the alphabet")
            }
            EdgeNodeOutOfRange { edge } => write!(f, "edge {edge} references a missing node"),
            EdgeEntersStart { edge } => write!(f, "edge {edge} enters start node"),
            EdgeLeavesEnd { edge } => write!(f, "edge {edge} leaves end node"),
            NonMonotoneEdge { edge, src, dst } => {
                write!(f, "non-monotone edge {edge}: {src} -> {dst}")
            }
            SelfLoopOnNonEmitting { edge, node } => {
                write!(f, "edge {edge} is a self-loop on non-emitting node {node}")
            }
            BadWeight { edge, weight } => {
                write!(
                    f,
                    "edge {edge} has weight {weight}, must be finite and >= 0"
                )
            }
            TransitionOutOfRange { edge, trans } => {
                write!(f, "edge {edge} has transition class {trans} out of range")
            }
            Unreachable(g) => write!(f, "node {g} is unreachable from start"),
            DeadEnd(g) => write!(f, "node {g} cannot reach end"),
        }
    }
}

/// Outcome of validation: empty means the graph is well formed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
            Err(Error::InvalidGraph(msgs.join("; ")))
        }
    }
}

impl LabelGraph {
    /// Number of nodes including start and end (`G + 2`).
    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn end(&self) -> usize {
        self.labels.len().saturating_sub(1)
    }

    /// Ids of the emitting nodes, `1..=G`.
    pub fn emitting(&self) -> std::ops::Range<usize> {
        1..self.end()
    }

    pub fn label(&self, node: usize) -> Option<usize> {
        self.labels[node]
    }

    /// Edge indices grouped by destination node.
    pub fn incoming(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.num_nodes()];
        for (i, e) in self.edges.iter().enumerate() {
            inc[e.dst].push(i);
        }
        inc
    }

    /// Edge indices grouped by source node.
    pub fn outgoing(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_nodes()];
        for (i, e) in self.edges.iter().enumerate() {
            out[e.src].push(i);
        }
        out
    }

    pub fn validate(&self) -> ValidationReport {
        validate_graph(self)
    }
}

pub fn validate_graph(g: &LabelGraph) -> ValidationReport {
    let mut v = Vec::new();
    let n = g.num_nodes();
    if n < 2 {
        v.push(Violation::TooFewNodes(n));
        return ValidationReport { violations: v };
    }
    let end = n - 1;
    if g.labels[0].is_some() {
        v.push(Violation::StartEmits(g.labels[0]));
    }
    if g.labels[end].is_some() {
        v.push(Violation::EndEmits(g.labels[end]));
    }
    for node in 1..end {
        match g.labels[node] {
            None => v.push(Violation::NonEmittingInterior(node)),
            Some(label) if label >= g.num_labels => {
                v.push(Violation::LabelOutOfRange { node, label })
            }
            Some(_) => {}
        }
    }

    let mut edges_ok = true;
    for (i, e) in g.edges.iter().enumerate() {
        if e.src >= n || e.dst >= n {
            v.push(Violation::EdgeNodeOutOfRange { edge: i });
            edges_ok = false;
            continue;
        }
        if e.dst == 0 {
            v.push(Violation::EdgeEntersStart { edge: i });
        }
        if e.src == end {
            v.push(Violation::EdgeLeavesEnd { edge: i });
        }
        if e.src > e.dst {
            v.push(Violation::NonMonotoneEdge {
                edge: i,
                src: e.src,
                dst: e.dst,
            });
        }
        if e.src == e.dst && (e.src == 0 || e.src == end) {
            v.push(Violation::SelfLoopOnNonEmitting {
                edge: i,
                node: e.src,
            });
        }
        if !e.weight.is_finite() || e.weight < 0.0 {
            v.push(Violation::BadWeight {
                edge: i,
                weight: e.weight,
            });
        }
        if e.trans >= g.num_transitions {
            v.push(Violation::TransitionOutOfRange {
                edge: i,
                trans: e.trans,
            });
        }
    }

    if edges_ok {
        let fwd = reachable(n, &g.edges, 0, false);
        let bwd = reachable(n, &g.edges, end, true);
        for node in 1..end {
            if !fwd[node] {
                v.push(Violation::Unreachable(node));
            } else if !bwd[node] {
                v.push(Violation::DeadEnd(node));
            }
        }
    }
    ValidationReport { violations: v }
}

fn reachable(n: usize, edges: &[Edge], from: usize, reverse: bool) -> Vec<bool> {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        let (a, b) = if reverse {
            (e.dst, e.src)
        } else {
            (e.src, e.dst)
        };
        adj[a].push(b);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(x) = stack.pop() {
        for &y in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen
}

/// Distinct successor nodes of every node, ascending.
fn successor_nodes(g: &LabelGraph) -> Vec<Vec<usize>> {
    let mut succ = vec![Vec::new(); g.num_nodes()];
    for e in &g.edges {
        succ[e.src].push(e.dst);
    }
    for s in &mut succ {
        s.sort_unstable();
        s.dedup();
    }
    succ
}

/// Number of node sequences [`unfold_paths`] would return, as `f64` so that
/// huge counts do not overflow.
pub fn count_paths(g: &LabelGraph, frames: usize) -> f64 {
    let succ = successor_nodes(g);
    let end = g.end();
    // ways[g] = number of length-t prefixes ending in emitting node g
    let mut ways = vec![0f64; g.num_nodes()];
    for &d in &succ[0] {
        if d != end {
            ways[d] += 1.0;
        }
    }
    for _ in 1..frames {
        let mut next = vec![0f64; g.num_nodes()];
        for src in g.emitting() {
            if ways[src] == 0.0 {
                continue;
            }
            for &d in &succ[src] {
                if d != end {
                    next[d] += ways[src];
                }
            }
        }
        ways = next;
    }
    g.emitting()
        .filter(|&s| succ[s].contains(&end))
        .map(|s| ways[s])
        .sum()
}

/// Every node sequence `(start, π1, …, πT, end)` through the graph with
/// exactly `frames` emitting steps, in lexicographic order.
///
/// Parallel edges between the same pair of nodes yield one node sequence.
/// Fails with [`Error::EnumerationCap`] if the result would exceed `cap`.
pub fn unfold_paths(g: &LabelGraph, frames: usize, cap: usize) -> Result<Vec<Vec<usize>>> {
    if frames == 0 {
        return Err(Error::InvalidArgument(
            "frame count must be at least 1".into(),
        ));
    }
    g.validate().into_result()?;
    let count = count_paths(g, frames);
    if count > cap as f64 {
        return Err(Error::EnumerationCap { count, cap });
    }
    let succ = successor_nodes(g);
    let end = g.end();
    let mut out = Vec::with_capacity(count as usize);
    let mut path = vec![0usize];
    extend(&succ, end, frames, &mut path, &mut out);
    Ok(out)
}

fn extend(
    succ: &[Vec<usize>],
    end: usize,
    frames: usize,
    path: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    let last = *path.last().unwrap();
    if path.len() == frames + 1 {
        if succ[last].contains(&end) {
            let mut full = path.clone();
            full.push(end);
            out.push(full);
        }
        return;
    }
    for &d in &succ[last] {
        if d == end {
            continue;
        }
        path.push(d);
        extend(succ, end, frames, path, out);
        path.pop();
    }
}
