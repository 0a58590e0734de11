//! Random instances for tests, benchmarks and the CLI gradient check.

use ndarray::Array2;
use rand::Rng;

use crate::graph::{Edge, LabelGraph};
use crate::loss::{LogitSequence, PosteriorSequence};

/// A random valid graph with `1..=max_emitting` emitting nodes.
///
/// Every emitting node receives at least one incoming edge from an earlier
/// node and one outgoing edge to a later node, so every node lies on a
/// start-to-end path. There are no parallel edges and no start-to-end edge.
pub fn random_graph<R: Rng + ?Sized>(
    rng: &mut R,
    max_emitting: usize,
    num_labels: usize,
    num_transitions: usize,
    weight_range: (f64, f64),
) -> LabelGraph {
    let g = rng.random_range(1..=max_emitting.max(1));
    let end = g + 1;
    let mut labels = vec![None; g + 2];
    for l in labels.iter_mut().take(end).skip(1) {
        *l = Some(rng.random_range(0..num_labels));
    }
    let mut adj = vec![vec![false; g + 2]; g + 2];
    for src in 0..=g {
        for dst in src.max(1)..=end {
            if src == 0 && dst == end {
                continue;
            }
            let p = if src == dst { 0.5 } else { 0.35 };
            adj[src][dst] = rng.random_bool(p);
        }
    }
    for node in 1..=g {
        if !(0..node).any(|h| adj[h][node]) {
            let h = rng.random_range(0..node);
            adj[h][node] = true;
        }
        if !(node + 1..=end).any(|d| adj[node][d]) {
            let d = rng.random_range(node + 1..=end);
            adj[node][d] = true;
        }
    }
    let mut edges = Vec::new();
    for (src, row) in adj.iter().enumerate() {
        for (dst, &on) in row.iter().enumerate() {
            if on {
                let w = rng.random_range(weight_range.0..=weight_range.1);
                edges.push(Edge::new(src, dst, w, rng.random_range(0..num_transitions)));
            }
        }
    }
    LabelGraph {
        num_labels,
        num_transitions,
        labels,
        edges,
    }
}

/// Standard-normal-ish logits scaled by `scale`.
pub fn random_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    scale: f64,
) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.random_range(-1.0..1.0))
}

pub fn random_logits<R: Rng + ?Sized>(
    rng: &mut R,
    frames: usize,
    num_labels: usize,
    num_transitions: usize,
    scale: f64,
) -> LogitSequence {
    LogitSequence::new(
        random_matrix(rng, frames, num_labels, scale),
        random_matrix(rng, frames, num_transitions, scale),
    )
    .expect("random logits are finite")
}

/// Strictly positive, row-normalised posteriors.
pub fn random_posteriors<R: Rng + ?Sized>(
    rng: &mut R,
    frames: usize,
    num_labels: usize,
    num_transitions: usize,
) -> PosteriorSequence {
    let mut norm = |cols: usize| {
        let mut m = Array2::from_shape_simple_fn((frames, cols), || rng.random_range(0.05..1.0));
        for mut row in m.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        m
    };
    let label = norm(num_labels);
    let trans = norm(num_transitions);
    PosteriorSequence::new(label, trans).expect("random posteriors are normalised")
}
