use super::{AlignmentEvent, Edge, LabelGraph, BLANK};
use crate::alignment::order_events;
use crate::{Error, Result};

/// One token of a linear graph: its label and the transition class on the
/// edges that enter (and loop on) its node.
struct Token {
    label: usize,
    class: usize,
}

/// Linear CTC-style topology:
/// `start, blank, t1, blank, t2, …, tn, blank, end`.
///
/// Blank nodes are optional except between two consecutive tokens that are
/// equal (same label and same transition class). Every emitting node has a
/// self-loop.
fn linear_graph(
    tokens: &[Token],
    blank_class: usize,
    num_labels: usize,
    num_transitions: usize,
) -> LabelGraph {
    let n = tokens.len();
    let end = 2 * n + 2;
    let blank_node = |i: usize| 2 * i + 1; // blank before token i (i == n: trailing)
    let token_node = |i: usize| 2 * i + 2;

    let mut labels = vec![None; end + 1];
    for i in 0..=n {
        labels[blank_node(i)] = Some(BLANK);
    }
    for (i, t) in tokens.iter().enumerate() {
        labels[token_node(i)] = Some(t.label);
    }

    let mut edges = Vec::new();
    edges.push(Edge::new(0, blank_node(0), 1.0, blank_class));
    edges.push(Edge::new(0, token_node(0), 1.0, tokens[0].class));
    for (i, t) in tokens.iter().enumerate() {
        let b = blank_node(i);
        let tn = token_node(i);
        edges.push(Edge::new(b, b, 1.0, blank_class));
        edges.push(Edge::new(b, tn, 1.0, t.class));
        edges.push(Edge::new(tn, tn, 1.0, t.class));
        edges.push(Edge::new(tn, blank_node(i + 1), 1.0, blank_class));
        match tokens.get(i + 1) {
            Some(next) if next.label == t.label && next.class == t.class => {}
            Some(next) => edges.push(Edge::new(tn, token_node(i + 1), 1.0, next.class)),
            None => edges.push(Edge::new(tn, end, 1.0, blank_class)),
        }
    }
    let last_blank = blank_node(n);
    edges.push(Edge::new(last_blank, last_blank, 1.0, blank_class));
    edges.push(Edge::new(last_blank, end, 1.0, blank_class));

    LabelGraph {
        num_labels,
        num_transitions,
        labels,
        edges,
    }
}

/// Canonical CTC graph for `labels`, every edge carrying `transition_class`
/// and weight 1.
pub fn build_ctc_graph(
    labels: &[usize],
    num_labels: usize,
    num_transitions: usize,
    transition_class: usize,
) -> Result<LabelGraph> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("label sequence is empty".into()));
    }
    if transition_class >= num_transitions {
        return Err(Error::InvalidArgument(format!(
            "transition class {transition_class} out of range for {num_transitions} classes"
        )));
    }
    for &l in labels {
        if l == BLANK || l >= num_labels {
            return Err(Error::InvalidArgument(format!(
                "label {l} must be non-blank and below {num_labels}"
            )));
        }
    }
    let tokens: Vec<Token> = labels
        .iter()
        .map(|&label| Token {
            label,
            class: transition_class,
        })
        .collect();
    Ok(linear_graph(
        &tokens,
        transition_class,
        num_labels,
        num_transitions,
    ))
}

/// Multi-speaker supervision graph.
///
/// Token nodes follow global chronological order of `events`; tokens that
/// share a frame are ordered by descending speaker energy. The edges
/// entering a token node (and its self-loop) carry the token's speaker as
/// transition class, blank nodes carry the blank class `num_speakers`. The
/// result has `num_speakers + 1` transition classes.
///
/// `events` may interleave speakers but each speaker's own events must be
/// frame-sorted.
pub fn build_multispeaker_graph(
    num_labels: usize,
    events: &[AlignmentEvent],
    energies: &[f64],
) -> Result<LabelGraph> {
    let num_speakers = energies.len();
    if num_speakers == 0 {
        return Err(Error::InvalidArgument(
            "at least one speaker is required".into(),
        ));
    }
    if events.is_empty() {
        return Err(Error::InvalidArgument("no token events".into()));
    }
    let mut last_frame = vec![0usize; num_speakers];
    for ev in events {
        if ev.speaker >= num_speakers {
            return Err(Error::InvalidArgument(format!(
                "event speaker {} out of range for {num_speakers} speakers",
                ev.speaker
            )));
        }
        if ev.token == BLANK || ev.token >= num_labels {
            return Err(Error::InvalidArgument(format!(
                "event token {} must be non-blank and below {num_labels}",
                ev.token
            )));
        }
        if ev.frame < last_frame[ev.speaker] {
            return Err(Error::InvalidArgument(format!(
                "events of speaker {} are not frame-sorted",
                ev.speaker
            )));
        }
        last_frame[ev.speaker] = ev.frame;
    }
    let ordered = order_events(events, energies);
    let tokens: Vec<Token> = ordered
        .iter()
        .map(|ev| Token {
            label: ev.token,
            class: ev.speaker,
        })
        .collect();
    Ok(linear_graph(
        &tokens,
        num_speakers,
        num_labels,
        num_speakers + 1,
    ))
}
