//! Viterbi alignment and chronological merging of per-speaker token onsets.

use std::collections::HashSet;
use std::fmt::Write as _;

use ndarray::Array2;

use crate::graph::{AlignmentEvent, LabelGraph, BLANK};
use crate::logmath::LOG_ZERO;
use crate::loss::{LogPosteriors, PosteriorSequence};
use crate::{Error, Result};

/// A frame-level path through a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameAlignment {
    /// Emitting node per frame, length `T`.
    pub nodes: Vec<usize>,
    /// `(frame, token)` for every non-blank node the path enters, using the
    /// first frame spent in that node. Frames are zero-based.
    pub onsets: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiAlignment {
    pub alignment: FrameAlignment,
    pub log_prob: f64,
}

/// The single most probable path under `Π W·ω·y` (with the weight of the
/// edge into the end node), by max-plus dynamic programming.
pub fn viterbi_align(g: &LabelGraph, p: &PosteriorSequence) -> Result<ViterbiAlignment> {
    let lp = LogPosteriors::from_posteriors(p);
    lp.check_against(g)?;
    let frames = lp.frames();
    let end = g.end();
    let incoming = g.incoming();

    let mut score = Array2::from_elem((frames + 1, g.num_nodes()), LOG_ZERO);
    let mut back = Array2::from_elem((frames + 1, g.num_nodes()), usize::MAX);
    score[[0, 0]] = 0.0;
    for t in 1..=frames {
        for node in g.emitting() {
            let mut best = LOG_ZERO;
            let mut arg = usize::MAX;
            for &ei in &incoming[node] {
                let e = &g.edges[ei];
                let s = score[[t - 1, e.src]] + e.weight.ln() + lp.trans[[t - 1, e.trans]];
                if s > best {
                    best = s;
                    arg = ei;
                }
            }
            if arg != usize::MAX {
                let k = g.labels[node].expect("emitting node");
                score[[t, node]] = best + lp.label[[t - 1, k]];
                back[[t, node]] = arg;
            }
        }
    }

    let mut best = LOG_ZERO;
    let mut last = usize::MAX;
    for e in g.edges.iter().filter(|e| e.dst == end && e.src != 0) {
        let s = score[[frames, e.src]] + e.weight.ln();
        if s > best {
            best = s;
            last = e.src;
        }
    }
    if last == usize::MAX {
        return Err(Error::ZeroProbability);
    }

    let mut nodes = vec![0; frames];
    let mut node = last;
    for t in (1..=frames).rev() {
        nodes[t - 1] = node;
        node = g.edges[back[[t, node]]].src;
    }
    debug_assert_eq!(node, 0);

    let onsets = onsets_of(g, &nodes);
    Ok(ViterbiAlignment {
        alignment: FrameAlignment { nodes, onsets },
        log_prob: best,
    })
}

fn onsets_of(g: &LabelGraph, nodes: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (t, &node) in nodes.iter().enumerate() {
        let label = g.labels[node].expect("emitting node");
        if label != BLANK && (t == 0 || nodes[t - 1] != node) {
            out.push((t, label));
        }
    }
    out
}

/// Stable chronological ordering; frame ties go to the speaker with the
/// higher energy, then the lower speaker index.
pub fn order_events(events: &[AlignmentEvent], energies: &[f64]) -> Vec<AlignmentEvent> {
    let mut out = events.to_vec();
    out.sort_by(|a, b| {
        a.frame
            .cmp(&b.frame)
            .then_with(|| energies[b.speaker].total_cmp(&energies[a.speaker]))
            .then_with(|| a.speaker.cmp(&b.speaker))
    });
    out
}

/// Merges per-speaker `(frame, token)` onset lists into one chronological
/// event list. Speaker `s` is the index of its list in `onsets`.
pub fn merge_alignments(onsets: &[Vec<(usize, usize)>], energies: &[f64]) -> Vec<AlignmentEvent> {
    assert_eq!(onsets.len(), energies.len(), "one energy per speaker");
    let events: Vec<AlignmentEvent> = onsets
        .iter()
        .enumerate()
        .flat_map(|(speaker, list)| {
            list.iter().map(move |&(frame, token)| AlignmentEvent {
                frame,
                token,
                speaker,
            })
        })
        .collect();
    order_events(&events, energies)
}

/// Fraction of onsets that share their frame with an onset of another
/// speaker.
pub fn concurrency_rate(onsets: &[Vec<(usize, usize)>]) -> f64 {
    let total: usize = onsets.iter().map(Vec::len).sum();
    if onsets.len() < 2 || total == 0 {
        return 0.0;
    }
    let frames: Vec<HashSet<usize>> = onsets
        .iter()
        .map(|l| l.iter().map(|&(f, _)| f).collect())
        .collect();
    let concurrent = onsets
        .iter()
        .enumerate()
        .flat_map(|(s, list)| list.iter().map(move |&(f, _)| (s, f)))
        .filter(|&(s, f)| {
            frames
                .iter()
                .enumerate()
                .any(|(o, set)| o != s && set.contains(&f))
        })
        .count();
    concurrent as f64 / total as f64
}

/// Parses an onset file: one `frame token speaker` triple per line. Blank
/// lines and lines starting with `#` are skipped.
pub fn parse_onsets(text: &str) -> Result<Vec<AlignmentEvent>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidArgument(format!("onsets line {}: {line:?}", n + 1)))?;
        let [frame, token, speaker] = fields[..] else {
            return Err(Error::InvalidArgument(format!(
                "onsets line {}: expected `frame token speaker`",
                n + 1
            )));
        };
        out.push(AlignmentEvent {
            frame,
            token,
            speaker,
        });
    }
    Ok(out)
}

pub fn format_onsets(events: &[AlignmentEvent]) -> String {
    let mut out = String::new();
    for e in events {
        writeln!(out, "{} {} {}", e.frame, e.token, e.speaker).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_ctc_graph, unfold_paths, Edge, DEFAULT_PATH_CAP};
    use crate::loss::loss;
    use crate::random::{random_graph, random_posteriors};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ev(frame: usize, token: usize, speaker: usize) -> AlignmentEvent {
        AlignmentEvent {
            frame,
            token,
            speaker,
        }
    }

    /// Path probability computed directly from the definition.
    fn path_prob(g: &LabelGraph, p: &PosteriorSequence, path: &[usize]) -> f64 {
        let frames = p.frames();
        let edge = |s: usize, d: usize| g.edges.iter().find(|e| e.src == s && e.dst == d).unwrap();
        let mut prob = 1.0;
        for t in 0..frames {
            let e = edge(path[t], path[t + 1]);
            prob *= e.weight
                * p.trans_post()[[t, e.trans]]
                * p.label_post()[[t, g.labels[path[t + 1]].unwrap()]];
        }
        prob * edge(path[frames], path[frames + 1]).weight
    }

    #[test]
    fn single_path_graph() {
        let g = LabelGraph {
            num_labels: 2,
            num_transitions: 1,
            labels: vec![None, Some(1), None],
            edges: vec![
                Edge::new(0, 1, 0.5, 0),
                Edge::new(1, 1, 1.0, 0),
                Edge::new(1, 2, 1.0, 0),
            ],
        };
        let p =
            PosteriorSequence::new(array![[0.2, 0.8], [0.4, 0.6]], array![[1.0], [1.0]]).unwrap();
        let v = viterbi_align(&g, &p).unwrap();
        assert_eq!(v.alignment.nodes, vec![1, 1]);
        assert_eq!(v.alignment.onsets, vec![(0, 1)]);
        assert!((v.log_prob.exp() - 0.5 * 0.8 * 0.6).abs() < 1e-15);
    }

    #[test]
    fn matches_exhaustive_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut done = 0;
        while done < 100 {
            let k = rng.random_range(1..=4);
            let i = rng.random_range(1..=3);
            let frames = rng.random_range(1..=7);
            let g = random_graph(&mut rng, 6, k, i, (0.1, 2.0));
            let p = random_posteriors(&mut rng, frames, k, i);
            let paths = unfold_paths(&g, frames, DEFAULT_PATH_CAP).unwrap();
            if paths.is_empty() {
                assert!(viterbi_align(&g, &p).is_err());
                continue;
            }
            let best = paths
                .iter()
                .max_by(|a, b| path_prob(&g, &p, a).total_cmp(&path_prob(&g, &p, b)))
                .unwrap();
            let v = viterbi_align(&g, &p).unwrap();
            assert_eq!(&v.alignment.nodes[..], &best[1..=frames]);
            assert!((v.log_prob - path_prob(&g, &p, best).ln()).abs() < 1e-12);
            assert!(v.log_prob <= -loss(&g, &p).unwrap() + 1e-12);
            done += 1;
        }
    }

    #[test]
    fn peaked_posteriors_recover_path() {
        // labels a b over 6 frames: a a - b b -
        let g = build_ctc_graph(&[1, 2], 3, 1, 0).unwrap();
        let hot = |k: usize| {
            let mut r = [0.0005; 3];
            r[k] = 0.999;
            r
        };
        let seq = [1, 1, 0, 2, 2, 0];
        let label = Array2::from_shape_fn((6, 3), |(t, k)| hot(seq[t])[k]);
        let p = PosteriorSequence::new(label, Array2::ones((6, 1))).unwrap();
        let v = viterbi_align(&g, &p).unwrap();
        assert_eq!(v.alignment.nodes, vec![2, 2, 3, 4, 4, 5]);
        assert_eq!(v.alignment.onsets, vec![(0, 1), (3, 2)]);
        assert!(v.log_prob.exp() >= 0.9);
    }

    #[test]
    fn merge_orders_by_frame_then_energy() {
        let merged = merge_alignments(&[vec![(2, 1), (5, 2)], vec![(3, 3)]], &[1.0, 0.5]);
        assert_eq!(merged, vec![ev(2, 1, 0), ev(3, 3, 1), ev(5, 2, 0)]);
        let tie = merge_alignments(&[vec![(4, 1)], vec![(4, 3)]], &[0.3, 0.9]);
        assert_eq!(tie, vec![ev(4, 3, 1), ev(4, 1, 0)]);
        let disjoint = merge_alignments(&[vec![(0, 1), (1, 2)], vec![(5, 3), (7, 1)]], &[1.0, 2.0]);
        assert_eq!(
            disjoint,
            vec![ev(0, 1, 0), ev(1, 2, 0), ev(5, 3, 1), ev(7, 1, 1)]
        );
    }

    #[test]
    fn merging_one_speaker_is_identity() {
        let list = vec![(0, 2), (3, 1), (3, 1), (9, 4)];
        let merged = merge_alignments(&[list.clone()], &[1.0]);
        let back: Vec<(usize, usize)> = merged.iter().map(|e| (e.frame, e.token)).collect();
        assert_eq!(back, list);
    }

    #[test]
    fn concurrency_extremes() {
        assert_eq!(
            concurrency_rate(&[vec![(0, 1), (2, 1)], vec![(1, 2), (3, 2)]]),
            0.0
        );
        let same = vec![(0, 1), (4, 2)];
        assert_eq!(concurrency_rate(&[same.clone(), same]), 1.0);
        assert_eq!(
            concurrency_rate(&[vec![(0, 1), (1, 1)], vec![(1, 2)]]),
            2.0 / 3.0
        );
        assert_eq!(concurrency_rate(&[vec![(0, 1)]]), 0.0);
    }

    #[test]
    fn onset_file_round_trip() {
        let events = vec![ev(2, 1, 0), ev(3, 3, 1)];
        let text = format_onsets(&events);
        assert_eq!(text, "2 1 0\n3 3 1\n");
        assert_eq!(
            parse_onsets(&format!("# comment\n{text}\n")).unwrap(),
            events
        );
        assert!(parse_onsets("1 2").is_err());
        assert!(parse_onsets("1 x 0").is_err());
    }
}
