use super::PosteriorSequence;
use crate::graph::{unfold_paths, LabelGraph, DEFAULT_PATH_CAP};
use crate::{Error, Result};

/// Loss by explicit enumeration of every path, in probability space.
///
/// Parallel edges between two consecutive nodes of a path are summed at
/// that step. Intended for test-scale instances only.
pub fn brute_force_loss(g: &LabelGraph, p: &PosteriorSequence) -> Result<f64> {
    if p.num_labels() != g.num_labels || p.num_transitions() != g.num_transitions {
        return Err(Error::Dimension("posteriors do not match graph".into()));
    }
    let frames = p.frames();
    let y = p.label_post();
    let w = p.trans_post();
    let end = g.end();
    let step = |src: usize, dst: usize, t: usize| -> f64 {
        g.edges
            .iter()
            .filter(|e| e.src == src && e.dst == dst)
            .map(|e| {
                if dst == end {
                    e.weight
                } else {
                    e.weight * w[[t, e.trans]]
                }
            })
            .sum()
    };

    let mut total = 0.0;
    for path in unfold_paths(g, frames, DEFAULT_PATH_CAP)? {
        let mut prob = 1.0;
        for t in 0..frames {
            let (src, dst) = (path[t], path[t + 1]);
            prob *= step(src, dst, t) * y[[t, g.labels[dst].unwrap()]];
        }
        prob *= step(path[frames], end, frames);
        total += prob;
    }
    if total > 0.0 {
        Ok(-total.ln())
    } else {
        Err(Error::ZeroProbability)
    }
}
