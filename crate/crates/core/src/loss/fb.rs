//! Log-domain forward-backward over a [`LabelGraph`].
//!
//! Tables are indexed `[t][g]` with `t = 0..=T`; posterior matrices are
//! indexed by zero-based frame, so frame `t` reads row `t - 1`.
//!
//! * `α_t(g)` covers frames `1..=t` and includes `y^t` of node `g`.
//! * `β_t(g)` covers frames `t..=T`: `y^t` of `g`, then `W·ω^{τ+1}·y^{τ+1}`
//!   for each later step, then the static weight of the edge into the end
//!   node. `β_0(start)` is the total probability.
//!
//! With this bookkeeping `Σ_g α_t(g) β_t(g) / y^t(l(g))` and
//! `Σ_(g,g') α_{t-1}(g) W ω^t β_t(g')` both equal `p(G|X)` at every `t`.

use ndarray::Array2;

use super::{GradOutput, LogPosteriors, PosteriorSequence};
use crate::graph::LabelGraph;
use crate::logmath::{LogAcc, LOG_ZERO};
use crate::{Error, Result};

/// Forward and backward lattices, `(T+1) × (G+2)` each.
#[derive(Debug, Clone, PartialEq)]
pub struct FbTables {
    pub log_alpha: Array2<f64>,
    pub log_beta: Array2<f64>,
}

impl FbTables {
    /// `ln p(G|X)` read off the backward table.
    pub fn log_prob(&self) -> f64 {
        self.log_beta[[0, 0]]
    }
}

pub(crate) fn forward_table(g: &LabelGraph, lp: &LogPosteriors) -> Array2<f64> {
    let frames = lp.frames();
    let end = g.end();
    let incoming = g.incoming();
    let mut la = Array2::from_elem((frames + 1, g.num_nodes()), LOG_ZERO);
    la[[0, 0]] = 0.0;
    for t in 1..=frames {
        for node in g.emitting() {
            let mut acc = LogAcc::default();
            for &ei in &incoming[node] {
                let e = &g.edges[ei];
                let prev = la[[t - 1, e.src]];
                if prev == LOG_ZERO {
                    continue;
                }
                acc.add(prev + e.weight.ln() + lp.trans[[t - 1, e.trans]]);
            }
            if acc.0 != LOG_ZERO {
                let label = g.labels[node].expect("emitting node");
                la[[t, node]] = acc.0 + lp.label[[t - 1, label]];
            }
        }
    }
    debug_assert!(la.column(end).iter().all(|&v| v == LOG_ZERO));
    la
}

pub(crate) fn backward_table(g: &LabelGraph, lp: &LogPosteriors) -> Array2<f64> {
    let frames = lp.frames();
    let end = g.end();
    let outgoing = g.outgoing();
    let mut lb = Array2::from_elem((frames + 1, g.num_nodes()), LOG_ZERO);

    for node in g.emitting() {
        let mut acc = LogAcc::default();
        for &ei in &outgoing[node] {
            let e = &g.edges[ei];
            if e.dst == end {
                acc.add(e.weight.ln());
            }
        }
        if acc.0 != LOG_ZERO {
            let label = g.labels[node].expect("emitting node");
            lb[[frames, node]] = acc.0 + lp.label[[frames - 1, label]];
        }
    }
    for t in (1..frames).rev() {
        for node in g.emitting() {
            let acc = continuation(g, lp, &lb, &outgoing[node], t);
            if acc != LOG_ZERO {
                let label = g.labels[node].expect("emitting node");
                lb[[t, node]] = acc + lp.label[[t - 1, label]];
            }
        }
    }
    lb[[0, 0]] = continuation(g, lp, &lb, &outgoing[0], 0);
    lb
}

/// `ln Σ_{e: g→g'} W ω^{t+1} β_{t+1}(g')` over emitting successors.
fn continuation(
    g: &LabelGraph,
    lp: &LogPosteriors,
    lb: &Array2<f64>,
    out_edges: &[usize],
    t: usize,
) -> f64 {
    let end = g.end();
    let mut acc = LogAcc::default();
    for &ei in out_edges {
        let e = &g.edges[ei];
        if e.dst == end {
            continue;
        }
        let next = lb[[t + 1, e.dst]];
        if next == LOG_ZERO {
            continue;
        }
        acc.add(e.weight.ln() + lp.trans[[t, e.trans]] + next);
    }
    acc.0
}

/// `ln p(G|X)` from the last forward row and the edges into the end node.
pub(crate) fn log_prob_from_alpha(g: &LabelGraph, la: &Array2<f64>) -> f64 {
    let frames = la.nrows() - 1;
    let end = g.end();
    let mut acc = LogAcc::default();
    for e in &g.edges {
        if e.dst == end && e.src != 0 {
            let a = la[[frames, e.src]];
            if a != LOG_ZERO {
                acc.add(a + e.weight.ln());
            }
        }
    }
    acc.0
}

pub(crate) fn finite_log_prob(log_p: f64) -> Result<f64> {
    if log_p == LOG_ZERO || log_p.is_nan() {
        Err(Error::ZeroProbability)
    } else {
        Ok(log_p)
    }
}

/// Log-domain forward table `ln α_t(g)`.
pub fn forward(g: &LabelGraph, p: &PosteriorSequence) -> Result<Array2<f64>> {
    let lp = LogPosteriors::from_posteriors(p);
    lp.check_against(g)?;
    Ok(forward_table(g, &lp))
}

/// Log-domain backward table `ln β_t(g)`.
pub fn backward(g: &LabelGraph, p: &PosteriorSequence) -> Result<Array2<f64>> {
    let lp = LogPosteriors::from_posteriors(p);
    lp.check_against(g)?;
    Ok(backward_table(g, &lp))
}

pub fn forward_backward(g: &LabelGraph, p: &PosteriorSequence) -> Result<FbTables> {
    let lp = LogPosteriors::from_posteriors(p);
    lp.check_against(g)?;
    Ok(FbTables {
        log_alpha: forward_table(g, &lp),
        log_beta: backward_table(g, &lp),
    })
}

pub(crate) fn gradients_from_log_posteriors(
    g: &LabelGraph,
    lp: &LogPosteriors,
) -> Result<GradOutput> {
    let la = forward_table(g, lp);
    let log_p = finite_log_prob(log_prob_from_alpha(g, &la))?;
    let lb = backward_table(g, lp);
    let frames = lp.frames();
    let end = g.end();

    let mut dlabel = lp.label.mapv(f64::exp);
    let mut dtrans = lp.trans.mapv(f64::exp);
    let mut occ_label = vec![LogAcc::default(); g.num_labels];
    let mut occ_trans = vec![LogAcc::default(); g.num_transitions];
    for t in 1..=frames {
        occ_label.iter_mut().for_each(|a| *a = LogAcc::default());
        occ_trans.iter_mut().for_each(|a| *a = LogAcc::default());
        for node in g.emitting() {
            let v = la[[t, node]] + lb[[t, node]];
            if v == LOG_ZERO {
                continue;
            }
            let k = g.labels[node].expect("emitting node");
            occ_label[k].add(v - lp.label[[t - 1, k]]);
        }
        for e in &g.edges {
            if e.dst == end {
                continue;
            }
            let v = la[[t - 1, e.src]] + lb[[t, e.dst]];
            if v == LOG_ZERO {
                continue;
            }
            occ_trans[e.trans].add(v + e.weight.ln() + lp.trans[[t - 1, e.trans]]);
        }
        for (k, acc) in occ_label.iter().enumerate() {
            if acc.0 != LOG_ZERO {
                dlabel[[t - 1, k]] -= (acc.0 - log_p).exp();
            }
        }
        for (i, acc) in occ_trans.iter().enumerate() {
            if acc.0 != LOG_ZERO {
                dtrans[[t - 1, i]] -= (acc.0 - log_p).exp();
            }
        }
    }
    // -0.0 + 0.0 == +0.0
    Ok(GradOutput {
        loss: -log_p + 0.0,
        dlabel,
        dtrans,
    })
}

/// Per-frame estimates of `ln p(G|X)` from both identities.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyProfile {
    /// `ln Σ_g α_t(g) β_t(g) / y^t(l(g))`, one entry per frame `t = 1..=T`.
    pub node_form: Vec<f64>,
    /// `ln Σ_(g,g') α_{t-1}(g) W ω^t β_t(g')`, one entry per frame.
    pub edge_form: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMismatch {
    /// One-based frame index.
    pub frame: usize,
    pub form: &'static str,
    pub relative_error: f64,
}

impl ConsistencyProfile {
    /// Largest relative deviation of any estimate from `exp(log_p)`.
    pub fn max_relative_error(&self, log_p: f64) -> f64 {
        self.node_form
            .iter()
            .chain(&self.edge_form)
            .map(|&v| rel_err(v, log_p))
            .fold(0.0, f64::max)
    }

    /// First frame whose estimate deviates from `exp(log_p)` by more than
    /// `rel_tol`, if any.
    pub fn check(&self, log_p: f64, rel_tol: f64) -> std::result::Result<(), FrameMismatch> {
        for (t, (&n, &e)) in self.node_form.iter().zip(&self.edge_form).enumerate() {
            for (form, v) in [("node", n), ("edge", e)] {
                let err = rel_err(v, log_p);
                if !(err <= rel_tol) {
                    return Err(FrameMismatch {
                        frame: t + 1,
                        form,
                        relative_error: err,
                    });
                }
            }
        }
        Ok(())
    }
}

fn rel_err(log_est: f64, log_p: f64) -> f64 {
    ((log_est - log_p).exp() - 1.0).abs()
}

pub fn consistency_profile(
    g: &LabelGraph,
    p: &PosteriorSequence,
    tables: &FbTables,
) -> ConsistencyProfile {
    let lp = LogPosteriors::from_posteriors(p);
    let (la, lb) = (&tables.log_alpha, &tables.log_beta);
    let frames = lp.frames();
    let end = g.end();
    let mut node_form = Vec::with_capacity(frames);
    let mut edge_form = Vec::with_capacity(frames);
    for t in 1..=frames {
        let mut n = LogAcc::default();
        for node in g.emitting() {
            let k = g.labels[node].expect("emitting node");
            n.add(la[[t, node]] + lb[[t, node]] - lp.label[[t - 1, k]]);
        }
        let mut e_acc = LogAcc::default();
        for e in &g.edges {
            if e.dst == end {
                continue;
            }
            e_acc.add(
                la[[t - 1, e.src]] + e.weight.ln() + lp.trans[[t - 1, e.trans]] + lb[[t, e.dst]],
            );
        }
        node_form.push(n.0);
        edge_form.push(e_acc.0);
    }
    ConsistencyProfile {
        node_form,
        edge_form,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::loss::{brute_force_loss, loss};
    use crate::random::{random_graph, random_posteriors};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single() -> LabelGraph {
        LabelGraph {
            num_labels: 2,
            num_transitions: 1,
            labels: vec![None, Some(1), None],
            edges: vec![
                Edge::new(0, 1, 1.0, 0),
                Edge::new(1, 1, 1.0, 0),
                Edge::new(1, 2, 1.0, 0),
            ],
        }
    }

    #[test]
    fn forward_single_path() {
        let p = PosteriorSequence::new(array![[0.0, 1.0]], array![[1.0]]).unwrap();
        let la = forward(&single(), &p).unwrap();
        assert_eq!(la[[0, 0]], 0.0);
        assert_eq!(la[[0, 1]], LOG_ZERO);
        assert_eq!(la[[1, 1]], 0.0);
    }

    #[test]
    fn forward_two_branches() {
        let g = LabelGraph {
            num_labels: 2,
            num_transitions: 2,
            labels: vec![None, Some(0), Some(1), None],
            edges: vec![
                Edge::new(0, 1, 1.0, 0),
                Edge::new(0, 2, 1.0, 1),
                Edge::new(1, 3, 1.0, 0),
                Edge::new(2, 3, 1.0, 0),
            ],
        };
        let p = PosteriorSequence::new(array![[0.5, 0.5]], array![[0.5, 0.5]]).unwrap();
        let la = forward(&g, &p).unwrap();
        assert!((la[[1, 1]].exp() - 0.25).abs() < 1e-15);
        assert!((la[[1, 2]].exp() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn backward_single_path() {
        let p = PosteriorSequence::new(array![[0.3, 0.7]], array![[1.0]]).unwrap();
        let lb = backward(&single(), &p).unwrap();
        assert!((lb[[1, 1]] - 0.7f64.ln()).abs() < 1e-15);
        assert!((lb[[0, 0]] - 0.7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_path_profile_equals_path_product() {
        let p = PosteriorSequence::new(
            array![[0.3, 0.7], [0.4, 0.6], [0.9, 0.1]],
            array![[1.0], [1.0], [1.0]],
        )
        .unwrap();
        let tables = forward_backward(&single(), &p).unwrap();
        let prof = consistency_profile(&single(), &p, &tables);
        let want = (0.7f64 * 0.6 * 0.1).ln();
        for v in prof.node_form.iter().chain(&prof.edge_form) {
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn random_instances_agree_with_oracle_and_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let k = rng.random_range(1..=4);
            let i = rng.random_range(1..=3);
            let frames = rng.random_range(1..=8);
            let g = random_graph(&mut rng, 6, k, i, (0.1, 2.0));
            let p = random_posteriors(&mut rng, frames, k, i);
            let brute = brute_force_loss(&g, &p);
            let fast = loss(&g, &p);
            match (brute, fast) {
                (Ok(b), Ok(f)) => {
                    assert!((b - f).abs() <= 1e-10, "{b} vs {f}");
                    let tables = forward_backward(&g, &p).unwrap();
                    assert!((tables.log_prob() + f).abs() < 1e-10);
                    let prof = consistency_profile(&g, &p, &tables);
                    assert!(prof.check(-f, 1e-10).is_ok(), "{prof:?}");
                }
                (Err(Error::ZeroProbability), Err(Error::ZeroProbability)) => {}
                other => panic!("oracle and loss disagree: {other:?}"),
            }
        }
    }

    #[test]
    fn corrupted_beta_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = crate::graph::build_ctc_graph(&[1, 2], 3, 2, 1).unwrap();
        let p = random_posteriors(&mut rng, 5, 3, 2);
        let mut tables = forward_backward(&g, &p).unwrap();
        let log_p = tables.log_prob();
        tables.log_beta[[3, 2]] += 0.5;
        let prof = consistency_profile(&g, &p, &tables);
        let bad = prof.check(log_p, 1e-10).unwrap_err();
        assert_eq!(bad.frame, 3);
    }

    /// Reversing a palindromic linear graph maps β of the original onto α
    /// of the reversed instance, up to the y/ω frame offset.
    #[test]
    fn time_reversed_symmetric_graph() {
        // start -> a(loop) -> b(loop) -> a'(loop) -> end, a' labelled like a
        let g = LabelGraph {
            num_labels: 3,
            num_transitions: 1,
            labels: vec![None, Some(1), Some(2), Some(1), None],
            edges: vec![
                Edge::new(0, 1, 1.0, 0),
                Edge::new(1, 1, 1.0, 0),
                Edge::new(1, 2, 1.0, 0),
                Edge::new(2, 2, 1.0, 0),
                Edge::new(2, 3, 1.0, 0),
                Edge::new(3, 3, 1.0, 0),
                Edge::new(3, 4, 1.0, 0),
            ],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let frames = 6;
        let p = random_posteriors(&mut rng, frames, 3, 1);
        let mut rev_label = p.label_post().clone();
        rev_label.invert_axis(ndarray::Axis(0));
        let p_rev = PosteriorSequence::new(rev_label, p.trans_post().clone()).unwrap();
        let lb = backward(&g, &p).unwrap();
        let la_rev = forward(&g, &p_rev).unwrap();
        // node g in the original corresponds to node G+1-g in the reversed graph,
        // which for this palindrome is the same topology.
        for t in 1..=frames {
            for node in 1..=3 {
                let mirrored = 4 - node;
                let a = la_rev[[frames + 1 - t, mirrored]];
                let b = lb[[t, node]];
                assert!(
                    (a - b).abs() < 1e-12 || (a == LOG_ZERO && b == LOG_ZERO),
                    "t={t} g={node}"
                );
            }
        }
    }
}
