//! The GTC-e loss and its gradients.
//!
//! For a path `π = (start, π1, …, πT, end)` the path probability is
//!
//! ```text
//! Π_{t=1..T} W(π_{t-1}, π_t) · ω^t[I(π_{t-1}, π_t)] · y^t[l(π_t)]  ·  W(π_T, end)
//! ```
//!
//! The edge into the end node contributes its static weight only: no
//! transition posterior is consumed after the last frame. The loss is the
//! negative log of the sum over all paths. Everything runs in the log
//! domain in double precision.

mod fb;
pub mod gradcheck;
mod oracle;

use ndarray::{Array2, Axis};

pub use fb::{
    backward, consistency_profile, forward, forward_backward, ConsistencyProfile, FbTables,
    FrameMismatch,
};
pub use oracle::brute_force_loss;

use crate::graph::LabelGraph;
use crate::logmath::log_softmax;
use crate::{Error, Result};

/// Posteriors are clamped below at this value before taking logs.
pub const MIN_PROB: f64 = 1e-300;

const ROW_SUM_TOL: f64 = 1e-12;

/// Per-frame label and transition posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSequence {
    label_post: Array2<f64>,
    trans_post: Array2<f64>,
}

impl PosteriorSequence {
    /// Checks that both matrices have the same number of frames and that
    /// every row is a distribution. Exact zeros are clamped to
    /// [`MIN_PROB`].
    pub fn new(label_post: Array2<f64>, trans_post: Array2<f64>) -> Result<Self> {
        if label_post.nrows() != trans_post.nrows() {
            return Err(Error::Dimension(format!(
                "label posteriors have {} frames, transition posteriors {}",
                label_post.nrows(),
                trans_post.nrows()
            )));
        }
        if label_post.nrows() == 0 || label_post.ncols() == 0 || trans_post.ncols() == 0 {
            return Err(Error::Dimension(
                "posterior matrices must be non-empty".into(),
            ));
        }
        for (name, m) in [("label", &label_post), ("transition", &trans_post)] {
            for (t, row) in m.rows().into_iter().enumerate() {
                if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    return Err(Error::InvalidArgument(format!(
                        "{name} posterior row {t} has entries outside [0, 1]"
                    )));
                }
                let s = row.sum();
                if (s - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "{name} posterior row {t} sums to {s}"
                    )));
                }
            }
        }
        let clamp = |m: Array2<f64>| m.mapv(|v| v.max(MIN_PROB));
        Ok(PosteriorSequence {
            label_post: clamp(label_post),
            trans_post: clamp(trans_post),
        })
    }

    pub fn frames(&self) -> usize {
        self.label_post.nrows()
    }

    pub fn num_labels(&self) -> usize {
        self.label_post.ncols()
    }

    pub fn num_transitions(&self) -> usize {
        self.trans_post.ncols()
    }

    /// `y[t][k]`, frame `t` zero-based.
    pub fn label_post(&self) -> &Array2<f64> {
        &self.label_post
    }

    /// `ω[t][i]`, frame `t` zero-based.
    pub fn trans_post(&self) -> &Array2<f64> {
        &self.trans_post
    }
}

/// Unnormalised network outputs for labels and transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitSequence {
    pub label_logits: Array2<f64>,
    pub trans_logits: Array2<f64>,
}

impl LogitSequence {
    pub fn new(label_logits: Array2<f64>, trans_logits: Array2<f64>) -> Result<Self> {
        if label_logits.nrows() != trans_logits.nrows() {
            return Err(Error::Dimension(format!(
                "label logits have {} frames, transition logits {}",
                label_logits.nrows(),
                trans_logits.nrows()
            )));
        }
        if label_logits.nrows() == 0 || label_logits.ncols() == 0 || trans_logits.ncols() == 0 {
            return Err(Error::Dimension("logit matrices must be non-empty".into()));
        }
        if label_logits
            .iter()
            .chain(trans_logits.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("logits must be finite".into()));
        }
        Ok(LogitSequence {
            label_logits,
            trans_logits,
        })
    }

    pub fn frames(&self) -> usize {
        self.label_logits.nrows()
    }
}

/// Loss with gradients with respect to both sets of logits.
#[derive(Debug, Clone, PartialEq)]
pub struct GradOutput {
    pub loss: f64,
    pub dlabel: Array2<f64>,
    pub dtrans: Array2<f64>,
}

/// Log posteriors, the form every recursion consumes.
#[derive(Debug, Clone)]
pub(crate) struct LogPosteriors {
    pub label: Array2<f64>,
    pub trans: Array2<f64>,
}

impl LogPosteriors {
    pub fn from_posteriors(p: &PosteriorSequence) -> Self {
        LogPosteriors {
            label: p.label_post.mapv(|v| v.max(MIN_PROB).ln()),
            trans: p.trans_post.mapv(|v| v.max(MIN_PROB).ln()),
        }
    }

    pub fn from_logits(l: &LogitSequence) -> Self {
        let floor = MIN_PROB.ln();
        let rows = |m: &Array2<f64>| {
            let mut out = m.clone();
            for mut row in out.rows_mut() {
                let ls = log_softmax(row.as_slice().expect("standard layout"));
                for (v, s) in row.iter_mut().zip(ls) {
                    *v = s.max(floor);
                }
            }
            out
        };
        LogPosteriors {
            label: rows(&l.label_logits.as_standard_layout().to_owned()),
            trans: rows(&l.trans_logits.as_standard_layout().to_owned()),
        }
    }

    pub fn frames(&self) -> usize {
        self.label.nrows()
    }

    pub fn check_against(&self, g: &LabelGraph) -> Result<()> {
        if self.label.ncols() != g.num_labels {
            return Err(Error::Dimension(format!(
                "posteriors have {} labels, graph expects {}",
                self.label.ncols(),
                g.num_labels
            )));
        }
        if self.trans.ncols() != g.num_transitions {
            return Err(Error::Dimension(format!(
                "posteriors have {} transition classes, graph expects {}",
                self.trans.ncols(),
                g.num_transitions
            )));
        }
        g.validate().into_result()
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &LogitSequence) -> PosteriorSequence {
    let lp = LogPosteriors::from_logits(logits);
    let exp_rows = |m: Array2<f64>| {
        let mut p = m.mapv(f64::exp);
        for mut row in p.axis_iter_mut(Axis(0)) {
            let s = row.sum();
            row.mapv_inplace(|v| (v / s).max(MIN_PROB));
        }
        p
    };
    PosteriorSequence {
        label_post: exp_rows(lp.label),
        trans_post: exp_rows(lp.trans),
    }
}

/// `-ln p(G|X)`.
pub fn loss(g: &LabelGraph, p: &PosteriorSequence) -> Result<f64> {
    let lp = LogPosteriors::from_posteriors(p);
    lp.check_against(g)?;
    let alpha = fb::forward_table(g, &lp);
    Ok(-fb::finite_log_prob(fb::log_prob_from_alpha(g, &alpha))?)
}

/// Loss computed straight from logits, forward pass only.
pub fn loss_from_logits(g: &LabelGraph, logits: &LogitSequence) -> Result<f64> {
    let lp = LogPosteriors::from_logits(logits);
    lp.check_against(g)?;
    let alpha = fb::forward_table(g, &lp);
    Ok(-fb::finite_log_prob(fb::log_prob_from_alpha(g, &alpha))?)
}

/// Loss and exact gradients with respect to label and transition logits.
///
/// Label gradient per frame `t` and label `k`:
/// `y[t][k] - (1/p) Σ_{g: l(g)=k} α_t(g) β_t(g) / y[t][k]`.
///
/// Transition gradient per frame `t` and class `i`:
/// `ω[t][i] - (ω[t][i]/p) Σ_{(g,g') of class i} α_{t-1}(g) W(g,g') β_t(g')`.
pub fn gradients(g: &LabelGraph, logits: &LogitSequence) -> Result<GradOutput> {
    let lp = LogPosteriors::from_logits(logits);
    lp.check_against(g)?;
    fb::gradients_from_log_posteriors(g, &lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use ndarray::array;

    #[test]
    fn softmax_symmetric_row() {
        let l = LogitSequence::new(array![[0.0, 0.0]], array![[1000.0, 1000.0]]).unwrap();
        let p = softmax_rows(&l);
        assert_eq!(p.label_post(), &array![[0.5, 0.5]]);
        assert_eq!(p.trans_post(), &array![[0.5, 0.5]]);
    }

    #[test]
    fn softmax_closed_form() {
        let l = LogitSequence::new(array![[3f64.ln(), 0.0]], array![[0.0]]).unwrap();
        let p = softmax_rows(&l);
        assert!((p.label_post()[[0, 0]] - 0.75).abs() < 1e-15);
        assert!((p.label_post()[[0, 1]] - 0.25).abs() < 1e-15);
        assert_eq!(p.trans_post()[[0, 0]], 1.0);
    }

    #[test]
    fn posterior_validation() {
        assert!(PosteriorSequence::new(array![[0.5, 0.6]], array![[1.0]]).is_err());
        assert!(PosteriorSequence::new(array![[1.5, -0.5]], array![[1.0]]).is_err());
        assert!(PosteriorSequence::new(array![[0.5, 0.5]], array![[1.0], [1.0]]).is_err());
        let p = PosteriorSequence::new(array![[1.0, 0.0]], array![[1.0]]).unwrap();
        assert_eq!(p.label_post()[[0, 1]], MIN_PROB);
        assert!(LogitSequence::new(array![[f64::NAN]], array![[0.0]]).is_err());
    }

    fn two_path() -> (LabelGraph, PosteriorSequence) {
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
        (g, p)
    }

    #[test]
    fn two_path_loss_is_ln2() {
        let (g, p) = two_path();
        assert!((loss(&g, &p).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn deterministic_path_has_zero_loss_and_gradient() {
        let g = LabelGraph {
            num_labels: 2,
            num_transitions: 1,
            labels: vec![None, Some(1), None],
            edges: vec![Edge::new(0, 1, 1.0, 0), Edge::new(1, 2, 1.0, 0)],
        };
        let p = PosteriorSequence::new(array![[0.0, 1.0]], array![[1.0]]).unwrap();
        assert_eq!(loss(&g, &p).unwrap(), 0.0);

        // blank logit far below: y_a = 1 up to 1e-300
        let l = LogitSequence::new(array![[-800.0, 0.0]], array![[0.0]]).unwrap();
        let out = gradients(&g, &l).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.dlabel.iter().all(|&v| v.abs() < 1e-299));
        assert!(out.dtrans.iter().all(|&v| v == 0.0));

        // one-symbol alphabet: posteriors are exactly 1
        let g1 = LabelGraph {
            num_labels: 1,
            labels: vec![None, Some(0), None],
            ..g
        };
        let l1 = LogitSequence::new(array![[0.3], [-2.0]], array![[1.0], [4.0]]).unwrap();
        let g1 = LabelGraph {
            edges: vec![
                Edge::new(0, 1, 1.0, 0),
                Edge::new(1, 1, 1.0, 0),
                Edge::new(1, 2, 1.0, 0),
            ],
            ..g1
        };
        let out = gradients(&g1, &l1).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out
            .dlabel
            .iter()
            .chain(out.dtrans.iter())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn zero_probability_is_an_error() {
        let g = LabelGraph {
            num_labels: 2,
            num_transitions: 1,
            labels: vec![None, Some(1), None],
            edges: vec![Edge::new(0, 1, 0.0, 0), Edge::new(1, 2, 1.0, 0)],
        };
        let p = PosteriorSequence::new(array![[0.5, 0.5]], array![[1.0]]).unwrap();
        assert!(matches!(loss(&g, &p), Err(Error::ZeroProbability)));
        // no path of length 2 exists without a self-loop
        let g2 = LabelGraph {
            edges: vec![Edge::new(0, 1, 1.0, 0), Edge::new(1, 2, 1.0, 0)],
            ..g
        };
        let p2 =
            PosteriorSequence::new(array![[0.5, 0.5], [0.5, 0.5]], array![[1.0], [1.0]]).unwrap();
        assert!(matches!(loss(&g2, &p2), Err(Error::ZeroProbability)));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (g, _) = two_path();
        let p = PosteriorSequence::new(array![[0.2, 0.3, 0.5]], array![[0.5, 0.5]]).unwrap();
        assert!(matches!(loss(&g, &p), Err(Error::Dimension(_))));
    }
}
