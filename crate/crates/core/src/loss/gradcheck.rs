//! Central finite differences against the analytic gradients.

use ndarray::Array2;

use super::{loss_from_logits, GradOutput, LogitSequence};
use crate::graph::LabelGraph;
use crate::Result;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
/// Denominator floor of the relative error.
pub const DENOMINATOR_CLAMP: f64 = 1e-8;
/// Steps at or above this are too coarse for a meaningful comparison.
pub const UNRELIABLE_STEP: f64 = 1e-2;

/// `(dL/du, dL/dh)` by central differences with step `step`.
pub fn numeric_gradients(
    g: &LabelGraph,
    logits: &LogitSequence,
    step: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut work = logits.clone();
    let mut dlabel = Array2::zeros(logits.label_logits.dim());
    for idx in indices(&logits.label_logits) {
        let orig = work.label_logits[idx];
        work.label_logits[idx] = orig + step;
        let plus = loss_from_logits(g, &work)?;
        work.label_logits[idx] = orig - step;
        let minus = loss_from_logits(g, &work)?;
        work.label_logits[idx] = orig;
        dlabel[idx] = (plus - minus) / (2.0 * step);
    }
    let mut dtrans = Array2::zeros(logits.trans_logits.dim());
    for idx in indices(&logits.trans_logits) {
        let orig = work.trans_logits[idx];
        work.trans_logits[idx] = orig + step;
        let plus = loss_from_logits(g, &work)?;
        work.trans_logits[idx] = orig - step;
        let minus = loss_from_logits(g, &work)?;
        work.trans_logits[idx] = orig;
        dtrans[idx] = (plus - minus) / (2.0 * step);
    }
    Ok((dlabel, dtrans))
}

fn indices(m: &Array2<f64>) -> Vec<(usize, usize)> {
    let (r, c) = m.dim();
    (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).collect()
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOMINATOR_CLAMP)
}

/// Comparison of one gradient tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub max_relative_error: f64,
    pub worst_index: (usize, usize),
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

impl TensorCheck {
    pub fn compare(analytic: &Array2<f64>, numeric: &Array2<f64>) -> Self {
        let mut out = TensorCheck {
            max_relative_error: 0.0,
            worst_index: (0, 0),
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
        };
        for ((idx, &a), &n) in analytic.indexed_iter().zip(numeric.iter()) {
            let err = relative_error(a, n);
            if err > out.max_relative_error || err.is_nan() {
                out = TensorCheck {
                    max_relative_error: err,
                    worst_index: idx,
                    analytic_at_worst: a,
                    numeric_at_worst: n,
                };
            }
        }
        out
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_relative_error <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub label: TensorCheck,
    pub trans: TensorCheck,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.label.passes(tol) && self.trans.passes(tol)
    }
}

/// Compares `analytic` (normally from [`super::gradients`]) with central
/// differences of the loss.
pub fn check_gradients(
    g: &LabelGraph,
    logits: &LogitSequence,
    analytic: &GradOutput,
    step: f64,
) -> Result<GradCheckReport> {
    let (nl, nt) = numeric_gradients(g, logits, step)?;
    Ok(GradCheckReport {
        label: TensorCheck::compare(&analytic.dlabel, &nl),
        trans: TensorCheck::compare(&analytic.dtrans, &nt),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{gradients, loss, softmax_rows};
    use crate::random::{random_graph, random_logits};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 30 {
            let k = rng.random_range(2..=4);
            let i = rng.random_range(1..=3);
            let frames = rng.random_range(1..=6);
            let g = random_graph(&mut rng, 5, k, i, (0.1, 2.0));
            let l = random_logits(&mut rng, frames, k, i, 2.0);
            let Ok(out) = gradients(&g, &l) else { continue };
            let p = softmax_rows(&l);
            assert!((out.loss - loss(&g, &p).unwrap()).abs() < 1e-12);
            let rep = check_gradients(&g, &l, &out, DEFAULT_STEP).unwrap();
            assert!(rep.passes(DEFAULT_TOLERANCE), "{rep:?}");
            for row in out.dlabel.rows().into_iter().chain(out.dtrans.rows()) {
                assert!(row.sum().abs() < 1e-9);
            }
            checked += 1;
        }
    }

    #[test]
    fn corrupted_gradient_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = crate::graph::build_ctc_graph(&[1, 2], 3, 2, 1).unwrap();
        let l = random_logits(&mut rng, 4, 3, 2, 1.0);
        let mut out = gradients(&g, &l).unwrap();
        out.dtrans[[1, 0]] += 1e-3;
        let rep = check_gradients(&g, &l, &out, DEFAULT_STEP).unwrap();
        assert!(rep.label.passes(DEFAULT_TOLERANCE));
        assert!(!rep.trans.passes(DEFAULT_TOLERANCE));
        assert_eq!(rep.trans.worst_index, (1, 0));
    }

    #[test]
    fn relative_error_clamps_denominator() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
        assert!((relative_error(1.0, 1.000001) - 1e-6 / 1.000001).abs() < 1e-15);
    }
}
