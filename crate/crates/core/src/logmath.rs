//! Log-semiring helpers. Probabilities are carried as natural logs;
//! `f64::NEG_INFINITY` is the zero element.

pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// `ln(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == LOG_ZERO {
        return b;
    }
    if b == LOG_ZERO {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(sum(exp(x)))` over an iterator, stabilised by the running maximum.
pub fn log_sum_exp<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(LOG_ZERO, f64::max);
    if max == LOG_ZERO || !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log-softmax of one row. The maximum is subtracted first so large
/// logits do not overflow.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(row.iter().copied());
    row.iter().map(|u| u - lse).collect()
}

/// Accumulating log-space adder.
#[derive(Debug, Clone, Copy)]
pub struct LogAcc(pub f64);

impl Default for LogAcc {
    fn default() -> Self {
        LogAcc(LOG_ZERO)
    }
}

impl LogAcc {
    #[inline]
    pub fn add(&mut self, v: f64) {
        self.0 = log_add(self.0, v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_matches_direct_sum() {
        let a = 0.3f64.ln();
        let b = 0.2f64.ln();
        assert!((log_add(a, b).exp() - 0.5).abs() < 1e-15);
        assert_eq!(log_add(LOG_ZERO, b), b);
        assert_eq!(log_add(a, LOG_ZERO), a);
        assert_eq!(log_add(LOG_ZERO, LOG_ZERO), LOG_ZERO);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = log_sum_exp([1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(std::iter::empty()), LOG_ZERO);
        assert_eq!(log_sum_exp([LOG_ZERO, LOG_ZERO]), LOG_ZERO);
    }

    #[test]
    fn log_softmax_rows() {
        let r = log_softmax(&[3f64.ln(), 0.0]);
        assert!((r[0].exp() - 0.75).abs() < 1e-15);
        assert!((r[1].exp() - 0.25).abs() < 1e-15);
    }
}
