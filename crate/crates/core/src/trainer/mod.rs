//! A linear-softmax model trained with the GTC-e gradients.
//!
//! Label logits are `X·A + a` and transition logits `X·B + b` for features
//! `X` (`frames × feature_dim`). Parameter gradients follow from the logit
//! gradients by the chain rule: `dA = Xᵀ·dL/du`, `da = Σ_t dL/du_t`.

mod synthetic;

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rayon::prelude::*;

pub use synthetic::{generate_dataset, generate_synthetic, SyntheticConfig, SyntheticUtterance};

use crate::decoder::greedy_decode;
use crate::loss::{gradients, softmax_rows, LogitSequence};
use crate::tensor::{read_tensor, write_tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub label_weights: Array2<f64>,
    pub label_bias: Array1<f64>,
    pub trans_weights: Array2<f64>,
    pub trans_bias: Array1<f64>,
}

/// Parameter gradients, shaped like [`ToyModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub label_weights: Array2<f64>,
    pub label_bias: Array1<f64>,
    pub trans_weights: Array2<f64>,
    pub trans_bias: Array1<f64>,
}

impl ToyModel {
    /// All-zero parameters: uniform posteriors everywhere.
    pub fn zeros(feature_dim: usize, num_labels: usize, num_transitions: usize) -> Self {
        ToyModel {
            label_weights: Array2::zeros((feature_dim, num_labels)),
            label_bias: Array1::zeros(num_labels),
            trans_weights: Array2::zeros((feature_dim, num_transitions)),
            trans_bias: Array1::zeros(num_transitions),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.label_weights.nrows()
    }

    pub fn num_transitions(&self) -> usize {
        self.trans_bias.len()
    }

    pub fn logits(&self, features: &Array2<f64>) -> Result<LogitSequence> {
        if features.ncols() != self.feature_dim() {
            return Err(Error::Dimension(format!(
                "features have {} columns, model expects {}",
                features.ncols(),
                self.feature_dim()
            )));
        }
        LogitSequence::new(
            features.dot(&self.label_weights) + &self.label_bias,
            features.dot(&self.trans_weights) + &self.trans_bias,
        )
    }

    /// Loss and parameter gradients for one utterance.
    pub fn loss_and_gradients(&self, utt: &SyntheticUtterance) -> Result<(f64, ModelGradients)> {
        let logits = self.logits(&utt.features)?;
        let out = gradients(&utt.graph, &logits)?;
        let xt = utt.features.t();
        Ok((
            out.loss,
            ModelGradients {
                label_weights: xt.dot(&out.dlabel),
                label_bias: out.dlabel.sum_axis(Axis(0)),
                trans_weights: xt.dot(&out.dtrans),
                trans_bias: out.dtrans.sum_axis(Axis(0)),
            },
        ))
    }

    fn step(&mut self, g: &ModelGradients, lr: f64) {
        self.label_weights.scaled_add(-lr, &g.label_weights);
        self.label_bias.scaled_add(-lr, &g.label_bias);
        self.trans_weights.scaled_add(-lr, &g.trans_weights);
        self.trans_bias.scaled_add(-lr, &g.trans_bias);
    }

    /// `(feature_dim + 1) × K` and `(feature_dim + 1) × I` matrices, bias
    /// in the last row.
    pub fn to_tensors(&self) -> (Array2<f64>, Array2<f64>) {
        let stack = |w: &Array2<f64>, b: &Array1<f64>| {
            concatenate![Axis(0), w.view(), b.view().insert_axis(Axis(0))]
        };
        (
            stack(&self.label_weights, &self.label_bias),
            stack(&self.trans_weights, &self.trans_bias),
        )
    }

    pub fn from_tensors(label: Array2<f64>, trans: Array2<f64>) -> Result<Self> {
        if label.nrows() < 2 || label.nrows() != trans.nrows() {
            return Err(Error::Dimension(
                "checkpoint tensors disagree on feature size".into(),
            ));
        }
        let d = label.nrows() - 1;
        Ok(ToyModel {
            label_weights: label.slice(s![..d, ..]).to_owned(),
            label_bias: label.row(d).to_owned(),
            trans_weights: trans.slice(s![..d, ..]).to_owned(),
            trans_bias: trans.row(d).to_owned(),
        })
    }

    /// Writes `<prefix>.label.tensor` and `<prefix>.trans.tensor`.
    pub fn save(&self, prefix: &Path) -> Result<()> {
        let (l, t) = self.to_tensors();
        write_tensor(with_suffix(prefix, "label.tensor"), &l)?;
        write_tensor(with_suffix(prefix, "trans.tensor"), &t)
    }

    pub fn load(prefix: &Path) -> Result<Self> {
        ToyModel::from_tensors(
            read_tensor(with_suffix(prefix, "label.tensor"))?,
            read_tensor(with_suffix(prefix, "trans.tensor"))?,
        )
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> std::path::PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    s.into()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub token_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    /// One record per epoch, measured before that epoch's update.
    pub log: Vec<EpochRecord>,
    pub model: ToyModel,
}

impl TrainingOutcome {
    /// `epoch,mean_loss,token_accuracy` header plus one line per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,token_accuracy\n");
        for r in &self.log {
            writeln!(out, "{},{:?},{:?}", r.epoch, r.mean_loss, r.token_accuracy).unwrap();
        }
        out
    }
}

/// Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(row[j + 1] + 1);
        }
    }
    row[b.len()]
}

/// Greedy `(token, speaker)` accuracy: `1 - Σ edit distance / Σ reference
/// length`, floored at 0.
pub fn token_accuracy(model: &ToyModel, data: &[SyntheticUtterance]) -> Result<f64> {
    let speakers = model.num_transitions() - 1;
    let mut errors = 0usize;
    let mut total = 0usize;
    for utt in data {
        let post = softmax_rows(&model.logits(&utt.features)?);
        let hyp = greedy_decode(&post, speakers)?;
        errors += edit_distance(hyp.merged.items(), &utt.merged_reference);
        total += utt.merged_reference.len();
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok((1.0 - errors as f64 / total as f64).max(0.0))
}

/// Mean loss and mean parameter gradients over `data`. Utterances are
/// evaluated in parallel and reduced in order.
pub fn batch_gradients(
    model: &ToyModel,
    data: &[SyntheticUtterance],
) -> Result<(f64, ModelGradients)> {
    let per_utt: Vec<(f64, ModelGradients)> = data
        .par_iter()
        .map(|u| model.loss_and_gradients(u))
        .collect::<Result<_>>()?;
    let n = per_utt.len().max(1) as f64;
    let mut acc = ModelGradients {
        label_weights: Array2::zeros(model.label_weights.dim()),
        label_bias: Array1::zeros(model.label_bias.len()),
        trans_weights: Array2::zeros(model.trans_weights.dim()),
        trans_bias: Array1::zeros(model.trans_bias.len()),
    };
    let mut loss = 0.0;
    for (l, g) in &per_utt {
        loss += l;
        acc.label_weights += &g.label_weights;
        acc.label_bias += &g.label_bias;
        acc.trans_weights += &g.trans_weights;
        acc.trans_bias += &g.trans_bias;
    }
    acc.label_weights /= n;
    acc.label_bias /= n;
    acc.trans_weights /= n;
    acc.trans_bias /= n;
    Ok((loss / n, acc))
}

/// Full-batch gradient descent.
pub fn train(
    mut model: ToyModel,
    data: &[SyntheticUtterance],
    epochs: usize,
    learning_rate: f64,
) -> Result<TrainingOutcome> {
    let mut log = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let (mean_loss, grads) = batch_gradients(&model, data)?;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: mean_loss,
            });
        }
        let token_accuracy = token_accuracy(&model, data)?;
        log.push(EpochRecord {
            epoch,
            mean_loss,
            token_accuracy,
        });
        model.step(&grads, learning_rate);
        let params = model.to_tensors();
        if params
            .0
            .iter()
            .chain(params.1.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Diverged {
                epoch,
                loss: mean_loss,
            });
        }
    }
    Ok(TrainingOutcome { log, model })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (ToyModel, Vec<SyntheticUtterance>) {
        let cfg = SyntheticConfig {
            frames: 16,
            tokens_per_speaker: 2,
            ..SyntheticConfig::easy()
        };
        let data = generate_dataset(1, 3, &cfg).unwrap();
        let model = ToyModel::zeros(cfg.feature_dim(), cfg.vocab, cfg.num_transitions());
        (model, data)
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (model, data) = small();
        let out = train(model.clone(), &data, 4, 0.0).unwrap();
        assert_eq!(out.model, model);
        let first = out.log[0].mean_loss;
        assert!(out.log.iter().all(|r| r.mean_loss == first));
    }

    #[test]
    fn weight_gradient_matches_finite_difference() {
        let (mut model, data) = small();
        // move away from the symmetric zero point first
        model = train(model, &data, 3, 0.05).unwrap().model;
        let (_, g) = model.loss_and_gradients(&data[0]).unwrap();
        let h = 1e-5;
        for (idx, trans) in [
            ((0, 0), false),
            ((3, 2), false),
            ((1, 1), true),
            ((5, 2), true),
        ] {
            let eval = |delta: f64| {
                let mut m = model.clone();
                if trans {
                    m.trans_weights[idx] += delta;
                } else {
                    m.label_weights[idx] += delta;
                }
                m.loss_and_gradients(&data[0]).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = if trans {
                g.trans_weights[idx]
            } else {
                g.label_weights[idx]
            };
            assert!(
                (fd - an).abs() <= 1e-6 * an.abs().max(1e-3),
                "{idx:?}: {fd} vs {an}"
            );
        }
    }

    #[test]
    fn descent_direction_decreases_loss() {
        let (model, data) = small();
        let (l0, g) = batch_gradients(&model, &data).unwrap();
        let mut m = model.clone();
        m.step(&g, 1e-6);
        let (l1, _) = batch_gradients(&m, &data).unwrap();
        assert!(l1 < l0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (model, data) = small();
        let trained = train(model, &data, 2, 0.1).unwrap().model;
        let dir = std::env::temp_dir().join(format!("gtce-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let prefix = dir.join("model");
        trained.save(&prefix).unwrap();
        assert_eq!(ToyModel::load(&prefix).unwrap(), trained);
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn edit_distances() {
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 3]), 1);
        assert_eq!(edit_distance::<u8>(&[], &[1, 2]), 2);
        assert_eq!(edit_distance(&[1, 2], &[2, 1]), 2);
    }

    #[test]
    fn training_is_reproducible() {
        let (model, data) = small();
        let a = train(model.clone(), &data, 5, 0.1).unwrap();
        let b = train(model, &data, 5, 0.1).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }
}
