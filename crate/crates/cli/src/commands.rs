use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use gtce::alignment::{format_onsets, parse_onsets, viterbi_align};
use gtce::decoder::{greedy_decode, prefix_beam_search, BigramLm, DecodeResult, UniformLm};
use gtce::graph::{
    build_ctc_graph, build_multispeaker_graph, deserialize_graph, serialize_graph, LabelGraph,
};
use gtce::loss::gradcheck::{check_gradients, TensorCheck, UNRELIABLE_STEP};
use gtce::loss::{
    gradients, loss as posterior_loss, softmax_rows, LogitSequence, PosteriorSequence,
};
use gtce::random::{random_graph, random_logits};
use gtce::tensor::{read_tensor, write_tensor};
use gtce::trainer::{generate_dataset, train, SyntheticConfig, ToyModel};
use gtce::{AlignmentEvent, Error};
use ndarray::Array2;
use serde_json::Value;

use crate::{AlignArgs, BuildGraphArgs, DecodeArgs, GradcheckArgs, LossArgs, TrainDemoArgs};

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

type CliResult = Result<ExitCode, CliError>;

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn load_tensor(path: &Path) -> Result<Array2<f64>, CliError> {
    read_tensor(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<LabelGraph, CliError> {
    deserialize_graph(&read_text(path)?)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn load_vocab(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(read_text(path)?
        .lines()
        .map(|l| l.trim().to_string())
        .collect())
}

fn emit(output: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| CliError::input(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::input(e.to_string())),
    }
}

fn load_posteriors(
    label: &Path,
    trans: &Path,
    logits: bool,
) -> Result<PosteriorSequence, CliError> {
    let (l, t) = (load_tensor(label)?, load_tensor(trans)?);
    if logits {
        Ok(softmax_rows(&LogitSequence::new(l, t)?))
    } else {
        Ok(PosteriorSequence::new(l, t)?)
    }
}

pub fn build_graph(a: BuildGraphArgs) -> CliResult {
    let vocab = a.vocab.as_deref().map(load_vocab).transpose()?;
    let num_labels = match (a.num_labels, &vocab) {
        (Some(k), _) => k,
        (None, Some(v)) => v.len(),
        (None, None) => return Err(CliError::input("--num-labels is required without --vocab")),
    };
    let graph = if let Some(labels) = &a.labels {
        let text = read_text(labels)?;
        let seq = text
            .split_whitespace()
            .map(|tok| resolve_symbol(tok, vocab.as_deref()))
            .collect::<Result<Vec<_>, _>>()?;
        build_ctc_graph(&seq, num_labels, a.num_transitions, a.transition_class)?
    } else {
        let path = a.onsets.as_ref().expect("clap enforces labels or onsets");
        let events: Vec<AlignmentEvent> = parse_onsets(&read_text(path)?)?;
        let energies = a.energies.clone().unwrap_or_default();
        build_multispeaker_graph(num_labels, &events, &energies)?
    };
    emit(a.output.as_ref(), &serialize_graph(&graph))?;
    Ok(ExitCode::SUCCESS)
}

fn resolve_symbol(tok: &str, vocab: Option<&[String]>) -> Result<usize, CliError> {
    if let Ok(i) = tok.parse() {
        return Ok(i);
    }
    vocab
        .and_then(|v| v.iter().position(|s| s == tok))
        .ok_or_else(|| CliError::input(format!("unknown label {tok:?}")))
}

pub fn loss(a: LossArgs) -> CliResult {
    let graph = load_graph(&a.graph)?;
    let (l, t) = (load_tensor(&a.label_tensor)?, load_tensor(&a.trans_tensor)?);
    let want_grads = a.grad_label.is_some() || a.grad_trans.is_some();
    let value = if a.logits || want_grads {
        // posteriors p become logits ln p: softmax(ln p) = p
        let logits = if a.logits {
            LogitSequence::new(l, t)?
        } else {
            let p = PosteriorSequence::new(l, t)?;
            LogitSequence::new(p.label_post().mapv(f64::ln), p.trans_post().mapv(f64::ln))?
        };
        let out = gradients(&graph, &logits)?;
        if let Some(p) = &a.grad_label {
            write_tensor(p, &out.dlabel)?;
        }
        if let Some(p) = &a.grad_trans {
            write_tensor(p, &out.dtrans)?;
        }
        out.loss
    } else {
        posterior_loss(&graph, &PosteriorSequence::new(l, t)?)?
    };
    println!("{:?}", value + 0.0);
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(a: GradcheckArgs) -> CliResult {
    if !(a.step > 0.0 && a.step.is_finite()) {
        return Err(CliError::input("--step must be positive"));
    }
    if a.step >= UNRELIABLE_STEP {
        eprintln!(
            "warning: step {} is too coarse; finite differences are unreliable at this size",
            a.step
        );
    }
    let (graph, logits) = match &a.graph {
        Some(g) => {
            let graph = load_graph(g)?;
            let l = load_tensor(a.label_logits.as_ref().expect("clap requires"))?;
            let t = load_tensor(a.trans_logits.as_ref().expect("clap requires"))?;
            (graph, LogitSequence::new(l, t)?)
        }
        None => random_instance(a.seed)?,
    };
    let mut analytic = gradients(&graph, &logits)?;
    if a.corrupt_analytic {
        analytic.dlabel[[0, 0]] += 1e-2;
        analytic.dtrans[[0, 0]] += 1e-2;
    }
    let report = check_gradients(&graph, &logits, &analytic, a.step)?;
    let line = |name: &str, c: &TensorCheck| {
        println!(
            "{name} {} max_rel_err={:e} at {:?} analytic={:?} numeric={:?}",
            if c.passes(a.tol) { "PASS" } else { "FAIL" },
            c.max_relative_error,
            c.worst_index,
            c.analytic_at_worst,
            c.numeric_at_worst
        )
    };
    line("label", &report.label);
    line("trans", &report.trans);
    Ok(if report.passes(a.tol) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

/// A random instance with a non-zero-probability graph, drawn from `seed`.
fn random_instance(seed: u64) -> Result<(LabelGraph, LogitSequence), CliError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let k = rng.random_range(2..=4);
        let i = rng.random_range(1..=3);
        let frames = rng.random_range(2..=8);
        let graph = random_graph(&mut rng, 6, k, i, (0.1, 2.0));
        let logits = random_logits(&mut rng, frames, k, i, 2.0);
        if gtce::loss::loss_from_logits(&graph, &logits).is_ok() {
            return Ok((graph, logits));
        }
    }
    Err(CliError::input("could not draw a feasible random instance"))
}

pub fn decode(a: DecodeArgs) -> CliResult {
    let post = load_posteriors(&a.label_tensor, &a.trans_tensor, a.logits)?;
    let vocab = a.vocab.as_deref().map(load_vocab).transpose()?;
    let results: Vec<DecodeResult> = if a.greedy {
        vec![greedy_decode(&post, a.speakers)?]
    } else if let Some(lm_path) = &a.lm {
        let lm = BigramLm::parse(&read_text(lm_path)?)?;
        prefix_beam_search(&post, a.speakers, a.beam, Some(&lm), a.lm_weight)?
    } else {
        prefix_beam_search(&post, a.speakers, a.beam, None::<&UniformLm>, 0.0)?
    };
    let mut out = String::new();
    for r in results.iter().take(a.nbest.max(1)) {
        let mut v = r.to_json();
        if let Some(vocab) = &vocab {
            v["text"] = Value::from(detokenize(&r.per_speaker, vocab));
        }
        out.push_str(&v.to_string());
        out.push('\n');
    }
    emit(None, &out)?;
    Ok(ExitCode::SUCCESS)
}

/// Joins each speaker's symbols; `▁` marks a word boundary.
fn detokenize(per_speaker: &[Vec<usize>], vocab: &[String]) -> Vec<String> {
    per_speaker
        .iter()
        .map(|toks| {
            let joined: String = toks
                .iter()
                .map(|&t| vocab.get(t).map_or("<unk>", String::as_str))
                .collect();
            joined.replace('\u{2581}', " ").trim().to_string()
        })
        .collect()
}

pub fn align(a: AlignArgs) -> CliResult {
    let graph = load_graph(&a.graph)?;
    let post = load_posteriors(&a.label_tensor, &a.trans_tensor, false)?;
    let v = viterbi_align(&graph, &post)?;
    let events: Vec<AlignmentEvent> = v
        .alignment
        .onsets
        .iter()
        .map(|&(frame, token)| AlignmentEvent {
            frame,
            token,
            speaker: a.speaker,
        })
        .collect();
    eprintln!("viterbi log-probability {:?}", v.log_prob);
    emit(None, &format_onsets(&events))?;
    Ok(ExitCode::SUCCESS)
}

pub fn train_demo(a: TrainDemoArgs) -> CliResult {
    let cfg = SyntheticConfig {
        speakers: a.speakers,
        vocab: a.vocab,
        frames: a.frames,
        overlap_ratio: a.overlap,
        noise: a.noise,
        tokens_per_speaker: a.tokens_per_speaker,
    };
    if !a.lr.is_finite() || a.lr < 0.0 {
        return Err(CliError::input("--lr must be finite and non-negative"));
    }
    let data = generate_dataset(a.seed, a.utterances, &cfg)?;
    let model = ToyModel::zeros(cfg.feature_dim(), cfg.vocab, cfg.num_transitions());
    let outcome = train(model, &data, a.epochs, a.lr)?;
    if let Some(prefix) = &a.checkpoint {
        outcome.model.save(prefix)?;
    }
    emit(None, &outcome.to_csv())?;
    Ok(ExitCode::SUCCESS)
}
