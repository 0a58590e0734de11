//! Decoding of merged (token, speaker) sequences.
//!
//! The beam search is the time-synchronous prefix search of CTC extended to
//! transition posteriors: a blank frame scores `y(blank)·ω(blank class)`,
//! a token frame scores `y(c)·ω(s)` for every speaker `s`, and a prefix
//! grows by `(c, s)` pairs. Two consecutive frames only merge into one
//! token when both the token and the speaker repeat.

pub mod lm;
mod oracle;

use std::collections::{HashMap, HashSet};

use serde_json::json;

pub use lm::{BigramLm, LanguageModel, UniformLm};
pub use oracle::brute_force_decode;

use crate::graph::BLANK;
use crate::logmath::{log_add, LOG_ZERO};
use crate::loss::{LogPosteriors, PosteriorSequence};
use crate::{Error, Result};

/// Default beam width.
pub const DEFAULT_BEAM: usize = 40;

/// Decoded `(token, speaker)` pairs. The empty prefix is the start state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prefix(pub Vec<(usize, usize)>);

impl Prefix {
    pub fn items(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn last(&self) -> Option<(usize, usize)> {
        self.0.last().copied()
    }

    fn extended(&self, pair: (usize, usize)) -> Prefix {
        let mut items = Vec::with_capacity(self.0.len() + 1);
        items.extend_from_slice(&self.0);
        items.push(pair);
        Prefix(items)
    }
}

/// A beam entry. Masses are natural logs.
#[derive(Debug, Clone)]
pub struct Hypothesis<S> {
    pub prefix: Prefix,
    /// Mass of alignments ending in blank.
    pub log_pb: f64,
    /// Mass of alignments ending in the last token of the prefix.
    pub log_pnb: f64,
    /// One LM state per speaker.
    pub lm_states: Vec<S>,
    /// Sum of LM log-probabilities over all tokens of the prefix.
    pub lm_score: f64,
}

impl<S> Hypothesis<S> {
    pub fn log_prob(&self) -> f64 {
        log_add(self.log_pb, self.log_pnb)
    }

    fn rank_score(&self, lm_weight: f64) -> f64 {
        if lm_weight == 0.0 {
            self.log_prob()
        } else {
            self.log_prob() + lm_weight * self.lm_score
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub merged: Prefix,
    pub per_speaker: Vec<Vec<usize>>,
    /// Ranking score: log-probability plus weighted LM score.
    pub log_score: f64,
}

impl DecodeResult {
    fn new(merged: Prefix, num_speakers: usize, log_score: f64) -> Self {
        let per_speaker =
            split_by_speaker(&merged, num_speakers).expect("decoded speakers are in range");
        DecodeResult {
            merged,
            per_speaker,
            log_score,
        }
    }

    /// `{"merged":[[token,speaker],...],"per_speaker":[[...],...],"log_score":r}`
    pub fn to_json(&self) -> serde_json::Value {
        let merged: Vec<[usize; 2]> = self.merged.0.iter().map(|&(t, s)| [t, s]).collect();
        json!({
            "merged": merged,
            "per_speaker": self.per_speaker,
            "log_score": self.log_score,
        })
    }
}

pub(crate) fn check_dims(p: &PosteriorSequence, num_speakers: usize) -> Result<()> {
    if num_speakers == 0 {
        return Err(Error::InvalidArgument(
            "speaker count must be at least 1".into(),
        ));
    }
    if p.num_transitions() != num_speakers + 1 {
        return Err(Error::Dimension(format!(
            "{} transition classes, expected {} speakers plus blank",
            p.num_transitions(),
            num_speakers
        )));
    }
    if p.num_labels() < 2 {
        return Err(Error::Dimension(
            "alphabet needs blank and at least one token".into(),
        ));
    }
    Ok(())
}

/// Descending score, ascending prefix on ties.
pub(crate) fn sort_ranked<T>(items: &mut [T], key: impl Fn(&T) -> (&Prefix, f64)) {
    items.sort_by(|a, b| {
        let (pa, sa) = key(a);
        let (pb, sb) = key(b);
        sb.total_cmp(&sa).then_with(|| pa.cmp(pb))
    });
}

/// Beam search without a language model.
pub fn decode_beam(
    p: &PosteriorSequence,
    num_speakers: usize,
    beam: usize,
) -> Result<Vec<DecodeResult>> {
    prefix_beam_search(p, num_speakers, beam, None::<&UniformLm>, 0.0)
}

/// Time-synchronous prefix beam search over `(token, speaker)` pairs.
///
/// `p` must carry `num_speakers + 1` transition classes, the last being the
/// blank class. Blank/non-blank masses follow the posteriors only; the LM
/// (scored per speaker, weighted by `lm_weight` in log space) enters the
/// ranking used for pruning. Returns the final beam, best first.
pub fn prefix_beam_search<L: LanguageModel>(
    p: &PosteriorSequence,
    num_speakers: usize,
    beam: usize,
    lm: Option<&L>,
    lm_weight: f64,
) -> Result<Vec<DecodeResult>> {
    check_dims(p, num_speakers)?;
    if beam == 0 {
        return Err(Error::InvalidArgument(
            "beam width must be at least 1".into(),
        ));
    }
    let lp = LogPosteriors::from_posteriors(p);
    let blank_class = num_speakers;
    let lm_weight = if lm.is_some() { lm_weight } else { 0.0 };

    let initial_states = |lm: &L| vec![lm.initial_state(); num_speakers];
    let mut beam_hyps: Vec<Hypothesis<L::State>> = vec![Hypothesis {
        prefix: Prefix::default(),
        log_pb: 0.0,
        log_pnb: LOG_ZERO,
        lm_states: lm.map(initial_states).unwrap_or_default(),
        lm_score: 0.0,
    }];
    // masses of every prefix scored at the previous frame, pruned or not
    let mut previous: HashMap<Prefix, (f64, f64)> =
        HashMap::from([(Prefix::default(), (0.0, LOG_ZERO))]);

    for t in 0..lp.frames() {
        let log_blank = lp.label[[t, BLANK]] + lp.trans[[t, blank_class]];
        let in_beam: HashSet<&Prefix> = beam_hyps.iter().map(|h| &h.prefix).collect();
        let mut next = NextFrame::default();

        for hyp in &beam_hyps {
            let total = hyp.log_prob();

            let entry = next.entry(&hyp.prefix, || hyp.clone_empty());
            entry.log_pb = log_add(entry.log_pb, log_blank + total);

            for c in 1..lp.label.ncols() {
                for s in 0..num_speakers {
                    let emit = lp.label[[t, c]] + lp.trans[[t, s]];
                    let extended = hyp.prefix.extended((c, s));
                    if hyp.prefix.last() == Some((c, s)) {
                        let e = next.entry(&extended, || hyp.child((c, s), lm));
                        e.log_pnb = log_add(e.log_pnb, emit + hyp.log_pb);
                        let cur = next.entry(&hyp.prefix, || hyp.clone_empty());
                        cur.log_pnb = log_add(cur.log_pnb, emit + hyp.log_pnb);
                    } else {
                        let e = next.entry(&extended, || hyp.child((c, s), lm));
                        e.log_pnb = log_add(e.log_pnb, emit + total);
                    }
                    if !in_beam.contains(&extended) {
                        // continue the mass of a prefix pruned at the last frame
                        if let Some(&(pb, pnb)) = previous.get(&extended) {
                            let e = next.entry(&extended, || hyp.child((c, s), lm));
                            e.log_pb = log_add(e.log_pb, log_blank + log_add(pb, pnb));
                            e.log_pnb = log_add(e.log_pnb, emit + pnb);
                        }
                    }
                }
            }
        }

        let mut all = next.into_vec();
        all.retain(|h| h.log_prob() != LOG_ZERO);
        previous = all
            .iter()
            .map(|h| (h.prefix.clone(), (h.log_pb, h.log_pnb)))
            .collect();
        sort_ranked(&mut all, |h| (&h.prefix, h.rank_score(lm_weight)));
        all.truncate(beam);
        beam_hyps = all;
    }

    Ok(beam_hyps
        .into_iter()
        .map(|h| {
            let score = h.rank_score(lm_weight);
            DecodeResult::new(h.prefix, num_speakers, score)
        })
        .collect())
}

impl<S: Clone> Hypothesis<S> {
    fn clone_empty(&self) -> Self {
        Hypothesis {
            prefix: self.prefix.clone(),
            log_pb: LOG_ZERO,
            log_pnb: LOG_ZERO,
            lm_states: self.lm_states.clone(),
            lm_score: self.lm_score,
        }
    }

    fn child<L: LanguageModel<State = S>>(&self, pair: (usize, usize), lm: Option<&L>) -> Self {
        let (token, speaker) = pair;
        let mut lm_states = self.lm_states.clone();
        let mut lm_score = self.lm_score;
        if let Some(lm) = lm {
            lm_score += lm.score(&lm_states[speaker], token);
            lm_states[speaker] = lm.advance(&lm_states[speaker], token);
        }
        Hypothesis {
            prefix: self.prefix.extended(pair),
            log_pb: LOG_ZERO,
            log_pnb: LOG_ZERO,
            lm_states,
            lm_score,
        }
    }
}

/// Hypotheses of the frame being built, in insertion order.
struct NextFrame<S> {
    index: HashMap<Prefix, usize>,
    hyps: Vec<Hypothesis<S>>,
}

impl<S> Default for NextFrame<S> {
    fn default() -> Self {
        NextFrame {
            index: HashMap::new(),
            hyps: Vec::new(),
        }
    }
}

impl<S> NextFrame<S> {
    fn entry(
        &mut self,
        prefix: &Prefix,
        make: impl FnOnce() -> Hypothesis<S>,
    ) -> &mut Hypothesis<S> {
        let i = match self.index.get(prefix) {
            Some(&i) => i,
            None => {
                self.hyps.push(make());
                self.index.insert(prefix.clone(), self.hyps.len() - 1);
                self.hyps.len() - 1
            }
        };
        &mut self.hyps[i]
    }

    fn into_vec(self) -> Vec<Hypothesis<S>> {
        self.hyps
    }
}

/// Best-path decoding.
///
/// Each frame takes the argmax label and the argmax transition class. A
/// frame whose label is blank or whose class is the blank class emits
/// nothing; other frames emit `(label, class)`. Consecutive frames with the
/// same pair merge into one token and blank frames are then dropped. The
/// score is the log-probability of the chosen frame-level path.
pub fn greedy_decode(p: &PosteriorSequence, num_speakers: usize) -> Result<DecodeResult> {
    check_dims(p, num_speakers)?;
    let y = p.label_post();
    let w = p.trans_post();
    let argmax = |row: ndarray::ArrayView1<f64>| {
        row.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
    };
    let mut items = Vec::new();
    let mut prev: Option<Option<(usize, usize)>> = None;
    let mut log_score = 0.0;
    for t in 0..p.frames() {
        let (k, yk) = argmax(y.row(t));
        let (i, wi) = argmax(w.row(t));
        log_score += yk.ln() + wi.ln();
        let sym = if k == BLANK || i == num_speakers {
            None
        } else {
            Some((k, i))
        };
        if let Some(pair) = sym {
            if prev != Some(sym) {
                items.push(pair);
            }
        }
        prev = Some(sym);
    }
    Ok(DecodeResult::new(Prefix(items), num_speakers, log_score))
}

/// Per-speaker token sequences, order preserved.
pub fn split_by_speaker(prefix: &Prefix, num_speakers: usize) -> Result<Vec<Vec<usize>>> {
    let mut out = vec![Vec::new(); num_speakers];
    for &(token, speaker) in &prefix.0 {
        if speaker >= num_speakers {
            return Err(Error::InvalidArgument(format!(
                "speaker {speaker} out of range for {num_speakers} speakers"
            )));
        }
        out[speaker].push(token);
    }
    Ok(out)
}
