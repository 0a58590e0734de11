//! Synthetic multi-speaker utterances.
//!
//! Each speaker is active over one contiguous frame range. Inside its range
//! a speaker emits single-frame token spikes. The feature vector of a frame
//! is a one-hot indicator over `1 + (vocab - 1) * speakers` slots (slot 0 is
//! silence, slot `1 + (token - 1) * speakers + speaker` a token of a
//! speaker) plus Gaussian noise. Concurrent spikes add their indicators.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::alignment::merge_alignments;
use crate::graph::{build_multispeaker_graph, AlignmentEvent, LabelGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub speakers: usize,
    /// Alphabet size including blank.
    pub vocab: usize,
    pub frames: usize,
    /// Fraction of each speaker's active range shared with the next
    /// speaker: 0 gives disjoint ranges, 1 identical ranges.
    pub overlap_ratio: f64,
    /// Standard deviation of the feature noise.
    pub noise: f64,
    pub tokens_per_speaker: usize,
}

impl SyntheticConfig {
    /// Two speakers, no overlap, low noise.
    pub fn easy() -> Self {
        SyntheticConfig {
            speakers: 2,
            vocab: 5,
            frames: 40,
            overlap_ratio: 0.0,
            noise: 0.1,
            tokens_per_speaker: 4,
        }
    }

    pub fn feature_dim(&self) -> usize {
        1 + (self.vocab - 1) * self.speakers
    }

    /// Transition classes: one per speaker plus the blank class.
    pub fn num_transitions(&self) -> usize {
        self.speakers + 1
    }

    fn slot(&self, token: usize, speaker: usize) -> usize {
        1 + (token - 1) * self.speakers + speaker
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.speakers == 0 {
            return bad("at least one speaker is required");
        }
        if self.vocab < 2 {
            return bad("vocabulary needs blank and at least one token");
        }
        if !(0.0..=1.0).contains(&self.overlap_ratio) {
            return bad("overlap ratio must lie in [0, 1]");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be finite and non-negative");
        }
        if self.tokens_per_speaker == 0 {
            return bad("at least one token per speaker is required");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticUtterance {
    /// `frames × feature_dim`.
    pub features: Array2<f64>,
    pub graph: LabelGraph,
    /// Token sequence of each speaker.
    pub reference: Vec<Vec<usize>>,
    /// Chronologically merged `(token, speaker)` reference.
    pub merged_reference: Vec<(usize, usize)>,
    /// Per-speaker `(frame, token)` onsets.
    pub onsets: Vec<Vec<(usize, usize)>>,
    pub energies: Vec<f64>,
    /// Active `[start, end)` frame range of each speaker.
    pub active_ranges: Vec<(usize, usize)>,
}

/// Deterministic in `seed`.
pub fn generate_synthetic(seed: u64, cfg: &SyntheticConfig) -> Result<SyntheticUtterance> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = cfg.speakers;
    let r = cfg.overlap_ratio;

    let active_len = (cfg.frames as f64 / (1.0 + (s - 1) as f64 * (1.0 - r))).floor() as usize;
    let shared = (r * active_len as f64).round() as usize;
    let stride = active_len - shared;
    let slot_width = active_len / cfg.tokens_per_speaker.max(1);
    if slot_width < 2 {
        return Err(Error::InvalidArgument(format!(
            "{} frames cannot hold {} tokens for each of {s} speakers at overlap {r}",
            cfg.frames, cfg.tokens_per_speaker
        )));
    }

    let mut features = Array2::zeros((cfg.frames, cfg.feature_dim()));
    features.column_mut(0).fill(1.0);
    let mut onsets = Vec::with_capacity(s);
    let mut active_ranges = Vec::with_capacity(s);
    for spk in 0..s {
        let start = spk * stride;
        active_ranges.push((start, start + active_len));
        let mut list = Vec::with_capacity(cfg.tokens_per_speaker);
        for i in 0..cfg.tokens_per_speaker {
            let frame = start + i * slot_width + rng.random_range(0..slot_width - 1);
            let token = rng.random_range(1..cfg.vocab);
            features[[frame, 0]] = 0.0;
            features[[frame, cfg.slot(token, spk)]] += 1.0;
            list.push((frame, token));
        }
        onsets.push(list);
    }
    if cfg.noise > 0.0 {
        let normal = Normal::new(0.0, cfg.noise).expect("valid noise");
        features.mapv_inplace(|v| v + normal.sample(&mut rng));
    }
    let energies: Vec<f64> = (0..s).map(|_| rng.random_range(0.5..1.5)).collect();

    let events: Vec<AlignmentEvent> = merge_alignments(&onsets, &energies);
    let graph = build_multispeaker_graph(cfg.vocab, &events, &energies)?;
    let merged_reference = events.iter().map(|e| (e.token, e.speaker)).collect();
    let reference = onsets
        .iter()
        .map(|l| l.iter().map(|&(_, t)| t).collect())
        .collect();
    Ok(SyntheticUtterance {
        features,
        graph,
        reference,
        merged_reference,
        onsets,
        energies,
        active_ranges,
    })
}

/// `count` utterances with seeds derived from `seed`.
pub fn generate_dataset(
    seed: u64,
    count: usize,
    cfg: &SyntheticConfig,
) -> Result<Vec<SyntheticUtterance>> {
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| generate_synthetic(seeder.random(), cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::concurrency_rate;

    fn overlap(a: (usize, usize), b: (usize, usize)) -> usize {
        a.1.min(b.1).saturating_sub(a.0.max(b.0))
    }

    #[test]
    fn zero_overlap_gives_disjoint_ranges() {
        let u = generate_synthetic(3, &SyntheticConfig::easy()).unwrap();
        assert_eq!(overlap(u.active_ranges[0], u.active_ranges[1]), 0);
        assert_eq!(concurrency_rate(&u.onsets), 0.0);
        assert!(u.graph.validate().is_ok());
        assert_eq!(u.merged_reference.len(), 8);
    }

    #[test]
    fn full_overlap_gives_identical_ranges() {
        let cfg = SyntheticConfig {
            overlap_ratio: 1.0,
            ..SyntheticConfig::easy()
        };
        let u = generate_synthetic(3, &cfg).unwrap();
        assert_eq!(u.active_ranges[0], u.active_ranges[1]);
    }

    #[test]
    fn same_seed_same_utterance() {
        let cfg = SyntheticConfig {
            overlap_ratio: 0.4,
            ..SyntheticConfig::easy()
        };
        let a = generate_synthetic(17, &cfg).unwrap();
        let b = generate_synthetic(17, &cfg).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.reference, b.reference);
        let c = generate_synthetic(18, &cfg).unwrap();
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn forty_percent_overlap_has_few_concurrent_onsets() {
        let cfg = SyntheticConfig {
            overlap_ratio: 0.4,
            frames: 400,
            tokens_per_speaker: 20,
            ..SyntheticConfig::easy()
        };
        let data = generate_dataset(5, 50, &cfg).unwrap();
        let rate: f64 = data
            .iter()
            .map(|u| concurrency_rate(&u.onsets))
            .sum::<f64>()
            / data.len() as f64;
        assert!(rate > 0.0 && rate < 0.1, "rate {rate}");
    }

    #[test]
    fn infeasible_parameters() {
        let cfg = SyntheticConfig {
            frames: 10,
            tokens_per_speaker: 8,
            ..SyntheticConfig::easy()
        };
        assert!(generate_synthetic(0, &cfg).is_err());
        let cfg = SyntheticConfig {
            overlap_ratio: 1.5,
            ..SyntheticConfig::easy()
        };
        assert!(generate_synthetic(0, &cfg).is_err());
        let cfg = SyntheticConfig {
            vocab: 1,
            ..SyntheticConfig::easy()
        };
        assert!(generate_synthetic(0, &cfg).is_err());
    }
}
