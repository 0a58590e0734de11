//! Shared fixtures for the criterion benchmarks.

use gtce::graph::{build_multispeaker_graph, LabelGraph};
use gtce::random::{random_logits, random_posteriors};
use gtce::{AlignmentEvent, LogitSequence, PosteriorSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A two-speaker graph with `tokens` tokens and matching random logits over
/// `frames` frames.
pub fn multispeaker_instance(
    tokens: usize,
    frames: usize,
    vocab: usize,
) -> (LabelGraph, LogitSequence) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xbe7c);
    let events: Vec<AlignmentEvent> = (0..tokens)
        .map(|i| AlignmentEvent {
            frame: i * 2,
            token: rng.random_range(1..vocab),
            speaker: i % 2,
        })
        .collect();
    let graph = build_multispeaker_graph(vocab, &events, &[1.0, 0.8]).expect("valid events");
    let logits = random_logits(&mut rng, frames, vocab, 3, 3.0);
    (graph, logits)
}

pub fn decode_instance(frames: usize, vocab: usize, speakers: usize) -> PosteriorSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(0xdec0);
    random_posteriors(&mut rng, frames, vocab, speakers + 1)
}
