//! Extended graph-based temporal classification (GTC-e).
//!
//! A supervision graph carries token labels on its nodes and trainable
//! transition classes on its edges. The network predicts two per-frame
//! distributions: label posteriors over the alphabet and transition
//! posteriors over the transition classes. This crate provides
//!
//! * [`graph`]: the [`LabelGraph`] type, validation, CTC and multi-speaker
//!   graph builders, path enumeration and a stable text format,
//! * [`loss`]: log-domain forward-backward, the loss and its exact gradients
//!   with respect to both sets of logits, plus a brute-force oracle,
//! * [`decoder`]: time-synchronous prefix beam search over (token, speaker)
//!   pairs, greedy decoding and an exhaustive decoding oracle,
//! * [`alignment`]: Viterbi alignment and chronological merging of
//!   per-speaker token onsets,
//! * [`trainer`]: a linear-softmax toy model trained on synthetic
//!   multi-speaker data,
//! * [`tensor`]: the `GTCE-TENSOR` text matrix format.
//!
//! Speakers are indexed from 0. For `S` speakers the transition classes are
//! `0..S` for the speakers and `S` for the blank class. Label 0 is blank.

pub mod alignment;
pub mod decoder;
mod error;
pub mod graph;
pub mod logmath;
pub mod loss;
pub mod random;
pub mod tensor;
pub mod trainer;

pub use decoder::{DecodeResult, Prefix};
pub use error::{Error, Result};
pub use graph::{AlignmentEvent, Edge, LabelGraph, BLANK};
pub use loss::{FbTables, GradOutput, LogitSequence, PosteriorSequence};
