//! Language-model hook for the beam search.
//!
//! The search keeps one LM state per speaker and scores each appended
//! token against the history of its own speaker only.

use std::collections::HashMap;

use crate::{Error, Result};

pub trait LanguageModel: Sync {
    type State: Clone;

    fn initial_state(&self) -> Self::State;

    /// Log-probability of `token` following the history summarised by
    /// `state`.
    fn score(&self, state: &Self::State, token: usize) -> f64;

    fn advance(&self, state: &Self::State, token: usize) -> Self::State;
}

/// Scores every token 0 and never changes state.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformLm;

impl LanguageModel for UniformLm {
    type State = ();

    fn initial_state(&self) {}

    fn score(&self, _state: &(), _token: usize) -> f64 {
        0.0
    }

    fn advance(&self, _state: &(), _token: usize) {}
}

/// Token bigram model with a floor for unseen pairs.
///
/// Text format, one entry per line:
///
/// ```text
/// # comment
/// <s> 1 -0.51      start of a speaker's sequence, then token 1
/// 1 2 -1.2         token 2 after token 1
/// <unk> -10        floor for pairs not listed (default -10)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct BigramLm {
    table: HashMap<(Option<usize>, usize), f64>,
    floor: f64,
}

pub const DEFAULT_BIGRAM_FLOOR: f64 = -10.0;

impl BigramLm {
    pub fn new(floor: f64) -> Self {
        BigramLm {
            table: HashMap::new(),
            floor,
        }
    }

    /// Sets `ln P(token | prev)`; `prev == None` is the sentence start.
    pub fn insert(&mut self, prev: Option<usize>, token: usize, logprob: f64) {
        self.table.insert((prev, token), logprob);
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lm = BigramLm::new(DEFAULT_BIGRAM_FLOOR);
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::InvalidArgument(format!("bigram line {}: {line:?}", n + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[..] {
                ["<unk>", lp] => lm.floor = lp.parse().map_err(|_| bad())?,
                [prev, tok, lp] => {
                    let prev = if prev == "<s>" {
                        None
                    } else {
                        Some(prev.parse().map_err(|_| bad())?)
                    };
                    let lp: f64 = lp.parse().map_err(|_| bad())?;
                    if !lp.is_finite() {
                        return Err(bad());
                    }
                    lm.insert(prev, tok.parse().map_err(|_| bad())?, lp);
                }
                _ => return Err(bad()),
            }
        }
        Ok(lm)
    }
}

impl LanguageModel for BigramLm {
    type State = Option<usize>;

    fn initial_state(&self) -> Option<usize> {
        None
    }

    fn score(&self, state: &Option<usize>, token: usize) -> f64 {
        self.table
            .get(&(*state, token))
            .copied()
            .unwrap_or(self.floor)
    }

    fn advance(&self, _state: &Option<usize>, token: usize) -> Option<usize> {
        Some(token)
    }
}
