use std::collections::HashMap;

use super::{sort_ranked, Prefix};
use crate::graph::BLANK;
use crate::loss::PosteriorSequence;
use crate::{Error, Result};

/// Exhaustive decoding: every frame-level sequence over
/// `{blank} ∪ {(token, speaker)}` is scored (`y·ω` per frame, blank paired
/// with the blank class), collapsed by merging repeated pairs and dropping
/// blanks, and the masses of equal collapsed sequences are summed.
///
/// Returns every collapsed sequence with its probability, most probable
/// first (ties by ascending prefix). Fails if more than `cap` frame-level
/// sequences would be enumerated.
pub fn brute_force_decode(
    p: &PosteriorSequence,
    num_speakers: usize,
    cap: usize,
) -> Result<Vec<(Prefix, f64)>> {
    super::check_dims(p, num_speakers)?;
    let y = p.label_post();
    let w = p.trans_post();
    let mut symbols: Vec<Option<(usize, usize)>> = vec![None];
    for c in 1..p.num_labels() {
        for s in 0..num_speakers {
            symbols.push(Some((c, s)));
        }
    }
    let frames = p.frames();
    let count = (symbols.len() as f64).powi(frames as i32);
    if count > cap as f64 {
        return Err(Error::EnumerationCap { count, cap });
    }

    let mut mass: HashMap<Prefix, f64> = HashMap::new();
    let mut digits = vec![0usize; frames];
    loop {
        let mut prob = 1.0;
        let mut items = Vec::new();
        let mut prev = None;
        for (t, &d) in digits.iter().enumerate() {
            let sym = symbols[d];
            prob *= match sym {
                None => y[[t, BLANK]] * w[[t, num_speakers]],
                Some((c, s)) => y[[t, c]] * w[[t, s]],
            };
            if let Some(pair) = sym {
                if prev != Some(sym) {
                    items.push(pair);
                }
            }
            prev = Some(sym);
        }
        *mass.entry(Prefix(items)).or_insert(0.0) += prob;

        // odometer increment
        let mut i = 0;
        loop {
            if i == frames {
                let mut ranked: Vec<(Prefix, f64)> = mass.into_iter().collect();
                sort_ranked(&mut ranked, |(prefix, prob)| (prefix, *prob));
                return Ok(ranked);
            }
            digits[i] += 1;
            if digits[i] < symbols.len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}
