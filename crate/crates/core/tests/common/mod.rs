//! Brute-force oracles and generators shared by the integration tests.
#![allow(dead_code)]

use adsr_transcribe::eval::MatchingConfig;
use adsr_transcribe::hmm::{AdsrHmmSpec, AdsrState, EmissionStream};
use adsr_transcribe::NoteEvent;
use rand::Rng;

pub const FPS: f64 = 50.0;

/// Log emission computed from the stream map alone.
fn emission(spec: &AdsrHmmSpec, state: AdsrState, [on, int, off]: [f32; 3]) -> f64 {
    let value = match spec.stream(state) {
        EmissionStream::Onset => f64::from(on),
        EmissionStream::Intermediate => f64::from(int),
        EmissionStream::Offset => f64::from(off),
        EmissionStream::NotOnset => 1.0 - f64::from(on),
        EmissionStream::NotIntermediate => 1.0 - f64::from(int),
    };
    value.max(spec.floor()).ln()
}

/// Best log score over every path with nonzero probability, by exhaustive
/// depth-first enumeration. Scores accumulate as
/// `((score + log transition) + log emission)`, the decoder's order.
pub fn brute_force_viterbi(spec: &AdsrHmmSpec, acts: &[[f32; 3]]) -> Option<f64> {
    fn walk(spec: &AdsrHmmSpec, acts: &[[f32; 3]], t: usize, prev: AdsrState, score: f64, best: &mut Option<f64>) {
        if t == acts.len() {
            if best.is_none_or(|b| score > b) {
                *best = Some(score);
            }
            return;
        }
        for next in AdsrState::ALL {
            let p = spec.transition(prev, next);
            if p > 0.0 {
                walk(spec, acts, t + 1, next, (score + p.ln()) + emission(spec, next, acts[t]), best);
            }
        }
    }
    let mut best = None;
    if acts.is_empty() {
        return Some(0.0);
    }
    for first in AdsrState::ALL {
        let p = spec.initial()[first.index()];
        if p > 0.0 {
            walk(spec, acts, 1, first, p.ln() + emission(spec, first, acts[0]), &mut best);
        }
    }
    best
}

/// Activations drawn from a handful of levels so that ties are common.
pub fn random_key_rows<R: Rng>(rng: &mut R, len: usize) -> Vec<[f32; 3]> {
    const LEVELS: [f32; 6] = [0.0, 0.1, 0.25, 0.5, 0.9, 1.0];
    (0..len)
        .map(|_| {
            std::array::from_fn(|_| {
                if rng.random_bool(0.5) {
                    LEVELS[rng.random_range(0..LEVELS.len())]
                } else {
                    rng.random::<f32>()
                }
            })
        })
        .collect()
}

/// Largest one-to-one admissible assignment, by trying every choice for
/// each reference note in turn.
pub fn brute_force_matching(reference: &[NoteEvent], estimate: &[NoteEvent], cfg: &MatchingConfig) -> usize {
    fn go(i: usize, reference: &[NoteEvent], estimate: &[NoteEvent], cfg: &MatchingConfig, used: &mut Vec<bool>) -> usize {
        if i == reference.len() {
            return 0;
        }
        let mut best = go(i + 1, reference, estimate, cfg, used);
        for j in 0..estimate.len() {
            if !used[j] && cfg.admissible(&reference[i], &estimate[j]) {
                used[j] = true;
                best = best.max(1 + go(i + 1, reference, estimate, cfg, used));
                used[j] = false;
            }
        }
        best
    }
    go(0, reference, estimate, cfg, &mut vec![false; estimate.len()])
}

/// Short notes on a few keys with starts a few tens of milliseconds apart,
/// so that many pairs are admissible and greedy choices can go wrong.
pub fn clustered_notes<R: Rng>(rng: &mut R, n: usize) -> Vec<NoteEvent> {
    (0..n)
        .map(|_| {
            let start = rng.random_range(0..8) as f64 * 0.03;
            let dur = rng.random_range(1..6) as f64 * 0.1;
            NoteEvent::new(start, start + dur, rng.random_range(0..2)).unwrap()
        })
        .collect()
}

/// A piece whose notes on each key are separated by at least three frames
/// and last at least five, as continuous times that are not frame-aligned.
pub fn random_piece<R: Rng>(rng: &mut R, keys: usize, seconds: f64) -> Vec<NoteEvent> {
    let margin = 0.1 / FPS;
    let mut chosen: Vec<u8> = Vec::new();
    while chosen.len() < keys {
        let k = rng.random_range(0..88u8);
        if !chosen.contains(&k) {
            chosen.push(k);
        }
    }
    let mut notes = Vec::new();
    for key in chosen {
        let mut t = rng.random_range(0.0..0.5);
        loop {
            let d = rng.random_range(5.0 / FPS + margin..1.2);
            if t + d > seconds {
                break;
            }
            notes.push(NoteEvent::new(t, t + d, key).unwrap());
            t += d + rng.random_range(3.0 / FPS + margin..0.8);
        }
    }
    adsr_transcribe::notes::sort_notes(&mut notes);
    notes
}

/// Number of frames that holds every note plus its offset bump.
pub fn frames_for(notes: &[NoteEvent], bump_width: usize) -> usize {
    let last = notes.iter().map(|n| n.end).fold(0.0, f64::max);
    (last * FPS).floor() as usize + bump_width + 1
}
