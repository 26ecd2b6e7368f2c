//! Seven-state ADSR hidden Markov model: Viterbi decoding of one key's
//! activation streams and extraction of note segments from the state path.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationMatrix;
use crate::error::{Error, Result};
use crate::notes::NUM_KEYS;

pub const NUM_STATES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AdsrState {
    N = 0,
    A0 = 1,
    A1 = 2,
    D0 = 3,
    D1 = 4,
    S = 5,
    R = 6,
}

use AdsrState::*;

impl AdsrState {
    /// Tie-break order.
    pub const ALL: [AdsrState; NUM_STATES] = [N, A0, A1, D0, D1, S, R];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            N => "N",
            A0 => "A0",
            A1 => "A1",
            D0 => "D0",
            D1 => "D1",
            S => "S",
            R => "R",
        }
    }

    pub fn is_sounding(self) -> bool {
        self != N
    }
}

impl fmt::Display for AdsrState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdsrState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AdsrState::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::config(format!("unknown HMM state {s:?}")))
    }
}

impl Serialize for AdsrState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for AdsrState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The only transitions allowed to carry probability mass.
pub const EDGES: [(AdsrState, AdsrState); 14] = [
    (N, N),
    (N, A0),
    (A0, N),
    (A0, A1),
    (A1, D0),
    (A1, N),
    (D0, D1),
    (D0, N),
    (D1, S),
    (D1, N),
    (S, S),
    (S, A0),
    (S, R),
    (R, N),
];

pub fn is_edge(from: AdsrState, to: AdsrState) -> bool {
    EDGES.contains(&(from, to))
}

/// Which activation a state emits from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionStream {
    Onset,
    Intermediate,
    Offset,
    /// `1 - onset`.
    NotOnset,
    /// `1 - intermediate`.
    NotIntermediate,
}

impl EmissionStream {
    pub fn select(self, [on, int, off]: [f32; 3]) -> f64 {
        match self {
            EmissionStream::Onset => f64::from(on),
            EmissionStream::Intermediate => f64::from(int),
            EmissionStream::Offset => f64::from(off),
            EmissionStream::NotOnset => 1.0 - f64::from(on),
            EmissionStream::NotIntermediate => 1.0 - f64::from(int),
        }
    }
}

/// Transition table, initial distribution, emission floor and stream map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HmmFile", into = "HmmFile")]
pub struct AdsrHmmSpec {
    transitions: [[f64; NUM_STATES]; NUM_STATES],
    initial: [f64; NUM_STATES],
    floor: f64,
    streams: [EmissionStream; NUM_STATES],
}

impl Default for AdsrHmmSpec {
    fn default() -> Self {
        let mut t = [[0.0; NUM_STATES]; NUM_STATES];
        let mut set = |a: AdsrState, b: AdsrState, p: f64| t[a.index()][b.index()] = p;
        set(N, N, 0.98);
        set(N, A0, 0.02);
        set(A0, A1, 0.98);
        set(A0, N, 0.02);
        set(A1, D0, 0.98);
        set(A1, N, 0.02);
        set(D0, D1, 0.98);
        set(D0, N, 0.02);
        set(D1, S, 0.98);
        set(D1, N, 0.02);
        set(S, S, 0.97);
        set(S, R, 0.02);
        set(S, A0, 0.01);
        set(R, N, 1.0);
        let mut initial = [0.0; NUM_STATES];
        initial[N.index()] = 1.0;
        AdsrHmmSpec {
            transitions: t,
            initial,
            floor: 1e-4,
            streams: [
                EmissionStream::NotIntermediate,
                EmissionStream::Onset,
                EmissionStream::Onset,
                EmissionStream::Intermediate,
                EmissionStream::Intermediate,
                EmissionStream::Intermediate,
                EmissionStream::Offset,
            ],
        }
    }
}

const ROW_TOLERANCE: f64 = 1e-9;

impl AdsrHmmSpec {
    pub fn new(
        transitions: [[f64; NUM_STATES]; NUM_STATES],
        initial: [f64; NUM_STATES],
        floor: f64,
        streams: [EmissionStream; NUM_STATES],
    ) -> Result<Self> {
        let spec = AdsrHmmSpec {
            transitions,
            initial,
            floor,
            streams,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for from in AdsrState::ALL {
            let row = &self.transitions[from.index()];
            for to in AdsrState::ALL {
                let p = row[to.index()];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::config(format!("transition {from}->{to} = {p} is not a probability")));
                }
                if p != 0.0 && !is_edge(from, to) {
                    return Err(Error::config(format!(
                        "transition {from}->{to} = {p} is outside the ADSR topology and must be 0"
                    )));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::config(format!("transitions out of {from} sum to {sum}, not 1")));
            }
        }
        if self.initial.iter().any(|p| !(0.0..=1.0).contains(p))
            || (self.initial.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE
        {
            return Err(Error::config(format!(
                "initial distribution {:?} is not a probability vector",
                self.initial
            )));
        }
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(Error::config(format!("emission floor {} must lie in (0, 1)", self.floor)));
        }
        Ok(())
    }

    pub fn transition(&self, from: AdsrState, to: AdsrState) -> f64 {
        self.transitions[from.index()][to.index()]
    }

    pub fn transitions(&self) -> &[[f64; NUM_STATES]; NUM_STATES] {
        &self.transitions
    }

    pub fn initial(&self) -> &[f64; NUM_STATES] {
        &self.initial
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn stream(&self, state: AdsrState) -> EmissionStream {
        self.streams[state.index()]
    }

    /// Log of the state's mapped stream value, floored at `floor`.
    pub fn emission_logprob(&self, state: AdsrState, activation: [f32; 3]) -> f64 {
        self.stream(state).select(activation).max(self.floor).ln()
    }

    /// Most likely state path and its log score. Empty input yields an
    /// empty path with score 0.
    pub fn viterbi(&self, key_activations: &[[f32; 3]]) -> Decoded {
        let len = key_activations.len();
        if len == 0 {
            return Decoded {
                path: Vec::new(),
                log_score: 0.0,
            };
        }
        let log_t: Vec<[f64; NUM_STATES]> = self
            .transitions
            .iter()
            .map(|row| row.map(f64::ln))
            .collect();
        let emit = |t: usize| -> [f64; NUM_STATES] {
            AdsrState::ALL.map(|s| self.emission_logprob(s, key_activations[t]))
        };

        let e0 = emit(0);
        let mut delta: [f64; NUM_STATES] = std::array::from_fn(|s| self.initial[s].ln() + e0[s]);
        let mut back = vec![[0u8; NUM_STATES]; len];
        for (t, bt) in back.iter_mut().enumerate().skip(1) {
            let e = emit(t);
            let mut next = [f64::NEG_INFINITY; NUM_STATES];
            for s in 0..NUM_STATES {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for p in 0..NUM_STATES {
                    let cand = delta[p] + log_t[p][s];
                    if cand > best {
                        best = cand;
                        arg = p;
                    }
                }
                next[s] = best + e[s];
                bt[s] = arg as u8;
            }
            delta = next;
        }

        let mut last = 0;
        for s in 1..NUM_STATES {
            if delta[s] > delta[last] {
                last = s;
            }
        }
        let log_score = delta[last];
        let mut path = vec![N; len];
        let mut cur = last;
        for t in (0..len).rev() {
            path[t] = AdsrState::ALL[cur];
            cur = back[t][cur] as usize;
        }
        Decoded { path, log_score }
    }

    /// Log score of an arbitrary path: initial + transition + emission terms.
    pub fn path_log_score(&self, path: &[AdsrState], key_activations: &[[f32; 3]]) -> f64 {
        let mut score = 0.0;
        for (t, (&s, &a)) in path.iter().zip(key_activations).enumerate() {
            let arrive = if t == 0 {
                self.initial[s.index()].ln()
            } else {
                self.transition(path[t - 1], s).ln()
            };
            score = score + arrive + self.emission_logprob(s, a);
        }
        score
    }

    /// Whether every step of the path has positive probability.
    pub fn is_valid_path(&self, path: &[AdsrState]) -> bool {
        match path.first() {
            None => true,
            Some(&first) => {
                self.initial[first.index()] > 0.0 && path.windows(2).all(|w| self.transition(w[0], w[1]) > 0.0)
            }
        }
    }
}

/// On-disk form of the HMM configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HmmFile {
    /// Rows and columns ordered N, A0, A1, D0, D1, S, R.
    transitions: [[f64; NUM_STATES]; NUM_STATES],
    initial: [f64; NUM_STATES],
    floor: f64,
    streams: BTreeMap<AdsrState, EmissionStream>,
}

impl TryFrom<HmmFile> for AdsrHmmSpec {
    type Error = Error;

    fn try_from(file: HmmFile) -> Result<Self> {
        let mut streams = [EmissionStream::NotOnset; NUM_STATES];
        for state in AdsrState::ALL {
            streams[state.index()] = *file
                .streams
                .get(&state)
                .ok_or_else(|| Error::config(format!("stream map lacks state {state}")))?;
        }
        AdsrHmmSpec::new(file.transitions, file.initial, file.floor, streams)
    }
}

impl From<AdsrHmmSpec> for HmmFile {
    fn from(spec: AdsrHmmSpec) -> Self {
        HmmFile {
            transitions: spec.transitions,
            initial: spec.initial,
            floor: spec.floor,
            streams: AdsrState::ALL.into_iter().map(|s| (s, spec.stream(s))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub path: Vec<AdsrState>,
    pub log_score: f64,
}

/// A decoded note span on one key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteSegment {
    pub key: u8,
    /// Frame of the initiating A0.
    pub start_frame: usize,
    /// Exclusive: first R frame, retriggering A0 frame, or end of piece.
    pub end_frame: usize,
    pub reached_s: bool,
    /// States of frames `start_frame..end_frame`.
    pub state_run: Vec<AdsrState>,
}

impl NoteSegment {
    /// Frames of the run in the given states.
    pub fn frames_in<'a>(&'a self, states: &'a [AdsrState]) -> impl Iterator<Item = usize> + 'a {
        self.state_run
            .iter()
            .enumerate()
            .filter(move |(_, s)| states.contains(s))
            .map(move |(i, _)| self.start_frame + i)
    }
}

/// Splits a state path into A0-initiated segments, keeping those that
/// reached S.
pub fn extract_segments(path: &[AdsrState], key: u8) -> Vec<NoteSegment> {
    let mut out = Vec::new();
    let mut open: Option<(usize, Vec<AdsrState>)> = None;
    let mut close = |open: &mut Option<(usize, Vec<AdsrState>)>, end: usize| {
        if let Some((start, run)) = open.take() {
            if run.contains(&S) {
                out.push(NoteSegment {
                    key,
                    start_frame: start,
                    end_frame: end,
                    reached_s: true,
                    state_run: run,
                });
            }
        }
    };
    for (t, &state) in path.iter().enumerate() {
        match state {
            A0 => {
                close(&mut open, t);
                open = Some((t, vec![A0]));
            }
            A1 | D0 | D1 | S => {
                if let Some((_, run)) = open.as_mut() {
                    run.push(state);
                }
            }
            N | R => close(&mut open, t),
        }
    }
    close(&mut open, path.len());
    out
}

/// Decodes every key independently and concatenates the segments in key
/// order.
pub fn decode_all(spec: &AdsrHmmSpec, activations: &ActivationMatrix) -> Vec<NoteSegment> {
    (0..NUM_KEYS)
        .into_par_iter()
        .map(|k| {
            let decoded = spec.viterbi(&activations.key_rows(k));
            extract_segments(&decoded.path, k as u8)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}
