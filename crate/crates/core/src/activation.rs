//! Per-frame, per-key pseudo-probabilities for the three note-phase streams.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::notes::NUM_KEYS;

/// The three output streams, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Onset = 0,
    Intermediate = 1,
    Offset = 2,
}

impl Stream {
    pub const ALL: [Stream; 3] = [Stream::Onset, Stream::Intermediate, Stream::Offset];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// `T x 88 x 3` activations in `[0, 1]`, stream axis last.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    num_frames: usize,
    frame_rate: f64,
    values: Vec<f32>,
}

impl ActivationMatrix {
    pub fn zeros(num_frames: usize, frame_rate: f64) -> Self {
        ActivationMatrix {
            num_frames,
            frame_rate,
            values: vec![0.0; num_frames * NUM_KEYS * 3],
        }
    }

    pub fn from_values(num_frames: usize, frame_rate: f64, values: Vec<f32>) -> Result<Self> {
        if values.len() != num_frames * NUM_KEYS * 3 {
            return Err(Error::dimension(format!(
                "activation payload has {} values, expected {num_frames} x {NUM_KEYS} x 3",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::dimension(format!(
                "activation value {} at flat index {pos} is outside [0, 1]",
                values[pos]
            )));
        }
        Ok(ActivationMatrix {
            num_frames,
            frame_rate,
            values,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    fn offset(&self, frame: usize, key: usize) -> usize {
        debug_assert!(frame < self.num_frames && key < NUM_KEYS);
        (frame * NUM_KEYS + key) * 3
    }

    pub fn get(&self, frame: usize, key: usize, stream: Stream) -> f32 {
        self.values[self.offset(frame, key) + stream.index()]
    }

    /// The `[onset, intermediate, offset]` triple of one cell.
    pub fn triple(&self, frame: usize, key: usize) -> [f32; 3] {
        let o = self.offset(frame, key);
        [self.values[o], self.values[o + 1], self.values[o + 2]]
    }

    /// Sets a value, clamping into `[0, 1]`.
    pub fn set(&mut self, frame: usize, key: usize, stream: Stream, value: f32) {
        let o = self.offset(frame, key) + stream.index();
        self.values[o] = value.clamp(0.0, 1.0);
    }

    pub fn set_triple(&mut self, frame: usize, key: usize, triple: [f32; 3]) {
        for stream in Stream::ALL {
            self.set(frame, key, stream, triple[stream.index()]);
        }
    }

    /// The `T x 3` activations of a single key.
    pub fn key_rows(&self, key: usize) -> Vec<[f32; 3]> {
        (0..self.num_frames).map(|t| self.triple(t, key)).collect()
    }
}
