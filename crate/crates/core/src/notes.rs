//! Note events and frame/time conversions.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of piano keys.
pub const NUM_KEYS: usize = 88;

/// MIDI pitch of key 0 (A0).
pub const LOWEST_MIDI_PITCH: u8 = 21;

/// Analysis frame rate shared by features, targets and activations.
pub const FRAME_RATE: f64 = 50.0;

/// One transcribed or annotated note.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    /// Start in seconds.
    pub start: f64,
    /// End in seconds; always greater than `start`.
    pub end: f64,
    /// Key index, 0 = MIDI pitch 21.
    pub key: u8,
}

impl NoteEvent {
    pub fn new(start: f64, end: f64, key: u8) -> Result<Self> {
        if usize::from(key) >= NUM_KEYS {
            return Err(Error::InvalidKey(i64::from(key)));
        }
        if !(start.is_finite() && end.is_finite()) || start < 0.0 || start >= end {
            return Err(Error::InvalidNote(format!(
                "need 0 <= start < end, got start={start} end={end}"
            )));
        }
        Ok(NoteEvent { start, end, key })
    }

    pub fn from_midi_pitch(start: f64, end: f64, pitch: u8) -> Result<Self> {
        if !(LOWEST_MIDI_PITCH..LOWEST_MIDI_PITCH + NUM_KEYS as u8).contains(&pitch) {
            return Err(Error::InvalidKey(i64::from(pitch) - i64::from(LOWEST_MIDI_PITCH)));
        }
        Self::new(start, end, pitch - LOWEST_MIDI_PITCH)
    }

    pub fn midi_pitch(&self) -> u8 {
        self.key + LOWEST_MIDI_PITCH
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// `floor(time * fps)`, the frame an instant falls into.
pub fn frame_of(time: f64, fps: f64) -> i64 {
    (time * fps).floor() as i64
}

/// Frames `f` with `f / fps` in the half-open interval `[start, end)`.
pub fn frames_within(start: f64, end: f64, fps: f64) -> Range<i64> {
    first_frame_at_or_after(start, fps)..first_frame_at_or_after(end, fps)
}

fn first_frame_at_or_after(time: f64, fps: f64) -> i64 {
    let mut f = (time * fps).ceil() as i64;
    while (f as f64) / fps < time {
        f += 1;
    }
    while (f - 1) as f64 / fps >= time {
        f -= 1;
    }
    f
}

/// Sort notes by start, key, then end, the canonical order for writing.
pub fn sort_notes(notes: &mut [NoteEvent]) {
    notes.sort_by(|a, b| {
        a.start
            .total_cmp(&b.start)
            .then(a.key.cmp(&b.key))
            .then(a.end.total_cmp(&b.end))
    });
}
