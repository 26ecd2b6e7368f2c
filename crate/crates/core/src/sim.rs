//! Synthetic activations shaped like a network's output for a known note
//! list, with optional corruption.
//!
//! Each note produces an onset bump of `bump_width` frames starting at
//! `floor(start * fps)`, an intermediate plateau over the frames in
//! `[start, end)` and an offset bump starting at `floor(end * fps)`.
//! Corruption is applied in order: dropout of intermediate frames inside
//! notes, spurious blips, additive Gaussian noise, clipping to `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationMatrix, Stream};
use crate::error::{Error, Result};
use crate::notes::{frame_of, frames_within, NoteEvent, NUM_KEYS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub onset_peak: f64,
    pub intermediate_peak: f64,
    pub offset_peak: f64,
    pub bump_width: usize,
    pub noise_sigma: f64,
    /// Per frame, key and stream.
    pub blip_prob: f64,
    /// Per intermediate frame inside a note.
    pub dropout_prob: f64,
    pub seed: u64,
    pub frame_rate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            onset_peak: 0.95,
            intermediate_peak: 0.95,
            offset_peak: 0.95,
            bump_width: 3,
            noise_sigma: 0.0,
            blip_prob: 0.0,
            dropout_prob: 0.0,
            seed: 0,
            frame_rate: crate::notes::FRAME_RATE,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("onset_peak", self.onset_peak),
            ("intermediate_peak", self.intermediate_peak),
            ("offset_peak", self.offset_peak),
        ] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::config(format!("{name} = {p} must lie in (0, 1]")));
            }
        }
        for (name, p) in [("blip_prob", self.blip_prob), ("dropout_prob", self.dropout_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} = {p} must lie in [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.noise_sigma) {
            return Err(Error::config(format!("noise_sigma = {} must lie in [0, 1]", self.noise_sigma)));
        }
        if self.bump_width == 0 || !(self.frame_rate > 0.0) {
            return Err(Error::config("bump_width and frame_rate must be positive"));
        }
        Ok(())
    }
}

pub fn simulate(notes: &[NoteEvent], num_frames: usize, cfg: &SimConfig) -> Result<ActivationMatrix> {
    cfg.validate()?;
    let fps = cfg.frame_rate;
    let mut acts = ActivationMatrix::zeros(num_frames, fps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let raise = |acts: &mut ActivationMatrix, t: i64, key: usize, stream: Stream, v: f64| {
        if t >= 0 && (t as usize) < num_frames {
            let t = t as usize;
            let cur = acts.get(t, key, stream);
            acts.set(t, key, stream, cur.max(v as f32));
        }
    };

    let mut inside: Vec<(usize, usize)> = Vec::new();
    for note in notes {
        let key = usize::from(note.key);
        if key >= NUM_KEYS {
            return Err(Error::InvalidKey(i64::from(note.key)));
        }
        let on = frame_of(note.start, fps);
        let off = frame_of(note.end, fps);
        for d in 0..cfg.bump_width as i64 {
            raise(&mut acts, on + d, key, Stream::Onset, cfg.onset_peak);
            raise(&mut acts, off + d, key, Stream::Offset, cfg.offset_peak);
        }
        for t in frames_within(note.start, note.end, fps) {
            raise(&mut acts, t, key, Stream::Intermediate, cfg.intermediate_peak);
            if t >= 0 && (t as usize) < num_frames {
                inside.push((t as usize, key));
            }
        }
    }

    if cfg.dropout_prob > 0.0 {
        inside.sort_unstable();
        inside.dedup();
        for &(t, key) in &inside {
            if rng.random_bool(cfg.dropout_prob) {
                acts.set(t, key, Stream::Intermediate, 0.0);
            }
        }
    }

    let peaks = [cfg.onset_peak, cfg.intermediate_peak, cfg.offset_peak];
    if cfg.blip_prob > 0.0 {
        for t in 0..num_frames {
            for key in 0..NUM_KEYS {
                for stream in Stream::ALL {
                    if rng.random_bool(cfg.blip_prob) {
                        let level = rng.random_range(0.5..=1.0) * peaks[stream.index()];
                        let cur = acts.get(t, key, stream);
                        acts.set(t, key, stream, cur.max(level as f32));
                    }
                }
            }
        }
    }

    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::config(e.to_string()))?;
        for t in 0..num_frames {
            for key in 0..NUM_KEYS {
                for stream in Stream::ALL {
                    let v = f64::from(acts.get(t, key, stream)) + normal.sample(&mut rng);
                    acts.set(t, key, stream, v as f32);
                }
            }
        }
    }

    Ok(acts)
}
