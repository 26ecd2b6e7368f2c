//! A small synthetic training task: harmonic tones on eight keys rendered
//! to audio, with a plain minibatch SGD loop and held-out framewise scoring.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::Stream;
use crate::error::{Error, Result};
use crate::eval::{framewise_metrics, Prf};
use crate::frontend::{Audio, FeatureExtractor, FilteredSpectrogram};
use crate::net::{Example, NetworkParams, NoiseConfig};
use crate::notes::{sort_notes, NoteEvent, NUM_KEYS};
use crate::targets::derive_targets;

/// MIDI pitches of the C major scale from C4 to C5.
pub const TOY_PITCHES: [u8; 8] = [60, 62, 64, 65, 67, 69, 71, 72];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop early once this much wall time has passed.
    pub time_budget_secs: Option<f64>,
    /// Fraction of pieces (taken from the end, by file name) held out for
    /// scoring.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            batch_size: 16,
            epochs: 3,
            seed: 0,
            time_budget_secs: None,
            holdout_fraction: 0.25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) || self.batch_size == 0 {
            return Err(Error::config("learning_rate must be finite and >= 0, batch_size positive"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::config(format!(
                "holdout_fraction = {} must lie in [0, 1)",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyDataConfig {
    pub pieces: usize,
    pub piece_seconds: f64,
    pub pitches: Vec<u8>,
    pub min_duration: f64,
    pub max_duration: f64,
    pub min_gap: f64,
    pub max_gap: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for ToyDataConfig {
    fn default() -> Self {
        ToyDataConfig {
            pieces: 12,
            piece_seconds: 4.0,
            pitches: TOY_PITCHES.to_vec(),
            min_duration: 0.15,
            max_duration: 0.8,
            min_gap: 0.1,
            max_gap: 1.2,
            sample_rate: 44_100,
            seed: 0,
        }
    }
}

/// One rendered piece with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPiece {
    pub name: String,
    pub audio: Audio,
    pub notes: Vec<NoteEvent>,
}

/// Random notes on each pitch independently: alternating gaps and notes
/// until the piece ends.
pub fn random_toy_notes<R: Rng>(cfg: &ToyDataConfig, rng: &mut R) -> Result<Vec<NoteEvent>> {
    let mut notes = Vec::new();
    for &pitch in &cfg.pitches {
        let mut t = rng.random_range(0.0..cfg.max_gap);
        loop {
            let d = rng.random_range(cfg.min_duration..=cfg.max_duration);
            if t + d > cfg.piece_seconds - 0.05 {
                break;
            }
            notes.push(NoteEvent::from_midi_pitch(t, t + d, pitch)?);
            t += d + rng.random_range(cfg.min_gap..=cfg.max_gap);
        }
    }
    sort_notes(&mut notes);
    Ok(notes)
}

/// Additive synthesis: four harmonics with amplitudes 1/h, a 5 ms linear
/// attack, exponential decay and a 30 ms release after the note end.
pub fn render_notes(notes: &[NoteEvent], seconds: f64, sample_rate: u32) -> Audio {
    const ATTACK: f64 = 0.005;
    const RELEASE: f64 = 0.03;
    let sr = f64::from(sample_rate);
    let len = (seconds * sr).round() as usize;
    let mut buf = vec![0.0f64; len];
    for note in notes {
        let f0 = 440.0 * 2f64.powf((f64::from(note.midi_pitch()) - 69.0) / 12.0);
        let first = (note.start * sr).ceil() as usize;
        let last = (((note.end + RELEASE) * sr).ceil() as usize).min(len);
        for (i, sample) in buf.iter_mut().enumerate().take(last).skip(first) {
            let t = i as f64 / sr - note.start;
            let mut env = (t / ATTACK).min(1.0) * (-1.5 * t).exp();
            let past_end = i as f64 / sr - note.end;
            if past_end > 0.0 {
                env *= (1.0 - past_end / RELEASE).max(0.0);
            }
            let tone: f64 = (1..=4)
                .map(|h| (2.0 * std::f64::consts::PI * f0 * h as f64 * t).sin() / h as f64)
                .sum();
            *sample += 0.1 * env * tone;
        }
    }
    Audio {
        samples: buf.into_iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect(),
        sample_rate,
    }
}

pub fn render_dataset(cfg: &ToyDataConfig) -> Result<Vec<ToyPiece>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.pieces)
        .map(|i| {
            let notes = random_toy_notes(cfg, &mut rng)?;
            Ok(ToyPiece {
                name: format!("toy_{i:03}"),
                audio: render_notes(&notes, cfg.piece_seconds, cfg.sample_rate),
                notes,
            })
        })
        .collect()
}

/// Writes `<name>.wav` and `<name>.tsv` per piece.
pub fn write_dataset(dir: impl AsRef<Path>, pieces: &[ToyPiece]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    for piece in pieces {
        crate::io::write_wav(dir.join(format!("{}.wav", piece.name)), &piece.audio)?;
        crate::io::write_notes(dir.join(format!("{}.tsv", piece.name)), &piece.notes)?;
    }
    Ok(())
}

/// A piece's features and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledPiece {
    pub name: String,
    pub spectrogram: FilteredSpectrogram,
    pub notes: Vec<NoteEvent>,
}

impl LabelledPiece {
    pub fn examples(&self, context: usize) -> Result<Vec<Example>> {
        let targets = derive_targets(&self.notes, self.spectrogram.num_frames(), self.spectrogram.frame_rate())?;
        (0..self.spectrogram.num_frames())
            .map(|t| {
                Ok(Example {
                    window: self.spectrogram.context_window(t, context)?,
                    target: targets.row(t),
                })
            })
            .collect()
    }
}

pub fn featurize(pieces: &[ToyPiece], extractor: &FeatureExtractor) -> Result<Vec<LabelledPiece>> {
    pieces
        .iter()
        .map(|p| {
            Ok(LabelledPiece {
                name: p.name.clone(),
                spectrogram: extractor.compute(&p.audio)?,
                notes: p.notes.clone(),
            })
        })
        .collect()
}

/// Pairs every `<name>.wav` in `dir` with `<name>.tsv`, `.mid` or `.midi`,
/// sorted by name.
pub fn load_dataset(dir: impl AsRef<Path>, extractor: &FeatureExtractor) -> Result<Vec<LabelledPiece>> {
    let dir = dir.as_ref();
    let mut wavs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::from(e).in_file(dir))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| crate::io::is_wav(p))
        .collect();
    wavs.sort();
    if wavs.is_empty() {
        return Err(Error::config(format!("no .wav files in {}", dir.display())));
    }
    wavs.iter()
        .map(|wav| {
            let labels = ["tsv", "mid", "midi"]
                .iter()
                .map(|ext| wav.with_extension(ext))
                .find(|p| p.exists())
                .ok_or_else(|| Error::config(format!("no note list next to {}", wav.display())))?;
            Ok(LabelledPiece {
                name: wav.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                spectrogram: extractor.compute(&crate::io::read_wav(wav)?)?,
                notes: crate::io::read_notes(&labels)?,
            })
        })
        .collect()
}

/// Splits off the last `fraction` of pieces (at least one when the
/// fraction is positive and there are two or more pieces).
pub fn split_holdout(mut pieces: Vec<LabelledPiece>, fraction: f64) -> (Vec<LabelledPiece>, Vec<LabelledPiece>) {
    let mut n = (pieces.len() as f64 * fraction).round() as usize;
    if fraction > 0.0 && pieces.len() >= 2 {
        n = n.clamp(1, pieces.len() - 1);
    }
    let held = pieces.split_off(pieces.len() - n);
    (pieces, held)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub steps: usize,
    pub final_epoch_loss: f64,
    pub seconds: f64,
    pub holdout_frames: Option<Prf>,
}

/// Minibatch SGD over shuffled frames. Shuffling and noise are derived
/// from `cfg.seed`.
pub fn train(
    params: &mut NetworkParams,
    train: &[LabelledPiece],
    holdout: &[LabelledPiece],
    cfg: &TrainConfig,
    noise: NoiseConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    noise.validate()?;
    let context = params.input_shape()[1];
    let mut examples = Vec::new();
    for piece in train {
        examples.extend(piece.examples(context)?);
    }
    if examples.is_empty() {
        return Err(Error::config("training set has no frames"));
    }
    let began = Instant::now();
    let budget = cfg.time_budget_secs.map(Duration::from_secs_f64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut steps = 0;
    let mut epochs_run = 0;
    let mut final_epoch_loss = f64::NAN;
    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if budget.is_some_and(|b| began.elapsed() >= b) {
                log::info!("time budget reached after {steps} steps");
                break 'epochs;
            }
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let step_seed = rng.random::<u64>();
            loss_sum += params.train_step(&batch, cfg.learning_rate, noise, step_seed)?;
            batches += 1;
            steps += 1;
        }
        final_epoch_loss = loss_sum / batches.max(1) as f64;
        epochs_run = epoch + 1;
        log::info!("epoch {epochs_run}: mean loss {final_epoch_loss:.5}");
    }
    let holdout_frames = if holdout.is_empty() {
        None
    } else {
        Some(framewise_score(params, holdout)?)
    };
    Ok(TrainReport {
        epochs_run,
        steps,
        final_epoch_loss,
        seconds: began.elapsed().as_secs_f64(),
        holdout_frames,
    })
}

/// Framewise P/R/F of the intermediate stream thresholded at 0.5, pooled
/// over all pieces.
pub fn framewise_score(params: &NetworkParams, pieces: &[LabelledPiece]) -> Result<Prf> {
    let mut reference = Vec::new();
    let mut estimate = Vec::new();
    for piece in pieces {
        let acts = params.infer_piece(&piece.spectrogram)?;
        let targets = derive_targets(&piece.notes, acts.num_frames(), acts.frame_rate())?;
        reference.extend(targets.intermediate());
        estimate.extend((0..acts.num_frames()).map(|t| {
            (0..NUM_KEYS)
                .map(|k| acts.get(t, k, Stream::Intermediate) >= 0.5)
                .collect::<Vec<bool>>()
        }));
    }
    framewise_metrics(&reference, &estimate)
}
