//! On-disk formats: WAV audio, MIDI and TSV note lists, binary matrix
//! containers and JSON segment lists.

pub mod midi;
pub mod tsv;
pub mod wav;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activation::ActivationMatrix;
use crate::container::{Container, Payload};
use crate::error::{Error, Result};
use crate::frontend::{Audio, FilteredSpectrogram};
use crate::hmm::NoteSegment;
use crate::notes::{NoteEvent, FRAME_RATE, NUM_KEYS};
use crate::targets::TargetMatrix;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::from(e).in_file(path))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::from(e).in_file(path))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Audio> {
    let path = path.as_ref();
    wav::decode_wav(&read(path)?).map_err(|e| e.in_file(path))
}

pub fn write_wav(path: impl AsRef<Path>, audio: &Audio) -> Result<()> {
    write(path.as_ref(), &wav::encode_wav(audio))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoteFormat {
    Midi,
    Tsv,
}

impl NoteFormat {
    /// `.mid`/`.midi` are MIDI; anything else is TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("mid") | Some("midi") => NoteFormat::Midi,
            _ => NoteFormat::Tsv,
        }
    }
}

pub fn is_wav(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

pub fn read_notes(path: impl AsRef<Path>) -> Result<Vec<NoteEvent>> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let notes = match NoteFormat::from_path(path) {
        NoteFormat::Midi => midi::decode_midi(&bytes),
        NoteFormat::Tsv => std::str::from_utf8(&bytes)
            .map_err(|e| Error::parse(e.valid_up_to(), "note list is not UTF-8"))
            .and_then(tsv::decode_tsv),
    };
    notes.map_err(|e| e.in_file(path))
}

pub fn write_notes(path: impl AsRef<Path>, notes: &[NoteEvent]) -> Result<()> {
    let path = path.as_ref();
    match NoteFormat::from_path(path) {
        NoteFormat::Midi => write(path, &midi::encode_midi(notes)),
        NoteFormat::Tsv => write(path, tsv::encode_tsv(notes).as_bytes()),
    }
}

fn read_container(path: &Path) -> Result<Container> {
    Container::from_bytes(&read(path)?).map_err(|e| e.in_file(path))
}

pub fn spectrogram_to_container(spec: &FilteredSpectrogram) -> Container {
    Container::new(
        vec![spec.num_frames() as u64, spec.num_bins() as u64],
        Payload::F32(spec.values().to_vec()),
    )
    .expect("spectrogram dims match its payload")
}

pub fn spectrogram_from_container(c: Container) -> Result<FilteredSpectrogram> {
    let (dims, values) = c.into_f32()?;
    match dims.as_slice() {
        &[t, b] => FilteredSpectrogram::from_values(t as usize, b as usize, FRAME_RATE, values),
        other => Err(Error::dimension(format!("spectrogram must be 2-D, file has dims {other:?}"))),
    }
}

pub fn activations_to_container(acts: &ActivationMatrix) -> Container {
    Container::new(
        vec![acts.num_frames() as u64, NUM_KEYS as u64, 3],
        Payload::F32(acts.values().to_vec()),
    )
    .expect("activation dims match their payload")
}

pub fn activations_from_container(c: Container) -> Result<ActivationMatrix> {
    let (dims, values) = c.into_f32()?;
    match dims.as_slice() {
        &[t, k, 3] if k == NUM_KEYS as u64 => ActivationMatrix::from_values(t as usize, FRAME_RATE, values),
        other => Err(Error::dimension(format!(
            "activations must have dims [T, {NUM_KEYS}, 3], file has {other:?}"
        ))),
    }
}

pub fn targets_to_container(targets: &TargetMatrix) -> Container {
    Container::new(
        vec![targets.num_frames() as u64, NUM_KEYS as u64, 3],
        Payload::F32(targets.values().iter().map(|&v| f32::from(v)).collect()),
    )
    .expect("target dims match their payload")
}

pub fn read_spectrogram(path: impl AsRef<Path>) -> Result<FilteredSpectrogram> {
    let path = path.as_ref();
    spectrogram_from_container(read_container(path)?).map_err(|e| e.in_file(path))
}

pub fn write_spectrogram(path: impl AsRef<Path>, spec: &FilteredSpectrogram) -> Result<()> {
    write(path.as_ref(), &spectrogram_to_container(spec).to_bytes())
}

pub fn read_activations(path: impl AsRef<Path>) -> Result<ActivationMatrix> {
    let path = path.as_ref();
    activations_from_container(read_container(path)?).map_err(|e| e.in_file(path))
}

pub fn write_activations(path: impl AsRef<Path>, acts: &ActivationMatrix) -> Result<()> {
    write(path.as_ref(), &activations_to_container(acts).to_bytes())
}

pub fn write_targets(path: impl AsRef<Path>, targets: &TargetMatrix) -> Result<()> {
    write(path.as_ref(), &targets_to_container(targets).to_bytes())
}

/// Decoder output as written by `adsr decode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentFile {
    pub frame_rate: f64,
    pub num_frames: usize,
    pub segments: Vec<NoteSegment>,
}

pub fn read_segments(path: impl AsRef<Path>) -> Result<SegmentFile> {
    let path = path.as_ref();
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| json_error(&bytes, e).in_file(path))
}

pub fn write_segments(path: impl AsRef<Path>, file: &SegmentFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(file)?;
    text.push('\n');
    write(path.as_ref(), text.as_bytes())
}

/// A JSON error located by byte offset.
pub fn json_error(bytes: &[u8], e: serde_json::Error) -> Error {
    if e.line() == 0 {
        return Error::Json(e);
    }
    let line_start: usize = bytes
        .split_inclusive(|&b| b == b'\n')
        .take(e.line() - 1)
        .map(<[u8]>::len)
        .sum();
    Error::parse(line_start + e.column().saturating_sub(1), e.to_string())
}
