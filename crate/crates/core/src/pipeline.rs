//! File-to-file subcommands. Each takes the loaded configuration and
//! explicit paths, and `transcribe` chains the in-memory equivalents of
//! `features`, `infer`, `decode` and `filter`.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::activation::ActivationMatrix;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{average_over_pieces, evaluate_piece, EvalReport, PieceReport};
use crate::filter::FilterRule;
use crate::frontend::{FeatureExtractor, FilteredSpectrogram};
use crate::hmm::{decode_all, AdsrHmmSpec, NoteSegment};
use crate::io::{self, SegmentFile};
use crate::net::{load_weights, save_weights, Architecture, NetworkParams};
use crate::notes::NoteEvent;
use crate::sim::simulate;
use crate::toy::{self, ToyDataConfig, TrainReport};

pub fn cmd_features(cfg: &PipelineConfig, audio: &Path, out: &Path) -> Result<FilteredSpectrogram> {
    let spec = features(cfg, audio)?;
    io::write_spectrogram(out, &spec)?;
    Ok(spec)
}

fn features(cfg: &PipelineConfig, audio: &Path) -> Result<FilteredSpectrogram> {
    let extractor = FeatureExtractor::new(cfg.features.clone())?;
    extractor.compute(&io::read_wav(audio)?).map_err(|e| e.in_file(audio))
}

/// Renders the synthetic eight-key dataset into `dir`.
pub fn cmd_toy_data(data: &ToyDataConfig, dir: &Path) -> Result<()> {
    toy::write_dataset(dir, &toy::render_dataset(data)?)
}

/// Trains the reference architecture on every `<name>.wav` with a note
/// list in `dataset`, scoring the held-out tail.
pub fn cmd_train_toy(cfg: &PipelineConfig, dataset: &Path, out: &Path) -> Result<TrainReport> {
    let extractor = FeatureExtractor::new(cfg.features.clone())?;
    let pieces = toy::load_dataset(dataset, &extractor)?;
    let (train, holdout) = toy::split_holdout(pieces, cfg.training.holdout_fraction);
    let arch = Architecture::reference(cfg.features.context_frames, cfg.features.num_bins);
    let mut params = NetworkParams::init(arch, cfg.training.seed)?;
    let report = toy::train(&mut params, &train, &holdout, &cfg.training, cfg.noise)?;
    save_weights(&params, out)?;
    Ok(report)
}

/// `input` is either a WAV file or a spectrogram container.
pub fn cmd_infer(cfg: &PipelineConfig, weights: &Path, input: &Path, out: &Path) -> Result<ActivationMatrix> {
    let params = load_weights(weights)?;
    let spec = if io::is_wav(input) {
        features(cfg, input)?
    } else {
        io::read_spectrogram(input)?
    };
    let acts = params.infer_piece(&spec).map_err(|e| e.in_file(input))?;
    io::write_activations(out, &acts)?;
    Ok(acts)
}

/// The HMM from `hmm_path`, else the configured one.
pub fn load_hmm(cfg: &PipelineConfig, hmm_path: Option<&Path>) -> Result<AdsrHmmSpec> {
    match hmm_path.or(cfg.paths.hmm.as_deref()) {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
            serde_json::from_slice(&bytes).map_err(|e| io::json_error(&bytes, e).in_file(path))
        }
        None => Ok(cfg.hmm.clone()),
    }
}

fn decode(hmm: &AdsrHmmSpec, acts: &ActivationMatrix) -> SegmentFile {
    SegmentFile {
        frame_rate: acts.frame_rate(),
        num_frames: acts.num_frames(),
        segments: decode_all(hmm, acts),
    }
}

pub fn cmd_decode(cfg: &PipelineConfig, activations: &Path, hmm_path: Option<&Path>, out: &Path) -> Result<SegmentFile> {
    let hmm = load_hmm(cfg, hmm_path)?;
    let acts = io::read_activations(activations)?;
    let segments = decode(&hmm, &acts);
    io::write_segments(out, &segments)?;
    Ok(segments)
}

fn filter(rule: &FilterRule, segments: &[NoteSegment], acts: &ActivationMatrix) -> Result<Vec<NoteEvent>> {
    rule.filter_all(segments, acts)
}

pub fn cmd_filter(
    cfg: &PipelineConfig,
    segments: &Path,
    activations: &Path,
    theta: Option<f64>,
    out: &Path,
) -> Result<Vec<NoteEvent>> {
    let rule = match theta {
        Some(theta) => FilterRule::new(theta)?,
        None => cfg.filter,
    };
    let file = io::read_segments(segments)?;
    let acts = io::read_activations(activations)?;
    if file.num_frames != acts.num_frames() {
        return Err(Error::dimension(format!(
            "segments were decoded from {} frames but the activations have {}",
            file.num_frames,
            acts.num_frames()
        )));
    }
    let notes = filter(&rule, &file.segments, &acts).map_err(|e| e.in_file(segments))?;
    io::write_notes(out, &notes)?;
    Ok(notes)
}

/// Frames needed to hold every note plus its offset bump.
pub fn simulation_frames(notes: &[NoteEvent], cfg: &PipelineConfig) -> usize {
    let fps = cfg.simulation.frame_rate;
    let last = notes.iter().map(|n| n.end).fold(0.0, f64::max);
    (last * fps).floor() as usize + cfg.simulation.bump_width + 1
}

pub fn cmd_simulate(
    cfg: &PipelineConfig,
    notes: &Path,
    num_frames: Option<usize>,
    out: &Path,
) -> Result<ActivationMatrix> {
    let notes = io::read_notes(notes)?;
    let frames = num_frames.unwrap_or_else(|| simulation_frames(&notes, cfg));
    let acts = simulate(&notes, frames, &cfg.simulation)?;
    io::write_activations(out, &acts)?;
    Ok(acts)
}

/// Note-list files in `dir` keyed by file stem.
fn note_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::from(e).in_file(dir))? {
        let path = entry.map_err(|e| Error::from(e).in_file(dir))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("mid" | "midi" | "tsv" | "txt")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if let Some(previous) = files.insert(stem.to_string(), path.clone()) {
                    return Err(Error::config(format!(
                        "{} and {} name the same piece",
                        previous.display(),
                        path.display()
                    )));
                }
            }
        }
    }
    Ok(files)
}

fn score_pair(cfg: &PipelineConfig, name: String, reference: &Path, estimate: &Path) -> Result<PieceReport> {
    let r = io::read_notes(reference)?;
    let e = io::read_notes(estimate)?;
    evaluate_piece(name, &r, &e, &cfg.matching, f64::from(cfg.features.frame_rate))
}

/// Scores one pair of note files, or every pair of same-named files in two
/// directories, and writes the JSON report.
pub fn cmd_eval(cfg: &PipelineConfig, reference: &Path, estimate: &Path, out: Option<&Path>) -> Result<EvalReport> {
    let pieces = if reference.is_dir() {
        if !estimate.is_dir() {
            return Err(Error::config("reference is a directory, so the estimate must be one too"));
        }
        let refs = note_files(reference)?;
        let ests = note_files(estimate)?;
        if let Some(missing) = refs.keys().find(|k| !ests.contains_key(*k)) {
            return Err(Error::config(format!("no estimate for piece {missing}")));
        }
        refs.into_par_iter()
            .map(|(name, r)| {
                let e = &ests[&name];
                score_pair(cfg, name, &r, e)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let name = reference
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        vec![score_pair(cfg, name, reference, estimate)?]
    };
    let report = average_over_pieces(pieces);
    if let Some(out) = out {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(out, text).map_err(|e| Error::from(e).in_file(out))?;
    }
    Ok(report)
}

/// Audio to notes in one process, identical to running `features`,
/// `infer`, `decode` and `filter` through intermediate files.
pub fn transcribe(cfg: &PipelineConfig, params: &NetworkParams, audio: &Path) -> Result<Vec<NoteEvent>> {
    let spec = features(cfg, audio)?;
    let acts = params.infer_piece(&spec).map_err(|e| e.in_file(audio))?;
    let segments = decode(&cfg.hmm, &acts);
    filter(&cfg.filter, &segments.segments, &acts)
}

pub fn cmd_transcribe(cfg: &PipelineConfig, weights: &Path, audio: &Path, out: &Path) -> Result<Vec<NoteEvent>> {
    let params = load_weights(weights)?;
    let mut cfg = cfg.clone();
    cfg.hmm = load_hmm(&cfg, None)?;
    let notes = transcribe(&cfg, &params, audio)?;
    io::write_notes(out, &notes)?;
    Ok(notes)
}

/// Plain-text table of per-piece and averaged F-measures for the frame,
/// onset-only and complete-note families.
pub fn render_table(report: &EvalReport) -> String {
    let width = report.pieces.iter().map(|p| p.piece.len()).max().unwrap_or(0).max(7);
    let mut out = String::new();
    let row = |out: &mut String, name: &str, m: &crate::eval::Metrics| {
        writeln!(
            out,
            "{name:<width$}  {:>6.2}  {:>6.2}  {:>6.2}",
            100.0 * m.frames.f_measure,
            100.0 * m.note_onsets.f_measure,
            100.0 * m.complete_notes.f_measure
        )
        .expect("writing to a String");
    };
    writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>6}", "piece", "frames", "onsets", "notes").expect("writing to a String");
    for p in &report.pieces {
        row(&mut out, &p.piece, &p.metrics);
    }
    row(&mut out, "average", &report.average);
    out
}
