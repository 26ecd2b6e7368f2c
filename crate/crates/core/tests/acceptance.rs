//! Acceptance checks, one line per criterion. Runs as a plain binary so
//! the verdicts show up in `cargo test` output.

mod common;

use std::time::{Duration, Instant};

use adsr_transcribe::eval::{average_over_pieces, evaluate_piece, match_notes, EvalReport, MatchingConfig};
use adsr_transcribe::filter::FilterRule;
use adsr_transcribe::frontend::{FeatureConfig, FeatureExtractor};
use adsr_transcribe::hmm::{decode_all, AdsrHmmSpec};
use adsr_transcribe::net::{gradient_check, layer_gradient_check, Architecture, Example, Layer, LayerSpec, NetworkParams, NoiseConfig, Tensor};
use adsr_transcribe::sim::{simulate, SimConfig};
use adsr_transcribe::toy::{featurize, render_dataset, split_holdout, train, ToyDataConfig, TrainConfig};
use adsr_transcribe::{NoteEvent, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

/// Complete-note F over the 50 noisy pieces must reach this. A one-time
/// calibration run with seed 4242 measured an average of 0.9954.
const NOISY_COMPLETE_F_THRESHOLD: f64 = 0.90;

const PIECES: usize = 50;
const PIECE_SEED: u64 = 4242;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        pass,
        detail: detail.into(),
    })
}

fn pieces() -> Vec<Vec<NoteEvent>> {
    let mut rng = ChaCha8Rng::seed_from_u64(PIECE_SEED);
    (0..PIECES).map(|_| random_piece(&mut rng, 6, 8.0)).collect()
}

fn round_trip(pieces: &[Vec<NoteEvent>], sim: &SimConfig) -> Result<EvalReport> {
    let hmm = AdsrHmmSpec::default();
    let rule = FilterRule::default();
    let matching = MatchingConfig::default();
    let mut reports = Vec::new();
    for (i, notes) in pieces.iter().enumerate() {
        let cfg = SimConfig {
            seed: sim.seed + i as u64,
            ..sim.clone()
        };
        let acts = simulate(notes, frames_for(notes, cfg.bump_width), &cfg)?;
        let segments = decode_all(&hmm, &acts);
        let estimate = rule.filter_all(&segments, &acts)?;
        reports.push(evaluate_piece(format!("piece_{i:02}"), notes, &estimate, &matching, FPS)?);
    }
    Ok(average_over_pieces(reports))
}

fn viterbi_oracle() -> Result<Verdict> {
    let began = Instant::now();
    let spec = AdsrHmmSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..200 {
        let len = rng.random_range(1..=8);
        let rows = random_key_rows(&mut rng, len);
        let decoded = spec.viterbi(&rows);
        let best = brute_force_viterbi(&spec, &rows).expect("N is always reachable");
        let consistent = spec.is_valid_path(&decoded.path) && spec.path_log_score(&decoded.path, &rows) == decoded.log_score;
        if decoded.log_score != best || !consistent {
            mismatches += 1;
        }
    }
    let elapsed = began.elapsed();
    verdict(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("200 matrices, {mismatches} mismatches, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn minimum_note_length() -> Result<Verdict> {
    let spec = AdsrHmmSpec::default();
    let rule = FilterRule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut kept = 0;
    let mut shortest = usize::MAX;
    for i in 0..1000 {
        let notes: Vec<NoteEvent> = (0..rng.random_range(0..6))
            .map(|_| {
                let s = rng.random_range(0.0..0.6);
                NoteEvent::new(s, s + rng.random_range(0.01..0.4), rng.random_range(0..4)).unwrap()
            })
            .collect();
        let sim = SimConfig {
            noise_sigma: rng.random_range(0.0..0.3),
            blip_prob: rng.random_range(0.0..0.2),
            dropout_prob: rng.random_range(0.0..0.5),
            seed: i,
            ..SimConfig::default()
        };
        let acts = simulate(&notes, 40, &sim)?;
        for seg in decode_all(&spec, &acts) {
            if rule.keep(&seg, &acts)? {
                kept += 1;
                shortest = shortest.min(seg.end_frame - seg.start_frame);
            }
        }
    }
    verdict(
        kept > 0 && shortest >= 5,
        format!("1000 decodes, {kept} kept segments, shortest {shortest} frames"),
    )
}

fn noise_free_round_trip(pieces: &[Vec<NoteEvent>]) -> Result<Verdict> {
    let began = Instant::now();
    let report = round_trip(pieces, &SimConfig::default())?;
    let perfect = report.pieces.iter().all(|p| {
        let c = p.metrics.complete_notes;
        c.precision == 1.0 && c.recall == 1.0 && c.f_measure == 1.0
    });
    let elapsed = began.elapsed();
    let c = report.average.complete_notes;
    verdict(
        perfect && elapsed < Duration::from_secs(30),
        format!(
            "{} pieces, complete-note P={} R={} F={}, {:.2} s",
            pieces.len(),
            c.precision,
            c.recall,
            c.f_measure,
            elapsed.as_secs_f64()
        ),
    )
}

fn noisy_config() -> SimConfig {
    SimConfig {
        noise_sigma: 0.05,
        blip_prob: 0.002,
        dropout_prob: 0.02,
        seed: PIECE_SEED,
        ..SimConfig::default()
    }
}

fn noisy_robustness(report: &EvalReport) -> Result<Verdict> {
    let f = report.average.complete_notes.f_measure;
    verdict(
        f >= NOISY_COMPLETE_F_THRESHOLD,
        format!("complete-note F={f:.4} (threshold {NOISY_COMPLETE_F_THRESHOLD})"),
    )
}

fn gradient_check_reference() -> Result<Verdict> {
    let began = Instant::now();
    let arch = Architecture::reference(11, 144);
    let params = NetworkParams::init(arch, 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let batch: Vec<Example> = (0..2)
        .map(|_| Example {
            window: adsr_transcribe::frontend::ContextWindow {
                rows: 11,
                cols: 144,
                center_frame: 0,
                values: (0..11 * 144).map(|_| rng.random_range(0.0..2.0)).collect(),
            },
            target: (0..264).map(|_| f64::from(rng.random_bool(0.3) as u8)).collect(),
        })
        .collect();
    let report = gradient_check(&params, &batch, 1e-4, 100, 7)?;
    let mut worst = report.max_relative_error();
    let fewest = report.layers.iter().map(|l| l.checked).min().unwrap_or(0);
    let skipped: usize = report.layers.iter().map(|l| l.skipped).sum();
    let mut kinds: Vec<&str> = report.layers.iter().map(|l| l.kind).collect();
    let mut isolated = |spec: LayerSpec, input: [usize; 3]| -> Result<()> {
        let layer = Layer::new(spec, input, 0)?;
        let x = Tensor::from_vec(input, (0..input.iter().product()).map(|_| rng.random_range(-2.0..2.0)).collect());
        worst = worst.max(layer_gradient_check(&layer, &x, 1e-4, 8));
        kinds.push(spec.kind());
        Ok(())
    };
    isolated(LayerSpec::Elu, [4, 5, 6])?;
    isolated(LayerSpec::Sigmoid, [4, 5, 6])?;
    isolated(LayerSpec::Pool { time: 1, freq: 2 }, [4, 5, 6])?;
    kinds.sort_unstable();
    kinds.dedup();
    let elapsed = began.elapsed();
    verdict(
        worst < 1e-4 && fewest >= 100 && elapsed < Duration::from_secs(60),
        format!(
            "{} trainable layers plus isolated {:?}, at least {fewest} parameters per layer ({skipped} kink-straddling draws replaced), max relative error {worst:.2e}, {:.1} s",
            report.layers.len(),
            kinds,
            elapsed.as_secs_f64()
        ),
    )
}

fn toy_training() -> Result<Verdict> {
    let began = Instant::now();
    let extractor = FeatureExtractor::new(FeatureConfig::default())?;
    let pieces = featurize(&render_dataset(&ToyDataConfig::default())?, &extractor)?;
    let (train_set, holdout) = split_holdout(pieces, 0.25);
    let mut params = NetworkParams::init(Architecture::reference(11, 144), 0)?;
    let report = train(&mut params, &train_set, &holdout, &TrainConfig::default(), NoiseConfig::default())?;
    let f = report.holdout_frames.map_or(0.0, |p| p.f_measure);
    let elapsed = began.elapsed();
    verdict(
        f >= 0.9 && elapsed < Duration::from_secs(600),
        format!(
            "{} train / {} held-out pieces, {} epochs, held-out framewise F={f:.4}, {:.1} s",
            train_set.len(),
            holdout.len(),
            report.epochs_run,
            elapsed.as_secs_f64()
        ),
    )
}

fn tolerance_boundaries() -> Result<Verdict> {
    let cfg = MatchingConfig::default();
    let note = |s: f64, e: f64| NoteEvent::new(s, e, 40).unwrap();
    let onset = cfg.with_offsets(false);
    let complete = cfg.with_offsets(true);
    let cases = [
        ("onset +50 ms", onset.admissible(&note(1.0, 2.0), &note(1.05, 2.0)), true),
        ("onset -50 ms", onset.admissible(&note(1.0, 2.0), &note(0.95, 2.0)), true),
        ("onset +50.1 ms", onset.admissible(&note(1.0, 2.0), &note(1.0501, 2.0)), false),
        ("onset -50.1 ms", onset.admissible(&note(1.0, 2.0), &note(0.9499, 2.0)), false),
        ("1.0 s note, offset +150 ms", complete.admissible(&note(1.0, 2.0), &note(1.0, 2.15)), true),
        ("1.0 s note, offset +200 ms", complete.admissible(&note(1.0, 2.0), &note(1.0, 2.2)), true),
        ("1.0 s note, offset +201 ms", complete.admissible(&note(1.0, 2.0), &note(1.0, 2.201)), false),
        ("0.2 s note, offset +150 ms", complete.admissible(&note(1.0, 1.2), &note(1.0, 1.35)), false),
        ("0.2 s note, offset +50 ms", complete.admissible(&note(1.0, 1.2), &note(1.0, 1.25)), true),
        ("0.2 s note, offset +51 ms", complete.admissible(&note(1.0, 1.2), &note(1.0, 1.251)), false),
    ];
    let wrong: Vec<&str> = cases.iter().filter(|(_, got, want)| got != want).map(|(n, _, _)| *n).collect();
    verdict(
        wrong.is_empty(),
        format!("{} hand-built cases, wrong: {wrong:?}", cases.len()),
    )
}

fn matching_optimality() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    for trial in 0..500 {
        let cfg = MatchingConfig::default().with_offsets(trial % 2 == 1);
        let (nr, ne) = (rng.random_range(0..=6), rng.random_range(0..=6));
        let reference = clustered_notes(&mut rng, nr);
        let estimate = clustered_notes(&mut rng, ne);
        if match_notes(&reference, &estimate, &cfg).len() != brute_force_matching(&reference, &estimate, &cfg) {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("500 trials, {mismatches} mismatches"))
}

fn report_families(report: &EvalReport) -> String {
    let a = &report.average;
    format!(
        "frames P={:.4} R={:.4} F={:.4} | note onsets P={:.4} R={:.4} F={:.4} | complete notes P={:.4} R={:.4} F={:.4}",
        a.frames.precision,
        a.frames.recall,
        a.frames.f_measure,
        a.note_onsets.precision,
        a.note_onsets.recall,
        a.note_onsets.f_measure,
        a.complete_notes.precision,
        a.complete_notes.recall,
        a.complete_notes.f_measure
    )
}

fn main() {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build_global()
        .expect("rayon pool is configured once");
    let pieces = pieces();
    let noisy = round_trip(&pieces, &noisy_config());
    let checks: Vec<(usize, &str, Result<Verdict>)> = vec![
        (1, "viterbi oracle equivalence", viterbi_oracle()),
        (2, "minimum note length", minimum_note_length()),
        (3, "noise-free round trip", noise_free_round_trip(&pieces)),
        (4, "noisy robustness", round_trip(&pieces, &noisy_config()).and_then(|r| noisy_robustness(&r))),
        (5, "gradient check", gradient_check_reference()),
        (6, "toy training", toy_training()),
        (7, "tolerance boundaries", tolerance_boundaries()),
        (8, "matching optimality", matching_optimality()),
    ];
    let mut failed = 0;
    for (id, name, outcome) in checks {
        let (pass, detail) = match outcome {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {id} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    match &noisy {
        Ok(report) => println!("criterion 9 [REPORT] metric families on the noisy set: {}", report_families(report)),
        Err(e) => println!("criterion 9 [REPORT] unavailable: {e}"),
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
