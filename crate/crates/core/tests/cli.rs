use std::path::Path;
use std::process::{Command, Output};

use adsr_transcribe::config::PipelineConfig;
use adsr_transcribe::net::{save_weights, Architecture, NetworkParams};
use adsr_transcribe::{io, toy, ActivationMatrix, NoteEvent, FRAME_RATE};

fn adsr(args: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adsr")).args(args).output().expect("binary runs")
}

fn ok(args: &[&Path]) -> String {
    let out = adsr(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(s: &str) -> &Path {
    Path::new(s)
}

fn piece() -> Vec<NoteEvent> {
    [(0.2, 0.9, 40), (0.5, 1.4, 52), (1.1, 1.6, 40), (1.8, 2.5, 67)]
        .into_iter()
        .map(|(s, e, k)| NoteEvent::new(s, e, k).unwrap())
        .collect()
}

#[test]
fn noise_free_chain_recovers_every_note() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    io::write_notes(d.join("ref.mid"), &piece()).unwrap();
    ok(&[p("simulate"), &d.join("ref.mid"), &d.join("acts.bin")]);
    ok(&[p("decode"), &d.join("acts.bin"), &d.join("seg.json")]);
    ok(&[p("filter"), &d.join("seg.json"), &d.join("acts.bin"), &d.join("est.mid")]);
    let table = ok(&[p("eval"), &d.join("ref.mid"), &d.join("est.mid"), p("--out"), &d.join("report.json")]);
    assert!(table.lines().any(|l| l.starts_with("ref") && l.ends_with("100.00")), "{table}");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["average"]["complete_notes"]["f_measure"], 1.0);
}

#[test]
fn identical_note_files_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("a")).unwrap();
    std::fs::create_dir(d.join("b")).unwrap();
    for name in ["one.mid", "two.mid"] {
        io::write_notes(d.join("a").join(name), &piece()).unwrap();
        io::write_notes(d.join("b").join(name), &piece()).unwrap();
    }
    ok(&[p("eval"), &d.join("a"), &d.join("b"), p("--out"), &d.join("r.json")]);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["pieces"].as_array().unwrap().len(), 2);
    for family in ["frames", "note_onsets", "complete_notes"] {
        assert_eq!(report["average"][family]["f_measure"], 1.0, "{family}");
    }
}

#[test]
fn silent_activations_give_an_empty_note_list() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    io::write_activations(d.join("zero.bin"), &ActivationMatrix::zeros(120, FRAME_RATE)).unwrap();
    ok(&[p("decode"), &d.join("zero.bin"), &d.join("seg.json")]);
    ok(&[p("filter"), &d.join("seg.json"), &d.join("zero.bin"), &d.join("out.tsv")]);
    assert!(io::read_notes(d.join("out.tsv")).unwrap().is_empty());
}

#[test]
fn malformed_inputs_fail_with_a_byte_offset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.tsv"), "0.1\t0.5\t60\n0.7\toops\t62\n").unwrap();
    let out = adsr(&[p("simulate"), &d.join("bad.tsv"), &d.join("acts.bin")]);
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("byte offset 15"), "{msg}");

    std::fs::write(d.join("bad.bin"), b"ADSR\x01garbage").unwrap();
    let out = adsr(&[p("decode"), &d.join("bad.bin"), &d.join("seg.json")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte offset"));

    std::fs::write(d.join("cfg.json"), "{\"filter\": {\"theta\": 0.5, \"bogus\": 1}}").unwrap();
    let out = adsr(&[p("--config"), &d.join("cfg.json"), p("default-config")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte offset"));
}

#[test]
fn transcribe_matches_the_chained_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = PipelineConfig::default();
    let arch = Architecture::reference(cfg.features.context_frames, cfg.features.num_bins);
    save_weights(&NetworkParams::init(arch, 3).unwrap(), d.join("w.bin")).unwrap();
    let audio = toy::render_notes(&piece(), 1.2, 44_100);
    io::write_wav(d.join("a.wav"), &audio).unwrap();

    ok(&[p("transcribe"), &d.join("w.bin"), &d.join("a.wav"), &d.join("direct.mid")]);
    ok(&[p("features"), &d.join("a.wav"), &d.join("spec.bin")]);
    ok(&[p("infer"), &d.join("w.bin"), &d.join("spec.bin"), &d.join("acts.bin")]);
    ok(&[p("decode"), &d.join("acts.bin"), &d.join("seg.json")]);
    ok(&[p("filter"), &d.join("seg.json"), &d.join("acts.bin"), &d.join("chained.mid")]);
    assert_eq!(std::fs::read(d.join("direct.mid")).unwrap(), std::fs::read(d.join("chained.mid")).unwrap());

    ok(&[p("infer"), &d.join("w.bin"), &d.join("a.wav"), &d.join("acts_wav.bin")]);
    assert_eq!(std::fs::read(d.join("acts.bin")).unwrap(), std::fs::read(d.join("acts_wav.bin")).unwrap());
}

#[test]
fn default_config_round_trips_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let json = ok(&[p("default-config")]);
    assert_eq!(PipelineConfig::from_json(&json).unwrap(), PipelineConfig::default());
    std::fs::write(d.join("cfg.json"), &json).unwrap();
    assert_eq!(ok(&[p("--config"), &d.join("cfg.json"), p("default-config")]), json);
}

#[test]
fn seed_controls_the_simulator() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = r#"{"simulation": {"noise_sigma": 0.2}}"#;
    std::fs::write(d.join("cfg.json"), cfg).unwrap();
    io::write_notes(d.join("ref.tsv"), &piece()).unwrap();
    let run = |seed: &str, out: &str| {
        ok(&[p("--config"), &d.join("cfg.json"), p("--seed"), p(seed), p("simulate"), &d.join("ref.tsv"), &d.join(out)]);
        std::fs::read(d.join(out)).unwrap()
    };
    assert_eq!(run("7", "a.bin"), run("7", "b.bin"));
    assert_ne!(run("7", "a.bin"), run("8", "c.bin"));
}
