//! Tab-separated note lists: `start_sec<TAB>end_sec<TAB>midi_pitch` per
//! line; blank lines and `#` comments are skipped.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::notes::NoteEvent;

pub fn decode_tsv(text: &str) -> Result<Vec<NoteEvent>> {
    let mut notes = Vec::new();
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let line_at = offset;
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        if content.trim().is_empty() || content.trim_start().starts_with('#') {
            continue;
        }
        let mut fields = Vec::with_capacity(3);
        let mut field_at = line_at;
        for f in content.split('\t') {
            fields.push((field_at, f.trim()));
            field_at += f.len() + 1;
        }
        if fields.len() != 3 {
            return Err(Error::parse(line_at, format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let num = |(at, f): (usize, &str)| -> Result<f64> {
            f.parse::<f64>()
                .map_err(|_| Error::parse(at, format!("{f:?} is not a number")))
        };
        let start = num(fields[0])?;
        let end = num(fields[1])?;
        let (pitch_at, pitch_text) = fields[2];
        let pitch: u8 = pitch_text
            .parse()
            .map_err(|_| Error::parse(pitch_at, format!("{pitch_text:?} is not a MIDI pitch")))?;
        let note = NoteEvent::from_midi_pitch(start, end, pitch)
            .map_err(|e| Error::parse(line_at, e.to_string()))?;
        notes.push(note);
    }
    Ok(notes)
}

pub fn encode_tsv(notes: &[NoteEvent]) -> String {
    let mut out = String::new();
    for n in notes {
        writeln!(out, "{}\t{}\t{}", n.start, n.end, n.midi_pitch()).expect("writing to a String");
    }
    out
}
