//! Standard MIDI files: note on/off pairing from type 0 or 1 files, and
//! type 0 writing at one tick per millisecond.
//!
//! Sustain pedal (CC64) and velocities are ignored.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::notes::{sort_notes, NoteEvent, LOWEST_MIDI_PITCH, NUM_KEYS};

const TICKS_PER_QUARTER: u16 = 1000;
const MICROS_PER_QUARTER: u32 = 1_000_000;
const DEFAULT_TEMPO: u32 = 500_000;
const VELOCITY: u8 = 64;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn byte(&mut self) -> Result<u8> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| Error::parse(self.pos, "unexpected end of MIDI data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse(self.pos, format!("need {n} bytes, file ends first")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let s = self.take(2)?;
        Ok(u16::from_be_bytes([s[0], s[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let s = self.take(4)?;
        Ok(u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
    }

    fn varlen(&mut self) -> Result<u32> {
        let start = self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.byte()?;
            value = (value << 7) | u32::from(b & 0x7F);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(Error::parse(start, "variable-length quantity longer than 4 bytes"))
    }
}

#[derive(Debug, Clone, Copy)]
enum Event {
    On { channel: u8, pitch: u8 },
    Off { channel: u8, pitch: u8 },
    Tempo(u32),
}

pub fn decode_midi(bytes: &[u8]) -> Result<Vec<NoteEvent>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != b"MThd" {
        return Err(Error::parse(0, "missing MThd header"));
    }
    let header_len = c.u32()? as usize;
    if header_len < 6 {
        return Err(Error::parse(4, format!("MThd length {header_len} < 6")));
    }
    let format_at = c.pos;
    let format = c.u16()?;
    let tracks = c.u16()?;
    let division_at = c.pos;
    let division = c.u16()?;
    c.take(header_len - 6)?;
    if format > 1 {
        return Err(Error::parse(format_at, format!("MIDI format {format} unsupported; need type 0 or 1")));
    }
    if division == 0 {
        return Err(Error::parse(division_at, "division of zero ticks"));
    }

    let mut events: Vec<(u64, usize, Event)> = Vec::new();
    for _ in 0..tracks {
        let chunk_at = c.pos;
        let id = c.take(4)?;
        let len = c.u32()? as usize;
        let body = c.take(len).map_err(|_| Error::parse(chunk_at + 4, format!("chunk of {len} bytes runs past end of file")))?;
        if id != b"MTrk" {
            continue;
        }
        read_track(body, chunk_at + 8, &mut events)?;
    }

    // stable order: tick, then file position
    events.sort_by_key(|&(tick, seq, _)| (tick, seq));
    let seconds = TempoMap::new(division, &events);
    let mut open: HashMap<(u8, u8), VecDeque<u64>> = HashMap::new();
    let mut notes = Vec::new();
    for &(tick, _, ev) in &events {
        match ev {
            Event::On { channel, pitch } => open.entry((channel, pitch)).or_default().push_back(tick),
            Event::Off { channel, pitch } => {
                let Some(start) = open.get_mut(&(channel, pitch)).and_then(VecDeque::pop_front) else {
                    continue;
                };
                if tick == start {
                    continue;
                }
                if !(LOWEST_MIDI_PITCH..LOWEST_MIDI_PITCH + NUM_KEYS as u8).contains(&pitch) {
                    log::warn!("skipping MIDI pitch {pitch} outside the piano range");
                    continue;
                }
                notes.push(NoteEvent::from_midi_pitch(seconds.at(start), seconds.at(tick), pitch)?);
            }
            Event::Tempo(_) => {}
        }
    }
    let dangling: usize = open.values().map(VecDeque::len).sum();
    if dangling > 0 {
        log::warn!("{dangling} note-on events without a matching note-off were dropped");
    }
    sort_notes(&mut notes);
    Ok(notes)
}

fn read_track(body: &[u8], base: usize, events: &mut Vec<(u64, usize, Event)>) -> Result<()> {
    let mut c = Cursor { bytes: body, pos: 0 };
    let at = |c: &Cursor| base + c.pos;
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    while c.pos < body.len() {
        tick += u64::from(c.varlen().map_err(|e| rebase(e, base))?);
        let status_at = at(&c);
        let mut status = c.byte().map_err(|e| rebase(e, base))?;
        let first_data = if status < 0x80 {
            let s = running.ok_or_else(|| Error::parse(status_at, "data byte without running status"))?;
            let d = status;
            status = s;
            Some(d)
        } else {
            None
        };
        match status {
            0xFF => {
                running = None;
                let kind = c.byte().map_err(|e| rebase(e, base))?;
                let len = c.varlen().map_err(|e| rebase(e, base))? as usize;
                let data = c.take(len).map_err(|e| rebase(e, base))?;
                match kind {
                    0x51 if len == 3 => {
                        let tempo = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        events.push((tick, status_at, Event::Tempo(tempo)));
                    }
                    0x2F => return Ok(()),
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = c.varlen().map_err(|e| rebase(e, base))? as usize;
                c.take(len).map_err(|e| rebase(e, base))?;
            }
            0x80..=0xEF => {
                running = Some(status);
                let kind = status & 0xF0;
                let channel = status & 0x0F;
                let n_data = if matches!(kind, 0xC0 | 0xD0) { 1 } else { 2 };
                let mut data = [0u8; 2];
                let mut filled = 0;
                if let Some(d) = first_data {
                    data[0] = d;
                    filled = 1;
                }
                while filled < n_data {
                    let b_at = at(&c);
                    let b = c.byte().map_err(|e| rebase(e, base))?;
                    if b >= 0x80 {
                        return Err(Error::parse(b_at, format!("status byte {b:#x} where a data byte was expected")));
                    }
                    data[filled] = b;
                    filled += 1;
                }
                let (pitch, velocity) = (data[0], data[1]);
                match kind {
                    0x90 if velocity > 0 => events.push((tick, status_at, Event::On { channel, pitch })),
                    0x90 | 0x80 => events.push((tick, status_at, Event::Off { channel, pitch })),
                    _ => {}
                }
            }
            other => return Err(Error::parse(status_at, format!("unexpected status byte {other:#x}"))),
        }
    }
    Ok(())
}

fn rebase(e: Error, base: usize) -> Error {
    match e {
        Error::Parse { offset, message } => Error::Parse {
            offset: offset + base as u64,
            message,
        },
        other => other,
    }
}

/// Tick to seconds conversion honoring tempo changes.
struct TempoMap {
    /// `(tick, seconds at tick, microseconds per quarter)`.
    segments: Vec<(u64, f64, u32)>,
    ticks_per_quarter: f64,
    /// SMPTE timing: seconds per tick, tempo-independent.
    smpte: Option<f64>,
}

impl TempoMap {
    fn new(division: u16, events: &[(u64, usize, Event)]) -> Self {
        if division & 0x8000 != 0 {
            let fps = f64::from(-((division >> 8) as u8 as i8));
            let per_frame = f64::from(division & 0xFF);
            return TempoMap {
                segments: Vec::new(),
                ticks_per_quarter: 1.0,
                smpte: Some(1.0 / (fps * per_frame)),
            };
        }
        let tpq = f64::from(division);
        let mut segments = vec![(0u64, 0.0f64, DEFAULT_TEMPO)];
        for &(tick, _, ev) in events {
            if let Event::Tempo(tempo) = ev {
                let &(t0, s0, q0) = segments.last().unwrap();
                let start = s0 + ((tick - t0) as f64 * f64::from(q0)) / (tpq * 1e6);
                if tick == t0 {
                    segments.pop();
                    segments.push((tick, s0, tempo));
                } else {
                    segments.push((tick, start, tempo));
                }
            }
        }
        TempoMap {
            segments,
            ticks_per_quarter: tpq,
            smpte: None,
        }
    }

    fn at(&self, tick: u64) -> f64 {
        if let Some(spt) = self.smpte {
            return tick as f64 * spt;
        }
        let i = self.segments.partition_point(|&(t, _, _)| t <= tick) - 1;
        let (t0, s0, q) = self.segments[i];
        s0 + ((tick - t0) as f64 * f64::from(q)) / (self.ticks_per_quarter * 1e6)
    }
}

fn write_varlen(out: &mut Vec<u8>, mut v: u32) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (v & 0x7F) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { buf[i] | 0x80 } else { buf[i] });
    }
}

/// Type 0 file, channel 0, program 0, fixed velocity, 1 ms per tick.
pub fn encode_midi(notes: &[NoteEvent]) -> Vec<u8> {
    let to_tick = |s: f64| (s * 1000.0).round().max(0.0) as u64;
    // (tick, off-before-on, pitch)
    let mut events: Vec<(u64, u8, u8)> = Vec::with_capacity(notes.len() * 2);
    for n in notes {
        let (on, off) = (to_tick(n.start), to_tick(n.end));
        if off <= on {
            continue;
        }
        events.push((on, 1, n.midi_pitch()));
        events.push((off, 0, n.midi_pitch()));
    }
    events.sort_unstable();

    let mut track = Vec::new();
    track.extend_from_slice(&[0x00, 0xFF, 0x51, 0x03]);
    track.extend_from_slice(&MICROS_PER_QUARTER.to_be_bytes()[1..]);
    track.extend_from_slice(&[0x00, 0xC0, 0x00]);
    let mut last = 0u64;
    for (tick, is_on, pitch) in events {
        write_varlen(&mut track, (tick - last) as u32);
        last = tick;
        if is_on == 1 {
            track.extend_from_slice(&[0x90, pitch, VELOCITY]);
        } else {
            track.extend_from_slice(&[0x80, pitch, 0]);
        }
    }
    track.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);

    let mut out = Vec::with_capacity(22 + track.len());
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&TICKS_PER_QUARTER.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}
