//! Binary onset / intermediate / offset training targets derived from notes.

use crate::activation::Stream;
use crate::error::{Error, Result};
use crate::notes::{frame_of, frames_within, NoteEvent, NUM_KEYS};

/// `T x 88 x 3` binary targets, stream axis last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetMatrix {
    num_frames: usize,
    frame_rate_millihz: u64,
    values: Vec<u8>,
}

impl TargetMatrix {
    pub fn zeros(num_frames: usize, frame_rate: f64) -> Self {
        TargetMatrix {
            num_frames,
            frame_rate_millihz: (frame_rate * 1000.0).round() as u64,
            values: vec![0; num_frames * NUM_KEYS * 3],
        }
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate_millihz as f64 / 1000.0
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, frame: usize, key: usize, stream: Stream) -> bool {
        self.values[(frame * NUM_KEYS + key) * 3 + stream.index()] != 0
    }

    fn mark(&mut self, frame: i64, key: usize, stream: Stream) {
        if frame >= 0 && (frame as usize) < self.num_frames {
            self.values[(frame as usize * NUM_KEYS + key) * 3 + stream.index()] = 1;
        }
    }

    /// The `88 x 3` target row of one frame as floats, for training.
    pub fn row(&self, frame: usize) -> Vec<f64> {
        let start = frame * NUM_KEYS * 3;
        self.values[start..start + NUM_KEYS * 3]
            .iter()
            .map(|&v| f64::from(v))
            .collect()
    }

    /// The intermediate stream as a binary `T x 88` grid.
    pub fn intermediate(&self) -> Vec<Vec<bool>> {
        (0..self.num_frames)
            .map(|t| {
                (0..NUM_KEYS)
                    .map(|k| self.get(t, k, Stream::Intermediate))
                    .collect()
            })
            .collect()
    }
}

/// Rasterize notes into targets.
///
/// Onsets and offsets are elongated to the frame before and after
/// `floor(time * fps)`; the intermediate stream covers every frame whose
/// start time lies in `[start, end)`. Overlapping notes OR together, and
/// marks past the last frame are clipped.
pub fn derive_targets(notes: &[NoteEvent], num_frames: usize, frame_rate: f64) -> Result<TargetMatrix> {
    let mut targets = TargetMatrix::zeros(num_frames, frame_rate);
    let horizon = num_frames as f64 / frame_rate;
    for note in notes {
        let key = usize::from(note.key);
        if key >= NUM_KEYS {
            return Err(Error::InvalidKey(i64::from(note.key)));
        }
        if note.end > horizon {
            log::warn!(
                "note on key {key} ({:.3}s..{:.3}s) extends past {horizon:.3}s and is clipped",
                note.start,
                note.end
            );
        }
        let onset = frame_of(note.start, frame_rate);
        let offset = frame_of(note.end, frame_rate);
        for d in -1..=1 {
            targets.mark(onset + d, key, Stream::Onset);
            targets.mark(offset + d, key, Stream::Offset);
        }
        for f in frames_within(note.start, note.end, frame_rate) {
            targets.mark(f, key, Stream::Intermediate);
        }
    }
    Ok(targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn marked(t: &TargetMatrix, key: usize, stream: Stream) -> Vec<usize> {
        (0..t.num_frames()).filter(|&f| t.get(f, key, stream)).collect()
    }

    #[test]
    fn reference_note() {
        let note = NoteEvent::new(0.10, 0.50, 39).unwrap();
        let t = derive_targets(&[note], 50, 50.0).unwrap();
        assert_eq!(marked(&t, 39, Stream::Onset), vec![4, 5, 6]);
        assert_eq!(marked(&t, 39, Stream::Intermediate), (5..25).collect::<Vec<_>>());
        assert_eq!(marked(&t, 39, Stream::Offset), vec![24, 25, 26]);
        let others: usize = t.values().iter().map(|&v| usize::from(v)).sum();
        assert_eq!(others, 3 + 20 + 3);
    }

    #[test]
    fn empty_is_zero() {
        let t = derive_targets(&[], 17, 50.0).unwrap();
        assert!(t.values().iter().all(|&v| v == 0));
    }

    #[test]
    fn onset_at_zero_clips_left() {
        let note = NoteEvent::new(0.0, 0.3, 0).unwrap();
        let t = derive_targets(&[note], 50, 50.0).unwrap();
        assert_eq!(marked(&t, 0, Stream::Onset), vec![0, 1]);
    }

    #[test]
    fn note_past_end_is_clipped() {
        let note = NoteEvent::new(0.5, 2.0, 10).unwrap();
        let t = derive_targets(&[note], 50, 50.0).unwrap();
        assert_eq!(marked(&t, 10, Stream::Intermediate), (25..50).collect::<Vec<_>>());
        assert!(marked(&t, 10, Stream::Offset).is_empty());
    }

    #[test]
    fn invalid_key_errors() {
        let note = NoteEvent { start: 0.0, end: 1.0, key: 90 };
        assert!(matches!(derive_targets(&[note], 10, 50.0), Err(Error::InvalidKey(90))));
    }

    fn arb_notes() -> impl Strategy<Value = Vec<NoteEvent>> {
        prop::collection::vec((0u32..900, 1u32..300, 0u8..88), 0..12).prop_map(|v| {
            v.into_iter()
                .map(|(s, d, k)| {
                    let s = f64::from(s) / 1000.0;
                    NoteEvent::new(s, s + f64::from(d) / 1000.0, k).unwrap()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn permutation_invariant(notes in arb_notes(), seed in any::<u64>()) {
            let mut shuffled = notes.clone();
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(derive_targets(&notes, 60, 50.0).unwrap(), derive_targets(&shuffled, 60, 50.0).unwrap());
        }

        #[test]
        fn onset_marks_per_note(notes in arb_notes()) {
            for note in &notes {
                let t = derive_targets(std::slice::from_ref(note), 60, 50.0).unwrap();
                let k = usize::from(note.key);
                let onsets = marked(&t, k, Stream::Onset);
                prop_assert!((1..=3).contains(&onsets.len()));
                let ints = marked(&t, k, Stream::Intermediate);
                if let Some(&first) = ints.first() {
                    prop_assert!(onsets[0] <= first);
                    // one connected run per isolated note
                    prop_assert_eq!(ints.len(), ints[ints.len() - 1] - first + 1);
                }
            }
        }
    }
}
