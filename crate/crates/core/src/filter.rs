//! Final keep/discard rule for decoded segments.

use serde::{Deserialize, Serialize};

use crate::activation::{ActivationMatrix, Stream};
use crate::error::{Error, Result};
use crate::hmm::{AdsrState, NoteSegment};
use crate::notes::{NoteEvent, NUM_KEYS};

const ATTACK: [AdsrState; 2] = [AdsrState::A0, AdsrState::A1];
const BODY: [AdsrState; 3] = [AdsrState::D0, AdsrState::D1, AdsrState::S];

/// A segment survives if some attack frame has an onset activation of at
/// least `theta` and some decay/sustain frame has an intermediate
/// activation of at least `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterRule {
    pub theta: f64,
}

impl Default for FilterRule {
    fn default() -> Self {
        FilterRule { theta: 0.5 }
    }
}

impl FilterRule {
    pub fn new(theta: f64) -> Result<Self> {
        let rule = FilterRule { theta };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::config(format!("theta = {} must lie in [0, 1]", self.theta)));
        }
        Ok(())
    }

    pub fn keep(&self, segment: &NoteSegment, activations: &ActivationMatrix) -> Result<bool> {
        let key = usize::from(segment.key);
        if key >= NUM_KEYS {
            return Err(Error::InvalidKey(i64::from(segment.key)));
        }
        if segment.end_frame - segment.start_frame != segment.state_run.len()
            || segment.end_frame > activations.num_frames()
        {
            return Err(Error::dimension(format!(
                "segment {}..{} on key {key} (run of {}) does not fit activations of {} frames",
                segment.start_frame,
                segment.end_frame,
                segment.state_run.len(),
                activations.num_frames()
            )));
        }
        let peak = |states: &[AdsrState], stream: Stream| -> f64 {
            segment
                .frames_in(states)
                .map(|t| f64::from(activations.get(t, key, stream)))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        Ok(peak(&ATTACK, Stream::Onset) >= self.theta && peak(&BODY, Stream::Intermediate) >= self.theta)
    }

    /// Kept segments as notes, frames converted with the activation frame rate.
    pub fn filter_all(&self, segments: &[NoteSegment], activations: &ActivationMatrix) -> Result<Vec<NoteEvent>> {
        let fps = activations.frame_rate();
        let mut notes = Vec::new();
        for seg in segments {
            if self.keep(seg, activations)? {
                notes.push(NoteEvent::new(
                    seg.start_frame as f64 / fps,
                    seg.end_frame as f64 / fps,
                    seg.key,
                )?);
            }
        }
        Ok(notes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::extract_segments;
    use AdsrState::*;

    fn segment() -> NoteSegment {
        let path = [N, A0, A1, D0, D1, S, S, R, N];
        extract_segments(&path, 3).remove(0)
    }

    fn acts(onset: f32, body: f32) -> ActivationMatrix {
        let mut a = ActivationMatrix::zeros(9, 50.0);
        a.set(1, 3, Stream::Onset, onset);
        for t in 3..7 {
            a.set(t, 3, Stream::Intermediate, body);
        }
        a
    }

    #[test]
    fn threshold_is_inclusive() {
        let rule = FilterRule::new(0.5).unwrap();
        assert!(rule.keep(&segment(), &acts(0.5, 0.6)).unwrap());
        assert!(!rule.keep(&segment(), &acts(0.49, 0.6)).unwrap());
    }

    #[test]
    fn both_clauses_required() {
        let rule = FilterRule::new(0.5).unwrap();
        assert!(!rule.keep(&segment(), &acts(0.9, 0.1)).unwrap());
        assert!(!rule.keep(&segment(), &acts(0.1, 0.9)).unwrap());
        assert!(!rule.keep(&segment(), &ActivationMatrix::zeros(9, 50.0)).unwrap());
    }

    #[test]
    fn zero_theta_keeps_everything() {
        let rule = FilterRule::new(0.0).unwrap();
        assert!(rule.keep(&segment(), &ActivationMatrix::zeros(9, 50.0)).unwrap());
    }

    #[test]
    fn ignores_frames_outside_the_run() {
        let rule = FilterRule::new(0.5).unwrap();
        let mut a = ActivationMatrix::zeros(9, 50.0);
        // onset before A0, intermediate in the R frame
        a.set(0, 3, Stream::Onset, 1.0);
        a.set(4, 3, Stream::Onset, 1.0);
        a.set(7, 3, Stream::Intermediate, 1.0);
        a.set(2, 3, Stream::Intermediate, 1.0);
        assert!(!rule.keep(&segment(), &a).unwrap());
    }

    #[test]
    fn shape_mismatch_errors() {
        let rule = FilterRule::default();
        assert!(rule.keep(&segment(), &ActivationMatrix::zeros(5, 50.0)).is_err());
        assert!(FilterRule::new(1.5).is_err());
    }

    #[test]
    fn converts_frames_to_seconds() {
        let notes = FilterRule::default().filter_all(&[segment()], &acts(0.9, 0.9)).unwrap();
        assert_eq!(notes, vec![NoteEvent::new(1.0 / 50.0, 7.0 / 50.0, 3).unwrap()]);
    }
}
