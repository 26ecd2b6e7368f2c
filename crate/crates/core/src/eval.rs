//! Frame, note-onset and complete-note precision / recall / F-measure,
//! macro-averaged over pieces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::notes::{NoteEvent, NUM_KEYS};
use crate::targets::derive_targets;

/// Time differences are rounded to this many decimals before comparing
/// against a tolerance, so that e.g. 1.05 - 1.00 counts as 50 ms.
const DECIMALS: i32 = 4;

fn round_time(x: f64) -> f64 {
    let scale = 10f64.powi(DECIMALS);
    (x * scale).round() / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingConfig {
    pub onset_tolerance: f64,
    pub offset_min_tolerance: f64,
    pub offset_ratio: f64,
    pub require_offset: bool,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        MatchingConfig {
            onset_tolerance: 0.05,
            offset_min_tolerance: 0.05,
            offset_ratio: 0.2,
            require_offset: false,
        }
    }
}

impl MatchingConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.onset_tolerance >= 0.0
            && self.offset_min_tolerance >= 0.0
            && (0.0..1.0).contains(&self.offset_ratio);
        if !ok {
            return Err(Error::config(format!(
                "tolerances must be nonnegative and offset_ratio in [0, 1): {self:?}"
            )));
        }
        Ok(())
    }

    pub fn with_offsets(self, require_offset: bool) -> Self {
        MatchingConfig { require_offset, ..self }
    }

    /// Whether `estimate` may be matched to `reference`.
    pub fn admissible(&self, reference: &NoteEvent, estimate: &NoteEvent) -> bool {
        if reference.key != estimate.key {
            return false;
        }
        if round_time((reference.start - estimate.start).abs()) > self.onset_tolerance {
            return false;
        }
        if self.require_offset {
            let tolerance = self.offset_min_tolerance.max(self.offset_ratio * reference.duration());
            if round_time((reference.end - estimate.end).abs()) > tolerance {
                return false;
            }
        }
        true
    }
}

/// A maximum-cardinality one-to-one matching over admissible pairs, as
/// `(reference index, estimate index)` sorted by reference index.
pub fn match_notes(reference: &[NoteEvent], estimate: &[NoteEvent], cfg: &MatchingConfig) -> Vec<(usize, usize)> {
    let adjacency: Vec<Vec<usize>> = reference
        .iter()
        .map(|r| {
            estimate
                .iter()
                .enumerate()
                .filter(|(_, e)| cfg.admissible(r, e))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; estimate.len()];
    for i in 0..reference.len() {
        let mut seen = vec![false; estimate.len()];
        augment(i, &adjacency, &mut owner, &mut seen);
    }
    let mut pairs: Vec<(usize, usize)> = owner
        .iter()
        .enumerate()
        .filter_map(|(j, o)| o.map(|i| (i, j)))
        .collect();
    pairs.sort_unstable();
    pairs
}

fn augment(i: usize, adjacency: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &j in &adjacency[i] {
        if seen[j] {
            continue;
        }
        seen[j] = true;
        if owner[j].is_none_or(|other| augment(other, adjacency, owner, seen)) {
            owner[j] = Some(i);
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

impl Prf {
    /// From counts: `P = hits / estimated` (0 if nothing estimated),
    /// `R = hits / reference` (0 if no reference), `F` their harmonic mean.
    pub fn from_counts(hits: usize, estimated: usize, reference: usize) -> Self {
        let precision = if estimated == 0 { 0.0 } else { hits as f64 / estimated as f64 };
        let recall = if reference == 0 { 0.0 } else { hits as f64 / reference as f64 };
        let f_measure = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f_measure,
        }
    }
}

pub fn note_metrics(reference: &[NoteEvent], estimate: &[NoteEvent], cfg: &MatchingConfig) -> Prf {
    let hits = match_notes(reference, estimate, cfg).len();
    Prf::from_counts(hits, estimate.len(), reference.len())
}

/// Micro-averaged over all frame-key cells. Grids are rows of 88 keys; the
/// shorter one is treated as silent past its end.
pub fn framewise_metrics(reference: &[Vec<bool>], estimate: &[Vec<bool>]) -> Result<Prf> {
    for (name, grid) in [("reference", reference), ("estimate", estimate)] {
        if let Some(row) = grid.iter().find(|r| r.len() != NUM_KEYS) {
            return Err(Error::dimension(format!(
                "{name} frame has {} keys, expected {NUM_KEYS}",
                row.len()
            )));
        }
    }
    let count = |g: &[Vec<bool>]| g.iter().flatten().filter(|&&b| b).count();
    let hits = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| r.iter().zip(e).filter(|(&a, &b)| a && b).count())
        .sum();
    Ok(Prf::from_counts(hits, count(estimate), count(reference)))
}

/// The three metric families.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub frames: Prf,
    pub note_onsets: Prf,
    pub complete_notes: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceReport {
    pub piece: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pieces: Vec<PieceReport>,
    pub average: Metrics,
}

/// Scores one piece. Frame metrics compare the intermediate streams
/// rasterized at `frame_rate`.
pub fn evaluate_piece(
    piece: impl Into<String>,
    reference: &[NoteEvent],
    estimate: &[NoteEvent],
    cfg: &MatchingConfig,
    frame_rate: f64,
) -> Result<PieceReport> {
    cfg.validate()?;
    let horizon = reference
        .iter()
        .chain(estimate)
        .map(|n| n.end)
        .fold(0.0, f64::max);
    let num_frames = (horizon * frame_rate).ceil() as usize + 1;
    let ref_grid = derive_targets(reference, num_frames, frame_rate)?.intermediate();
    let est_grid = derive_targets(estimate, num_frames, frame_rate)?.intermediate();
    Ok(PieceReport {
        piece: piece.into(),
        metrics: Metrics {
            frames: framewise_metrics(&ref_grid, &est_grid)?,
            note_onsets: note_metrics(reference, estimate, &cfg.with_offsets(false)),
            complete_notes: note_metrics(reference, estimate, &cfg.with_offsets(true)),
        },
    })
}

/// Unweighted mean of each per-piece P, R and F.
pub fn average_over_pieces(pieces: Vec<PieceReport>) -> EvalReport {
    let n = pieces.len().max(1) as f64;
    let mean = |get: fn(&Metrics) -> Prf| {
        let sum = pieces.iter().map(|p| get(&p.metrics)).fold(Prf::default(), |acc, x| Prf {
            precision: acc.precision + x.precision,
            recall: acc.recall + x.recall,
            f_measure: acc.f_measure + x.f_measure,
        });
        Prf {
            precision: sum.precision / n,
            recall: sum.recall / n,
            f_measure: sum.f_measure / n,
        }
    };
    let average = Metrics {
        frames: mean(|m| m.frames),
        note_onsets: mean(|m| m.note_onsets),
        complete_notes: mean(|m| m.complete_notes),
    };
    EvalReport { pieces, average }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: f64, e: f64, k: u8) -> NoteEvent {
        NoteEvent::new(s, e, k).unwrap()
    }

    #[test]
    fn identical_lists_are_perfect() {
        let notes = vec![n(0.1, 0.5, 3), n(0.2, 0.9, 40), n(0.6, 1.0, 3)];
        let r = evaluate_piece("p", &notes, &notes, &MatchingConfig::default(), 50.0).unwrap();
        for prf in [r.metrics.frames, r.metrics.note_onsets, r.metrics.complete_notes] {
            assert_eq!(prf, Prf { precision: 1.0, recall: 1.0, f_measure: 1.0 });
        }
    }

    #[test]
    fn onset_within_tolerance() {
        let cfg = MatchingConfig::default();
        assert_eq!(match_notes(&[n(1.0, 2.0, 5)], &[n(1.049, 1.5, 5)], &cfg).len(), 1);
        assert!(match_notes(&[n(1.0, 2.0, 5)], &[n(1.0, 2.0, 6)], &cfg).is_empty());
    }

    #[test]
    fn offset_tolerance_scales_with_duration() {
        let cfg = MatchingConfig::default().with_offsets(true);
        assert!(cfg.admissible(&n(1.0, 2.0, 0), &n(1.0, 2.15, 0)));
        assert!(!cfg.admissible(&n(1.0, 1.2, 0), &n(1.0, 1.35, 0)));
    }

    #[test]
    fn degenerate_counts() {
        assert_eq!(Prf::from_counts(0, 0, 10), Prf::default());
        let one_extra = Prf::from_counts(99, 100, 99);
        assert_eq!(one_extra.precision, 0.99);
        assert_eq!(one_extra.recall, 1.0);
    }

    #[test]
    fn framewise_counts_cells() {
        let mut reference = vec![vec![false; NUM_KEYS]; 20];
        let mut count = 0;
        'outer: for row in reference.iter_mut() {
            for cell in row.iter_mut().take(5) {
                *cell = true;
                count += 1;
                if count == 99 {
                    break 'outer;
                }
            }
        }
        let mut estimate = reference.clone();
        estimate[19][80] = true;
        let prf = framewise_metrics(&reference, &estimate).unwrap();
        assert_eq!(prf.precision, 99.0 / 100.0);
        assert_eq!(prf.recall, 1.0);

        let silent = vec![vec![false; NUM_KEYS]; 20];
        let prf = framewise_metrics(&reference, &silent).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f_measure), (0.0, 0.0, 0.0));
        assert!(framewise_metrics(&[vec![true; 3]], &silent).is_err());
    }

    #[test]
    fn augmenting_path_beats_greedy() {
        // greedy would give reference 0 the estimate that reference 1 needs
        let cfg = MatchingConfig::default();
        let reference = [n(1.00, 2.0, 0), n(1.06, 2.0, 0)];
        let estimate = [n(1.03, 2.0, 0), n(0.96, 2.0, 0)];
        assert_eq!(match_notes(&reference, &estimate, &cfg).len(), 2);
    }

    #[test]
    fn macro_average() {
        let a = PieceReport {
            piece: "a".into(),
            metrics: Metrics {
                frames: Prf { precision: 1.0, recall: 0.5, f_measure: 0.6 },
                ..Metrics::default()
            },
        };
        let b = PieceReport {
            piece: "b".into(),
            metrics: Metrics::default(),
        };
        let r = average_over_pieces(vec![a, b]);
        assert_eq!(r.average.frames, Prf { precision: 0.5, recall: 0.25, f_measure: 0.3 });
    }
}
