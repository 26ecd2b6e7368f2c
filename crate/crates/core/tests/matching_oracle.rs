mod common;

use adsr_transcribe::eval::{match_notes, note_metrics, MatchingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_force_matching, clustered_notes};

#[test]
fn matcher_cardinality_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..400 {
        let cfg = MatchingConfig::default().with_offsets(trial % 2 == 0);
        let (nr, ne) = (rng.random_range(0..=6), rng.random_range(0..=6));
        let reference = clustered_notes(&mut rng, nr);
        let estimate = clustered_notes(&mut rng, ne);
        let pairs = match_notes(&reference, &estimate, &cfg);
        assert_eq!(pairs.len(), brute_force_matching(&reference, &estimate, &cfg));
        let mut used_r: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let mut used_e: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        used_r.dedup();
        used_e.sort_unstable();
        used_e.dedup();
        assert_eq!(used_r.len(), pairs.len());
        assert_eq!(used_e.len(), pairs.len());
        assert!(pairs.iter().all(|&(i, j)| cfg.admissible(&reference[i], &estimate[j])));
    }
}

#[test]
fn greedy_trap_is_resolved_optimally() {
    use adsr_transcribe::NoteEvent;
    // The first reference note is admissible to both estimates; taking the
    // closer one would leave the second reference unmatched.
    let reference = [NoteEvent::new(1.00, 2.0, 5).unwrap(), NoteEvent::new(1.06, 2.0, 5).unwrap()];
    let estimate = [NoteEvent::new(1.03, 2.0, 5).unwrap(), NoteEvent::new(0.99, 2.0, 5).unwrap()];
    let cfg = MatchingConfig::default();
    assert_eq!(match_notes(&reference, &estimate, &cfg).len(), 2);
    assert_eq!(note_metrics(&reference, &estimate, &cfg).f_measure, 1.0);
}
