//! Offline polyphonic piano transcription.
//!
//! Audio is turned into a log-filtered spectrogram, a compact multi-task
//! CNN predicts onset, intermediate and offset pseudo-probabilities per
//! key, a seven-state ADSR hidden Markov model segments each key's
//! activations into notes, and a final threshold rule rejects weak
//! segments. A simulator and an evaluator make each stage testable
//! without a trained model.

pub mod activation;
pub mod config;
pub mod container;
pub mod error;
pub mod eval;
pub mod filter;
pub mod frontend;
pub mod hmm;
pub mod io;
pub mod net;
pub mod notes;
pub mod pipeline;
pub mod sim;
pub mod targets;
pub mod toy;

pub use activation::{ActivationMatrix, Stream};
pub use error::{Error, Result};
pub use notes::{NoteEvent, FRAME_RATE, NUM_KEYS};
