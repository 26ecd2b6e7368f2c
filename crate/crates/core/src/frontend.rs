//! Log-magnitude spectrogram on a semi-logarithmic triangular filterbank.
//!
//! Frame `t` is the Hann-windowed FFT of the `fft_size` samples centred on
//! sample `t * hop_size`; the signal is conceptually zero-padded on both
//! sides. A signal of `n` samples yields `n / hop_size` frames.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference pitch anchoring the quarter-tone grid.
const REFERENCE_HZ: f64 = 440.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub frame_rate: u32,
    pub context_frames: usize,
    pub num_bins: usize,
    pub bins_per_semitone: u32,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sample_rate: 44_100,
            fft_size: 4096,
            frame_rate: 50,
            context_frames: 11,
            num_bins: 144,
            bins_per_semitone: 2,
            fmin: 27.5,
            fmax: 10_000.0,
        }
    }
}

impl FeatureConfig {
    pub fn hop_size(&self) -> usize {
        (self.sample_rate / self.frame_rate.max(1)) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_rate == 0 || self.sample_rate % self.frame_rate != 0 {
            return Err(Error::config(format!(
                "sample rate {} is not an integer multiple of the frame rate {}",
                self.sample_rate, self.frame_rate
            )));
        }
        if self.fft_size < 2 || self.fft_size % 2 != 0 {
            return Err(Error::config(format!("fft_size {} must be even and >= 2", self.fft_size)));
        }
        if self.context_frames % 2 == 0 {
            return Err(Error::config(format!(
                "context_frames {} must be odd so a centre frame exists",
                self.context_frames
            )));
        }
        if self.num_bins == 0 || self.bins_per_semitone == 0 {
            return Err(Error::config("num_bins and bins_per_semitone must be positive"));
        }
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if !(self.fmin > 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::config(format!(
                "need 0 < fmin < fmax <= {nyquist} Hz, got fmin={} fmax={}",
                self.fmin, self.fmax
            )));
        }
        Ok(())
    }

    /// Frequency spacing of FFT bins in Hz.
    pub fn bin_hz(&self) -> f64 {
        f64::from(self.sample_rate) / self.fft_size as f64
    }
}

/// One triangular band: `weights[i]` applies to FFT bin `start + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub start: usize,
    pub center: usize,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filterbank {
    num_fft_bins: usize,
    filters: Vec<Filter>,
}

impl Filterbank {
    pub fn filters(&self) -> &[Filter] {
        &self.filters
    }

    pub fn num_bands(&self) -> usize {
        self.filters.len()
    }

    pub fn num_fft_bins(&self) -> usize {
        self.num_fft_bins
    }

    /// Dense `(fft_size/2 + 1) x bands` matrix.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.filters.len()]; self.num_fft_bins];
        for (j, f) in self.filters.iter().enumerate() {
            for (i, &w) in f.weights.iter().enumerate() {
                m[f.start + i][j] = w;
            }
        }
        m
    }

    /// Centre frequency of each band in Hz.
    pub fn center_frequencies(&self, bin_hz: f64) -> Vec<f64> {
        self.filters.iter().map(|f| f.center as f64 * bin_hz).collect()
    }

    pub fn apply(&self, magnitudes: &[f64], out: &mut [f64]) {
        debug_assert_eq!(magnitudes.len(), self.num_fft_bins);
        for (o, f) in out.iter_mut().zip(&self.filters) {
            *o = f
                .weights
                .iter()
                .zip(&magnitudes[f.start..])
                .map(|(w, m)| w * m)
                .sum();
        }
    }
}

/// Builds the triangular filterbank.
///
/// Centres lie on a `12 * bins_per_semitone`-per-octave grid anchored at
/// 440 Hz, snapped to the nearest FFT bin. Grid points that snap to the
/// same bin are merged, so at low frequencies the centres degrade to one per
/// FFT bin. Each band spans from the previous to the next centre and peaks
/// at 1. The lowest `num_bins` bands are kept.
pub fn build_filterbank(config: &FeatureConfig) -> Result<Filterbank> {
    config.validate()?;
    let num_fft_bins = config.fft_size / 2 + 1;
    let bin_hz = config.bin_hz();
    let per_octave = f64::from(12 * config.bins_per_semitone);
    let lo = (per_octave * (config.fmin / REFERENCE_HZ).log2()).ceil() as i64;
    let hi = (per_octave * (config.fmax / REFERENCE_HZ).log2()).floor() as i64;

    let mut bins: Vec<usize> = Vec::new();
    for step in lo..=hi {
        let freq = REFERENCE_HZ * 2f64.powf(step as f64 / per_octave);
        if freq < config.fmin || freq > config.fmax {
            continue;
        }
        let bin = ((freq / bin_hz).round() as usize).min(num_fft_bins - 1);
        if bins.last() != Some(&bin) {
            bins.push(bin);
        }
    }

    let realizable = bins.len().saturating_sub(2);
    if realizable < config.num_bins {
        return Err(Error::config(format!(
            "filterbank between {} Hz and {} Hz realizes only {realizable} distinct bands, {} required",
            config.fmin, config.fmax, config.num_bins
        )));
    }

    let filters = bins
        .windows(3)
        .take(config.num_bins)
        .map(|w| triangle(w[0], w[1], w[2]))
        .collect();
    Ok(Filterbank {
        num_fft_bins,
        filters,
    })
}

fn triangle(left: usize, center: usize, right: usize) -> Filter {
    let start = left + 1;
    let weights = (start..right)
        .map(|k| {
            if k <= center {
                (k - left) as f64 / (center - left) as f64
            } else {
                (right - k) as f64 / (right - center) as f64
            }
        })
        .collect();
    Filter {
        start,
        center,
        weights,
    }
}

/// Mono audio samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

/// `T x b` log-compressed filterbank magnitudes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSpectrogram {
    num_frames: usize,
    num_bins: usize,
    frame_rate: f64,
    values: Vec<f32>,
}

impl FilteredSpectrogram {
    pub fn from_values(num_frames: usize, num_bins: usize, frame_rate: f64, values: Vec<f32>) -> Result<Self> {
        if values.len() != num_frames * num_bins {
            return Err(Error::dimension(format!(
                "spectrogram payload has {} values, expected {num_frames} x {num_bins}",
                values.len()
            )));
        }
        Ok(FilteredSpectrogram {
            num_frames,
            num_bins,
            frame_rate,
            values,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.num_bins..(t + 1) * self.num_bins]
    }

    /// The `context x b` snippet centred on frame `t`, replicating the
    /// first/last frame beyond the edges.
    pub fn context_window(&self, t: usize, context: usize) -> Result<ContextWindow> {
        if t >= self.num_frames {
            return Err(Error::FrameIndex {
                index: t,
                len: self.num_frames,
            });
        }
        let half = (context / 2) as i64;
        let last = self.num_frames as i64 - 1;
        let mut values = Vec::with_capacity(context * self.num_bins);
        for d in -half..=half {
            let row = (t as i64 + d).clamp(0, last) as usize;
            values.extend_from_slice(self.frame(row));
        }
        Ok(ContextWindow {
            rows: context,
            cols: self.num_bins,
            center_frame: t,
            values,
        })
    }
}

/// Network input: `rows x cols` spectrogram snippet around `center_frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindow {
    pub rows: usize,
    pub cols: usize,
    pub center_frame: usize,
    pub values: Vec<f32>,
}

impl ContextWindow {
    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }
}

/// Reusable STFT + filterbank pipeline for one configuration.
pub struct FeatureExtractor {
    config: FeatureConfig,
    filterbank: Filterbank,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureExtractor")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        let filterbank = build_filterbank(&config)?;
        let n = config.fft_size;
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(FeatureExtractor {
            config,
            filterbank,
            window,
            fft,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &Filterbank {
        &self.filterbank
    }

    pub fn compute(&self, audio: &Audio) -> Result<FilteredSpectrogram> {
        if audio.sample_rate != self.config.sample_rate {
            return Err(Error::SampleRate {
                expected: self.config.sample_rate,
                found: audio.sample_rate,
            });
        }
        let n = self.config.fft_size;
        let hop = self.config.hop_size();
        let half = (n / 2) as i64;
        let bands = self.filterbank.num_bands();
        let num_frames = audio.samples.len() / hop;

        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut mags = vec![0.0; self.filterbank.num_fft_bins()];
        let mut bandvals = vec![0.0; bands];
        let mut values = Vec::with_capacity(num_frames * bands);

        for t in 0..num_frames {
            let origin = (t * hop) as i64 - half;
            for (i, slot) in buf.iter_mut().enumerate() {
                let idx = origin + i as i64;
                let x = if idx >= 0 && (idx as usize) < audio.samples.len() {
                    f64::from(audio.samples[idx as usize])
                } else {
                    0.0
                };
                *slot = Complex::new(x * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, c) in mags.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            self.filterbank.apply(&mags, &mut bandvals);
            values.extend(bandvals.iter().map(|&v| v.ln_1p() as f32));
        }

        FilteredSpectrogram::from_values(num_frames, bands, f64::from(self.config.frame_rate), values)
    }
}

pub fn compute_spectrogram(audio: &Audio, config: &FeatureConfig) -> Result<FilteredSpectrogram> {
    FeatureExtractor::new(config.clone())?.compute(audio)
}
