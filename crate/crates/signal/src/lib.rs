//! Audio front end: framed STFT, mel filterbank features and white-noise
//! augmentation for 16 kHz speech clips.

mod augment;
mod mel;
mod stft;

pub use augment::awgn_augment;
pub use mel::{
    hz_to_mel, mel_filterbank, mel_spectrogram, mel_spectrogram_with, mel_to_hz, MelConfig,
    MelSpectrogram,
};
pub use stft::{hann_window, stft_magnitude};

use std::error::Error;
use std::fmt;

/// Mono audio samples, nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> AudioClip {
        AudioClip {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// Dense row-major matrix used for spectrogram frames and filter weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalError {
    /// Fewer samples than one analysis frame.
    ClipTooShort {
        samples: usize,
        frame_length: usize,
    },
    InvalidSampleRate(u32),
    /// Frame parameters that cannot produce a spectrogram.
    BadFrameParams {
        frame_length: usize,
        hop: usize,
        fft_size: usize,
    },
    InvalidFilterCount(usize),
    InvalidFrequencyRange {
        f_min: f64,
        f_max: f64,
        nyquist: f64,
    },
    /// Zero-power input cannot be scaled to a finite SNR.
    SilentClip,
}

impl fmt::Display for SignalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalError::ClipTooShort {
                samples,
                frame_length,
            } => write!(
                f,
                "clip has {samples} samples, below one frame of {frame_length}"
            ),
            SignalError::InvalidSampleRate(sr) => write!(f, "invalid sample rate {sr} Hz"),
            SignalError::BadFrameParams {
                frame_length,
                hop,
                fft_size,
            } => write!(
                f,
                "bad framing: frame_length {frame_length}, hop {hop}, fft_size {fft_size}"
            ),
            SignalError::InvalidFilterCount(n) => write!(f, "filter count {n} must be >= 1"),
            SignalError::InvalidFrequencyRange {
                f_min,
                f_max,
                nyquist,
            } => write!(
                f,
                "frequency range [{f_min}, {f_max}] invalid for nyquist {nyquist}"
            ),
            SignalError::SilentClip => {
                write!(f, "zero-power clip cannot reach a finite target SNR")
            }
        }
    }
}

impl Error for SignalError {}
