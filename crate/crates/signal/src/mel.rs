use crate::stft::{frame_count, stft_magnitude};
use crate::{AudioClip, Matrix, SignalError};

/// Framing and filterbank parameters. Defaults match the 16 kHz speech
/// setup: 25 ms frames, 10 ms hop, 128 mel bands over the full band.
#[derive(Debug, Clone, Copy)]
pub struct MelConfig {
    pub frame_length: usize,
    pub hop_length: usize,
    pub fft_size: usize,
    pub n_mels: usize,
    pub f_min: f64,
    /// Upper band edge; `None` means Nyquist.
    pub f_max: Option<f64>,
}

impl Default for MelConfig {
    fn default() -> MelConfig {
        MelConfig {
            frame_length: 400,
            hop_length: 160,
            fft_size: 512,
            n_mels: 128,
            f_min: 0.0,
            f_max: None,
        }
    }
}

/// Mel-band power features, one row per analysis frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    /// Row-major `n_frames x n_mels`, all values nonnegative.
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub n_mels: usize,
    pub frame_length: usize,
    pub hop_length: usize,
}

impl MelSpectrogram {
    pub fn at(&self, frame: usize, band: usize) -> f64 {
        debug_assert!(frame < self.n_frames && band < self.n_mels);
        self.values[frame * self.n_mels + band]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.n_mels..(frame + 1) * self.n_mels]
    }

    /// One CSV line per frame; values keep full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for f in 0..self.n_frames {
            let row: Vec<String> = self.frame(f).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank with centers uniformly spaced on the mel scale,
/// returned as an `n_mels x (fft_size/2 + 1)` weight matrix. Peak weights
/// approach 1; at this resolution the lowest filters are narrower than one
/// DFT bin and may hold no nonzero weight.
pub fn mel_filterbank(
    n_mels: usize,
    fft_size: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> Result<Matrix, SignalError> {
    if sample_rate == 0 {
        return Err(SignalError::InvalidSampleRate(sample_rate));
    }
    if n_mels == 0 {
        return Err(SignalError::InvalidFilterCount(n_mels));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(SignalError::InvalidFrequencyRange {
            f_min,
            f_max,
            nyquist,
        });
    }

    let bins = fft_size / 2 + 1;
    let mel_lo = hz_to_mel(f_min);
    let mel_hi = hz_to_mel(f_max);
    let step = (mel_hi - mel_lo) / (n_mels + 1) as f64;
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + step * i as f64))
        .collect();

    let mut fb = Matrix::zeros(n_mels, bins);
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for b in 0..bins {
            let hz = b as f64 * sample_rate as f64 / fft_size as f64;
            let w = if hz <= lo || hz >= hi {
                0.0
            } else if hz <= center {
                (hz - lo) / (center - lo)
            } else {
                (hi - hz) / (hi - center)
            };
            fb.data[m * bins + b] = w;
        }
    }
    Ok(fb)
}

/// Mel power spectrogram with default parameters.
pub fn mel_spectrogram(clip: &AudioClip) -> Result<MelSpectrogram, SignalError> {
    mel_spectrogram_with(clip, &MelConfig::default())
}

/// Squared STFT magnitudes folded through the mel filterbank.
pub fn mel_spectrogram_with(
    clip: &AudioClip,
    cfg: &MelConfig,
) -> Result<MelSpectrogram, SignalError> {
    let f_max = cfg.f_max.unwrap_or(clip.sample_rate as f64 / 2.0);
    let fb = mel_filterbank(cfg.n_mels, cfg.fft_size, clip.sample_rate, cfg.f_min, f_max)?;
    let mag = stft_magnitude(clip, cfg.frame_length, cfg.hop_length, cfg.fft_size)?;
    debug_assert_eq!(
        mag.rows,
        frame_count(clip.samples.len(), cfg.frame_length, cfg.hop_length)
    );

    let bins = mag.cols;
    let mut values = vec![0.0; mag.rows * cfg.n_mels];
    for f in 0..mag.rows {
        let row = mag.row(f);
        for m in 0..cfg.n_mels {
            let weights = fb.row(m);
            let mut acc = 0.0;
            for b in 0..bins {
                let a = row[b];
                acc += weights[b] * a * a;
            }
            values[f * cfg.n_mels + m] = acc;
        }
    }
    Ok(MelSpectrogram {
        values,
        n_frames: mag.rows,
        n_mels: cfg.n_mels,
        frame_length: cfg.frame_length,
        hop_length: cfg.hop_length,
    })
}
