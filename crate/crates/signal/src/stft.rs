use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::{AudioClip, Matrix, SignalError};

/// Periodic Hann window of the given length.
pub fn hann_window(len: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    (0..len)
        .map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / len as f64).cos()))
        .collect()
}

/// Number of full analysis frames under no-padding framing.
pub(crate) fn frame_count(samples: usize, frame_length: usize, hop: usize) -> usize {
    1 + (samples - frame_length) / hop
}

/// Magnitude spectrogram: Hann-windowed frames, zero-padded to `fft_size`,
/// one DFT magnitude row per frame covering bins `0..=fft_size/2`. No
/// centering, so the first frame starts at sample zero and trailing samples
/// short of a full frame are dropped.
pub fn stft_magnitude(
    clip: &AudioClip,
    frame_length: usize,
    hop: usize,
    fft_size: usize,
) -> Result<Matrix, SignalError> {
    if clip.sample_rate == 0 {
        return Err(SignalError::InvalidSampleRate(clip.sample_rate));
    }
    if frame_length == 0 || hop == 0 || fft_size < frame_length {
        return Err(SignalError::BadFrameParams {
            frame_length,
            hop,
            fft_size,
        });
    }
    if clip.samples.len() < frame_length {
        return Err(SignalError::ClipTooShort {
            samples: clip.samples.len(),
            frame_length,
        });
    }

    let frames = frame_count(clip.samples.len(), frame_length, hop);
    let bins = fft_size / 2 + 1;
    let window = hann_window(frame_length);
    let fft = FftPlanner::new().plan_fft_forward(fft_size);

    let mut out = Matrix::zeros(frames, bins);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    for f in 0..frames {
        let start = f * hop;
        for (i, w) in window.iter().enumerate() {
            buf[i] = Complex::new(clip.samples[start + i] * w, 0.0);
        }
        for slot in buf.iter_mut().skip(frame_length) {
            *slot = Complex::new(0.0, 0.0);
        }
        fft.process(&mut buf);
        for b in 0..bins {
            out.data[f * bins + b] = buf[b].norm();
        }
    }
    Ok(out)
}
