//! WAV file access for corpus audio, built on `hound`. Multi-channel files
//! are mixed down by averaging; samples come back as f64 in [-1, 1].

use std::path::Path;

use emofusion_signal::AudioClip;
use hound::{SampleFormat, WavSpec, WavWriter};

use crate::error::HarnessError;

pub fn read_wav(path: &Path) -> Result<AudioClip, HarnessError> {
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| HarnessError::validation(format!("cannot open {}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(HarnessError::validation(format!(
            "{} declares zero channels",
            path.display()
        )));
    }

    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>(),
        SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
        }
    }
    .map_err(|e| HarnessError::validation(format!("cannot decode {}: {e}", path.display())))?;

    let frames = interleaved.len() / channels;
    let samples: Vec<f64> = (0..frames)
        .map(|i| {
            interleaved[i * channels..(i + 1) * channels].iter().sum::<f64>() / channels as f64
        })
        .collect();
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Writes mono 16-bit PCM; values outside [-1, 1] are clipped.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<(), HarnessError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)
        .map_err(|e| HarnessError::validation(format!("cannot create {}: {e}", path.display())))?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
        writer
            .write_sample(v)
            .map_err(|e| HarnessError::validation(format!("write to {}: {e}", path.display())))?;
    }
    writer
        .finalize()
        .map_err(|e| HarnessError::validation(format!("finalize {}: {e}", path.display())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let samples: Vec<f64> = (0..1600)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16_000.0).sin())
            .collect();
        let clip = AudioClip::new(samples.clone(), 16_000);
        let path = std::env::temp_dir().join(format!("wav-rt-{}.wav", std::process::id()));
        write_wav(&path, &clip).unwrap();
        let back = read_wav(&path).unwrap();
        std::fs::remove_file(&path).ok();

        assert_eq!(back.sample_rate, 16_000);
        assert_eq!(back.samples.len(), samples.len());
        let max_err = samples
            .iter()
            .zip(&back.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1.0 / 16_384.0, "quantization error {max_err}");
    }

    #[test]
    fn missing_file_is_a_validation_error() {
        let err = read_wav(Path::new("/nonexistent/clip.wav")).err().unwrap();
        assert_eq!(err.exit_code(), 1);
    }
}
