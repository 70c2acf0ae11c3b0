use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{AudioClip, SignalError};

/// Adds white gaussian noise scaled to the requested signal-to-noise ratio.
/// `snr_db = f64::INFINITY` is the no-op sentinel; a finite target on a
/// zero-power clip is an error because no noise scale can realize it.
pub fn awgn_augment(clip: &AudioClip, snr_db: f64, seed: u64) -> Result<AudioClip, SignalError> {
    if snr_db == f64::INFINITY {
        return Ok(clip.clone());
    }
    let signal_power = clip.power();
    if signal_power <= 0.0 {
        return Err(SignalError::SilentClip);
    }
    let noise_power = signal_power / 10f64.powf(snr_db / 10.0);
    let noise = Normal::new(0.0, noise_power.sqrt()).expect("noise std is finite");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = clip
        .samples
        .iter()
        .map(|s| s + noise.sample(&mut rng))
        .collect();
    Ok(AudioClip::new(samples, clip.sample_rate))
}
