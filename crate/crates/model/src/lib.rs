//! Multimodal utterance-emotion model: visual feature aggregation, metric
//! and classification losses, the triplet-trained feature extractor, and the
//! dialog-level attention-fusion classifier.

pub mod attention;
pub mod checkpoint;
pub mod dialog;
pub mod encoder;
pub mod extractor;
pub mod fusion;
pub mod losses;
pub mod visual;

use emofusion_core::Tensor;
use rand_chacha::ChaCha8Rng;

/// Dropout behavior threaded through forward passes. Training mode owns its
/// rng so a step's masks are fully determined by the seed it was built from.
pub enum Dropout {
    Off,
    On { rate: f64, rng: ChaCha8Rng },
}

impl Dropout {
    pub fn train(rate: f64, rng: ChaCha8Rng) -> Dropout {
        if rate == 0.0 {
            Dropout::Off
        } else {
            Dropout::On { rate, rng }
        }
    }

    pub fn apply(&mut self, t: &Tensor) -> Tensor {
        match self {
            Dropout::Off => t.clone(),
            Dropout::On { rate, rng } => t.dropout(*rate, rng),
        }
    }
}
