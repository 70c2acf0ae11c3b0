//! Synthetic corpora. Two regimes: plain class-conditional gaussians, and a
//! cross-modal construction where no single modality carries the label.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::corpus::{AudioField, CorpusRecord, FramesField, UtteranceRecord};
use crate::error::HarnessError;

/// Observation noise around the class/tag structure.
const FEATURE_NOISE: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_dialogs: usize,
    pub utterances_per_dialog: usize,
    pub d_text: usize,
    pub d_audio: usize,
    pub d_visual: usize,
    pub classes: usize,
    /// Strength of the class signal relative to unit-scale noise.
    pub separation: f64,
    /// When set, each modality alone is class-uninformative: text rows hold
    /// a pointer tag plus a content code, audio rows hold their own tag, and
    /// an utterance's label is the content code of the row its pointer
    /// selects. Recovering it requires matching text pointers against audio
    /// tags across rows.
    pub cross_modal_only: bool,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<(), HarnessError> {
        for (value, name) in [
            (self.n_dialogs, "n_dialogs"),
            (self.utterances_per_dialog, "utterances per dialog"),
            (self.d_text, "d_text"),
            (self.d_audio, "d_audio"),
            (self.d_visual, "d_visual"),
        ] {
            if value == 0 {
                return Err(HarnessError::validation(format!("{name} must be positive")));
            }
        }
        if self.classes < 2 {
            return Err(HarnessError::validation("need at least 2 classes"));
        }
        if !self.separation.is_finite() || self.separation < 0.0 {
            return Err(HarnessError::validation("separation must be finite and nonnegative"));
        }
        if self.cross_modal_only {
            if self.utterances_per_dialog < 2 {
                return Err(HarnessError::validation(
                    "cross-modal corpora need at least 2 utterances per dialog \
                     (a pointer cannot target its own row)",
                ));
            }
            if self.d_text <= self.d_audio {
                return Err(HarnessError::validation(format!(
                    "cross-modal corpora need d_text > d_audio \
                     (text carries a {}-wide pointer plus a content code), got {} <= {}",
                    self.d_audio, self.d_text, self.d_audio
                )));
            }
        }
        Ok(())
    }
}

fn gaussian_vec(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random direction scaled to `scale`.
fn scaled_direction(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v = gaussian_vec(dim, rng);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.iter().map(|x| x / norm * scale).collect();
        }
    }
}

/// Permutation of `0..k` with no fixed points, by rejection.
fn random_derangement(k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    assert!(k >= 2, "no derangement of fewer than 2 items");
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return perm;
        }
    }
}

pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<Vec<CorpusRecord>, HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let records = if spec.cross_modal_only {
        cross_modal_corpus(spec, &mut rng)
    } else {
        gaussian_corpus(spec, &mut rng)
    };
    Ok(records)
}

fn gaussian_corpus(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<CorpusRecord> {
    let noise = Normal::new(0.0, 1.0).expect("unit noise");
    let means: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..spec.classes)
        .map(|_| {
            (
                scaled_direction(spec.d_text, spec.separation, rng),
                scaled_direction(spec.d_audio, spec.separation, rng),
                scaled_direction(spec.d_visual, spec.separation, rng),
            )
        })
        .collect();

    (0..spec.n_dialogs)
        .map(|d| {
            let utterances = (0..spec.utterances_per_dialog)
                .map(|_| {
                    let label = rng.random_range(0..spec.classes);
                    let (mt, ma, mv) = &means[label];
                    let draw = |mean: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
                        mean.iter().map(|m| m + noise.sample(rng)).collect()
                    };
                    UtteranceRecord {
                        text_embedding: draw(mt, rng),
                        audio: AudioField::Features(draw(ma, rng)),
                        frames: Some(FramesField::Features(draw(mv, rng))),
                        label,
                    }
                })
                .collect();
            CorpusRecord {
                dialog_id: format!("synth-{d:04}"),
                utterances,
            }
        })
        .collect()
}

fn cross_modal_corpus(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<CorpusRecord> {
    let k = spec.utterances_per_dialog;
    let code_width = spec.d_text - spec.d_audio;
    let noise = Normal::new(0.0, FEATURE_NOISE).expect("finite noise");
    // One content code per class, shared across the corpus.
    let codes: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| scaled_direction(code_width, spec.separation, rng))
        .collect();

    (0..spec.n_dialogs)
        .map(|d| {
            let pointer = random_derangement(k, rng);
            let tags: Vec<Vec<f64>> = (0..k).map(|_| gaussian_vec(spec.d_audio, rng)).collect();
            let contents: Vec<usize> =
                (0..k).map(|_| rng.random_range(0..spec.classes)).collect();

            let utterances = (0..k)
                .map(|j| {
                    let mut text = Vec::with_capacity(spec.d_text);
                    text.extend(tags[pointer[j]].iter().map(|t| t + noise.sample(rng)));
                    text.extend(codes[contents[j]].iter().map(|c| c + noise.sample(rng)));
                    let audio: Vec<f64> =
                        tags[j].iter().map(|t| t + noise.sample(rng)).collect();
                    let visual = gaussian_vec(spec.d_visual, rng);
                    UtteranceRecord {
                        text_embedding: text,
                        audio: AudioField::Features(audio),
                        frames: Some(FramesField::Features(visual)),
                        // The label lives in the pointed-at row's content
                        // code, never in row j itself.
                        label: contents[pointer[j]],
                    }
                })
                .collect();
            CorpusRecord {
                dialog_id: format!("synth-{d:04}"),
                utterances,
            }
        })
        .collect()
}
