//! Extractor training: spectrogram plumbing, synthetic blob datasets, the
//! step loop, and held-out triplet diagnostics.

use std::path::Path;

use emofusion_core::optim::{AdamW, AdamWConfig};
use emofusion_core::Tensor;
use emofusion_model::extractor::{
    extractor_train_step, sample_triplets, Extractor, ExtractorConfig,
};
use emofusion_model::losses::{pairwise_distance, CovarianceForm, ExtractorLossConfig};
use emofusion_signal::{mel_spectrogram, MelSpectrogram};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::HarnessError;
use crate::wav::read_wav;

/// Lays a mel spectrogram into the extractor's `[1, bands, frames]` input,
/// log-compressed, truncating or zero-padding the frame axis.
pub fn spectrogram_to_input(
    mel: &MelSpectrogram,
    shape: [usize; 3],
) -> Result<Tensor, HarnessError> {
    if shape[0] != 1 {
        return Err(HarnessError::validation(format!(
            "extractor input has {} channels; spectrograms provide 1",
            shape[0]
        )));
    }
    if shape[1] != mel.n_mels {
        return Err(HarnessError::validation(format!(
            "extractor expects {} bands but the spectrogram has {}",
            shape[1], mel.n_mels
        )));
    }
    let (bands, width) = (shape[1], shape[2]);
    let mut data = vec![0.0; bands * width];
    for frame in 0..mel.n_frames.min(width) {
        for band in 0..bands {
            data[band * width + frame] = mel.at(frame, band).ln_1p();
        }
    }
    Ok(Tensor::from_vec(&[1, bands, width], data))
}

/// WAV file to audio feature row via mel spectrogram and extractor.
pub fn wav_to_feature(path: &Path, ex: &Extractor) -> Result<Vec<f64>, HarnessError> {
    let clip = read_wav(path)?;
    let mel = mel_spectrogram(&clip)?;
    let input = spectrogram_to_input(&mel, ex.config().input_shape)?;
    Ok(ex.represent_batch(&[&input]).to_vec())
}

/// Class-conditional gaussian images for desk-scale extractor runs.
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub shape: [usize; 3],
    pub noise: f64,
    pub seed: u64,
}

pub fn blob_dataset(spec: &BlobSpec) -> (Vec<Tensor>, Vec<usize>) {
    assert!(spec.classes >= 2, "blob dataset needs at least 2 classes");
    assert!(spec.per_class >= 1, "blob dataset needs samples per class");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let len: usize = spec.shape.iter().product();
    let gauss = Normal::new(0.0, spec.noise).expect("noise is finite");

    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();

    let mut inputs = Vec::with_capacity(spec.classes * spec.per_class);
    let mut labels = Vec::with_capacity(spec.classes * spec.per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.per_class {
            let data: Vec<f64> = mean.iter().map(|m| m + gauss.sample(&mut rng)).collect();
            inputs.push(Tensor::from_vec(&spec.shape, data));
            labels.push(c);
        }
    }
    (inputs, labels)
}

pub struct ExtractorRunConfig {
    pub extractor: ExtractorConfig,
    pub steps: usize,
    pub triplets_per_step: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub loss: ExtractorLossConfig,
    pub covariance_form: CovarianceForm,
}

pub struct ExtractorRunOutcome {
    pub extractor: Extractor,
    /// Loss before each step, in step order.
    pub losses: Vec<f64>,
}

/// Trains a fresh extractor on the given samples. Initialization, triplet
/// draws and therefore the whole loss trace are determined by the seed.
pub fn train_extractor(
    inputs: &[Tensor],
    labels: &[usize],
    run: &ExtractorRunConfig,
) -> Result<ExtractorRunOutcome, HarnessError> {
    if inputs.is_empty() {
        return Err(HarnessError::validation("extractor training set is empty"));
    }
    if run.steps == 0 {
        return Err(HarnessError::validation("extractor training needs at least one step"));
    }
    if run.triplets_per_step < 2 {
        return Err(HarnessError::validation(
            "need at least 2 triplets per step for the variance and covariance terms",
        ));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(run.seed);
    let extractor = Extractor::new(run.extractor.clone(), &mut init_rng);
    let params: Vec<Tensor> = extractor.params().into_iter().map(|(_, p)| p).collect();
    let mut opt = AdamW::new(AdamWConfig::new(run.lr, run.weight_decay), &params);
    let mut triplet_rng = ChaCha8Rng::seed_from_u64(run.seed.wrapping_add(1));

    let mut losses = Vec::with_capacity(run.steps);
    for step in 0..run.steps {
        let triplets = sample_triplets(labels, run.triplets_per_step, &mut triplet_rng)?;
        let loss = extractor_train_step(
            &extractor,
            inputs,
            labels,
            &triplets,
            &run.loss,
            run.covariance_form,
            &mut opt,
        )?;
        if !loss.is_finite() {
            return Err(HarnessError::numerical(format!(
                "extractor loss became {loss} at step {step}"
            )));
        }
        losses.push(loss);
    }
    Ok(ExtractorRunOutcome { extractor, losses })
}

#[derive(Debug, Clone, Copy)]
pub struct TripletGap {
    pub mean_d_ap: f64,
    pub mean_d_an: f64,
}

/// Mean anchor-positive and anchor-negative distances over fresh triplets,
/// the held-out check that the metric objective actually separated classes.
pub fn triplet_distance_gap(
    ex: &Extractor,
    inputs: &[Tensor],
    labels: &[usize],
    n_triplets: usize,
    seed: u64,
) -> Result<TripletGap, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triplets = sample_triplets(labels, n_triplets, &mut rng)?;
    let gather = |pick: fn(&emofusion_model::extractor::Triplet) -> usize| -> Vec<&Tensor> {
        triplets.iter().map(|t| &inputs[pick(t)]).collect()
    };
    let za = ex.represent_batch(&gather(|t| t.anchor)).to_vec();
    let zp = ex.represent_batch(&gather(|t| t.positive)).to_vec();
    let zn = ex.represent_batch(&gather(|t| t.negative)).to_vec();
    let d = ex.config().representation_dim;

    let mut sum_ap = 0.0;
    let mut sum_an = 0.0;
    for i in 0..triplets.len() {
        let a = &za[i * d..(i + 1) * d];
        sum_ap += pairwise_distance(a, &zp[i * d..(i + 1) * d]);
        sum_an += pairwise_distance(a, &zn[i * d..(i + 1) * d]);
    }
    Ok(TripletGap {
        mean_d_ap: sum_ap / triplets.len() as f64,
        mean_d_an: sum_an / triplets.len() as f64,
    })
}

/// Largest deviation of any representation norm from 1.
pub fn max_norm_deviation(ex: &Extractor, inputs: &[Tensor]) -> f64 {
    let refs: Vec<&Tensor> = inputs.iter().collect();
    let z = ex.represent_batch(&refs).to_vec();
    let d = ex.config().representation_dim;
    z.chunks(d)
        .map(|row| (row.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs())
        .fold(0.0, f64::max)
}
