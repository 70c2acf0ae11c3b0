//! Spectrogram feature extractor trained with the metric objective instead
//! of a classification head.

use std::error::Error;
use std::fmt;

use emofusion_core::init::fan_in_uniform;
use emofusion_core::optim::AdamW;
use emofusion_core::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::losses::{extractor_loss_graph, CovarianceForm, ExtractorLossConfig, VARIANCE_EPS};

/// Shape and width choices for the extractor trunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    /// Expected input shape as `[channels, height, width]`.
    pub input_shape: [usize; 3],
    /// Output channels of each downsampling stage.
    pub stage_channels: Vec<usize>,
    pub representation_dim: usize,
    /// Project representations onto the unit sphere. Keeps triplet
    /// distances in `[0, 2]`, which the adaptive margin assumes.
    pub normalize_output: bool,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            input_shape: [1, 128, 48],
            stage_channels: vec![16, 32, 64],
            representation_dim: 300,
            normalize_output: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtractorError {
    LabelMismatch { inputs: usize, labels: usize },
    EmptyDataset,
    /// Every sample has the same label, so no negative exists.
    SingleClass,
    /// No label occurs twice, so no positive exists.
    NoRepeatedClass,
    /// Variance and covariance terms need at least two triplets.
    TooFewTriplets(usize),
}

impl fmt::Display for ExtractorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtractorError::LabelMismatch { inputs, labels } => {
                write!(f, "{inputs} inputs but {labels} labels")
            }
            ExtractorError::EmptyDataset => write!(f, "no samples to draw triplets from"),
            ExtractorError::SingleClass => {
                write!(f, "all samples share one label, cannot pick negatives")
            }
            ExtractorError::NoRepeatedClass => {
                write!(f, "no label occurs twice, cannot pick positives")
            }
            ExtractorError::TooFewTriplets(n) => {
                write!(f, "need at least 2 triplets per step, got {n}")
            }
        }
    }
}

impl Error for ExtractorError {}

struct Stage {
    down_w: Tensor,
    down_b: Tensor,
    res1_w: Tensor,
    res1_b: Tensor,
    res2_w: Tensor,
    res2_b: Tensor,
}

impl Stage {
    fn new(in_ch: usize, out_ch: usize, rng: &mut ChaCha8Rng) -> Stage {
        let conv = |ic: usize, oc: usize, rng: &mut ChaCha8Rng| {
            let fan_in = ic * 9;
            (
                fan_in_uniform(&[oc, ic, 3, 3], fan_in, rng),
                fan_in_uniform(&[oc], fan_in, rng),
            )
        };
        let (down_w, down_b) = conv(in_ch, out_ch, rng);
        let (res1_w, res1_b) = conv(out_ch, out_ch, rng);
        let (res2_w, res2_b) = conv(out_ch, out_ch, rng);
        Stage {
            down_w,
            down_b,
            res1_w,
            res1_b,
            res2_w,
            res2_b,
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let down = x.conv2d(&self.down_w, &self.down_b, 2, 1).relu();
        let inner = down
            .conv2d(&self.res1_w, &self.res1_b, 1, 1)
            .relu()
            .conv2d(&self.res2_w, &self.res2_b, 1, 1);
        down.add(&inner).relu()
    }

    fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        for (name, t) in [
            ("down_w", &self.down_w),
            ("down_b", &self.down_b),
            ("res1_w", &self.res1_w),
            ("res1_b", &self.res1_b),
            ("res2_w", &self.res2_w),
            ("res2_b", &self.res2_b),
        ] {
            out.push((format!("{prefix}.{name}"), t.clone()));
        }
    }
}

/// Convolutional trunk of strided stages with residual refinement, global
/// average pooling, and a projection to the representation space.
pub struct Extractor {
    cfg: ExtractorConfig,
    stages: Vec<Stage>,
    proj_w: Tensor,
    proj_b: Tensor,
}

impl Extractor {
    pub fn new(cfg: ExtractorConfig, rng: &mut ChaCha8Rng) -> Extractor {
        assert!(!cfg.stage_channels.is_empty(), "extractor needs at least one stage");
        assert!(cfg.representation_dim >= 1, "representation width must be positive");
        assert!(
            cfg.input_shape.iter().all(|&d| d >= 1),
            "input shape {:?} has a zero axis",
            cfg.input_shape
        );
        let mut stages = Vec::with_capacity(cfg.stage_channels.len());
        let mut in_ch = cfg.input_shape[0];
        for &out_ch in &cfg.stage_channels {
            stages.push(Stage::new(in_ch, out_ch, rng));
            in_ch = out_ch;
        }
        let last = *cfg.stage_channels.last().unwrap();
        let proj_w = fan_in_uniform(&[last, cfg.representation_dim], last, rng);
        let proj_b = fan_in_uniform(&[cfg.representation_dim], last, rng);
        Extractor {
            cfg,
            stages,
            proj_w,
            proj_b,
        }
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.cfg
    }

    /// Trunk output for one sample: pooled channel activations. The global
    /// pool would absorb any spatial size, so the expected shape is checked
    /// explicitly here.
    pub fn encode(&self, x: &Tensor) -> Tensor {
        assert!(
            x.shape() == self.cfg.input_shape,
            "input shape {:?} does not match configured {:?}",
            x.shape(),
            self.cfg.input_shape
        );
        let mut h = x.clone();
        for stage in &self.stages {
            h = stage.forward(&h);
        }
        let c = h.shape()[0];
        let spatial = h.shape()[1] * h.shape()[2];
        h.reshape(&[c, spatial]).mean_last_axis()
    }

    /// Encodes a batch and projects to the representation space, one row
    /// per sample, unit-normalized when configured.
    pub fn represent_batch(&self, xs: &[&Tensor]) -> Tensor {
        assert!(!xs.is_empty(), "cannot represent an empty batch");
        let pooled: Vec<Tensor> = xs.iter().map(|x| self.encode(x)).collect();
        let refs: Vec<&Tensor> = pooled.iter().collect();
        let z = Tensor::stack_rows(&refs).linear(&self.proj_w, &self.proj_b);
        if self.cfg.normalize_output {
            z.l2_normalize_rows()
        } else {
            z
        }
    }

    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, stage) in self.stages.iter().enumerate() {
            stage.params(&format!("stage{i}"), &mut out);
        }
        out.push(("proj_w".to_string(), self.proj_w.clone()));
        out.push(("proj_b".to_string(), self.proj_b.clone()));
        out
    }
}

/// Indices of one (anchor, positive, negative) draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Draws `count` triplets uniformly: anchors come from classes with at
/// least two samples, positives share the anchor's label, negatives differ.
pub fn sample_triplets(
    labels: &[usize],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Triplet>, ExtractorError> {
    if labels.is_empty() {
        return Err(ExtractorError::EmptyDataset);
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(ExtractorError::SingleClass);
    }
    let anchor_pool: Vec<usize> = by_class
        .values()
        .filter(|members| members.len() >= 2)
        .flat_map(|members| members.iter().copied())
        .collect();
    if anchor_pool.is_empty() {
        return Err(ExtractorError::NoRepeatedClass);
    }

    let mut triplets = Vec::with_capacity(count);
    for _ in 0..count {
        let anchor = anchor_pool[rng.random_range(0..anchor_pool.len())];
        let mates = &by_class[&labels[anchor]];
        let positive = loop {
            let p = mates[rng.random_range(0..mates.len())];
            if p != anchor {
                break p;
            }
        };
        let negative_pool_size = labels.len() - mates.len();
        let mut pick = rng.random_range(0..negative_pool_size);
        let mut negative = None;
        for (i, &label) in labels.iter().enumerate() {
            if label == labels[anchor] {
                continue;
            }
            if pick == 0 {
                negative = Some(i);
                break;
            }
            pick -= 1;
        }
        triplets.push(Triplet {
            anchor,
            positive,
            negative: negative.expect("negative pool is nonempty"),
        });
    }
    Ok(triplets)
}

/// One optimization step of the metric objective over a triplet batch.
/// Returns the loss value before the step.
pub fn extractor_train_step(
    extractor: &Extractor,
    inputs: &[Tensor],
    labels: &[usize],
    triplets: &[Triplet],
    loss_cfg: &ExtractorLossConfig,
    form: CovarianceForm,
    opt: &mut AdamW,
) -> Result<f64, ExtractorError> {
    if inputs.len() != labels.len() {
        return Err(ExtractorError::LabelMismatch {
            inputs: inputs.len(),
            labels: labels.len(),
        });
    }
    if triplets.len() < 2 {
        return Err(ExtractorError::TooFewTriplets(triplets.len()));
    }
    let gather = |pick: fn(&Triplet) -> usize| -> Vec<&Tensor> {
        triplets.iter().map(|t| &inputs[pick(t)]).collect()
    };
    let za = extractor.represent_batch(&gather(|t| t.anchor));
    let zp = extractor.represent_batch(&gather(|t| t.positive));
    let zn = extractor.represent_batch(&gather(|t| t.negative));
    let loss = extractor_loss_graph(&za, &zp, &zn, loss_cfg, form, VARIANCE_EPS);
    let value = loss.value();
    opt.zero_grad();
    loss.backward();
    opt.step();
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use emofusion_core::optim::AdamWConfig;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(55)
    }

    fn tiny_config() -> ExtractorConfig {
        ExtractorConfig {
            input_shape: [1, 8, 8],
            stage_channels: vec![4, 8],
            representation_dim: 6,
            normalize_output: true,
        }
    }

    fn blob(mean: f64, rng: &mut ChaCha8Rng) -> Tensor {
        let data = (0..64).map(|_| mean + rng.random_range(-0.3..0.3)).collect();
        Tensor::from_vec(&[1, 8, 8], data)
    }

    #[test]
    fn representations_are_unit_rows() {
        let mut r = rng();
        let ex = Extractor::new(tiny_config(), &mut r);
        let a = blob(0.0, &mut r);
        let b = blob(1.0, &mut r);
        let z = ex.represent_batch(&[&a, &b]);
        assert_eq!(z.shape(), &[2, 6]);
        for row in z.to_vec().chunks(6) {
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unnormalized_config_skips_projection_to_sphere() {
        let mut cfg = tiny_config();
        cfg.normalize_output = false;
        let mut r = rng();
        let ex = Extractor::new(cfg, &mut r);
        let a = blob(2.0, &mut r);
        let z = ex.represent_batch(&[&a, &a]);
        let norm: f64 = z.to_vec()[..6].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() > 1e-6, "norm {norm} should not be forced to 1");
    }

    #[test]
    fn encode_pools_to_channel_vector() {
        let mut r = rng();
        let ex = Extractor::new(tiny_config(), &mut r);
        let pooled = ex.encode(&blob(0.5, &mut r));
        assert_eq!(pooled.shape(), &[8]);
    }

    #[test]
    #[should_panic(expected = "does not match configured")]
    fn encode_rejects_other_shapes() {
        let mut r = rng();
        let ex = Extractor::new(tiny_config(), &mut r);
        ex.encode(&Tensor::from_vec(&[1, 4, 4], vec![0.0; 16]));
    }

    #[test]
    fn triplet_sampling_respects_labels() {
        let labels = [0, 0, 1, 1, 2];
        let mut r = rng();
        let triplets = sample_triplets(&labels, 50, &mut r).unwrap();
        assert_eq!(triplets.len(), 50);
        for t in &triplets {
            assert_eq!(labels[t.anchor], labels[t.positive]);
            assert_ne!(t.anchor, t.positive);
            assert_ne!(labels[t.anchor], labels[t.negative]);
            // Label 2 has a single sample; it can only serve as a negative.
            assert_ne!(labels[t.anchor], 2);
        }
    }

    #[test]
    fn triplet_sampling_is_seed_deterministic() {
        let labels = [0, 0, 1, 1, 1, 2, 2];
        let a = sample_triplets(&labels, 20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_triplets(&labels, 20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let c = sample_triplets(&labels, 20, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn triplet_sampling_error_cases() {
        let mut r = rng();
        assert_eq!(sample_triplets(&[], 5, &mut r), Err(ExtractorError::EmptyDataset));
        assert_eq!(
            sample_triplets(&[3, 3, 3], 5, &mut r),
            Err(ExtractorError::SingleClass)
        );
        assert_eq!(
            sample_triplets(&[0, 1, 2], 5, &mut r),
            Err(ExtractorError::NoRepeatedClass)
        );
    }

    #[test]
    fn training_step_moves_parameters_and_zero_lr_does_not() {
        let mut r = rng();
        let ex = Extractor::new(tiny_config(), &mut r);
        let inputs: Vec<Tensor> = (0..6)
            .map(|i| blob(if i < 3 { -1.0 } else { 1.0 }, &mut r))
            .collect();
        let labels = [0, 0, 0, 1, 1, 1];
        let triplets = sample_triplets(&labels, 4, &mut r).unwrap();
        let params: Vec<Tensor> = ex.params().into_iter().map(|(_, p)| p).collect();

        let before: Vec<Vec<f64>> = params.iter().map(|p| p.to_vec()).collect();
        let mut frozen = AdamW::new(AdamWConfig::new(0.0, 0.0), &params);
        extractor_train_step(
            &ex,
            &inputs,
            &labels,
            &triplets,
            &ExtractorLossConfig::default(),
            CovarianceForm::SquaredOffDiagonal,
            &mut frozen,
        )
        .unwrap();
        for (p, b) in params.iter().zip(&before) {
            assert_eq!(&p.to_vec(), b, "zero learning rate must not move params");
        }

        let mut live = AdamW::new(AdamWConfig::new(1e-3, 0.0), &params);
        extractor_train_step(
            &ex,
            &inputs,
            &labels,
            &triplets,
            &ExtractorLossConfig::default(),
            CovarianceForm::SquaredOffDiagonal,
            &mut live,
        )
        .unwrap();
        let moved = params
            .iter()
            .zip(&before)
            .any(|(p, b)| p.to_vec().iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-12));
        assert!(moved, "a live step should change at least one parameter");
    }

    #[test]
    fn train_step_validates_sizes() {
        let mut r = rng();
        let ex = Extractor::new(tiny_config(), &mut r);
        let inputs = vec![blob(0.0, &mut r)];
        let labels = [0, 1];
        let params: Vec<Tensor> = ex.params().into_iter().map(|(_, p)| p).collect();
        let mut opt = AdamW::new(AdamWConfig::new(1e-3, 0.0), &params);
        let t = Triplet {
            anchor: 0,
            positive: 0,
            negative: 0,
        };
        assert_eq!(
            extractor_train_step(
                &ex,
                &inputs,
                &labels,
                &[t, t],
                &ExtractorLossConfig::default(),
                CovarianceForm::SquaredOffDiagonal,
                &mut opt,
            ),
            Err(ExtractorError::LabelMismatch { inputs: 1, labels: 2 })
        );
        assert_eq!(
            extractor_train_step(
                &ex,
                &inputs,
                &labels[..1],
                &[t],
                &ExtractorLossConfig::default(),
                CovarianceForm::SquaredOffDiagonal,
                &mut opt,
            ),
            Err(ExtractorError::TooFewTriplets(1))
        );
    }
}
