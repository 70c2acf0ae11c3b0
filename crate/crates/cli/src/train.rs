//! Dialog-model training loop: seeded validation split, whole-dialog batches,
//! AdamW updates, and best-epoch checkpoint selection. Everything is driven
//! by explicit seeds so a rerun with the same config reproduces the log and
//! the checkpoint byte for byte.

use std::fmt::Write as _;

use emofusion_core::optim::AdamW;
use emofusion_model::checkpoint::{self, ParamRecord};
use emofusion_model::dialog::{DialogFeatures, DialogModel, ModelConfig};
use emofusion_model::losses::cross_entropy_graph;
use emofusion_model::Dropout;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::error::HarnessError;

/// Fraction of dialogs held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

pub struct TrainOutcome {
    /// Model with the best epoch's parameters restored.
    pub model: DialogModel,
    pub log: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_params: Vec<ParamRecord>,
}

/// Deterministic holdout split: shuffles `0..n` and peels off
/// `floor(n * holdout)` indices. A small `n` can leave the holdout empty.
pub fn seeded_split(n: usize, holdout: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let held = (n as f64 * holdout).floor() as usize;
    let val = order[..held].to_vec();
    let train = order[held..].to_vec();
    (train, val)
}

pub fn train_dialog_model(
    dialogs: &[DialogFeatures],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOutcome, HarnessError> {
    if dialogs.is_empty() {
        return Err(HarnessError::validation("no dialogs to train on"));
    }
    for d in dialogs {
        if let Some(&bad) = d.labels().iter().find(|&&l| l >= model_cfg.n_classes) {
            return Err(HarnessError::validation(format!(
                "label {bad} outside [0, {})",
                model_cfg.n_classes
            )));
        }
    }

    // Independent seeded streams: weight init, dropout masks, batch order,
    // and the validation split never perturb each other.
    let mut init_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let dropout_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed.wrapping_add(1));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed.wrapping_add(2));
    let (train_idx, val_idx) = seeded_split(
        dialogs.len(),
        VALIDATION_FRACTION,
        train_cfg.seed.wrapping_add(3),
    );

    let model = DialogModel::new(model_cfg.clone(), &mut init_rng)?;
    let named = model.params();
    let tensors: Vec<_> = named.iter().map(|(_, t)| t.clone()).collect();
    let mut opt = AdamW::new(train_cfg.optimizer_config(), &tensors);
    let mut drop = Dropout::train(model_cfg.dropout, dropout_rng);

    let train_set: Vec<&DialogFeatures> = train_idx.iter().map(|&i| &dialogs[i]).collect();
    let val_set: Vec<&DialogFeatures> = val_idx.iter().map(|&i| &dialogs[i]).collect();
    let train_utterances: usize = train_set.iter().map(|d| d.len()).sum();

    let mut log = Vec::with_capacity(train_cfg.epochs);
    let mut best_epoch = 0;
    let mut best_score = f64::INFINITY;
    let mut best_params = checkpoint::snapshot(&named)
        .map_err(|e| HarnessError::validation(format!("initial snapshot: {e}")))?;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=train_cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_nll = 0.0;

        for batch in order.chunks(train_cfg.batch_dialogs) {
            opt.zero_grad();
            let batch_utterances: usize = batch.iter().map(|&i| train_set[i].len()).sum();
            let mut batch_loss: Option<emofusion_core::Tensor> = None;
            for &i in batch {
                let dialog = train_set[i];
                let state = model.forward(dialog, &mut drop);
                let ce = cross_entropy_graph(&state.probs, dialog.labels());
                let weighted = ce.mul_scalar(dialog.len() as f64 / batch_utterances as f64);
                batch_loss = Some(match batch_loss {
                    Some(acc) => acc.add(&weighted),
                    None => weighted,
                });
            }
            let batch_loss = batch_loss.expect("chunks never yields an empty batch");
            let value = batch_loss.value();
            if !value.is_finite() {
                return Err(HarnessError::numerical(format!(
                    "epoch {epoch}: training loss is not finite"
                )));
            }
            epoch_nll += value * batch_utterances as f64;
            batch_loss.backward();
            opt.step();
        }

        // A NaN probability clamps to the floor inside the loss, so a pinned
        // finite loss can mask exploded weights; check the weights directly.
        for (name, t) in &named {
            if t.to_vec().iter().any(|v| !v.is_finite()) {
                return Err(HarnessError::numerical(format!(
                    "epoch {epoch}: parameter {name} is not finite"
                )));
            }
        }

        let train_loss = epoch_nll / train_utterances as f64;
        let train_accuracy = dataset_accuracy(&model, &train_set);
        let (val_loss, val_accuracy) = if val_set.is_empty() {
            (None, None)
        } else {
            let vl = dataset_loss(&model, &val_set);
            if !vl.is_finite() {
                return Err(HarnessError::numerical(format!(
                    "epoch {epoch}: validation loss is not finite"
                )));
            }
            (Some(vl), Some(dataset_accuracy(&model, &val_set)))
        };

        let score = val_loss.unwrap_or(train_loss);
        if score < best_score {
            best_score = score;
            best_epoch = epoch;
            best_params = checkpoint::snapshot(&named)
                .map_err(|e| HarnessError::numerical(format!("epoch {epoch}: {e}")))?;
        }

        log.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
    }

    checkpoint::restore(&named, &best_params)
        .map_err(|e| HarnessError::validation(format!("restoring best epoch: {e}")))?;
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_params,
    })
}

/// Per-utterance mean cross entropy with dropout off.
pub fn dataset_loss(model: &DialogModel, dialogs: &[&DialogFeatures]) -> f64 {
    let mut nll = 0.0;
    let mut total = 0usize;
    for d in dialogs {
        let state = model.forward(d, &mut Dropout::Off);
        nll += cross_entropy_graph(&state.probs, d.labels()).value() * d.len() as f64;
        total += d.len();
    }
    nll / total as f64
}

pub fn dataset_accuracy(model: &DialogModel, dialogs: &[&DialogFeatures]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for d in dialogs {
        let pred = model.predict(d);
        correct += pred.iter().zip(d.labels()).filter(|(p, t)| p == t).count();
        total += d.len();
    }
    correct as f64 / total as f64
}

/// Renders the epoch log as stable text: no timestamps, floats at full
/// round-trip precision, one line per epoch.
pub fn format_log(log: &[EpochStats]) -> String {
    let mut out = String::new();
    for s in log {
        let _ = write!(out, "epoch {} train_loss {} train_acc {}", s.epoch, s.train_loss, s.train_accuracy);
        if let (Some(vl), Some(va)) = (s.val_loss, s.val_accuracy) {
            let _ = write!(out, " val_loss {vl} val_acc {va}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use emofusion_core::Tensor;
    use emofusion_model::dialog::{FusionKind, ModalitySet};
    use rand::Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            d_text: 6,
            d_audio: 4,
            d_visual: 4,
            text_encoders: 1,
            audio_encoders: 1,
            visual_encoders: 1,
            fusion_layers: 1,
            heads: 2,
            ff_hidden: Some(8),
            dropout: 0.0,
            n_classes: 3,
            positional_encoding: false,
            fusion: FusionKind::Attention,
            modalities: ModalitySet::default(),
        }
    }

    fn toy_dialogs(n: usize, k: usize, cfg: &ModelConfig, seed: u64) -> Vec<DialogFeatures> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let labels: Vec<usize> = (0..k).map(|_| rng.random_range(0..cfg.n_classes)).collect();
                let feat = |dim: usize, labels: &[usize], rng: &mut ChaCha8Rng| {
                    let data: Vec<f64> = labels
                        .iter()
                        .flat_map(|&l| {
                            (0..dim)
                                .map(|j| {
                                    let signal = if j == l { 2.0 } else { 0.0 };
                                    signal + rng.random_range(-0.3..0.3)
                                })
                                .collect::<Vec<_>>()
                        })
                        .collect();
                    Tensor::from_vec(&[labels.len(), dim], data)
                };
                DialogFeatures::new(
                    Some(feat(cfg.d_text, &labels, &mut rng)),
                    Some(feat(cfg.d_audio, &labels, &mut rng)),
                    Some(feat(cfg.d_visual, &labels, &mut rng)),
                    labels,
                )
                .unwrap()
            })
            .collect()
    }

    fn quick_train_config(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            seed,
            lr: 2e-3,
            batch_dialogs: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (a_train, a_val) = seeded_split(20, 0.1, 5);
        let (b_train, b_val) = seeded_split(20, 0.1, 5);
        assert_eq!(a_train, b_train);
        assert_eq!(a_val, b_val);
        assert_eq!(a_val.len(), 2);
        let mut all: Vec<usize> = a_train.iter().chain(&a_val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());

        let (c_train, c_val) = seeded_split(20, 0.1, 6);
        assert!(c_train != a_train || c_val != a_val);
    }

    #[test]
    fn tiny_split_leaves_validation_empty() {
        let (train, val) = seeded_split(5, 0.1, 0);
        assert!(val.is_empty());
        assert_eq!(train.len(), 5);
    }

    #[test]
    fn loss_decreases_on_learnable_data() {
        let cfg = tiny_config();
        let dialogs = toy_dialogs(6, 4, &cfg, 3);
        let out = train_dialog_model(&dialogs, &cfg, &quick_train_config(12, 0)).unwrap();
        assert_eq!(out.log.len(), 12);
        assert!(
            out.log.last().unwrap().train_loss < out.log[0].train_loss,
            "loss went {} -> {}",
            out.log[0].train_loss,
            out.log.last().unwrap().train_loss
        );
    }

    #[test]
    fn identical_seeds_reproduce_log_and_params_exactly() {
        let cfg = tiny_config();
        let dialogs = toy_dialogs(5, 3, &cfg, 9);
        let tc = quick_train_config(4, 42);
        let a = train_dialog_model(&dialogs, &cfg, &tc).unwrap();
        let b = train_dialog_model(&dialogs, &cfg, &tc).unwrap();
        assert_eq!(format_log(&a.log), format_log(&b.log));
        assert_eq!(a.best_epoch, b.best_epoch);
        for (pa, pb) in a.best_params.iter().zip(&b.best_params) {
            assert_eq!(pa.name, pb.name);
            let bits_a: Vec<u64> = pa.values.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = pb.values.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b, "param {} drifted between runs", pa.name);
        }
    }

    #[test]
    fn different_seed_changes_the_run() {
        let cfg = tiny_config();
        let dialogs = toy_dialogs(5, 3, &cfg, 9);
        let a = train_dialog_model(&dialogs, &cfg, &quick_train_config(3, 1)).unwrap();
        let b = train_dialog_model(&dialogs, &cfg, &quick_train_config(3, 2)).unwrap();
        assert_ne!(format_log(&a.log), format_log(&b.log));
    }

    #[test]
    fn returned_model_matches_best_snapshot() {
        let cfg = tiny_config();
        let dialogs = toy_dialogs(6, 3, &cfg, 4);
        let out = train_dialog_model(&dialogs, &cfg, &quick_train_config(6, 7)).unwrap();
        let named = out.model.params();
        for ((_, tensor), record) in named.iter().zip(&out.best_params) {
            assert_eq!(tensor.data().to_vec(), record.values);
        }
    }

    #[test]
    fn mislabeled_dialog_is_rejected() {
        let cfg = tiny_config();
        let mut dialogs = toy_dialogs(2, 3, &cfg, 4);
        let bad = DialogFeatures::new(
            Some(Tensor::from_vec(&[1, 6], vec![0.0; 6])),
            Some(Tensor::from_vec(&[1, 4], vec![0.0; 4])),
            Some(Tensor::from_vec(&[1, 4], vec![0.0; 4])),
            vec![cfg.n_classes],
        )
        .unwrap();
        dialogs.push(bad);
        let err = train_dialog_model(&dialogs, &cfg, &quick_train_config(1, 0));
        assert!(err.is_err());
    }

    #[test]
    fn exploding_weights_surface_as_a_numerical_error() {
        let cfg = tiny_config();
        let dialogs = toy_dialogs(3, 4, &cfg, 2);
        let tc = TrainConfig {
            epochs: 60,
            seed: 0,
            lr: 1e12,
            batch_dialogs: 4,
            ..TrainConfig::default()
        };
        let err = match train_dialog_model(&dialogs, &cfg, &tc) {
            Err(e) => e,
            Ok(_) => panic!("training with lr 1e12 should not finish cleanly"),
        };
        assert_eq!(err.exit_code(), 2, "wrong error kind: {err}");
    }
}
