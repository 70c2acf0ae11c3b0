//! Linear softmax probe for measuring how much label signal a feature set
//! carries on its own. Deliberately tiny: one weight matrix, one bias,
//! full-batch AdamW.

use emofusion_core::optim::{AdamW, AdamWConfig};
use emofusion_core::Tensor;
use emofusion_model::losses::cross_entropy_graph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::HarnessError;

#[derive(Debug, Clone, Copy)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> ProbeConfig {
        ProbeConfig {
            epochs: 150,
            lr: 0.05,
            seed: 0,
        }
    }
}

/// Trains a linear classifier on `(train_x, train_y)` and returns its
/// accuracy on `(test_x, test_y)`.
pub fn linear_probe_accuracy(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    test_x: &[Vec<f64>],
    test_y: &[usize],
    classes: usize,
    cfg: &ProbeConfig,
) -> Result<f64, HarnessError> {
    if train_x.is_empty() || test_x.is_empty() {
        return Err(HarnessError::validation("probe needs train and test samples"));
    }
    if train_x.len() != train_y.len() || test_x.len() != test_y.len() {
        return Err(HarnessError::validation("probe features and labels disagree in length"));
    }
    if classes < 2 {
        return Err(HarnessError::validation("probe needs at least two classes"));
    }
    let d = train_x[0].len();
    for row in train_x.iter().chain(test_x) {
        if row.len() != d {
            return Err(HarnessError::validation(format!(
                "probe feature width {} differs from {d}",
                row.len()
            )));
        }
    }
    for &y in train_y.iter().chain(test_y) {
        if y >= classes {
            return Err(HarnessError::validation(format!(
                "probe label {y} outside [0, {classes})"
            )));
        }
    }

    let x_train = rows_tensor(train_x, d);
    let x_test = rows_tensor(test_x, d);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w = Tensor::uniform_param(&[d, classes], -0.1, 0.1, &mut rng);
    let b = Tensor::param(&[classes], vec![0.0; classes]);

    let mut opt = AdamW::new(AdamWConfig::new(cfg.lr, 0.0), &[w.clone(), b.clone()]);
    for _ in 0..cfg.epochs {
        opt.zero_grad();
        let probs = x_train.linear(&w, &b).softmax(1);
        let loss = cross_entropy_graph(&probs, train_y);
        if !loss.value().is_finite() {
            return Err(HarnessError::numerical("probe loss became non-finite"));
        }
        loss.backward();
        opt.step();
    }

    let logits = x_test.linear(&w, &b);
    let pred = argmax_rows(&logits, classes);
    let correct = pred.iter().zip(test_y).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / test_y.len() as f64)
}

fn rows_tensor(rows: &[Vec<f64>], d: usize) -> Tensor {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Tensor::from_vec(&[rows.len(), d], flat)
}

fn argmax_rows(logits: &Tensor, classes: usize) -> Vec<usize> {
    logits
        .data()
        .chunks(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap()
        })
        .collect()
}
