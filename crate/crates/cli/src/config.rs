//! Flat TOML configuration covering both the model architecture and the
//! training loop. One file, one namespace, unknown keys rejected.

use std::fs;
use std::path::Path;

use emofusion_core::optim::AdamWConfig;
use emofusion_model::dialog::{FusionKind, ModalitySet, ModelConfig};
use serde::Deserialize;

use crate::error::HarnessError;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FlatConfig {
    pub d_text: usize,
    pub d_audio: usize,
    pub d_visual: usize,
    pub text_encoders: usize,
    pub audio_encoders: usize,
    pub visual_encoders: usize,
    pub fusion_layers: usize,
    pub heads: usize,
    pub ff_hidden: Option<usize>,
    pub n_classes: usize,
    pub positional_encoding: bool,
    pub fusion: String,
    pub modalities: String,

    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_dialogs: usize,
    pub seed: u64,
    /// Shared by the model (layer placement) and the trainer (rate bound).
    pub dropout: f64,
}

impl Default for FlatConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        FlatConfig {
            d_text: model.d_text,
            d_audio: model.d_audio,
            d_visual: model.d_visual,
            text_encoders: model.text_encoders,
            audio_encoders: model.audio_encoders,
            visual_encoders: model.visual_encoders,
            fusion_layers: model.fusion_layers,
            heads: model.heads,
            ff_hidden: model.ff_hidden,
            n_classes: model.n_classes,
            positional_encoding: model.positional_encoding,
            fusion: "attention".to_string(),
            modalities: "t,a,v".to_string(),
            lr: 5e-4,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 60,
            batch_dialogs: 4,
            seed: 0,
            dropout: 0.4,
        }
    }
}

/// Optimizer and loop settings, already validated.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_dialogs: usize,
    pub seed: u64,
    pub dropout: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(HarnessError::validation(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(HarnessError::validation(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if !(0.0..=0.5).contains(&self.dropout) {
            return Err(HarnessError::validation(format!(
                "dropout {} outside the supported [0, 0.5] range",
                self.dropout
            )));
        }
        for (beta, name) in [(self.beta1, "beta1"), (self.beta2, "beta2")] {
            if !(0.0..1.0).contains(&beta) {
                return Err(HarnessError::validation(format!(
                    "{name} must be in [0, 1), got {beta}"
                )));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(HarnessError::validation(format!(
                "adam_eps must be positive, got {}",
                self.adam_eps
            )));
        }
        if self.epochs == 0 {
            return Err(HarnessError::validation("epochs must be at least 1"));
        }
        if self.batch_dialogs == 0 {
            return Err(HarnessError::validation("batch_dialogs must be at least 1"));
        }
        Ok(())
    }

    pub fn optimizer_config(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        FlatConfig::default()
            .train_config()
            .expect("built-in defaults satisfy their own bounds")
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub modalities: Option<String>,
    pub fusion: Option<String>,
    /// Sets all three encoder depths at once.
    pub encoders: Option<usize>,
    pub fusion_layers: Option<usize>,
}

impl FlatConfig {
    pub fn load(path: &Path) -> Result<FlatConfig, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::io(format!("reading config {}", path.display()), e))?;
        toml::from_str(&text)
            .map_err(|e| HarnessError::validation(format!("config {}: {e}", path.display())))
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(modalities) = &overrides.modalities {
            self.modalities = modalities.clone();
        }
        if let Some(fusion) = &overrides.fusion {
            self.fusion = fusion.clone();
        }
        if let Some(depth) = overrides.encoders {
            self.text_encoders = depth;
            self.audio_encoders = depth;
            self.visual_encoders = depth;
        }
        if let Some(m) = overrides.fusion_layers {
            self.fusion_layers = m;
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig, HarnessError> {
        let fusion: FusionKind = self.fusion.parse()?;
        let modalities: ModalitySet = self.modalities.parse()?;
        let cfg = ModelConfig {
            d_text: self.d_text,
            d_audio: self.d_audio,
            d_visual: self.d_visual,
            text_encoders: self.text_encoders,
            audio_encoders: self.audio_encoders,
            visual_encoders: self.visual_encoders,
            fusion_layers: self.fusion_layers,
            heads: self.heads,
            ff_hidden: self.ff_hidden,
            dropout: self.dropout,
            n_classes: self.n_classes,
            positional_encoding: self.positional_encoding,
            fusion,
            modalities,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig, HarnessError> {
        let cfg = TrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_eps: self.adam_eps,
            epochs: self.epochs,
            batch_dialogs: self.batch_dialogs,
            seed: self.seed,
            dropout: self.dropout,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_yields_defaults() {
        let cfg: FlatConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, FlatConfig::default());
        assert_eq!(cfg.lr, 5e-4);
        assert_eq!(cfg.weight_decay, 5e-4);
        assert_eq!(cfg.dropout, 0.4);
        assert!(cfg.model_config().is_ok());
        assert!(cfg.train_config().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<FlatConfig>("learning_rate = 0.1").err().unwrap();
        assert!(err.to_string().contains("learning_rate"));
    }

    #[test]
    fn partial_document_overrides_only_named_keys() {
        let cfg: FlatConfig = toml::from_str("lr = 1e-3\nheads = 2\nfusion = \"concat\"").unwrap();
        assert_eq!(cfg.lr, 1e-3);
        assert_eq!(cfg.heads, 2);
        assert_eq!(cfg.model_config().unwrap().fusion, FusionKind::Concat);
        assert_eq!(cfg.epochs, FlatConfig::default().epochs);
    }

    #[test]
    fn train_validation_bounds() {
        let mut cfg = FlatConfig::default();
        cfg.lr = 0.0;
        assert!(cfg.train_config().is_err());

        let mut cfg = FlatConfig::default();
        cfg.dropout = 0.6;
        assert!(cfg.train_config().is_err());
        cfg.dropout = 0.5;
        assert!(cfg.train_config().is_ok());

        let mut cfg = FlatConfig::default();
        cfg.beta2 = 1.0;
        assert!(cfg.train_config().is_err());
    }

    #[test]
    fn bad_fusion_or_modalities_fail_model_config() {
        let mut cfg = FlatConfig::default();
        cfg.fusion = "mixup".to_string();
        assert!(cfg.model_config().is_err());

        let mut cfg = FlatConfig::default();
        cfg.modalities = "t,q".to_string();
        assert!(cfg.model_config().is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = FlatConfig::default();
        cfg.apply(&Overrides {
            seed: Some(9),
            modalities: Some("t,a".to_string()),
            fusion: Some("concat".to_string()),
            encoders: Some(3),
            fusion_layers: Some(5),
        });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.modalities, "t,a");
        assert_eq!(cfg.fusion, "concat");
        assert_eq!(cfg.text_encoders, 3);
        assert_eq!(cfg.audio_encoders, 3);
        assert_eq!(cfg.visual_encoders, 3);
        assert_eq!(cfg.fusion_layers, 5);
    }

    #[test]
    fn optimizer_config_carries_all_constants() {
        let t = FlatConfig::default().train_config().unwrap();
        let opt = t.optimizer_config();
        assert_eq!(opt.lr, 5e-4);
        assert_eq!(opt.weight_decay, 5e-4);
        assert_eq!(opt.beta1, 0.9);
        assert_eq!(opt.beta2, 0.999);
        assert_eq!(opt.eps, 1e-8);
    }
}
