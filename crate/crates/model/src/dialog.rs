//! Dialog-level emotion model: per-modality encoders, cross-modal fusion,
//! and a shared utterance classifier.

use std::error::Error;
use std::fmt;
use std::str::FromStr;

use emofusion_core::init::linear_init;
use emofusion_core::Tensor;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{positional_encoding, EncoderStack};
use crate::fusion::FusionStack;
use crate::Dropout;

/// How modalities are combined before classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    /// Text queries the companion modalities through attention layers.
    #[default]
    Attention,
    /// Encoded features are concatenated directly, the ablation baseline.
    Concat,
}

impl FromStr for FusionKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "attention" => Ok(FusionKind::Attention),
            "concat" => Ok(FusionKind::Concat),
            other => Err(ConfigError::UnknownFusion(other.to_string())),
        }
    }
}

/// Which input streams the model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySet {
    pub text: bool,
    pub audio: bool,
    pub visual: bool,
}

impl Default for ModalitySet {
    fn default() -> Self {
        ModalitySet {
            text: true,
            audio: true,
            visual: true,
        }
    }
}

impl ModalitySet {
    pub fn count(&self) -> usize {
        usize::from(self.text) + usize::from(self.audio) + usize::from(self.visual)
    }
}

impl FromStr for ModalitySet {
    type Err = ConfigError;

    /// Parses comma-separated tags: `t`/`text`, `a`/`audio`, `v`/`visual`.
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let mut set = ModalitySet {
            text: false,
            audio: false,
            visual: false,
        };
        for tag in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tag {
                "t" | "text" => set.text = true,
                "a" | "audio" => set.audio = true,
                "v" | "visual" => set.visual = true,
                other => return Err(ConfigError::UnknownModality(other.to_string())),
            }
        }
        if set.count() == 0 {
            return Err(ConfigError::NoModalities);
        }
        Ok(set)
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut tags = Vec::new();
        if self.text {
            tags.push("t");
        }
        if self.audio {
            tags.push("a");
        }
        if self.visual {
            tags.push("v");
        }
        write!(f, "{}", tags.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    NoModalities,
    UnknownModality(String),
    UnknownFusion(String),
    /// Attention fusion requires text plus at least one companion stream.
    FusionNeedsCompanions,
    HeadsDontDivide { dim: usize, heads: usize },
    ZeroHeads,
    ZeroDim(&'static str),
    ZeroFusionDepth,
    BadDropout(f64),
    TooFewClasses(usize),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::NoModalities => write!(f, "at least one modality must be enabled"),
            ConfigError::UnknownModality(s) => write!(f, "unknown modality tag '{s}'"),
            ConfigError::UnknownFusion(s) => {
                write!(f, "unknown fusion kind '{s}' (expected 'attention' or 'concat')")
            }
            ConfigError::FusionNeedsCompanions => write!(
                f,
                "attention fusion needs the text stream plus at least one other modality"
            ),
            ConfigError::HeadsDontDivide { dim, heads } => {
                write!(f, "width {dim} is not divisible by {heads} heads")
            }
            ConfigError::ZeroHeads => write!(f, "head count must be at least 1"),
            ConfigError::ZeroDim(name) => write!(f, "{name} width must be at least 1"),
            ConfigError::ZeroFusionDepth => {
                write!(f, "attention fusion needs at least one fusion layer")
            }
            ConfigError::BadDropout(p) => write!(f, "dropout {p} outside [0, 1)"),
            ConfigError::TooFewClasses(c) => write!(f, "need at least 2 classes, got {c}"),
        }
    }
}

impl Error for ConfigError {}

/// Architecture hyperparameters. Widths are per-utterance feature widths
/// after upstream feature extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_text: usize,
    pub d_audio: usize,
    pub d_visual: usize,
    /// Encoder depths per modality; 0 passes features through untouched.
    pub text_encoders: usize,
    pub audio_encoders: usize,
    pub visual_encoders: usize,
    /// Number of chained fusion layers (ignored under concat fusion).
    pub fusion_layers: usize,
    pub heads: usize,
    /// Feed-forward width inside encoder blocks; `None` means 4x the width.
    pub ff_hidden: Option<usize>,
    pub dropout: f64,
    pub n_classes: usize,
    /// Adds a fixed sinusoidal position table to each modality before its
    /// encoder stack. Off by default: utterance order carries no signal in
    /// the synthetic corpora and equivariance is easier to test.
    pub positional_encoding: bool,
    pub fusion: FusionKind,
    pub modalities: ModalitySet,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_text: 32,
            d_audio: 16,
            d_visual: 16,
            text_encoders: 1,
            audio_encoders: 1,
            visual_encoders: 1,
            fusion_layers: 2,
            heads: 4,
            ff_hidden: None,
            dropout: 0.0,
            n_classes: 7,
            positional_encoding: false,
            fusion: FusionKind::Attention,
            modalities: ModalitySet::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.modalities.count() == 0 {
            return Err(ConfigError::NoModalities);
        }
        if self.heads == 0 {
            return Err(ConfigError::ZeroHeads);
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::BadDropout(self.dropout));
        }
        if self.n_classes < 2 {
            return Err(ConfigError::TooFewClasses(self.n_classes));
        }
        for (present, dim, depth, name) in [
            (self.modalities.text, self.d_text, self.text_encoders, "text"),
            (self.modalities.audio, self.d_audio, self.audio_encoders, "audio"),
            (self.modalities.visual, self.d_visual, self.visual_encoders, "visual"),
        ] {
            if !present {
                continue;
            }
            if dim == 0 {
                return Err(ConfigError::ZeroDim(name));
            }
            if depth > 0 && dim % self.heads != 0 {
                return Err(ConfigError::HeadsDontDivide {
                    dim,
                    heads: self.heads,
                });
            }
        }
        if self.fusion == FusionKind::Attention {
            if !self.modalities.text || self.modalities.count() < 2 {
                return Err(ConfigError::FusionNeedsCompanions);
            }
            if self.fusion_layers == 0 {
                return Err(ConfigError::ZeroFusionDepth);
            }
            if self.d_text % self.heads != 0 {
                return Err(ConfigError::HeadsDontDivide {
                    dim: self.d_text,
                    heads: self.heads,
                });
            }
        }
        Ok(())
    }

    /// Width of the concatenated feature vector entering the classifier.
    pub fn classifier_input(&self) -> usize {
        let mut width = 0;
        if self.modalities.text {
            width += self.d_text;
        }
        if self.modalities.audio {
            width += self.d_audio;
        }
        if self.modalities.visual {
            width += self.d_visual;
        }
        width
    }

    fn classifier_hidden(&self) -> usize {
        if self.modalities.text {
            self.d_text
        } else {
            self.d_audio.max(self.d_visual)
        }
    }

    fn companion_dims(&self) -> Vec<usize> {
        let mut dims = Vec::new();
        if self.modalities.audio {
            dims.push(self.d_audio);
        }
        if self.modalities.visual {
            dims.push(self.d_visual);
        }
        dims
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DialogError {
    EmptyDialog,
    RowMismatch {
        modality: &'static str,
        rows: usize,
        labels: usize,
    },
    NotAMatrix { modality: &'static str, rank: usize },
}

impl fmt::Display for DialogError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DialogError::EmptyDialog => write!(f, "dialog has no utterances"),
            DialogError::RowMismatch {
                modality,
                rows,
                labels,
            } => write!(f, "{modality} has {rows} rows but the dialog has {labels} labels"),
            DialogError::NotAMatrix { modality, rank } => {
                write!(f, "{modality} features must be a matrix, got rank {rank}")
            }
        }
    }
}

impl Error for DialogError {}

/// Per-utterance features of one dialog, one row per utterance. Streams the
/// model does not consume may be `None`.
pub struct DialogFeatures {
    f_text: Option<Tensor>,
    f_audio: Option<Tensor>,
    f_visual: Option<Tensor>,
    labels: Vec<usize>,
}

impl DialogFeatures {
    pub fn new(
        f_text: Option<Tensor>,
        f_audio: Option<Tensor>,
        f_visual: Option<Tensor>,
        labels: Vec<usize>,
    ) -> Result<Self, DialogError> {
        if labels.is_empty() {
            return Err(DialogError::EmptyDialog);
        }
        for (t, modality) in [
            (&f_text, "text"),
            (&f_audio, "audio"),
            (&f_visual, "visual"),
        ] {
            if let Some(t) = t {
                if t.rank() != 2 {
                    return Err(DialogError::NotAMatrix {
                        modality,
                        rank: t.rank(),
                    });
                }
                if t.shape()[0] != labels.len() {
                    return Err(DialogError::RowMismatch {
                        modality,
                        rows: t.shape()[0],
                        labels: labels.len(),
                    });
                }
            }
        }
        Ok(DialogFeatures {
            f_text,
            f_audio,
            f_visual,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn text(&self) -> Option<&Tensor> {
        self.f_text.as_ref()
    }

    pub fn audio(&self) -> Option<&Tensor> {
        self.f_audio.as_ref()
    }

    pub fn visual(&self) -> Option<&Tensor> {
        self.f_visual.as_ref()
    }
}

/// Everything the forward pass produced, kept around so training can reach
/// the probabilities and probes can reach intermediate features.
pub struct DialogForwardState {
    pub encoded_text: Option<Tensor>,
    pub encoded_audio: Option<Tensor>,
    pub encoded_visual: Option<Tensor>,
    pub fusion_outputs: Vec<Tensor>,
    pub fused: Tensor,
    pub logits: Tensor,
    pub probs: Tensor,
}

pub struct DialogModel {
    cfg: ModelConfig,
    enc_text: Option<EncoderStack>,
    enc_audio: Option<EncoderStack>,
    enc_visual: Option<EncoderStack>,
    fusion: Option<FusionStack>,
    cls_w1: Tensor,
    cls_b1: Tensor,
    cls_w2: Tensor,
    cls_b2: Tensor,
}

impl DialogModel {
    pub fn new(cfg: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let stack = |present: bool, dim: usize, depth: usize, rng: &mut ChaCha8Rng| {
            present.then(|| EncoderStack::new(dim, cfg.heads, depth, cfg.ff_hidden, rng))
        };
        let enc_text = stack(cfg.modalities.text, cfg.d_text, cfg.text_encoders, rng);
        let enc_audio = stack(cfg.modalities.audio, cfg.d_audio, cfg.audio_encoders, rng);
        let enc_visual = stack(cfg.modalities.visual, cfg.d_visual, cfg.visual_encoders, rng);
        let fusion = (cfg.fusion == FusionKind::Attention).then(|| {
            FusionStack::new(
                cfg.d_text,
                &cfg.companion_dims(),
                cfg.heads,
                cfg.fusion_layers,
                rng,
            )
        });
        let (cls_w1, cls_b1) = linear_init(cfg.classifier_input(), cfg.classifier_hidden(), rng);
        let (cls_w2, cls_b2) = linear_init(cfg.classifier_hidden(), cfg.n_classes, rng);
        Ok(DialogModel {
            cfg,
            enc_text,
            enc_audio,
            enc_visual,
            fusion,
            cls_w1,
            cls_b1,
            cls_w2,
            cls_b2,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn encode_stream(
        stack: &Option<EncoderStack>,
        features: Option<&Tensor>,
        dim: usize,
        name: &str,
        use_positions: bool,
        drop: &mut Dropout,
    ) -> Option<Tensor> {
        let stack = stack.as_ref()?;
        let features =
            features.unwrap_or_else(|| panic!("model consumes {name} but the dialog lacks it"));
        assert!(
            features.shape()[1] == dim,
            "{name} features are {} wide, model expects {dim}",
            features.shape()[1]
        );
        let x = if use_positions {
            features.add(&positional_encoding(features.shape()[0], dim))
        } else {
            features.clone()
        };
        Some(stack.forward(&x, drop))
    }

    /// Runs the dialog through encoders, fusion and the classifier. Width or
    /// presence mismatches against the config are caller bugs and panic;
    /// dialog-shape problems are caught by [`DialogFeatures::new`].
    pub fn forward(&self, dialog: &DialogFeatures, drop: &mut Dropout) -> DialogForwardState {
        let pe = self.cfg.positional_encoding;
        let encoded_text = Self::encode_stream(
            &self.enc_text,
            dialog.text(),
            self.cfg.d_text,
            "text",
            pe,
            drop,
        );
        let encoded_audio = Self::encode_stream(
            &self.enc_audio,
            dialog.audio(),
            self.cfg.d_audio,
            "audio",
            pe,
            drop,
        );
        let encoded_visual = Self::encode_stream(
            &self.enc_visual,
            dialog.visual(),
            self.cfg.d_visual,
            "visual",
            pe,
            drop,
        );

        let mut fusion_outputs = Vec::new();
        let fused = match &self.fusion {
            Some(stack) => {
                let text = encoded_text.as_ref().expect("attention fusion requires text");
                let keys: Vec<&Tensor> = [encoded_audio.as_ref(), encoded_visual.as_ref()]
                    .into_iter()
                    .flatten()
                    .collect();
                fusion_outputs = stack.forward(text, &keys, drop);
                let last = fusion_outputs.last().expect("fusion depth is validated nonzero");
                let mut parts: Vec<&Tensor> = vec![last];
                parts.extend(&keys);
                Tensor::concat_cols(&parts)
            }
            None => {
                let parts: Vec<&Tensor> = [
                    encoded_text.as_ref(),
                    encoded_audio.as_ref(),
                    encoded_visual.as_ref(),
                ]
                .into_iter()
                .flatten()
                .collect();
                assert!(!parts.is_empty(), "validated config has at least one modality");
                Tensor::concat_cols(&parts)
            }
        };

        let hidden = drop.apply(&fused.linear(&self.cls_w1, &self.cls_b1).gelu());
        let logits = hidden.linear(&self.cls_w2, &self.cls_b2);
        let probs = logits.softmax(1);
        DialogForwardState {
            encoded_text,
            encoded_audio,
            encoded_visual,
            fusion_outputs,
            fused,
            logits,
            probs,
        }
    }

    /// Argmax class per utterance with dropout off.
    pub fn predict(&self, dialog: &DialogFeatures) -> Vec<usize> {
        let state = self.forward(dialog, &mut Dropout::Off);
        let probs = state.probs.to_vec();
        probs
            .chunks(self.cfg.n_classes)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .expect("classes >= 2")
            })
            .collect()
    }

    /// All trainable parameters in a stable order, names unique.
    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        if let Some(s) = &self.enc_text {
            s.params("enc_text", &mut out);
        }
        if let Some(s) = &self.enc_audio {
            s.params("enc_audio", &mut out);
        }
        if let Some(s) = &self.enc_visual {
            s.params("enc_visual", &mut out);
        }
        if let Some(f) = &self.fusion {
            f.params("fusion", &mut out);
        }
        out.push(("cls_w1".to_string(), self.cls_w1.clone()));
        out.push(("cls_b1".to_string(), self.cls_b1.clone()));
        out.push(("cls_w2".to_string(), self.cls_w2.clone()));
        out.push(("cls_b2".to_string(), self.cls_b2.clone()));
        out
    }
}
