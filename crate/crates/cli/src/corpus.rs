//! Dialog corpus files: one JSON record per line, one dialog per record.
//!
//! Audio can arrive as a precomputed feature vector or as a WAV path that is
//! pushed through the spectrogram extractor at materialization time; visual
//! input can be a feature vector or a raw 15-frame payload aggregated by the
//! face/scene pipeline.

use std::fs;
use std::path::{Path, PathBuf};

use emofusion_core::Tensor;
use emofusion_model::dialog::{DialogFeatures, ModalitySet, ModelConfig};
use emofusion_model::extractor::Extractor;
use emofusion_model::visual::{
    visual_utterance_embedding, FaceObservation, FrameObservation, UtteranceFrames,
    FRAMES_PER_UTTERANCE,
};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::extract::wav_to_feature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AudioField {
    /// Relative to the corpus file's directory.
    Wav { wav: PathBuf },
    Features(Vec<f64>),
}

fn default_confidence() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacePayload {
    pub feature: Vec<f64>,
    pub area: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePayload {
    pub scene: Vec<f64>,
    #[serde(default)]
    pub faces: Vec<FacePayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FramesField {
    Features(Vec<f64>),
    Payload(Vec<FramePayload>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub text_embedding: Vec<f64>,
    pub audio: AudioField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<FramesField>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub dialog_id: String,
    pub utterances: Vec<UtteranceRecord>,
}

/// A validated corpus plus the directory WAV paths resolve against.
#[derive(Debug)]
pub struct Corpus {
    pub records: Vec<CorpusRecord>,
    pub base_dir: PathBuf,
}

/// Feature sources to consult when turning records into tensors.
pub struct MaterializeOptions<'a> {
    pub modalities: ModalitySet,
    pub extractor: Option<&'a Extractor>,
}

pub fn load_corpus(path: &Path) -> Result<Corpus, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::io(format!("reading corpus {}", path.display()), e))?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();

    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(line).map_err(|e| {
            HarnessError::validation(format!("{} line {}: {e}", path.display(), idx + 1))
        })?;
        validate_record(&record, &base_dir)?;
        records.push(record);
    }
    Ok(Corpus { records, base_dir })
}

pub fn save_corpus(path: &Path, records: &[CorpusRecord]) -> Result<(), HarnessError> {
    let mut out = String::new();
    for record in records {
        out.push_str(
            &serde_json::to_string(record)
                .map_err(|e| HarnessError::validation(format!("encoding corpus: {e}")))?,
        );
        out.push('\n');
    }
    fs::write(path, out)
        .map_err(|e| HarnessError::io(format!("writing corpus {}", path.display()), e))
}

fn validate_record(record: &CorpusRecord, base_dir: &Path) -> Result<(), HarnessError> {
    let id = &record.dialog_id;
    if record.utterances.is_empty() {
        return Err(HarnessError::validation(format!("dialog '{id}': no utterances")));
    }

    let text_width = record.utterances[0].text_embedding.len();
    let mut audio_width: Option<usize> = None;
    let mut frames_width: Option<usize> = None;
    for (j, utt) in record.utterances.iter().enumerate() {
        if utt.text_embedding.len() != text_width {
            return Err(HarnessError::validation(format!(
                "dialog '{id}': text width {} at utterance {j}, {} elsewhere",
                utt.text_embedding.len(),
                text_width
            )));
        }
        match &utt.audio {
            AudioField::Features(v) => {
                let w = audio_width.get_or_insert(v.len());
                if v.len() != *w {
                    return Err(HarnessError::validation(format!(
                        "dialog '{id}': audio width {} at utterance {j}, {} elsewhere",
                        v.len(),
                        w
                    )));
                }
            }
            AudioField::Wav { wav } => {
                let resolved = base_dir.join(wav);
                if !resolved.is_file() {
                    return Err(HarnessError::validation(format!(
                        "dialog '{id}' utterance {j}: wav file {} not found",
                        resolved.display()
                    )));
                }
            }
        }
        match &utt.frames {
            None => {}
            Some(FramesField::Features(v)) => {
                let w = frames_width.get_or_insert(v.len());
                if v.len() != *w {
                    return Err(HarnessError::validation(format!(
                        "dialog '{id}': visual width {} at utterance {j}, {} elsewhere",
                        v.len(),
                        w
                    )));
                }
            }
            Some(FramesField::Payload(frames)) => {
                // Surfaces frame-count, dimension, and area problems now
                // rather than deep inside training.
                payload_to_frames(frames).map_err(|e| {
                    HarnessError::validation(format!("dialog '{id}' utterance {j}: {e}"))
                })?;
            }
        }
    }
    Ok(())
}

fn payload_to_frames(frames: &[FramePayload]) -> Result<UtteranceFrames, String> {
    if frames.len() != FRAMES_PER_UTTERANCE {
        return Err(format!(
            "{} frames in payload, expected {FRAMES_PER_UTTERANCE}",
            frames.len()
        ));
    }
    let observations = frames
        .iter()
        .map(|f| FrameObservation {
            scene_feature: f.scene.clone(),
            faces: f
                .faces
                .iter()
                .map(|face| FaceObservation {
                    feature: face.feature.clone(),
                    bbox_area: face.area,
                    confidence: face.confidence,
                })
                .collect(),
        })
        .collect();
    UtteranceFrames::new(observations).map_err(|e| e.to_string())
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_utterances(&self) -> usize {
        self.records.iter().map(|r| r.utterances.len()).sum()
    }

    /// Every label must fit the class count; errors name the dialog.
    pub fn validate_labels(&self, classes: usize) -> Result<(), HarnessError> {
        for record in &self.records {
            for utt in &record.utterances {
                if utt.label >= classes {
                    return Err(HarnessError::validation(format!(
                        "dialog '{}': label {} outside [0, {classes})",
                        record.dialog_id, utt.label
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks that materialized feature widths will match the model before
    /// any tensor is built, so mismatches carry dialog ids.
    pub fn check_widths(
        &self,
        cfg: &ModelConfig,
        extractor: Option<&Extractor>,
    ) -> Result<(), HarnessError> {
        for record in &self.records {
            let id = &record.dialog_id;
            for (j, utt) in record.utterances.iter().enumerate() {
                if cfg.modalities.text && utt.text_embedding.len() != cfg.d_text {
                    return Err(HarnessError::validation(format!(
                        "dialog '{id}': text width {} but model wants {}",
                        utt.text_embedding.len(),
                        cfg.d_text
                    )));
                }
                if cfg.modalities.audio {
                    match &utt.audio {
                        AudioField::Features(v) => {
                            if v.len() != cfg.d_audio {
                                return Err(HarnessError::validation(format!(
                                    "dialog '{id}': audio width {} but model wants {}",
                                    v.len(),
                                    cfg.d_audio
                                )));
                            }
                        }
                        AudioField::Wav { .. } => {
                            let ex = extractor.ok_or_else(|| {
                                HarnessError::validation(format!(
                                    "dialog '{id}' utterance {j} has wav audio; \
                                     pass an extractor checkpoint to embed it"
                                ))
                            })?;
                            if ex.config().representation_dim != cfg.d_audio {
                                return Err(HarnessError::validation(format!(
                                    "extractor produces {}-wide audio features but model wants {}",
                                    ex.config().representation_dim,
                                    cfg.d_audio
                                )));
                            }
                        }
                    }
                }
                if cfg.modalities.visual {
                    match &utt.frames {
                        None => {
                            return Err(HarnessError::validation(format!(
                                "dialog '{id}' utterance {j}: visual stream requested \
                                 but the record has no frames"
                            )))
                        }
                        Some(FramesField::Features(v)) => {
                            if v.len() != cfg.d_visual {
                                return Err(HarnessError::validation(format!(
                                    "dialog '{id}': visual width {} but model wants {}",
                                    v.len(),
                                    cfg.d_visual
                                )));
                            }
                        }
                        Some(FramesField::Payload(frames)) => {
                            let dim = frames[0].scene.len();
                            if 2 * dim != cfg.d_visual {
                                return Err(HarnessError::validation(format!(
                                    "dialog '{id}': frame payload aggregates to width {} \
                                     but model wants {}",
                                    2 * dim,
                                    cfg.d_visual
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Builds per-dialog tensors for the requested modalities. Run
    /// [`Corpus::check_widths`] first when a model config is known.
    pub fn materialize(
        &self,
        opts: &MaterializeOptions,
    ) -> Result<Vec<DialogFeatures>, HarnessError> {
        self.records
            .iter()
            .map(|record| self.materialize_record(record, opts))
            .collect()
    }

    fn materialize_record(
        &self,
        record: &CorpusRecord,
        opts: &MaterializeOptions,
    ) -> Result<DialogFeatures, HarnessError> {
        let id = &record.dialog_id;
        let labels: Vec<usize> = record.utterances.iter().map(|u| u.label).collect();

        let text = if opts.modalities.text {
            let rows: Vec<&[f64]> = record
                .utterances
                .iter()
                .map(|u| u.text_embedding.as_slice())
                .collect();
            Some(rows_to_tensor(&rows))
        } else {
            None
        };

        let audio = if opts.modalities.audio {
            let mut rows = Vec::with_capacity(record.utterances.len());
            for (j, utt) in record.utterances.iter().enumerate() {
                let row = match &utt.audio {
                    AudioField::Features(v) => v.clone(),
                    AudioField::Wav { wav } => {
                        let ex = opts.extractor.ok_or_else(|| {
                            HarnessError::validation(format!(
                                "dialog '{id}' utterance {j} has wav audio; \
                                 pass an extractor checkpoint to embed it"
                            ))
                        })?;
                        wav_to_feature(&self.base_dir.join(wav), ex)?
                    }
                };
                rows.push(row);
            }
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            Some(rows_to_tensor(&refs))
        } else {
            None
        };

        let visual = if opts.modalities.visual {
            let mut rows = Vec::with_capacity(record.utterances.len());
            for (j, utt) in record.utterances.iter().enumerate() {
                let row = match &utt.frames {
                    None => {
                        return Err(HarnessError::validation(format!(
                            "dialog '{id}' utterance {j}: visual stream requested \
                             but the record has no frames"
                        )))
                    }
                    Some(FramesField::Features(v)) => v.clone(),
                    Some(FramesField::Payload(frames)) => {
                        let utterance = payload_to_frames(frames).map_err(|e| {
                            HarnessError::validation(format!(
                                "dialog '{id}' utterance {j}: {e}"
                            ))
                        })?;
                        visual_utterance_embedding(&utterance)
                    }
                };
                rows.push(row);
            }
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            Some(rows_to_tensor(&refs))
        } else {
            None
        };

        DialogFeatures::new(text, audio, visual, labels)
            .map_err(|e| HarnessError::validation(format!("dialog '{id}': {e}")))
    }
}

fn rows_to_tensor(rows: &[&[f64]]) -> Tensor {
    let cols = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        data.extend_from_slice(r);
    }
    Tensor::from_vec(&[rows.len(), cols], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature_utterance(label: usize) -> UtteranceRecord {
        UtteranceRecord {
            text_embedding: vec![0.1, 0.2],
            audio: AudioField::Features(vec![1.0]),
            frames: Some(FramesField::Features(vec![2.0, 3.0])),
            label,
        }
    }

    #[test]
    fn audio_field_json_shapes() {
        let wav: AudioField = serde_json::from_str(r#"{"wav":"clips/a.wav"}"#).unwrap();
        assert_eq!(
            wav,
            AudioField::Wav {
                wav: PathBuf::from("clips/a.wav")
            }
        );
        let feats: AudioField = serde_json::from_str("[0.5,1.5]").unwrap();
        assert_eq!(feats, AudioField::Features(vec![0.5, 1.5]));
    }

    #[test]
    fn frames_field_distinguishes_payload_from_features() {
        let feats: FramesField = serde_json::from_str("[1.0,2.0]").unwrap();
        assert!(matches!(feats, FramesField::Features(_)));
        let payload: FramesField =
            serde_json::from_str(r#"[{"scene":[1.0],"faces":[]}]"#).unwrap();
        assert!(matches!(payload, FramesField::Payload(_)));
    }

    #[test]
    fn record_validation_catches_ragged_text() {
        let mut record = CorpusRecord {
            dialog_id: "d0".into(),
            utterances: vec![feature_utterance(0), feature_utterance(1)],
        };
        record.utterances[1].text_embedding = vec![0.1, 0.2, 0.3];
        let err = validate_record(&record, Path::new(".")).err().unwrap();
        assert!(err.to_string().contains("d0"));
        assert!(err.to_string().contains("text width 3"));
    }

    #[test]
    fn label_validation_names_the_dialog() {
        let corpus = Corpus {
            records: vec![CorpusRecord {
                dialog_id: "noisy".into(),
                utterances: vec![feature_utterance(9)],
            }],
            base_dir: PathBuf::from("."),
        };
        let err = corpus.validate_labels(7).err().unwrap();
        assert!(err.to_string().contains("noisy"));
        assert!(err.to_string().contains("label 9"));
        assert!(corpus.validate_labels(10).is_ok());
    }

    #[test]
    fn materialize_respects_modality_mask() {
        let corpus = Corpus {
            records: vec![CorpusRecord {
                dialog_id: "d".into(),
                utterances: vec![feature_utterance(0), feature_utterance(1)],
            }],
            base_dir: PathBuf::from("."),
        };
        let opts = MaterializeOptions {
            modalities: ModalitySet {
                text: true,
                audio: false,
                visual: true,
            },
            extractor: None,
        };
        let dialogs = corpus.materialize(&opts).unwrap();
        assert_eq!(dialogs.len(), 1);
        let d = &dialogs[0];
        assert_eq!(d.text().unwrap().shape(), &[2, 2]);
        assert!(d.audio().is_none());
        assert_eq!(d.visual().unwrap().shape(), &[2, 2]);
        assert_eq!(d.labels(), &[0, 1]);
    }

    #[test]
    fn materialize_aggregates_frame_payloads() {
        let face = FacePayload {
            feature: vec![2.0],
            area: 4.0,
            confidence: 1.0,
        };
        let frames: Vec<FramePayload> = (0..FRAMES_PER_UTTERANCE)
            .map(|i| FramePayload {
                scene: vec![i as f64],
                faces: vec![face.clone()],
            })
            .collect();
        let record = CorpusRecord {
            dialog_id: "p".into(),
            utterances: vec![UtteranceRecord {
                text_embedding: vec![0.0],
                audio: AudioField::Features(vec![0.0]),
                frames: Some(FramesField::Payload(frames)),
                label: 0,
            }],
        };
        let corpus = Corpus {
            records: vec![record],
            base_dir: PathBuf::from("."),
        };
        let opts = MaterializeOptions {
            modalities: ModalitySet::default(),
            extractor: None,
        };
        let dialogs = corpus.materialize(&opts).unwrap();
        let visual = dialogs[0].visual().unwrap();
        // Scene part max-pools to the last frame index; the face part pools
        // the constant face feature.
        assert_eq!(visual.to_vec(), vec![14.0, 2.0]);
    }

    #[test]
    fn payload_frame_count_is_enforced() {
        let record = CorpusRecord {
            dialog_id: "short".into(),
            utterances: vec![UtteranceRecord {
                text_embedding: vec![0.0],
                audio: AudioField::Features(vec![0.0]),
                frames: Some(FramesField::Payload(vec![FramePayload {
                    scene: vec![1.0],
                    faces: vec![],
                }])),
                label: 0,
            }],
        };
        let err = validate_record(&record, Path::new(".")).err().unwrap();
        assert!(err.to_string().contains("short"));
        assert!(err.to_string().contains("1 frames in payload"));
    }
}
