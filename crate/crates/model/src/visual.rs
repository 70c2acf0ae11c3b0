//! Visual utterance features: a weighted face model and scene embeddings,
//! each max-pooled over a fixed window of frames and concatenated.

use std::error::Error;
use std::fmt;

/// Frames aggregated per utterance.
pub const FRAMES_PER_UTTERANCE: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct FaceObservation {
    /// Extractor output for the face crop.
    pub feature: Vec<f64>,
    /// Bounding-box area in pixels squared; must be positive.
    pub bbox_area: f64,
    /// Detector confidence in `[0, 1]`; carried but not used in weighting.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub scene_feature: Vec<f64>,
    pub faces: Vec<FaceObservation>,
}

/// Exactly [`FRAMES_PER_UTTERANCE`] frames with a shared feature dimension
/// across every scene and face vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceFrames {
    frames: Vec<FrameObservation>,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VisualError {
    WrongFrameCount(usize),
    EmptyAreas,
    NonPositiveArea(f64),
    DimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for VisualError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VisualError::WrongFrameCount(n) => {
                write!(f, "expected {FRAMES_PER_UTTERANCE} frames, got {n}")
            }
            VisualError::EmptyAreas => write!(f, "no areas to normalize"),
            VisualError::NonPositiveArea(a) => write!(f, "bounding-box area {a} must be > 0"),
            VisualError::DimensionMismatch { expected, got } => {
                write!(f, "feature of dimension {got} in an utterance of dimension {expected}")
            }
        }
    }
}

impl Error for VisualError {}

impl UtteranceFrames {
    pub fn new(frames: Vec<FrameObservation>) -> Result<UtteranceFrames, VisualError> {
        if frames.len() != FRAMES_PER_UTTERANCE {
            return Err(VisualError::WrongFrameCount(frames.len()));
        }
        let dim = frames[0].scene_feature.len();
        for frame in &frames {
            if frame.scene_feature.len() != dim {
                return Err(VisualError::DimensionMismatch {
                    expected: dim,
                    got: frame.scene_feature.len(),
                });
            }
            for face in &frame.faces {
                if face.feature.len() != dim {
                    return Err(VisualError::DimensionMismatch {
                        expected: dim,
                        got: face.feature.len(),
                    });
                }
                if face.bbox_area <= 0.0 {
                    return Err(VisualError::NonPositiveArea(face.bbox_area));
                }
            }
        }
        Ok(UtteranceFrames { frames, dim })
    }

    pub fn frames(&self) -> &[FrameObservation] {
        &self.frames
    }

    /// Shared feature dimension d.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Copy with faces below `min_confidence` removed.
    pub fn filter_by_confidence(&self, min_confidence: f64) -> UtteranceFrames {
        let frames = self
            .frames
            .iter()
            .map(|f| FrameObservation {
                scene_feature: f.scene_feature.clone(),
                faces: f
                    .faces
                    .iter()
                    .filter(|face| face.confidence >= min_confidence)
                    .cloned()
                    .collect(),
            })
            .collect();
        UtteranceFrames {
            frames,
            dim: self.dim,
        }
    }
}

/// Convex weights proportional to bounding-box area.
pub fn normalize_face_weights(areas: &[f64]) -> Result<Vec<f64>, VisualError> {
    if areas.is_empty() {
        return Err(VisualError::EmptyAreas);
    }
    for &a in areas {
        if a <= 0.0 {
            return Err(VisualError::NonPositiveArea(a));
        }
    }
    let total: f64 = areas.iter().sum();
    Ok(areas.iter().map(|a| a / total).collect())
}

/// Area-weighted sum of face features; a faceless frame contributes a zero
/// vector of length `dim`.
pub fn frame_face_feature(faces: &[FaceObservation], dim: usize) -> Result<Vec<f64>, VisualError> {
    if faces.is_empty() {
        return Ok(vec![0.0; dim]);
    }
    for face in faces {
        if face.feature.len() != dim {
            return Err(VisualError::DimensionMismatch {
                expected: dim,
                got: face.feature.len(),
            });
        }
    }
    let areas: Vec<f64> = faces.iter().map(|f| f.bbox_area).collect();
    let weights = normalize_face_weights(&areas)?;
    let mut out = vec![0.0; dim];
    for (face, w) in faces.iter().zip(&weights) {
        for (o, v) in out.iter_mut().zip(&face.feature) {
            *o += w * v;
        }
    }
    Ok(out)
}

fn max_pool(vectors: impl Iterator<Item = Vec<f64>>, dim: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; dim];
    let mut any = false;
    for v in vectors {
        any = true;
        for (o, x) in out.iter_mut().zip(&v) {
            *o = o.max(*x);
        }
    }
    assert!(any, "max_pool over no vectors");
    out
}

/// Elementwise max of the per-frame weighted face features.
pub fn utterance_face_embedding(u: &UtteranceFrames) -> Vec<f64> {
    max_pool(
        u.frames()
            .iter()
            .map(|f| frame_face_feature(&f.faces, u.dim()).expect("dims validated on construction")),
        u.dim(),
    )
}

/// Elementwise max of the per-frame scene features.
pub fn utterance_scene_embedding(u: &UtteranceFrames) -> Vec<f64> {
    max_pool(u.frames().iter().map(|f| f.scene_feature.clone()), u.dim())
}

/// `[scene ‖ face]`, so the visual utterance feature has length `2 * dim`.
pub fn visual_utterance_embedding(u: &UtteranceFrames) -> Vec<f64> {
    let mut out = utterance_scene_embedding(u);
    out.extend(utterance_face_embedding(u));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn face(feature: Vec<f64>, area: f64) -> FaceObservation {
        FaceObservation {
            feature,
            bbox_area: area,
            confidence: 1.0,
        }
    }

    fn frames_with(scene: Vec<f64>, faces: Vec<FaceObservation>) -> UtteranceFrames {
        let dim = scene.len();
        let mut frames = vec![
            FrameObservation {
                scene_feature: vec![0.0; dim],
                faces: vec![],
            };
            FRAMES_PER_UTTERANCE - 1
        ];
        frames.push(FrameObservation {
            scene_feature: scene,
            faces,
        });
        UtteranceFrames::new(frames).unwrap()
    }

    #[test]
    fn weights_normalize_to_one() {
        assert_eq!(normalize_face_weights(&[5.0]).unwrap(), vec![1.0]);
        let thirds = normalize_face_weights(&[4.0, 4.0, 4.0]).unwrap();
        for w in &thirds {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(
            normalize_face_weights(&[2.0, 6.0]).unwrap(),
            vec![0.25, 0.75]
        );
        let random = normalize_face_weights(&[3.7, 0.2, 11.0, 5.5]).unwrap();
        assert!((random.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(random.iter().all(|&w| w > 0.0 && w <= 1.0));
    }

    #[test]
    fn weight_errors() {
        assert_eq!(normalize_face_weights(&[]), Err(VisualError::EmptyAreas));
        assert_eq!(
            normalize_face_weights(&[1.0, 0.0]),
            Err(VisualError::NonPositiveArea(0.0))
        );
    }

    #[test]
    fn single_face_passes_through() {
        let f = face(vec![0.5, -2.0], 10.0);
        assert_eq!(frame_face_feature(&[f], 2).unwrap(), vec![0.5, -2.0]);
    }

    #[test]
    fn shared_feature_is_a_fixed_point() {
        let faces = vec![
            face(vec![1.0, 2.0], 3.0),
            face(vec![1.0, 2.0], 30.0),
            face(vec![1.0, 2.0], 0.5),
        ];
        let out = frame_face_feature(&faces, 2).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-15);
        assert!((out[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn area_weighted_mixture() {
        let faces = vec![face(vec![1.0, 0.0], 2.0), face(vec![0.0, 1.0], 6.0)];
        assert_eq!(frame_face_feature(&faces, 2).unwrap(), vec![0.25, 0.75]);
    }

    #[test]
    fn empty_frame_gives_zero_vector() {
        assert_eq!(frame_face_feature(&[], 3).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn mixed_dims_rejected() {
        let faces = vec![face(vec![1.0, 0.0], 2.0), face(vec![0.0], 6.0)];
        assert_eq!(
            frame_face_feature(&faces, 2),
            Err(VisualError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn convex_hull_bounds_hold_coordinatewise() {
        let faces = vec![
            face(vec![1.0, -3.0], 1.0),
            face(vec![4.0, 0.0], 2.5),
            face(vec![-2.0, 5.0], 7.0),
        ];
        let out = frame_face_feature(&faces, 2).unwrap();
        assert!(out[0] >= -2.0 && out[0] <= 4.0);
        assert!(out[1] >= -3.0 && out[1] <= 5.0);
    }

    #[test]
    fn face_order_does_not_matter() {
        let a = face(vec![1.0, 0.0], 2.0);
        let b = face(vec![0.0, 1.0], 6.0);
        let fwd = frame_face_feature(&[a.clone(), b.clone()], 2).unwrap();
        let rev = frame_face_feature(&[b, a], 2).unwrap();
        for (x, y) in fwd.iter().zip(&rev) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn frame_count_is_enforced() {
        let frames = vec![
            FrameObservation {
                scene_feature: vec![0.0],
                faces: vec![]
            };
            14
        ];
        assert_eq!(
            UtteranceFrames::new(frames),
            Err(VisualError::WrongFrameCount(14))
        );
    }

    #[test]
    fn pooled_embeddings_take_elementwise_max() {
        let u = frames_with(vec![1.0, 5.0], vec![face(vec![1.0, 5.0], 2.0)]);
        // Overwrite one earlier frame to carry [3, 2] in both channels.
        let mut frames = u.frames().to_vec();
        frames[0] = FrameObservation {
            scene_feature: vec![3.0, 2.0],
            faces: vec![face(vec![3.0, 2.0], 1.0)],
        };
        let u = UtteranceFrames::new(frames).unwrap();
        assert_eq!(utterance_face_embedding(&u), vec![3.0, 5.0]);
        assert_eq!(utterance_scene_embedding(&u), vec![3.0, 5.0]);
        assert_eq!(visual_utterance_embedding(&u), vec![3.0, 5.0, 3.0, 5.0]);
    }

    #[test]
    fn all_faceless_utterance_pools_to_zero() {
        let frames = vec![
            FrameObservation {
                scene_feature: vec![0.5, 0.5],
                faces: vec![]
            };
            FRAMES_PER_UTTERANCE
        ];
        let u = UtteranceFrames::new(frames).unwrap();
        assert_eq!(utterance_face_embedding(&u), vec![0.0, 0.0]);
    }

    #[test]
    fn permuting_frames_leaves_pooling_unchanged() {
        let mut frames: Vec<FrameObservation> = (0..FRAMES_PER_UTTERANCE)
            .map(|i| FrameObservation {
                scene_feature: vec![i as f64, -(i as f64)],
                faces: vec![face(vec![(i * i) as f64, 1.0 / (i + 1) as f64], 1.0 + i as f64)],
            })
            .collect();
        let u = UtteranceFrames::new(frames.clone()).unwrap();
        let base = visual_utterance_embedding(&u);
        frames.reverse();
        frames.swap(3, 9);
        let v = UtteranceFrames::new(frames).unwrap();
        assert_eq!(visual_utterance_embedding(&v), base);
    }

    #[test]
    fn scene_pooling_is_positively_homogeneous() {
        let u = frames_with(vec![2.0, -1.0], vec![]);
        let base = utterance_scene_embedding(&u);
        let scaled_frames: Vec<FrameObservation> = u
            .frames()
            .iter()
            .map(|f| FrameObservation {
                scene_feature: f.scene_feature.iter().map(|v| v * 3.0).collect(),
                faces: vec![],
            })
            .collect();
        let scaled = UtteranceFrames::new(scaled_frames).unwrap();
        let out = utterance_scene_embedding(&scaled);
        for (o, b) in out.iter().zip(&base) {
            assert!((o - 3.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn confidence_filter_drops_weak_detections() {
        let strong = FaceObservation {
            feature: vec![1.0, 0.0],
            bbox_area: 1.0,
            confidence: 0.9,
        };
        let weak = FaceObservation {
            feature: vec![0.0, 1.0],
            bbox_area: 100.0,
            confidence: 0.2,
        };
        let u = frames_with(vec![0.0, 0.0], vec![strong, weak]);
        let filtered = u.filter_by_confidence(0.5);
        let kept = &filtered.frames()[FRAMES_PER_UTTERANCE - 1].faces;
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].feature, vec![1.0, 0.0]);
    }
}
