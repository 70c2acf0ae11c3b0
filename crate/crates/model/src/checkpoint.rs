//! Model checkpoints: JSON files holding the config and every named
//! parameter. Floats are written in shortest round-trip form, so a value
//! survives save/load bit for bit and identical training runs produce
//! byte-identical files.

use std::error::Error;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use emofusion_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dialog::{DialogModel, ModelConfig};
use crate::extractor::{Extractor, ExtractorConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointFile<C> {
    pub format_version: u32,
    pub config: C,
    pub params: Vec<ParamRecord>,
}

#[derive(Debug)]
pub enum CheckpointError {
    Io(io::Error),
    Format(serde_json::Error),
    UnsupportedVersion { found: u32, expected: u32 },
    /// The checkpoint lacks a parameter the model has.
    MissingParam(String),
    /// The checkpoint carries a parameter the model does not know.
    UnknownParam(String),
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    /// JSON cannot represent NaN or infinities, so they are rejected rather
    /// than silently written as null.
    NonFinite(String),
    BadConfig(String),
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io(e) => write!(f, "checkpoint io error: {e}"),
            CheckpointError::Format(e) => write!(f, "checkpoint is not valid JSON: {e}"),
            CheckpointError::UnsupportedVersion { found, expected } => {
                write!(f, "checkpoint format {found}, this build reads {expected}")
            }
            CheckpointError::MissingParam(name) => {
                write!(f, "checkpoint is missing parameter '{name}'")
            }
            CheckpointError::UnknownParam(name) => {
                write!(f, "checkpoint has unknown parameter '{name}'")
            }
            CheckpointError::ShapeMismatch {
                name,
                expected,
                found,
            } => write!(
                f,
                "parameter '{name}' has shape {found:?}, model expects {expected:?}"
            ),
            CheckpointError::NonFinite(name) => {
                write!(f, "parameter '{name}' contains non-finite values")
            }
            CheckpointError::BadConfig(msg) => write!(f, "checkpoint config is invalid: {msg}"),
        }
    }
}

impl Error for CheckpointError {
    fn source(&self) -> Option<&(dyn Error + 'static)> {
        match self {
            CheckpointError::Io(e) => Some(e),
            CheckpointError::Format(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for CheckpointError {
    fn from(e: io::Error) -> Self {
        CheckpointError::Io(e)
    }
}

impl From<serde_json::Error> for CheckpointError {
    fn from(e: serde_json::Error) -> Self {
        CheckpointError::Format(e)
    }
}

/// Copies named parameters into plain records, rejecting non-finite values.
pub fn snapshot(params: &[(String, Tensor)]) -> Result<Vec<ParamRecord>, CheckpointError> {
    params
        .iter()
        .map(|(name, t)| {
            if !t.is_finite() {
                return Err(CheckpointError::NonFinite(name.clone()));
            }
            Ok(ParamRecord {
                name: name.clone(),
                shape: t.shape().to_vec(),
                values: t.to_vec(),
            })
        })
        .collect()
}

pub fn save<C: Serialize>(
    path: &Path,
    config: &C,
    params: &[(String, Tensor)],
) -> Result<(), CheckpointError> {
    let file = CheckpointFile {
        format_version: FORMAT_VERSION,
        config,
        params: snapshot(params)?,
    };
    let bytes = serde_json::to_vec(&file)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load<C: DeserializeOwned>(path: &Path) -> Result<CheckpointFile<C>, CheckpointError> {
    let bytes = fs::read(path)?;
    let file: CheckpointFile<C> = serde_json::from_slice(&bytes)?;
    if file.format_version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion {
            found: file.format_version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(file)
}

/// Writes record values into the matching live parameters. Every model
/// parameter must be covered and every record must be used.
pub fn restore(
    params: &[(String, Tensor)],
    records: &[ParamRecord],
) -> Result<(), CheckpointError> {
    let mut used = vec![false; records.len()];
    for (name, tensor) in params {
        let idx = records
            .iter()
            .position(|r| &r.name == name)
            .ok_or_else(|| CheckpointError::MissingParam(name.clone()))?;
        let record = &records[idx];
        if record.shape != tensor.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: name.clone(),
                expected: tensor.shape().to_vec(),
                found: record.shape.clone(),
            });
        }
        used[idx] = true;
        tensor.data_mut().copy_from_slice(&record.values);
    }
    if let Some(idx) = used.iter().position(|u| !u) {
        return Err(CheckpointError::UnknownParam(records[idx].name.clone()));
    }
    Ok(())
}

/// Rebuilds a dialog model from a checkpoint written by [`save`].
pub fn load_dialog_model(path: &Path) -> Result<DialogModel, CheckpointError> {
    let file: CheckpointFile<ModelConfig> = load(path)?;
    file.config
        .validate()
        .map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
    // Fresh init is immediately overwritten, so the seed is irrelevant.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = DialogModel::new(file.config, &mut rng)
        .map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
    restore(&model.params(), &file.params)?;
    Ok(model)
}

/// Rebuilds an extractor from a checkpoint written by [`save`].
pub fn load_extractor(path: &Path) -> Result<Extractor, CheckpointError> {
    let file: CheckpointFile<ExtractorConfig> = load(path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let extractor = Extractor::new(file.config, &mut rng);
    restore(&extractor.params(), &file.params)?;
    Ok(extractor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn temp_path(tag: &str) -> PathBuf {
        std::env::temp_dir().join(format!("ckpt-{tag}-{}.json", std::process::id()))
    }

    #[test]
    fn values_round_trip_bit_for_bit() {
        let values = vec![
            0.1,
            -0.0,
            1e-300,
            std::f64::consts::PI,
            -2.225_073_858_507_201_4e-308,
            1.0 / 3.0,
        ];
        let t = Tensor::param(&[6], values.clone());
        let params = vec![("p".to_string(), t)];
        let path = temp_path("bits");
        save(&path, &serde_json::json!({}), &params).unwrap();

        let loaded: CheckpointFile<serde_json::Value> = load(&path).unwrap();
        for (orig, got) in values.iter().zip(&loaded.params[0].values) {
            assert_eq!(orig.to_bits(), got.to_bits());
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn restore_rejects_mismatches() {
        let live = vec![("a".to_string(), Tensor::param(&[2], vec![0.0, 0.0]))];
        let missing = restore(&live, &[]);
        assert!(matches!(missing, Err(CheckpointError::MissingParam(n)) if n == "a"));

        let wrong_shape = vec![ParamRecord {
            name: "a".to_string(),
            shape: vec![3],
            values: vec![1.0, 2.0, 3.0],
        }];
        assert!(matches!(
            restore(&live, &wrong_shape),
            Err(CheckpointError::ShapeMismatch { .. })
        ));

        let extra = vec![
            ParamRecord {
                name: "a".to_string(),
                shape: vec![2],
                values: vec![1.0, 2.0],
            },
            ParamRecord {
                name: "ghost".to_string(),
                shape: vec![1],
                values: vec![9.0],
            },
        ];
        assert!(matches!(
            restore(&live, &extra),
            Err(CheckpointError::UnknownParam(n)) if n == "ghost"
        ));
        // The matching record was applied before the extra one was noticed.
        assert_eq!(live[0].1.to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn non_finite_values_refuse_to_save() {
        let t = Tensor::param(&[1], vec![f64::NAN]);
        let err = snapshot(&[("bad".to_string(), t)]).unwrap_err();
        assert!(matches!(err, CheckpointError::NonFinite(n) if n == "bad"));
    }

    #[test]
    fn version_gate() {
        let path = temp_path("version");
        std::fs::write(
            &path,
            r#"{"format_version":99,"config":{},"params":[]}"#,
        )
        .unwrap();
        let got = load::<serde_json::Value>(&path);
        assert!(matches!(
            got,
            Err(CheckpointError::UnsupportedVersion { found: 99, .. })
        ));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn saved_twice_is_byte_identical() {
        let params = vec![("w".to_string(), Tensor::param(&[3], vec![0.25, -1.5, 1e-9]))];
        let p1 = temp_path("rep1");
        let p2 = temp_path("rep2");
        save(&p1, &serde_json::json!({"k": 1}), &params).unwrap();
        save(&p2, &serde_json::json!({"k": 1}), &params).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        std::fs::remove_file(&p1).ok();
        std::fs::remove_file(&p2).ok();
    }
}
